//! Binary model file.
//!
//! All integers and scalars are little-endian.
//!
//! ```text
//! magic        8 bytes   b"RFCCAMDL"
//! version      u32       FORMAT_VERSION
//! width        u8        scalar byte width (4 = f32, 8 = f64)
//! config       u32 length + UTF-8 JSON of ForestConfig
//! n, p, q, r   4 x u64
//! names        p + q + r entries of u32 length + UTF-8 (X, then Y, then Z)
//! x, y, z      column-major scalars
//! ntree        u64
//! per tree
//!   bitmap     ceil(n / 8) bytes, bit (i % 8) of byte (i / 8) set when row i is in bag
//!   counts     u32 per set bit, ascending row order (bootstrap models only)
//!   nodes      u64 count, then per node
//!     tag      u8: 0 terminal, 1 split
//!     split    (tag 1) var u64, value, statistic, rho_left, rho_right, left u64, right u64
//!     rows     u64 count + u32 per row
//! ```

use std::io::{Read, Write};

use crate::error::{Result, RfccaError};
use crate::forest::{ForestConfig, ForestModel, Inbag, SamplingMode};
use crate::matrix::DataMatrix;
use crate::scalar::Scalar;
use crate::tree::{SplitRecord, Tree, TreeNode};

pub const MAGIC: &[u8; 8] = b"RFCCAMDL";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes<T: Scalar>(model: &ForestModel<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::WIDTH);
    let config = serde_json::to_vec(&model.config).expect("config serializes");
    put_u32(&mut out, config.len() as u32);
    out.extend_from_slice(&config);
    let n = model.n();
    for v in [n, model.p(), model.q(), model.r()] {
        put_u64(&mut out, v as u64);
    }
    for m in [&model.x, &model.y, &model.z] {
        for name in m.names() {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
        }
    }
    for m in [&model.x, &model.y, &model.z] {
        for &v in m.as_slice() {
            v.write_le(&mut out);
        }
    }
    put_u64(&mut out, model.trees.len() as u64);
    let bootstrap = model.config.sampling == SamplingMode::Bootstrap;
    for (tree, bag) in model.trees.iter().zip(&model.inbag) {
        let mut bitmap = vec![0u8; n.div_ceil(8)];
        for (i, &c) in bag.counts().iter().enumerate() {
            if c > 0 {
                bitmap[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bitmap);
        if bootstrap {
            for &c in bag.counts().iter().filter(|&&c| c > 0) {
                put_u32(&mut out, c);
            }
        }
        put_u64(&mut out, tree.nodes.len() as u64);
        for node in &tree.nodes {
            match (&node.split, node.children) {
                (Some(s), Some((l, r))) => {
                    out.push(1);
                    put_u64(&mut out, s.var_index as u64);
                    for v in [s.split_value, s.statistic, s.rho_left, s.rho_right] {
                        v.write_le(&mut out);
                    }
                    put_u64(&mut out, l as u64);
                    put_u64(&mut out, r as u64);
                }
                _ => out.push(0),
            }
            put_u64(&mut out, node.rows.len() as u64);
            for &i in &node.rows {
                put_u32(&mut out, i as u32);
            }
        }
    }
    out
}

pub fn save<T: Scalar, W: Write>(model: &ForestModel<T>, mut w: W) -> Result<()> {
    w.write_all(&to_bytes(model))?;
    Ok(())
}

pub fn load<T: Scalar, R: Read>(mut r: R) -> Result<ForestModel<T>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            RfccaError::ModelFormat(format!("truncated model file at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| RfccaError::ModelFormat("size overflows usize".into()))
    }

    fn scalar<T: Scalar>(&mut self) -> Result<T> {
        Ok(T::read_le(self.take(T::WIDTH as usize)?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| RfccaError::ModelFormat("column name is not UTF-8".into()))
    }
}

pub fn from_bytes<T: Scalar>(buf: &[u8]) -> Result<ForestModel<T>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(RfccaError::ModelFormat("not an rfcca model file".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(RfccaError::ModelFormat(format!("unsupported format version {version}")));
    }
    let width = c.u8()?;
    if width != T::WIDTH {
        return Err(RfccaError::ModelFormat(format!(
            "model stores {width}-byte scalars, reader expects {}",
            T::WIDTH
        )));
    }
    let config_len = c.u32()? as usize;
    let config: ForestConfig = serde_json::from_slice(c.take(config_len)?)
        .map_err(|e| RfccaError::ModelFormat(format!("bad config block: {e}")))?;
    let (n, p, q, r) = (c.usize()?, c.usize()?, c.usize()?, c.usize()?);
    let mut names = Vec::with_capacity(p + q + r);
    for _ in 0..p + q + r {
        names.push(c.string()?);
    }
    let mut matrix = |cols: usize, names: Vec<String>| -> Result<DataMatrix<T>> {
        let mut data = Vec::with_capacity(n * cols);
        for _ in 0..n * cols {
            data.push(c.scalar()?);
        }
        DataMatrix::new(n, cols, data, names)
    };
    let z_names = names.split_off(p + q);
    let y_names = names.split_off(p);
    let x = matrix(p, names)?;
    let y = matrix(q, y_names)?;
    let z = matrix(r, z_names)?;

    let ntree = c.usize()?;
    let bootstrap = config.sampling == SamplingMode::Bootstrap;
    let mut trees = Vec::with_capacity(ntree);
    let mut inbag = Vec::with_capacity(ntree);
    for _ in 0..ntree {
        let bitmap = c.take(n.div_ceil(8))?;
        let mut counts = vec![0u32; n];
        for (i, count) in counts.iter_mut().enumerate() {
            if bitmap[i / 8] & (1 << (i % 8)) != 0 {
                *count = 1;
            }
        }
        if bootstrap {
            for count in counts.iter_mut().filter(|c| **c > 0) {
                *count = c.u32()?;
            }
        }
        let count = c.usize()?;
        let mut nodes = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let (split, children) = match c.u8()? {
                0 => (None, None),
                1 => {
                    let var_index = c.usize()?;
                    let split = SplitRecord {
                        var_index,
                        split_value: c.scalar()?,
                        statistic: c.scalar()?,
                        rho_left: c.scalar()?,
                        rho_right: c.scalar()?,
                    };
                    let children = (c.usize()?, c.usize()?);
                    if var_index >= r || children.0 >= count || children.1 >= count {
                        return Err(RfccaError::ModelFormat("split refers outside the model".into()));
                    }
                    (Some(split), Some(children))
                }
                t => return Err(RfccaError::ModelFormat(format!("unknown node tag {t}"))),
            };
            let len = c.usize()?;
            let mut rows = Vec::with_capacity(len.min(n.max(1) * 64));
            for _ in 0..len {
                let i = c.u32()? as usize;
                if i >= n {
                    return Err(RfccaError::ModelFormat(format!("row index {i} out of range")));
                }
                rows.push(i);
            }
            nodes.push(TreeNode { rows, split, children });
        }
        if nodes.is_empty() {
            return Err(RfccaError::ModelFormat("tree without nodes".into()));
        }
        trees.push(Tree { nodes });
        inbag.push(Inbag::from_counts(counts));
    }
    if c.pos != buf.len() {
        return Err(RfccaError::ModelFormat("trailing bytes after last tree".into()));
    }
    Ok(ForestModel { config, x, y, z, trees, inbag })
}
