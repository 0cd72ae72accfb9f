//! Floating point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the estimators are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// A triangular factor is rank deficient when one of its diagonal
    /// magnitudes falls below `RANK_TOL` times the largest one.
    const RANK_TOL: f64;

    /// Byte width of the little-endian encoding used by model files.
    const WIDTH: u8;

    fn write_le(self, out: &mut Vec<u8>);

    /// Decodes from exactly `WIDTH` bytes.
    fn read_le(bytes: &[u8]) -> Self;

    /// Converts an `f64` constant. Every finite `f64` is representable
    /// (possibly rounded) in the supported types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to scalar")
    }
}

impl Scalar for f64 {
    const RANK_TOL: f64 = 1e-10;
    const WIDTH: u8 = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[..8]);
        f64::from_le_bytes(b)
    }
}

impl Scalar for f32 {
    const RANK_TOL: f64 = 1e-5;
    const WIDTH: u8 = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        let mut b = [0u8; 4];
        b.copy_from_slice(&bytes[..4]);
        f32::from_le_bytes(b)
    }
}
