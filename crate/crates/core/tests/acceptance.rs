//! Acceptance suite. Runs every criterion and prints one line per criterion.
//!
//! `RFCCA_ACCEPTANCE=1,3,7` restricts the run to the listed criteria.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use rfcca::dgp::{self, CorrelationLevel, Scenario};
use rfcca::forest::{self, ForestConfig};
use rfcca::inference::{global_test, PValueMode};
use rfcca::rng::{rng_from_seed, substream, substream_seed, Rng};
use rfcca::tree::{best_split, SplitData, TreeConfig};
use rfcca::vimp::{self, RegressionForestConfig};
use rfcca::{cca, first_canonical_correlation, model_io, BopMode, DataMatrix, SamplingMode};

type M = DataMatrix<f64>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_matrix(n: usize, m: usize, prefix: &str, rng: &mut Rng) -> M {
    let cols = (0..m).map(|_| (0..n).map(|_| normal(rng)).collect()).collect();
    DataMatrix::from_columns_prefixed(cols, prefix).unwrap()
}

/// `Y = X W + sigma E` with random `W` and `sigma`.
fn random_pair(rng: &mut Rng, n: usize, p: usize, q: usize) -> (M, M) {
    let x = normal_matrix(n, p, "x", rng);
    let w: Vec<f64> = (0..p * q).map(|_| normal(rng)).collect();
    let sigma = rng.random_range(0.2..2.0);
    let cols = (0..q)
        .map(|j| (0..n).map(|i| (0..p).map(|k| x.get(i, k) * w[j * p + k]).sum::<f64>() + sigma * normal(rng)).collect())
        .collect();
    (x, DataMatrix::from_columns_prefixed(cols, "y").unwrap())
}

/// Canonical correlations from the eigenvalues of
/// `Lx^-1 Sxy Syy^-1 Syx Lx^-T`, where `Sxx = Lx Lx'`.
fn eigen_oracle(x: &M, y: &M) -> Vec<f64> {
    let n = x.nrows();
    let centered = |m: &M| {
        let mut d = DMatrix::<f64>::zeros(n, m.ncols());
        for j in 0..m.ncols() {
            let mean = m.col(j).iter().sum::<f64>() / n as f64;
            for i in 0..n {
                d[(i, j)] = m.get(i, j) - mean;
            }
        }
        d
    };
    let (xc, yc) = (centered(x), centered(y));
    let sxx = xc.transpose() * &xc;
    let syy = yc.transpose() * &yc;
    let sxy = xc.transpose() * &yc;
    let lx = sxx.cholesky().unwrap().l();
    let syy_inv = syy.try_inverse().unwrap();
    let w = lx.solve_lower_triangular(&sxy).unwrap();
    let k = &w * syy_inv * w.transpose();
    let k = (&k + k.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(k).eigenvalues.iter().map(|&v| v.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev.truncate(x.ncols().min(y.ncols()));
    ev
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    sab / (saa * sbb).sqrt()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(0xA1);
    let (mut worst_eig, mut worst_pearson, mut univariate) = (0.0f64, 0.0f64, 0);
    for k in 0..200 {
        let n = [20, 50, 200][k % 3];
        let (p, q) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let (x, y) = random_pair(&mut rng, n, p, q);
        let ours = cca(&x, &y).unwrap().correlations;
        for (a, b) in ours.iter().zip(eigen_oracle(&x, &y)) {
            worst_eig = worst_eig.max((a - b).abs());
        }
        if p == 1 && q == 1 {
            univariate += 1;
            worst_pearson = worst_pearson.max((ours[0] - pearson(x.col(0), y.col(0)).abs()).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_eig < 1e-8 && worst_pearson < 1e-10 && univariate > 0 && secs < 5.0,
        format!(
            "200 instances, max |qr - eigen| = {worst_eig:.2e} (< 1e-8), {univariate} univariate with max |r - |pearson|| = {worst_pearson:.2e} (< 1e-10), {secs:.2} s (< 5 s)"
        ),
    )
}

fn random_invertible(rng: &mut Rng, k: usize) -> DMatrix<f64> {
    loop {
        let a = DMatrix::<f64>::from_fn(k, k, |_, _| normal(rng));
        if a.determinant().abs() > 0.05 {
            return a;
        }
    }
}

fn transform(m: &M, a: &DMatrix<f64>, shift: &[f64]) -> M {
    let k = m.ncols();
    let cols = (0..k)
        .map(|j| (0..m.nrows()).map(|i| (0..k).map(|l| m.get(i, l) * a[(l, j)]).sum::<f64>() + shift[j]).collect())
        .collect();
    DataMatrix::from_columns(cols, m.names().to_vec()).unwrap()
}

fn criterion_2() -> Outcome {
    let mut rng = rng_from_seed(0xA2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (p, q) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let n = rng.random_range(30..=200);
        let (x, y) = random_pair(&mut rng, n, p, q);
        let (a, b) = (random_invertible(&mut rng, p), random_invertible(&mut rng, q));
        let sx: Vec<f64> = (0..p).map(|_| 5.0 * normal(&mut rng)).collect();
        let sy: Vec<f64> = (0..q).map(|_| 5.0 * normal(&mut rng)).collect();
        let before = cca(&x, &y).unwrap().correlations;
        let after = cca(&transform(&x, &a, &sx), &transform(&y, &b, &sy)).unwrap().correlations;
        for (u, v) in before.iter().zip(&after) {
            worst = worst.max((u - v).abs());
        }
    }
    outcome(worst < 1e-8, format!("50 transforms, max change = {worst:.2e} (< 1e-8)"))
}

/// Two-group sample: correlation `lo` for `z1 <= 0`, `hi` above, carried by
/// the first coordinate pair; the other pairs are independent.
fn two_group_sample(seed: u64, dims: usize, lo: f64, hi: f64) -> (M, M, M) {
    let n = 500;
    let mut rng = substream(0xA3, seed);
    let z = normal_matrix(n, 10, "z", &mut rng);
    let mut xs = vec![vec![0.0; n]; dims];
    let mut ys = vec![vec![0.0; n]; dims];
    for i in 0..n {
        let rho = if z.get(i, 0) <= 0.0 { lo } else { hi };
        for d in 0..dims {
            let (u, v) = (normal(&mut rng), normal(&mut rng));
            let r = if d == 0 { rho } else { 0.0 };
            xs[d][i] = u;
            ys[d][i] = r * u + (1.0 - r * r).sqrt() * v;
        }
    }
    (DataMatrix::from_columns_prefixed(xs, "x").unwrap(), DataMatrix::from_columns_prefixed(ys, "y").unwrap(), z)
}

fn single_split_hits(dims: usize, lo: f64, hi: f64) -> (usize, Vec<String>) {
    let mut hits = 0;
    let mut misses = Vec::new();
    for seed in 0..20 {
        let (x, y, z) = two_group_sample(seed, dims, lo, hi);
        let data = SplitData::new(&x, &y, &z).unwrap();
        let cfg = TreeConfig { nodesize: 6 * dims, mtry: 10, nsplit: 10, exhaustive: true, rng_seed: 0 };
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let s = best_split(&rows, &data, &cfg, &mut rng_from_seed(seed)).unwrap();
        let ok = s.var_index == 0
            && s.split_value.abs() < 0.15
            && (s.rho_left - lo).abs() < 0.1
            && (s.rho_right - hi).abs() < 0.1;
        if ok {
            hits += 1;
        } else {
            misses.push(format!(
                "seed {seed}: z{} <= {:.3}, rho {:.3}/{:.3}",
                s.var_index + 1,
                s.split_value,
                s.rho_left,
                s.rho_right
            ));
        }
    }
    (hits, misses)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let (uni, uni_miss) = single_split_hits(1, 0.0, 0.8);
    let (multi, multi_miss) = single_split_hits(2, 0.2, 0.8);
    let secs = start.elapsed().as_secs_f64();
    let mut detail = format!("univariate {uni}/20 (need 20), cca {multi}/20 (need 18), {secs:.1} s (< 30 s)");
    for m in uni_miss.iter().chain(&multi_miss) {
        detail.push_str(&format!("; miss {m}"));
    }
    outcome(uni == 20 && multi >= 18 && secs < 30.0, detail)
}

/// Fraction of replicates with p < 0.05 under scenario `sc`.
fn rejection_rate(sc: Scenario, level: CorrelationLevel, n: usize, reps: usize, root: u64) -> (f64, usize) {
    let mut rejected = 0;
    let mut failed = 0;
    for k in 0..reps as u64 {
        let seed = substream_seed(root, k);
        let ds = dgp::simulate(&sc.config(level, n, substream_seed(seed, 0))).unwrap();
        let cfg = ForestConfig { ntree: 100, ..ForestConfig::default_for(ds.x.ncols(), ds.y.ncols(), ds.z.ncols()) }
            .with_seed(substream_seed(seed, 1));
        let res = global_test(&ds.x, &ds.y, &ds.z, &cfg, 100, substream_seed(seed, 2), PValueMode::Raw).unwrap();
        failed += res.failed;
        if res.p_value < 0.05 {
            rejected += 1;
        }
    }
    (rejected as f64 / reps as f64, failed)
}

fn criterion_4() -> (Outcome, f64) {
    let start = Instant::now();
    let (rate, failed) = rejection_rate(Scenario::H0Case1, CorrelationLevel::Low, 200, 100, 0xA4);
    let secs = start.elapsed().as_secs_f64();
    let pass = (0.01..=0.12).contains(&rate);
    (
        outcome(
            pass,
            format!("h0_case1 low, n = 200, 100 replicates x 100 permutations: rejection rate {rate:.2} in [0.01, 0.12], {failed} failed permutation fits, {secs:.0} s"),
        ),
        rate,
    )
}

fn criterion_5(type1: Option<f64>) -> Outcome {
    let start = Instant::now();
    let (p200, f200) = rejection_rate(Scenario::H1NoNoise, CorrelationLevel::High, 200, 50, 0xA5);
    let (p500, f500) = rejection_rate(Scenario::H1NoNoise, CorrelationLevel::High, 500, 50, 0xA6);
    let secs = start.elapsed().as_secs_f64();
    let type1 = type1.unwrap_or_else(|| rejection_rate(Scenario::H0Case1, CorrelationLevel::Low, 200, 100, 0xA4).0);
    let pass = p500 >= p200 - 0.05 && p500 > type1 + 0.2;
    outcome(
        pass,
        format!(
            "h1_nonoise high: power(200) = {p200:.2}, power(500) = {p500:.2}, type-1 rate {type1:.2}; need power(500) >= power(200) - 0.05 and > type-1 + 0.2; {} failed permutation fits, {secs:.0} s",
            f200 + f500
        ),
    )
}

fn accuracy_runs(sampling: SamplingMode) -> Vec<dgp::AccuracyResult> {
    let dgp_cfg = Scenario::AccuracyHigh.config(CorrelationLevel::High, 1000, 0);
    let mut cfg = ForestConfig::default_for(5, 5, 10);
    if sampling == SamplingMode::Bootstrap {
        cfg = cfg.bootstrap();
    }
    (0..10).map(|k| dgp::accuracy_replicate(&dgp_cfg, 1000, 1000, &cfg, substream_seed(0xA6A, k)).unwrap()).collect()
}

fn criterion_6(runs: &[dgp::AccuracyResult]) -> Outcome {
    let wins = runs.iter().filter(|r| r.mae_rfcca < r.mae_cca).count();
    let mf = runs.iter().map(|r| r.mae_rfcca).sum::<f64>() / runs.len() as f64;
    let mc = runs.iter().map(|r| r.mae_cca).sum::<f64>() / runs.len() as f64;
    let failed: usize = runs.iter().map(|r| r.failed_rows).sum();
    outcome(
        wins >= 9,
        format!("accuracy_high, n_train = n_test = 1000: forest better in {wins}/10 (need 9); mean MAE forest {mf:.4}, cca {mc:.4}; {failed} test rows without estimate"),
    )
}

fn criterion_7() -> Outcome {
    let train = dgp::simulate(&Scenario::AccuracyHigh.config(CorrelationLevel::High, 300, 0xA7)).unwrap();
    let test = dgp::simulate(&Scenario::AccuracyHigh.config(CorrelationLevel::High, 100, 0xA8)).unwrap();
    let root = first_canonical_correlation(&train.x, &train.y).unwrap();
    let base = ForestConfig::default_for(5, 5, 10).with_seed(0xA9);
    let configs = [
        ("subsample fraction 1", ForestConfig { sample_fraction: 1.0, ..base.clone() }),
        ("distinct bags", ForestConfig { bop_mode: BopMode::Distinct, ..base.clone() }),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, mut cfg) in configs {
        cfg.tree.nodesize = train.x.nrows();
        let model = forest::train(&train.x, &train.y, &train.z, &cfg).unwrap();
        let preds = model.predict(&test.z).unwrap();
        let exact = preds.iter().filter(|p| matches!(p, Ok(v) if *v == root)).count();
        pass &= exact == preds.len();
        parts.push(format!("{name}: {exact}/{} equal", preds.len()));
    }
    outcome(pass, format!("nodesize = n_train = 300, rho_root = {root:.6}; {}", parts.join(", ")))
}

fn criterion_8() -> Outcome {
    let mut separated = 0;
    let mut means = Vec::new();
    for k in 0..10 {
        let seed = substream_seed(0xAA, k);
        let ds = dgp::simulate(&Scenario::AccuracyHigh.config(CorrelationLevel::High, 1000, seed)).unwrap();
        let cfg = ForestConfig::default_for(5, 5, 10).with_seed(substream_seed(seed, 1));
        let reg = RegressionForestConfig::default().with_seed(substream_seed(seed, 2));
        let res = vimp::vimp(&ds.x, &ds.y, &ds.z, &cfg, &reg).unwrap();
        let important = res.ranks[..5].iter().sum::<usize>() as f64 / 5.0;
        let noise = res.ranks[5..].iter().sum::<usize>() as f64 / 5.0;
        separated += usize::from(important < noise);
        means.push(format!("{important:.1}/{noise:.1}"));
    }
    outcome(
        separated >= 9,
        format!("accuracy_high, n = 1000: important ranked ahead in {separated}/10 (need 9); mean ranks important/noise {}", means.join(" ")),
    )
}

fn criterion_9(swor: &[dgp::AccuracyResult], boot: &[dgp::AccuracyResult]) -> Outcome {
    let m = |r: &[dgp::AccuracyResult]| r.iter().map(|a| a.mae_rfcca).sum::<f64>() / r.len() as f64;
    let (a, b) = (m(swor), m(boot));
    outcome((a - b).abs() < 0.05, format!("mean MAE subsample {a:.4}, bootstrap {b:.4}, difference {:.4} (< 0.05)", (a - b).abs()))
}

fn criterion_10() -> Outcome {
    let ds = dgp::simulate(&Scenario::H1Noise.config(CorrelationLevel::High, 300, 0xAB)).unwrap();
    let query = dgp::simulate(&Scenario::H1Noise.config(CorrelationLevel::High, 50, 0xAC)).unwrap();
    let cfg = ForestConfig { ntree: 60, ..ForestConfig::default_for(5, 5, 10) }.with_seed(0xAD);
    let fit = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| forest::train(&ds.x, &ds.y, &ds.z, &cfg).unwrap())
    };
    let (a, b) = (fit(1), fit(3));
    let bytes_a = model_io::to_bytes(&a);
    let same_file = bytes_a == model_io::to_bytes(&b);
    let preds = |m: &rfcca::Forest| -> Vec<Option<f64>> { m.predict(&query.z).unwrap().into_iter().map(|r| r.ok()).collect() };
    let pa = preds(&a);
    let same_pred = pa == preds(&b) && a.oob_estimates() == b.oob_estimates();
    let loaded: rfcca::Forest = model_io::from_bytes(&bytes_a).unwrap();
    let round_trip = preds(&loaded) == pa && model_io::to_bytes(&loaded) == bytes_a;
    let other_seed = model_io::to_bytes(&forest::train(&ds.x, &ds.y, &ds.z, &cfg.clone().with_seed(0xAE)).unwrap()) != bytes_a;
    outcome(
        same_file && same_pred && round_trip && other_seed,
        format!(
            "identical model files {same_file} (1 vs 3 threads), identical predictions {same_pred}, round trip {round_trip}, other seed differs {other_seed}; {} bytes",
            bytes_a.len()
        ),
    )
}

fn main() {
    let selected: Option<Vec<u32>> = std::env::var("RFCCA_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |k: u32| selected.as_ref().is_none_or(|s| s.contains(&k));
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |k: u32, name: &'static str, o: Outcome| {
        println!("[{}] criterion {k:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((k, name, o));
    };

    if wanted(1) {
        report(1, "cca oracle equivalence", criterion_1());
    }
    if wanted(2) {
        report(2, "affine invariance", criterion_2());
    }
    if wanted(3) {
        report(3, "single split recovery", criterion_3());
    }
    let mut type1 = None;
    if wanted(4) {
        let (o, rate) = criterion_4();
        type1 = Some(rate);
        report(4, "type-1 error", o);
    }
    if wanted(5) {
        report(5, "power ordering", criterion_5(type1));
    }
    let swor = (wanted(6) || wanted(9)).then(|| accuracy_runs(SamplingMode::SubsampleWithoutReplacement));
    if wanted(6) {
        report(6, "accuracy vs benchmark", criterion_6(swor.as_ref().unwrap()));
    }
    if wanted(7) {
        report(7, "underfitting collapse", criterion_7());
    }
    if wanted(8) {
        report(8, "vimp rank separation", criterion_8());
    }
    if wanted(9) {
        let boot = accuracy_runs(SamplingMode::Bootstrap);
        report(9, "sampling mode sanity", criterion_9(swor.as_ref().unwrap(), &boot));
    }
    if wanted(10) {
        report(10, "determinism and serialization", criterion_10());
    }

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
