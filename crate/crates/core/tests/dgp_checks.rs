use nalgebra::{DMatrix, SymmetricEigen};
use rfcca::dgp::{self, CorrelationLevel, DgpConfig, Scenario};
use rfcca::io::{self, Metadata};

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let sab: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let saa: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let sbb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    sab / (saa * sbb).sqrt()
}

fn sym(m: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(d, d, m)
}

// Largest canonical correlation of a joint covariance: square root of the
// top eigenvalue of Lx^-1 Sxy Syy^-1 Syx Lx^-T.
fn population_rho(cov: &DMatrix<f64>, p: usize, q: usize) -> f64 {
    let sxx = cov.view((0, 0), (p, p)).into_owned();
    let syy = cov.view((p, p), (q, q)).into_owned();
    let sxy = cov.view((0, p), (p, q)).into_owned();
    let lx = sxx.cholesky().unwrap().l();
    let lx_inv = lx.try_inverse().unwrap();
    let syy_inv = syy.try_inverse().unwrap();
    let m = &lx_inv * &sxy * syy_inv * sxy.transpose() * lx_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(m).eigenvalues.max().max(0.0).sqrt()
}

#[test]
fn covariate_correlations_match_design() {
    let cfg = DgpConfig { r_noise: 2, ..DgpConfig::setting(CorrelationLevel::Low, 20_000, 1) };
    let z = dgp::gen_covariates(&cfg, 2).unwrap();
    for a in 0..7 {
        for b in a + 1..7 {
            let c = pearson(z.col(a), z.col(b));
            if b < 5 {
                assert!((0.07..=0.13).contains(&c), "z{} z{}: {c}", a + 1, b + 1);
            } else {
                assert!(c.abs() < 0.03, "columns {a} {b}: {c}");
            }
        }
    }
    assert_eq!(z.names()[5], "noise1");
}

#[test]
fn row_covariance_is_psd_with_target_correlation() {
    for level in [CorrelationLevel::Low, CorrelationLevel::High] {
        let cfg = DgpConfig::setting(level, 10, 0);
        for k in 1..20 {
            let rho = k as f64 / 20.0;
            let cov = sym(&dgp::row_covariance(rho, &cfg), 10);
            let min = SymmetricEigen::new(cov.clone()).eigenvalues.min();
            assert!(min >= -1e-8, "rho {rho}: min eigenvalue {min}");
            let got = population_rho(&cov, 5, 5);
            assert!((got - rho).abs() < 1e-8, "rho {rho}: population value {got}");
        }
    }
}

#[test]
fn univariate_sample_correlation_is_close() {
    let cfg = DgpConfig { p: 1, q: 1, ..DgpConfig::setting(CorrelationLevel::High, 1, 0) };
    let n = 20_000;
    for (k, rho) in [0.1, 0.5, 0.85].into_iter().enumerate() {
        let (x, y) = dgp::gen_xy_for_rho(&vec![rho; n], &cfg, 40 + k as u64).unwrap();
        let r = pearson(x.col(0), y.col(0));
        let se = (1.0 - rho * rho) / (n as f64).sqrt();
        assert!((r - rho).abs() < 3.0 * se, "rho {rho}: sample {r}, se {se}");
    }
}

#[test]
fn mean_true_correlation_by_level() {
    for (level, lo, hi) in [(CorrelationLevel::Low, 0.24, 0.34), (CorrelationLevel::High, 0.55, 0.65)] {
        let ds = dgp::simulate(&DgpConfig::setting(level, 1000, 3)).unwrap();
        let mean = ds.true_rho.iter().sum::<f64>() / 1000.0;
        assert!((lo..=hi).contains(&mean), "{level:?}: mean {mean}");
    }
}

#[test]
fn null_presets_hide_any_effect() {
    let ds = dgp::simulate(&Scenario::H0Case1.config(CorrelationLevel::Low, 50, 4)).unwrap();
    assert!(ds.true_rho.iter().all(|&r| (r - 0.3).abs() < 1e-15));
    assert_eq!(ds.z.ncols(), 10);
    // Case 2 still varies, but only through covariates that are not returned.
    let ds = dgp::simulate(&Scenario::H0Case2.config(CorrelationLevel::Low, 50, 4)).unwrap();
    assert!(ds.true_rho.iter().any(|&r| (r - ds.true_rho[0]).abs() > 1e-6));
    assert!(ds.z.names().iter().all(|n| n.starts_with("noise")));
    assert_eq!(ds.z.ncols(), 10);
}

#[test]
fn simulate_is_seeded() {
    let cfg = Scenario::H1Noise.config(CorrelationLevel::High, 60, 9);
    assert_eq!(dgp::simulate(&cfg).unwrap(), dgp::simulate(&cfg).unwrap());
    assert_ne!(dgp::simulate(&cfg).unwrap(), dgp::simulate(&cfg.clone().with_seed(10)).unwrap());
}

#[test]
fn export_round_trip() {
    let ds = dgp::simulate(&Scenario::H1Noise.config(CorrelationLevel::Low, 40, 5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (data, man) = (dir.path().join("data.csv"), dir.path().join("manifest.json"));
    let manifest = io::export_dataset(&ds, &data, &man, &Metadata::new(&"sim", 5)).unwrap();
    assert_eq!(io::ColumnManifest::from_json_file(&man).unwrap(), manifest);
    let (x, y, z) = io::load_dataset::<f64>(&data, &manifest).unwrap();
    for (a, b) in [(&x, &ds.x), (&y, &ds.y), (&z, &ds.z)] {
        assert_eq!(a.names(), b.names());
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(u, v)| (u - v).abs() <= 1e-12));
    }
    let table = io::read_numeric_file::<f64>(&data).unwrap();
    let rho = &table.columns[table.header.iter().position(|h| h == "true_rho").unwrap()];
    assert!(rho.iter().zip(&ds.true_rho).all(|(u, v)| (u - v).abs() <= 1e-12));
}
