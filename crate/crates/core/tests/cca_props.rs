use proptest::prelude::*;
use rfcca::cca::{cca, cca_weighted, first_canonical_correlation};
use rfcca::DataMatrix;

fn block(n: usize, m: usize, vals: &[f64], prefix: &str) -> DataMatrix<f64> {
    let cols = (0..m).map(|j| (0..n).map(|i| vals[(i * m + j) % vals.len()]).collect()).collect();
    DataMatrix::from_columns_prefixed(cols, prefix).unwrap()
}

// Mix of noise and a shared component so correlations span the range.
fn pair(n: usize, p: usize, q: usize, a: &[f64], b: &[f64], mix: f64) -> (DataMatrix<f64>, DataMatrix<f64>) {
    let x = block(n, p, a, "x");
    let mut ycols: Vec<Vec<f64>> = (0..q).map(|j| (0..n).map(|i| b[(i * q + j + 7) % b.len()]).collect()).collect();
    for (i, v) in ycols[0].iter_mut().enumerate() {
        *v += mix * x.get(i, 0);
    }
    (x, DataMatrix::from_columns_prefixed(ycols, "y").unwrap())
}

fn data() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<f64>, f64)> {
    (1usize..4, 1usize..4, 12usize..40).prop_flat_map(|(p, q, n)| {
        (
            Just(p),
            Just(q),
            Just(n),
            prop::collection::vec(-3.0f64..3.0, 97),
            prop::collection::vec(-3.0f64..3.0, 89),
            0.0f64..3.0,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlations_lie_in_unit_interval((p, q, n, a, b, mix) in data()) {
        let (x, y) = pair(n, p, q, &a, &b, mix);
        if let Ok(res) = cca(&x, &y) {
            prop_assert_eq!(res.k(), p.min(q));
            for w in res.correlations.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            for &c in &res.correlations {
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }
    }

    #[test]
    fn symmetric_in_blocks((p, q, n, a, b, mix) in data()) {
        let (x, y) = pair(n, p, q, &a, &b, mix);
        if let (Ok(r1), Ok(r2)) = (first_canonical_correlation(&x, &y), first_canonical_correlation(&y, &x)) {
            prop_assert!((r1 - r2).abs() < 1e-9, "{} vs {}", r1, r2);
        }
    }

    #[test]
    fn invariant_to_shift_and_scale((p, q, n, a, b, mix) in data(), s in 0.1f64..10.0, t in -5.0f64..5.0) {
        let (x, y) = pair(n, p, q, &a, &b, mix);
        let x2 = x.map_columns(|j, c| c.iter().map(|v| v * s * (j as f64 + 1.0) + t).collect());
        let y2 = y.map_columns(|_, c| c.iter().map(|v| -v / s + t).collect());
        if let (Ok(r1), Ok(r2)) = (first_canonical_correlation(&x, &y), first_canonical_correlation(&x2, &y2)) {
            prop_assert!((r1 - r2).abs() < 1e-8, "{} vs {}", r1, r2);
        }
    }

    #[test]
    fn integer_weights_match_repeated_rows((p, q, n, a, b, mix) in data(), reps in prop::collection::vec(1u32..4, 40)) {
        let (x, y) = pair(n, p, q, &a, &b, mix);
        let rows: Vec<usize> = (0..n).collect();
        let weights: Vec<f64> = rows.iter().map(|&i| reps[i] as f64).collect();
        let expanded: Vec<usize> = rows.iter().flat_map(|&i| std::iter::repeat_n(i, reps[i] as usize)).collect();
        let weighted = cca_weighted(&x, &y, &rows, &weights, false);
        let repeated = first_canonical_correlation(&x.select_rows(&expanded), &y.select_rows(&expanded));
        if let (Ok(w), Ok(r)) = (weighted, repeated) {
            prop_assert!((w.first() - r).abs() < 1e-8, "{} vs {}", w.first(), r);
        }
    }
}

#[test]
fn exact_linear_relation_gives_one() {
    let x = DataMatrix::from_columns_prefixed(vec![(0..20).map(|i| (i as f64).sin()).collect()], "x").unwrap();
    let y = x.map_columns(|_, c| c.iter().map(|v| 2.0 * v - 1.0).collect());
    assert!((first_canonical_correlation(&x, &y).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn too_few_rows_is_degenerate() {
    let x = block(3, 2, &[1.0, 2.0, 0.5, 3.0, -1.0, 4.0], "x");
    let y = block(3, 1, &[0.3, 0.1, 0.7], "y");
    assert!(first_canonical_correlation(&x, &y).is_err());
}
