//! Library results checked against independent reference computations.

use nalgebra::{DMatrix, SymmetricEigen};

use handa::data::{make_synthetic, split_target, SplitSpec, SyntheticSpec};
use handa::eval::{fit_pca_2d, paired_t_test};
use handa::numerics::{Matrix, Rng};

/// Student t density for ν = 4: Γ(5/2) / (√(4π) Γ(2)) = 3/8.
fn t4_density(x: f64) -> f64 {
    0.375 * (1.0 + x * x / 4.0).powf(-2.5)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn paired_t_test_matches_numerical_integration() {
    let diffs = [1.0, -1.0, 2.0, 0.0, 1.0];
    let zeros = [0.0; 5];
    let r = paired_t_test(&diffs, &zeros).unwrap();
    // mean 0.6, sample sd √1.3, n = 5
    let t = 0.6 / (1.3f64.sqrt() / 5f64.sqrt());
    assert!((r.t - t).abs() <= 1e-12);
    assert_eq!(r.df, 4);
    let p = 1.0 - 2.0 * simpson(t4_density, 0.0, t.abs(), 20_000);
    assert!((r.p - p).abs() <= 1e-9, "p {} vs oracle {p}", r.p);
    // sign of the difference does not matter for a two-sided test
    let flipped = paired_t_test(&zeros, &diffs).unwrap();
    assert_eq!(flipped.p, r.p);
    assert_eq!(flipped.t, -r.t);
}

#[test]
fn pca_variances_match_dense_eigensolver() {
    for seed in 0..10u64 {
        let mut rng = Rng::new(seed);
        let (d, n) = (3 + seed as usize % 4, 12 + seed as usize);
        let mix = rng.normal_matrix(d, d);
        let x = mix.matmul(&rng.normal_matrix(d, n)).unwrap();
        let p = fit_pca_2d(&x).unwrap();

        let m = DMatrix::from_fn(d, n, |i, j| x[(i, j)]);
        let centered = DMatrix::from_fn(d, n, |i, j| m[(i, j)] - m.row(i).mean());
        let cov = &centered * centered.transpose() / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        assert!((p.variances[0] - vals[0]).abs() <= 1e-6, "seed {seed}");
        assert!((p.variances[1] - vals[1]).abs() <= 1e-6, "seed {seed}");
    }
}

/// One-vs-rest least squares with a bias, solved by nalgebra.
fn linear_classifier(x: &Matrix, y: &[usize], classes: usize) -> DMatrix<f64> {
    let (d, n) = x.shape();
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j == d { 1.0 } else { x[(j, i)] });
    let targets = DMatrix::from_fn(n, classes, |i, c| if y[i] == c { 1.0 } else { -1.0 });
    let gram = design.transpose() * &design + DMatrix::identity(d + 1, d + 1) * 1e-6;
    gram.cholesky().unwrap().solve(&(design.transpose() * targets))
}

#[test]
fn synthetic_target_is_linearly_solvable() {
    let spec = SyntheticSpec::default();
    let (_, target) = make_synthetic(&spec).unwrap();
    let split = split_target(&target, &SplitSpec { labeled_per_class: 100, seed: 0, test_fraction: 1.0 }).unwrap();
    let w = linear_classifier(split.labeled.features(), split.labeled.labels().unwrap(), 3);
    let x = split.test.features();
    let truth = split.test.labels().unwrap();
    let d = x.rows();
    let mut hits = 0;
    for (j, &y) in truth.iter().enumerate() {
        let score = |c: usize| (0..d).map(|i| x[(i, j)] * w[(i, c)]).sum::<f64>() + w[(d, c)];
        let best = (0..3).max_by(|&a, &b| score(a).total_cmp(&score(b))).unwrap();
        hits += usize::from(best == y);
    }
    let acc = hits as f64 / truth.len() as f64;
    assert!(acc >= 0.95, "oracle ceiling {acc}");
}
