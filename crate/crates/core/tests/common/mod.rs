//! Brute-force oracles shared by the estimator tests and the acceptance run.

use incidence_core::econometrics::{ols, Frame, RegressionSpec, INTERCEPT};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frame(cols: &[(&str, &Vec<f64>)]) -> Frame {
    let mut f = Frame::new();
    for (name, v) in cols {
        f.set_numeric(name, (*v).clone()).unwrap();
    }
    f
}

fn spec(x: &[&str], fe: &[&str], cluster: &str) -> RegressionSpec {
    RegressionSpec {
        outcome: "y".into(),
        endogenous: x.iter().map(|s| s.to_string()).collect(),
        fixed_effects: fe.iter().map(|g| vec![g.to_string()]).collect(),
        cluster: vec![cluster.into()],
        ..Default::default()
    }
}

/// Largest coefficient gap between the two-way absorbed regression and
/// least squares on explicit dummy columns, on an unbalanced `n`-row design.
pub fn dense_oracle_gap(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (na, nb) = (12usize, 8usize);
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..na) as f64).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..nb) as f64).collect();
    let c: Vec<f64> = (0..n).map(|i| (i % 10) as f64).collect();
    let x1: Vec<f64> = (0..n).map(|i| rng.random::<f64>() + 0.1 * a[i]).collect();
    let x2: Vec<f64> = (0..n).map(|i| rng.random::<f64>() - 0.2 * b[i]).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.5 * x1[i] - 0.7 * x2[i] + a[i].sin() + b[i].cos() + rng.random::<f64>())
        .collect();
    let f = frame(&[("y", &y), ("x1", &x1), ("x2", &x2), ("a", &a), ("b", &b), ("c", &c)]);
    let r = ols(&spec(&["x1", "x2"], &["a", "b"], "c"), &f).unwrap();
    assert_eq!(r.singletons_dropped, 0);

    // every a dummy and all but the first b dummy
    let design = DMatrix::from_fn(n, 2 + na + nb - 1, |i, j| match j {
        0 => x1[i],
        1 => x2[i],
        j if j < 2 + na => (a[i] == (j - 2) as f64) as u8 as f64,
        j => (b[i] == (j - 1 - na) as f64) as u8 as f64,
    });
    let beta = design.svd(true, true).solve(&DVector::from_vec(y), 1e-14).unwrap();
    let gap1 = (r.coef("x1").unwrap().estimate - beta[0]).abs();
    let gap2 = (r.coef("x2").unwrap().estimate - beta[1]).abs();
    gap1.max(gap2)
}

/// Largest relative gap between the reported CR1 covariance (and
/// coefficients) and an explicit sum over clusters on a 50-row instance.
pub fn sandwich_oracle_gap(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 50;
    let groups = 7;
    let g: Vec<f64> = (0..n).map(|i| (i % groups) as f64).collect();
    let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 0.5 + x1[i] - 2.0 * x2[i] + rng.random::<f64>() + g[i] * 0.1)
        .collect();
    let f = frame(&[("y", &y), ("x1", &x1), ("x2", &x2), ("g", &g)]);
    let r = ols(&spec(&["x1", "x2"], &[], "g"), &f).unwrap();

    let x = DMatrix::from_fn(n, 3, |i, j| [x1[i], x2[i], 1.0][j]);
    let yv = DVector::from_vec(y);
    let bread = (x.transpose() * &x).try_inverse().unwrap();
    let b = &bread * x.transpose() * &yv;
    let u = &yv - &x * &b;
    let mut meat = DMatrix::zeros(3, 3);
    for cluster in 0..groups {
        let mut s = DVector::zeros(3);
        for i in (0..n).filter(|&i| g[i] == cluster as f64) {
            s += x.row(i).transpose() * u[i];
        }
        meat += &s * s.transpose();
    }
    let (gn, nn, kk) = (groups as f64, n as f64, 3.0);
    let v = (&bread * meat * &bread) * (gn / (gn - 1.0) * (nn - 1.0) / (nn - kk));

    let names = ["x1", "x2", INTERCEPT];
    let pos = |name: &str| r.coefficients.iter().position(|c| c.name == name).unwrap();
    let mut worst: f64 = 0.0;
    for (i, ni) in names.iter().enumerate() {
        worst = worst.max((r.coefficients[pos(ni)].estimate - b[i]).abs() / b[i].abs().max(1.0));
        for (j, nj) in names.iter().enumerate() {
            let gap = (r.vcov[pos(ni)][pos(nj)] - v[(i, j)]).abs() / v[(i, j)].abs().max(1e-300);
            worst = worst.max(gap);
        }
    }
    worst
}
