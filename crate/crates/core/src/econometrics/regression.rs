//! Least squares and two-stage least squares on fixed-effect-absorbed data
//! with cluster-robust (CR1) covariance.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::frame::{group_ids, Frame};
use super::hdfe::{absorb, restrict, singleton_mask, AbsorbOptions, FeDimension};
use crate::error::{Error, Result};

pub const INTERCEPT: &str = "(intercept)";

/// Relative residual norm below which a regressor is treated as collinear.
const COLLINEAR_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionSpec {
    pub outcome: String,
    /// Regressors of interest; instrumented in [`tsls`], plain in [`ols`].
    pub endogenous: Vec<String>,
    /// Excluded instruments (2SLS only).
    pub instruments: Vec<String>,
    pub controls: Vec<String>,
    /// Each entry is one fixed-effect dimension, keyed by the interaction of
    /// the listed columns.
    pub fixed_effects: Vec<Vec<String>>,
    /// Cluster key columns; empty means one cluster per row.
    pub cluster: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Coefficient {
    fn new(name: &str, estimate: f64, se: f64) -> Self {
        Self {
            name: name.to_string(),
            estimate,
            se,
            t: estimate / se,
            ci_low: estimate - 1.96 * se,
            ci_high: estimate + 1.96 * se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage {
    pub endogenous: String,
    /// Coefficients on the excluded instruments.
    pub coefficients: Vec<Coefficient>,
    /// Cluster-robust Wald F on the excluded instruments.
    pub f_stat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: String,
    pub outcome: String,
    pub coefficients: Vec<Coefficient>,
    pub first_stage: Vec<FirstStage>,
    pub n: usize,
    pub clusters: usize,
    pub singletons_dropped: usize,
    pub fe_iterations: usize,
    /// R-squared of the (absorbed) outcome.
    pub r2: f64,
    pub dropped: Vec<String>,
    pub warnings: Vec<String>,
    /// Cluster-robust covariance of `coefficients`, row-major.
    pub vcov: Vec<Vec<f64>>,
}

impl EstimateReport {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    /// Joint Wald test that the named coefficients are all zero, using the
    /// cluster-robust covariance; chi-square reference distribution.
    pub fn wald_test(&self, names: &[&str]) -> Result<WaldTest> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.coefficients
                    .iter()
                    .position(|c| c.name == *n)
                    .ok_or_else(|| Error::Data(format!("no coefficient {n}")))
            })
            .collect::<Result<_>>()?;
        let q = idx.len();
        if q == 0 {
            return Err(Error::Data("empty Wald test".into()));
        }
        let b = DVector::from_iterator(q, idx.iter().map(|&i| self.coefficients[i].estimate));
        let v = DMatrix::from_fn(q, q, |r, c| self.vcov[idx[r]][idx[c]]);
        let vinv = v
            .try_inverse()
            .ok_or_else(|| Error::Singular("covariance of the tested coefficients".into()))?;
        let statistic = (b.transpose() * vinv * &b)[(0, 0)];
        let chi2 = ChiSquared::new(q as f64).map_err(|e| Error::Inference(e.to_string()))?;
        Ok(WaldTest {
            statistic,
            df: q,
            p_value: chi2.sf(statistic),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Absorbed design ready for estimation.
struct Prepared {
    n: usize,
    y: Vec<f64>,
    columns: Vec<(String, Vec<f64>, f64)>,
    cluster: Vec<u32>,
    n_clusters: usize,
    singletons: usize,
    fe_iterations: usize,
}

impl Prepared {
    fn get(&self, name: &str) -> &(String, Vec<f64>, f64) {
        self.columns.iter().find(|c| c.0 == name).expect("prepared column")
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn prepare(spec: &RegressionSpec, frame: &Frame, regressors: &[String], opts: &AbsorbOptions) -> Result<Prepared> {
    let keys: Vec<&String> = spec.fixed_effects.iter().flatten().chain(&spec.cluster).collect();
    let mut mask = vec![true; frame.len()];
    for name in std::iter::once(&spec.outcome).chain(regressors).chain(keys) {
        for (m, v) in mask.iter_mut().zip(frame.column(name)?) {
            *m &= v.is_finite();
        }
    }
    let mut sub = frame.filter(&mask);
    let dims: Vec<FeDimension> = spec
        .fixed_effects
        .iter()
        .map(|k| group_ids(&sub, k).map(|(ids, _)| FeDimension::new(ids)))
        .collect::<Result<_>>()?;
    let keep = singleton_mask(&dims);
    let singletons = keep.iter().filter(|k| !**k).count();
    let dims = if singletons > 0 {
        sub = sub.filter(&keep);
        restrict(&dims, &keep)
    } else {
        dims
    };
    let n = sub.len();
    if n == 0 {
        return Err(Error::Data("no usable observations".into()));
    }
    let (cluster, n_clusters) = if spec.cluster.is_empty() {
        ((0..n as u32).collect(), n)
    } else {
        group_ids(&sub, &spec.cluster)?
    };

    let mut names: Vec<String> = regressors.to_vec();
    let mut data: Vec<Vec<f64>> = regressors
        .iter()
        .map(|r| sub.column(r).map(<[f64]>::to_vec))
        .collect::<Result<_>>()?;
    if dims.is_empty() {
        names.push(INTERCEPT.to_string());
        data.push(vec![1.0; n]);
    }
    let raw_norms: Vec<f64> = data.iter().map(|c| norm(c)).collect();
    data.push(sub.column(&spec.outcome)?.to_vec());
    let fe_iterations = absorb(&mut data, &dims, opts)?;
    let y = data.pop().unwrap();
    Ok(Prepared {
        n,
        y,
        columns: names
            .into_iter()
            .zip(data)
            .zip(raw_norms)
            .map(|((a, b), c)| (a, b, c))
            .collect(),
        cluster,
        n_clusters,
        singletons,
        fe_iterations,
    })
}

/// Greedy selection of linearly independent columns given an orthonormal
/// `basis` already spanned; extends the basis with the kept columns.
fn select_independent<'a>(
    candidates: &[&'a (String, Vec<f64>, f64)],
    basis: &mut Vec<Vec<f64>>,
    dropped: &mut Vec<String>,
    warnings: &mut Vec<String>,
) -> Vec<&'a (String, Vec<f64>, f64)> {
    let mut kept = Vec::new();
    for &c in candidates {
        let mut r = c.1.clone();
        for _ in 0..2 {
            for q in basis.iter() {
                let dot: f64 = q.iter().zip(&r).map(|(a, b)| a * b).sum();
                r.iter_mut().zip(q).for_each(|(v, qv)| *v -= dot * qv);
            }
        }
        let rn = norm(&r);
        if rn <= COLLINEAR_TOL * c.2.max(f64::MIN_POSITIVE) {
            let msg = format!("dropped {} (collinear with fixed effects or other regressors)", c.0);
            warn!("{msg}");
            warnings.push(msg);
            dropped.push(c.0.clone());
            continue;
        }
        r.iter_mut().for_each(|v| *v /= rn);
        basis.push(r);
        kept.push(c);
    }
    kept
}

fn matrix(cols: &[&Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

fn inverse_gram(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    x.tr_mul(x)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("design matrix is not full rank".into()))
}

/// CR1 sandwich `(X'X)^-1 (sum_g X_g'u_g u_g'X_g) (X'X)^-1 * G/(G-1) * (N-1)/(N-K)`.
pub fn cluster_covariance(
    x: &DMatrix<f64>,
    u: &DVector<f64>,
    cluster: &[u32],
    n_clusters: usize,
    bread: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (n, k) = x.shape();
    if n_clusters < 2 {
        return Err(Error::Inference(format!("need at least 2 clusters, have {n_clusters}")));
    }
    if n <= k {
        return Err(Error::Inference(format!("{n} observations for {k} regressors")));
    }
    let mut scores = DMatrix::<f64>::zeros(n_clusters, k);
    for i in 0..n {
        let g = cluster[i] as usize;
        for j in 0..k {
            scores[(g, j)] += x[(i, j)] * u[i];
        }
    }
    let meat = scores.tr_mul(&scores);
    let g = n_clusters as f64;
    let factor = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
    Ok(bread * meat * bread * factor)
}

fn coefficients(names: &[&str], beta: &DVector<f64>, v: &DMatrix<f64>) -> Vec<Coefficient> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| Coefficient::new(n, beta[i], v[(i, i)].max(0.0).sqrt()))
        .collect()
}

fn vcov_rows(v: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..v.nrows()).map(|i| v.row(i).iter().copied().collect()).collect()
}

fn r_squared(y: &[f64], u: &DVector<f64>) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ssr: f64 = u.iter().map(|v| v * v).sum();
    if tss > 0.0 {
        1.0 - ssr / tss
    } else {
        f64::NAN
    }
}

/// OLS of the outcome on `endogenous ++ controls` after absorbing the fixed
/// effects (an intercept is added when there are none).
pub fn ols(spec: &RegressionSpec, frame: &Frame) -> Result<EstimateReport> {
    ols_with(spec, frame, &AbsorbOptions::default())
}

pub fn ols_with(spec: &RegressionSpec, frame: &Frame, opts: &AbsorbOptions) -> Result<EstimateReport> {
    let regressors: Vec<String> = spec.endogenous.iter().chain(&spec.controls).cloned().collect();
    let p = prepare(spec, frame, &regressors, opts)?;
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();
    let candidates: Vec<_> = p.columns.iter().collect();
    let kept = select_independent(&candidates, &mut Vec::new(), &mut dropped, &mut warnings);
    if kept.is_empty() {
        return Err(Error::Singular("no identifiable regressors remain".into()));
    }
    let x = matrix(&kept.iter().map(|c| &c.1).collect::<Vec<_>>(), p.n);
    let y = DVector::from_column_slice(&p.y);
    let bread = inverse_gram(&x)?;
    let beta = &bread * x.tr_mul(&y);
    let u = &y - &x * &beta;
    let v = cluster_covariance(&x, &u, &p.cluster, p.n_clusters, &bread)?;
    let names: Vec<&str> = kept.iter().map(|c| c.0.as_str()).collect();
    Ok(EstimateReport {
        estimator: "ols".into(),
        outcome: spec.outcome.clone(),
        coefficients: coefficients(&names, &beta, &v),
        first_stage: Vec::new(),
        n: p.n,
        clusters: p.n_clusters,
        singletons_dropped: p.singletons,
        fe_iterations: p.fe_iterations,
        r2: r_squared(&p.y, &u),
        dropped,
        warnings,
        vcov: vcov_rows(&v),
    })
}

/// Two-stage least squares of the outcome on `endogenous` (instrumented by
/// `instruments`) and `controls`, fixed effects absorbed.
pub fn tsls(spec: &RegressionSpec, frame: &Frame) -> Result<EstimateReport> {
    tsls_with(spec, frame, &AbsorbOptions::default())
}

pub fn tsls_with(spec: &RegressionSpec, frame: &Frame, opts: &AbsorbOptions) -> Result<EstimateReport> {
    if spec.endogenous.is_empty() {
        return Err(Error::config(
            "endogenous",
            "2SLS needs at least one endogenous regressor",
        ));
    }
    let regressors: Vec<String> = spec
        .endogenous
        .iter()
        .chain(&spec.instruments)
        .chain(&spec.controls)
        .cloned()
        .collect();
    let p = prepare(spec, frame, &regressors, opts)?;
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();
    let pick = |names: &[String]| -> Vec<&(String, Vec<f64>, f64)> { names.iter().map(|n| p.get(n)).collect() };
    let mut control_names = spec.controls.clone();
    if spec.fixed_effects.is_empty() {
        control_names.push(INTERCEPT.to_string());
    }
    let mut basis = Vec::new();
    let w = select_independent(&pick(&control_names), &mut basis, &mut dropped, &mut warnings);
    let mut zbasis = basis.clone();
    let x = select_independent(&pick(&spec.endogenous), &mut basis, &mut dropped, &mut warnings);
    let z = select_independent(&pick(&spec.instruments), &mut zbasis, &mut dropped, &mut warnings);
    if x.is_empty() {
        return Err(Error::Singular("all endogenous regressors were dropped".into()));
    }
    if z.len() < x.len() {
        return Err(Error::config(
            "instruments",
            format!("{} usable instruments for {} endogenous regressors", z.len(), x.len()),
        ));
    }

    let n = p.n;
    let zw: Vec<&Vec<f64>> = z.iter().chain(&w).map(|c| &c.1).collect();
    let zf = matrix(&zw, n);
    let zf_bread = inverse_gram(&zf)?;
    let xm = matrix(&x.iter().map(|c| &c.1).collect::<Vec<_>>(), n);
    let gamma = &zf_bread * zf.tr_mul(&xm);
    let xhat = &zf * &gamma;

    let mut first_stage = Vec::with_capacity(x.len());
    let l = z.len();
    let z_names: Vec<&str> = z.iter().map(|c| c.0.as_str()).collect();
    for (j, endo) in x.iter().enumerate() {
        let pi = gamma.column(j).into_owned();
        let resid = xm.column(j) - &zf * &pi;
        let v = cluster_covariance(&zf, &resid, &p.cluster, p.n_clusters, &zf_bread)?;
        let pi_z = pi.rows(0, l).into_owned();
        let v_zz = v.view((0, 0), (l, l)).into_owned();
        let f_stat = match v_zz.clone().cholesky() {
            Some(ch) => (pi_z.transpose() * ch.solve(&pi_z))[(0, 0)] / l as f64,
            None if pi_z.norm() > 1e-12 => f64::INFINITY,
            None => 0.0,
        };
        if !(f_stat >= 1e-8) {
            return Err(Error::Singular(format!(
                "weak first stage for {}: F = {f_stat:e}",
                endo.0
            )));
        }
        first_stage.push(FirstStage {
            endogenous: endo.0.clone(),
            coefficients: coefficients(&z_names, &pi_z, &v_zz),
            f_stat,
        });
    }

    let wm = matrix(&w.iter().map(|c| &c.1).collect::<Vec<_>>(), n);
    let second = if w.is_empty() { xhat.clone() } else { stack(&xhat, &wm) };
    let structural = if w.is_empty() { xm.clone() } else { stack(&xm, &wm) };
    let y = DVector::from_column_slice(&p.y);
    let bread = inverse_gram(&second)?;
    let beta = &bread * second.tr_mul(&y);
    let u = &y - &structural * &beta;
    let v = cluster_covariance(&second, &u, &p.cluster, p.n_clusters, &bread)?;
    let names: Vec<&str> = x.iter().chain(&w).map(|c| c.0.as_str()).collect();
    Ok(EstimateReport {
        estimator: "2sls".into(),
        outcome: spec.outcome.clone(),
        coefficients: coefficients(&names, &beta, &v),
        first_stage,
        n,
        clusters: p.n_clusters,
        singletons_dropped: p.singletons,
        fe_iterations: p.fe_iterations,
        r2: r_squared(&p.y, &u),
        dropped,
        warnings,
        vcov: vcov_rows(&v),
    })
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.columns_mut(0, a.ncols()).copy_from(a);
    m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    m
}
