//! Fixed-effect absorption by alternating projections.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AbsorbOptions {
    /// Stop when the largest entry of the conjugate-gradient residual is below this.
    pub tol: f64,
    /// Iteration cap (sweeps for one dimension, CG steps otherwise).
    pub max_sweeps: usize,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 10_000,
        }
    }
}

/// One fixed-effect dimension: a group id per row.
#[derive(Debug, Clone)]
pub struct FeDimension {
    pub ids: Vec<u32>,
    pub n_groups: usize,
}

impl FeDimension {
    pub fn new(ids: Vec<u32>) -> Self {
        let n_groups = ids.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
        Self { ids, n_groups }
    }

    fn counts(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_groups];
        for &g in &self.ids {
            c[g as usize] += 1.0;
        }
        c
    }

    fn subset(&self, keep: &[bool]) -> FeDimension {
        let mut remap = vec![u32::MAX; self.n_groups];
        let mut next = 0u32;
        let mut ids = Vec::new();
        for (&g, &k) in self.ids.iter().zip(keep) {
            if !k {
                continue;
            }
            if remap[g as usize] == u32::MAX {
                remap[g as usize] = next;
                next += 1;
            }
            ids.push(remap[g as usize]);
        }
        FeDimension {
            ids,
            n_groups: next as usize,
        }
    }
}

/// Rows to keep after iteratively dropping singleton groups in any dimension.
pub fn singleton_mask(dims: &[FeDimension]) -> Vec<bool> {
    let n = dims.first().map_or(0, |d| d.ids.len());
    let mut keep = vec![true; n];
    loop {
        let mut changed = false;
        for d in dims {
            let mut counts = vec![0usize; d.n_groups];
            for (i, &g) in d.ids.iter().enumerate() {
                if keep[i] {
                    counts[g as usize] += 1;
                }
            }
            for (i, &g) in d.ids.iter().enumerate() {
                if keep[i] && counts[g as usize] == 1 {
                    keep[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return keep;
        }
    }
}

/// Fixed effects restricted to the rows in `keep`, with groups renumbered.
pub fn restrict(dims: &[FeDimension], keep: &[bool]) -> Vec<FeDimension> {
    dims.iter().map(|d| d.subset(keep)).collect()
}

fn demean(col: &mut [f64], dim: &FeDimension, counts: &[f64], sums: &mut [f64]) -> f64 {
    sums.iter_mut().for_each(|s| *s = 0.0);
    for (v, &g) in col.iter().zip(&dim.ids) {
        sums[g as usize] += v;
    }
    for (s, c) in sums.iter_mut().zip(counts) {
        *s /= c;
    }
    let mut change: f64 = 0.0;
    for (v, &g) in col.iter_mut().zip(&dim.ids) {
        let m = sums[g as usize];
        *v -= m;
        change = change.max(m.abs());
    }
    change
}

/// Forward then backward demeaning sweep; symmetric, so conjugate gradients
/// apply to `I - T`.
fn symmetric_sweep(v: &mut [f64], dims: &[FeDimension], counts: &[Vec<f64>], scratch: &mut [Vec<f64>]) {
    for k in 0..dims.len() {
        demean(v, &dims[k], &counts[k], &mut scratch[k]);
    }
    for k in (0..dims.len() - 1).rev() {
        demean(v, &dims[k], &counts[k], &mut scratch[k]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Residualize each column on all fixed-effect dimensions in place.
/// Several dimensions are handled by conjugate gradients on the symmetric
/// alternating-projection operator: the fixed-effect fit `f` solves
/// `(I - T) f = (I - T) x`. Returns the largest iteration count.
pub fn absorb(columns: &mut [Vec<f64>], dims: &[FeDimension], opts: &AbsorbOptions) -> Result<usize> {
    if dims.is_empty() {
        return Ok(0);
    }
    let counts: Vec<Vec<f64>> = dims.iter().map(FeDimension::counts).collect();
    if counts.iter().flatten().any(|&c| c == 0.0) {
        return Err(Error::Data("empty fixed-effect group".into()));
    }
    let mut scratch: Vec<Vec<f64>> = dims.iter().map(|d| vec![0.0; d.n_groups]).collect();
    if dims.len() == 1 {
        for col in columns.iter_mut() {
            demean(col, &dims[0], &counts[0], &mut scratch[0]);
        }
        return Ok(1);
    }
    let n = columns.first().map_or(0, Vec::len);
    let mut worst = 0usize;
    let mut ap = vec![0.0; n];
    for (ci, col) in columns.iter_mut().enumerate() {
        // residual r = b - (I - T) f with f = 0
        let mut r = col.clone();
        symmetric_sweep(&mut r, dims, &counts, &mut scratch);
        r.iter_mut().zip(col.iter()).for_each(|(t, x)| *t = x - *t);
        let mut f = vec![0.0; n];
        let mut p = r.clone();
        let mut rs = dot(&r, &r);
        let mut iters = 0usize;
        while max_abs(&r) >= opts.tol {
            iters += 1;
            if iters > opts.max_sweeps {
                return Err(Error::solver(
                    "fixed-effect absorption",
                    format!(
                        "column {ci} residual {:e} after {} iterations",
                        max_abs(&r),
                        opts.max_sweeps
                    ),
                ));
            }
            ap.copy_from_slice(&p);
            symmetric_sweep(&mut ap, dims, &counts, &mut scratch);
            ap.iter_mut().zip(&p).for_each(|(a, q)| *a = q - *a);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rs / pap;
            f.iter_mut().zip(&p).for_each(|(fi, q)| *fi += alpha * q);
            r.iter_mut().zip(&ap).for_each(|(ri, a)| *ri -= alpha * a);
            let rs_new = dot(&r, &r);
            let beta = rs_new / rs;
            rs = rs_new;
            p.iter_mut().zip(&r).for_each(|(q, ri)| *q = ri + beta * *q);
        }
        col.iter_mut().zip(&f).for_each(|(x, fi)| *x -= fi);
        // one exact projection pass mops up the CG remainder
        symmetric_sweep(col, dims, &counts, &mut scratch);
        worst = worst.max(iters.max(1));
    }
    Ok(worst)
}
