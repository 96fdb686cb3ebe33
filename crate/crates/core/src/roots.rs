//! Scalar root finding: bracket expansion by doubling followed by Brent's
//! method (bisection safeguarding secant and inverse quadratic steps).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Absolute tolerance on the root location.
    pub xtol: f64,
    pub max_iter: usize,
    /// Maximum number of step doublings while searching for a sign change.
    pub max_expansions: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        // Equilibria are differenced at 1e-5 in logs, so the solve must be
        // far tighter than the reported quantities.
        Self {
            xtol: 1e-14,
            max_iter: 200,
            max_expansions: 200,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// A bracket `[lo, hi]` with `f(lo)` and `f(hi)` of opposite sign (or one zero).
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

fn opposite(a: f64, b: f64) -> bool {
    a == 0.0 || b == 0.0 || (a < 0.0) != (b < 0.0)
}

/// Grow `[x0 - step, x0 + step]` by doubling until `f` changes sign.
pub fn expand_bracket<F>(f: &mut F, x0: f64, step: f64, opts: &RootOptions) -> Result<Bracket>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f0 = f(x0)?;
    if !f0.is_finite() {
        return Err(Error::solver(
            "bracket",
            format!("non-finite residual {f0} at starting point {x0}"),
        ));
    }
    if f0 == 0.0 {
        return Ok(Bracket {
            lo: x0,
            hi: x0,
            f_lo: f0,
            f_hi: f0,
        });
    }
    let (mut lo, mut f_lo) = (x0, f0);
    let (mut hi, mut f_hi) = (x0, f0);
    let mut s = step.abs().max(f64::MIN_POSITIVE);
    let mut left_ok = true;
    let mut right_ok = true;
    for _ in 0..opts.max_expansions {
        if right_ok {
            let x = x0 + s;
            match f(x) {
                Ok(v) if v.is_finite() => {
                    if opposite(f_hi, v) {
                        return Ok(Bracket {
                            lo: hi,
                            hi: x,
                            f_lo: f_hi,
                            f_hi: v,
                        });
                    }
                    hi = x;
                    f_hi = v;
                }
                _ => right_ok = false,
            }
        }
        if left_ok {
            let x = x0 - s;
            match f(x) {
                Ok(v) if v.is_finite() => {
                    if opposite(v, f_lo) {
                        return Ok(Bracket {
                            lo: x,
                            hi: lo,
                            f_lo: v,
                            f_hi: f_lo,
                        });
                    }
                    lo = x;
                    f_lo = v;
                }
                _ => left_ok = false,
            }
        }
        if !left_ok && !right_ok {
            break;
        }
        s *= 2.0;
    }
    Err(Error::solver(
        "bracket",
        format!("no sign change found from x0 = {x0}: searched [{lo:.6e}, {hi:.6e}] with f = [{f_lo:.6e}, {f_hi:.6e}]"),
    ))
}

/// Brent's method on a valid bracket.
pub fn brent<F>(f: &mut F, bracket: Bracket, opts: &RootOptions) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let Bracket {
        lo: mut a,
        hi: mut b,
        f_lo: mut fa,
        f_hi: mut fb,
    } = bracket;
    if fa == 0.0 {
        return Ok(Root {
            x: a,
            fx: fa,
            iterations: 0,
        });
    }
    if fb == 0.0 {
        return Ok(Root {
            x: b,
            fx: fb,
            iterations: 0,
        });
    }
    if !opposite(fa, fb) {
        return Err(Error::solver(
            "brent",
            format!("endpoints do not bracket a root: f({a}) = {fa}, f({b}) = {fb}"),
        ));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=opts.max_iter {
        if opposite(fb, fc) && fb != 0.0 && fc != 0.0 {
            // keep c on the opposite side of b
        } else {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * opts.xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(Root {
                x: b,
                fx: fb,
                iterations: iter,
            });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let mut p: f64;
            let mut q: f64;
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
        if !fb.is_finite() {
            return Err(Error::solver(
                "brent",
                format!("non-finite residual at x = {b} (iteration {iter})"),
            ));
        }
    }
    Err(Error::solver(
        "brent",
        format!(
            "no convergence after {} iterations; last iterate {b} with residual {fb:.3e}",
            opts.max_iter
        ),
    ))
}

/// Expand a bracket around `x0` and refine it.
pub fn solve<F>(mut f: F, x0: f64, step: f64, opts: &RootOptions) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let bracket = expand_bracket(&mut f, x0, step, opts)?;
    brent(&mut f, bracket, opts)
}

/// Scan `n` equal cells of `[lo, hi]` for the first sign change, then refine.
/// Returns `Ok(None)` when `f` never changes sign on the grid.
pub fn solve_on_interval<F>(mut f: F, lo: f64, hi: f64, n: usize, opts: &RootOptions) -> Result<Option<Root>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let n = n.max(1);
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let v = match f(x) {
            Ok(v) if v.is_finite() => v,
            _ => {
                prev = None;
                continue;
            }
        };
        if let Some((px, pv)) = prev {
            if opposite(pv, v) {
                let bracket = Bracket {
                    lo: px,
                    hi: x,
                    f_lo: pv,
                    f_hi: v,
                };
                return brent(&mut f, bracket, opts).map(Some);
            }
        }
        prev = Some((x, v));
    }
    Ok(None)
}
