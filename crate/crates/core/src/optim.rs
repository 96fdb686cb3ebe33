//! Box-constrained Nelder-Mead and Latin-hypercube start points.

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Stop once the best value falls below this.
    pub f_target: f64,
    /// Stop once the simplex diameter (unit-cube coordinates) falls below this.
    pub x_tol: f64,
    pub max_evals: usize,
    /// Initial simplex edge in unit-cube coordinates.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            f_target: 1e-8,
            x_tol: 1e-7,
            max_evals: 4000,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    /// Minimizer in unit-cube coordinates.
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

fn clamp_unit(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let best = &simplex[0];
    simplex[1..]
        .iter()
        .map(|v| v.iter().zip(best).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Minimize `f` over the unit cube `[0, 1]^d`; trial points are clamped onto
/// the cube. Non-finite objective values are treated as `+inf`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let d = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut start = x0.to_vec();
    clamp_unit(&mut start);
    if d == 0 {
        let v = eval(&start, &mut evals);
        return Minimum {
            x: start,
            f: v,
            evals,
            converged: true,
        };
    }

    let mut simplex = vec![start.clone()];
    for i in 0..d {
        let mut v = start.clone();
        // step inward when the start sits on the upper face
        v[i] += if v[i] + opts.initial_step <= 1.0 {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let order = |simplex: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| {
        let mut idx: Vec<usize> = (0..simplex.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        *simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        *values = idx.iter().map(|&i| values[i]).collect();
    };

    loop {
        order(&mut simplex, &mut values);
        if values[0] < opts.f_target || diameter(&simplex) < opts.x_tol {
            return Minimum {
                x: simplex[0].clone(),
                f: values[0],
                evals,
                converged: true,
            };
        }
        if evals >= opts.max_evals {
            return Minimum {
                x: simplex[0].clone(),
                f: values[0],
                evals,
                converged: false,
            };
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| {
            let mut p: Vec<f64> = centroid.iter().zip(&simplex[d]).map(|(c, w)| c + t * (w - c)).collect();
            clamp_unit(&mut p);
            p
        };

        let reflected = along(-1.0);
        let f_r = eval(&reflected, &mut evals);
        if f_r < values[0] {
            let expanded = along(-2.0);
            let f_e = eval(&expanded, &mut evals);
            if f_e < f_r {
                simplex[d] = expanded;
                values[d] = f_e;
            } else {
                simplex[d] = reflected;
                values[d] = f_r;
            }
            continue;
        }
        if f_r < values[d - 1] {
            simplex[d] = reflected;
            values[d] = f_r;
            continue;
        }
        let (contracted, f_c) = if f_r < values[d] {
            let c = along(-0.5);
            let v = eval(&c, &mut evals);
            (c, v)
        } else {
            let c = along(0.5);
            let v = eval(&c, &mut evals);
            (c, v)
        };
        if f_c < values[d].min(f_r) {
            simplex[d] = contracted;
            values[d] = f_c;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for i in 1..=d {
            for j in 0..d {
                simplex[i][j] = best[j] + 0.5 * (simplex[i][j] - best[j]);
            }
            values[i] = eval(&simplex[i], &mut evals);
        }
    }
}

/// `n` Latin-hypercube points in `[0, 1]^d`.
pub fn latin_hypercube<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            points[i][j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimizes_shifted_quadratic() {
        let target = [0.3, 0.7, 0.55];
        let res = nelder_mead(
            |x| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum(),
            &[0.9, 0.1, 0.5],
            &NelderMeadOptions {
                f_target: 1e-20,
                x_tol: 1e-10,
                ..Default::default()
            },
        );
        assert!(res.converged);
        for (a, b) in res.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn respects_the_box() {
        // unconstrained minimum at x = -1, box optimum at 0
        let res = nelder_mead(
            |x| (x[0] + 1.0).powi(2) + (x[1] - 0.5).powi(2),
            &[0.5, 0.2],
            &Default::default(),
        );
        assert!(res.x[0].abs() < 1e-6);
        assert!(res.x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn lhs_covers_every_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = latin_hypercube(8, 3, &mut rng);
        for j in 0..3 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[j] * 8.0) as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..8).collect::<Vec<_>>());
        }
    }
}
