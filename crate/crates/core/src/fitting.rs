//! Numeric fitting utilities: single-frequency sinusoid least squares (used
//! by amplitude calibration and the effective-frequency checks) and a bounded
//! Nelder-Mead simplex search with jittered restarts (used by the
//! simultaneous three-state fit).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Sum of squared residuals of the best linear model
/// `a cos(2 pi f t) + b sin(2 pi f t) + c` at fixed frequency.
fn sinusoid_residual(ts: &[f64], ys: &[f64], f_mhz: f64) -> f64 {
    // normal equations for the 3-parameter linear model
    let mut m = [[0.0f64; 3]; 3];
    let mut v = [0.0f64; 3];
    for (&t, &y) in ts.iter().zip(ys) {
        let w = std::f64::consts::TAU * f_mhz * t;
        let basis = [w.cos(), w.sin(), 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            v[i] += basis[i] * y;
        }
    }
    let mat = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
    let rhs = nalgebra::Vector3::new(v[0], v[1], v[2]);
    let coef = match mat.lu().solve(&rhs) {
        Some(c) => c,
        None => return f64::INFINITY,
    };
    ts.iter()
        .zip(ys)
        .map(|(&t, &y)| {
            let w = std::f64::consts::TAU * f_mhz * t;
            let model = coef[0] * w.cos() + coef[1] * w.sin() + coef[2];
            (model - y) * (model - y)
        })
        .sum()
}

/// Least-squares estimate of the dominant oscillation frequency of `ys(ts)`
/// within `[f_min, f_max]` MHz: coarse scan of the residual followed by
/// golden-section refinement.
pub fn fit_oscillation_frequency(ts: &[f64], ys: &[f64], f_min_mhz: f64, f_max_mhz: f64) -> Result<f64> {
    if ts.len() != ys.len() || ts.len() < 8 {
        return Err(Error::InvalidParameter {
            name: "fit_oscillation_frequency",
            reason: "need at least 8 aligned samples".into(),
        });
    }
    if !f_min_mhz.is_finite() || f_min_mhz <= 0.0 || !f_max_mhz.is_finite() || f_max_mhz <= f_min_mhz {
        return Err(Error::InvalidParameter {
            name: "frequency window",
            reason: format!("invalid window [{f_min_mhz}, {f_max_mhz}]"),
        });
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    if ys.iter().map(|y| (y - mean).abs()).fold(0.0, f64::max) < 1e-12 {
        return Err(Error::InvalidParameter {
            name: "fit_oscillation_frequency",
            reason: "signal has no oscillation".into(),
        });
    }

    let coarse = 400usize;
    let mut best_k = 0usize;
    let mut best_r = f64::INFINITY;
    for k in 0..=coarse {
        let f = f_min_mhz + (f_max_mhz - f_min_mhz) * k as f64 / coarse as f64;
        let r = sinusoid_residual(ts, ys, f);
        if r < best_r {
            best_r = r;
            best_k = k;
        }
    }
    let df = (f_max_mhz - f_min_mhz) / coarse as f64;
    let mut lo = (f_min_mhz + (best_k as f64 - 1.0) * df).max(f_min_mhz);
    let mut hi = (f_min_mhz + (best_k as f64 + 1.0) * df).min(f_max_mhz);

    // golden-section refinement
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut r1 = sinusoid_residual(ts, ys, x1);
    let mut r2 = sinusoid_residual(ts, ys, x2);
    for _ in 0..80 {
        if r1 < r2 {
            hi = x2;
            x2 = x1;
            r2 = r1;
            x1 = hi - phi * (hi - lo);
            r1 = sinusoid_residual(ts, ys, x1);
        } else {
            lo = x1;
            x1 = x2;
            r1 = r2;
            x2 = lo + phi * (hi - lo);
            r2 = sinusoid_residual(ts, ys, x2);
        }
        if hi - lo < 1e-10 * f_max_mhz {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Options for the bounded Nelder-Mead search.
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Function evaluation budget per restart.
    pub max_evals: usize,
    /// Relative spread of the simplex objective values at which a restart is
    /// declared converged.
    pub rel_tol: f64,
    /// Number of independent runs; the first starts from the seed point, the
    /// rest from jittered copies.
    pub restarts: usize,
    /// Jitter amplitude as a fraction of each parameter's bound range.
    pub jitter_frac: f64,
    /// RNG seed for the jitters (logged by callers for reproducibility).
    pub seed: u64,
    /// Initial simplex step as a fraction of each parameter's bound range.
    pub init_step_frac: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 2000,
            rel_tol: 1e-6,
            restarts: 3,
            jitter_frac: 0.1,
            seed: 0,
            init_step_frac: 0.08,
        }
    }
}

/// Outcome of a bounded Nelder-Mead minimization.
#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective after each restart, in order.
    pub restart_bests: Vec<f64>,
    /// Best objective value after each simplex iteration, concatenated over
    /// restarts.
    pub trace: Vec<f64>,
}

fn clamp_into(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((xi, &l), &h) in x.iter_mut().zip(lo).zip(hi) {
        *xi = xi.clamp(l, h);
    }
}

/// Minimize `f` over the box `[lo, hi]` with Nelder-Mead simplex iterations;
/// candidate points are projected into the box.
pub fn nelder_mead_bounded<F>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), lo.len());
    assert_eq!(x0.len(), hi.len());
    let n = x0.len();
    assert!(n >= 1, "need at least one free parameter");

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut total_evals = 0usize;
    let mut best_x = x0.to_vec();
    clamp_into(&mut best_x, lo, hi);
    let mut best_f = f64::INFINITY;
    let mut any_converged = false;
    let mut restart_bests = Vec::with_capacity(opts.restarts.max(1));
    let mut trace = Vec::new();

    for restart in 0..opts.restarts.max(1) {
        let mut start = x0.to_vec();
        if restart > 0 {
            for (k, s) in start.iter_mut().enumerate() {
                let range = hi[k] - lo[k];
                *s += rng.random_range(-1.0..1.0) * opts.jitter_frac * range;
            }
        }
        clamp_into(&mut start, lo, hi);

        let (x, fx, evals, converged) = single_run(&mut f, &start, lo, hi, opts, &mut trace);
        total_evals += evals;
        any_converged |= converged;
        restart_bests.push(fx);
        if fx < best_f {
            best_f = fx;
            best_x = x;
        }
    }

    NelderMeadResult {
        x: best_x,
        fx: best_f,
        evaluations: total_evals,
        converged: any_converged,
        restart_bests,
        trace,
    }
}

fn single_run<F>(
    f: &mut F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NelderMeadOptions,
    trace: &mut Vec<f64>,
) -> (Vec<f64>, f64, usize, bool)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    // initial simplex: x0 plus per-axis displacements
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), f0));
    for k in 0..n {
        let mut xk = x0.to_vec();
        let range = hi[k] - lo[k];
        let step = opts.init_step_frac * range;
        xk[k] = if xk[k] + step <= hi[k] { xk[k] + step } else { xk[k] - step };
        clamp_into(&mut xk, lo, hi);
        let fk = eval(&xk, &mut evals);
        simplex.push((xk, fk));
    }

    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        trace.push(simplex[0].1);
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        if (f_worst - f_best).abs() <= opts.rel_tol * (f_best.abs() + 1e-12) {
            converged = true;
            break;
        }

        // centroid of all but worst
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }

        let worst = simplex[n].clone();
        let mut reflected: Vec<f64> = centroid
            .iter()
            .zip(&worst.0)
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        clamp_into(&mut reflected, lo, hi);
        let f_r = eval(&reflected, &mut evals);

        if f_r < simplex[0].1 {
            // try expansion
            let mut expanded: Vec<f64> = centroid
                .iter()
                .zip(&reflected)
                .map(|(c, r)| c + gamma * (r - c))
                .collect();
            clamp_into(&mut expanded, lo, hi);
            let f_e = eval(&expanded, &mut evals);
            simplex[n] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
        } else if f_r < simplex[n - 1].1 {
            simplex[n] = (reflected, f_r);
        } else {
            // contraction (outside if the reflection improved on the worst)
            let (towards, f_t) = if f_r < worst.1 { (&reflected, f_r) } else { (&worst.0, worst.1) };
            let mut contracted: Vec<f64> =
                centroid.iter().zip(towards).map(|(c, w)| c + rho * (w - c)).collect();
            clamp_into(&mut contracted, lo, hi);
            let f_c = eval(&contracted, &mut evals);
            if f_c < f_t {
                simplex[n] = (contracted, f_c);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for (xi, bi) in entry.0.iter_mut().zip(&best) {
                        *xi = bi + sigma * (*xi - bi);
                    }
                    clamp_into(&mut entry.0, lo, hi);
                    entry.1 = eval(&entry.0, &mut evals);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let (x, fx) = simplex.swap_remove(0);
    (x, fx, evals, converged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn recovers_sinusoid_frequency() {
        let f_true = 1.77;
        let ts: Vec<f64> = (0..200).map(|k| k as f64 * 0.01).collect();
        let ys: Vec<f64> = ts
            .iter()
            .map(|&t| 0.5 - 0.5 * (std::f64::consts::TAU * f_true * t).cos())
            .collect();
        let f = fit_oscillation_frequency(&ts, &ys, 0.5, 4.0).unwrap();
        assert_abs_diff_eq!(f, f_true, epsilon = 1e-6);
    }

    #[test]
    fn frequency_fit_with_offset_and_noise() {
        let f_true = 0.4;
        let ts: Vec<f64> = (0..240).map(|k| k as f64 * 0.05).collect();
        // deterministic pseudo-noise
        let ys: Vec<f64> = ts
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                0.3 + 0.4 * (std::f64::consts::TAU * f_true * t + 0.3).sin()
                    + 0.005 * ((k * 2654435761) % 1000) as f64 / 1000.0
            })
            .collect();
        let f = fit_oscillation_frequency(&ts, &ys, 0.1, 1.2).unwrap();
        assert_abs_diff_eq!(f, f_true, epsilon = 5e-4);
    }

    #[test]
    fn rejects_flat_signal() {
        let ts: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let ys = vec![0.7; 50];
        assert!(fit_oscillation_frequency(&ts, &ys, 0.1, 1.0).is_err());
    }

    #[test]
    fn nelder_mead_quadratic_bowl() {
        let target = [0.3, -1.2, 2.5];
        let f = |x: &[f64]| {
            x.iter().zip(&target).map(|(xi, ti)| (xi - ti) * (xi - ti)).sum::<f64>()
        };
        let res = nelder_mead_bounded(
            f,
            &[0.0, 0.0, 0.0],
            &[-5.0, -5.0, -5.0],
            &[5.0, 5.0, 5.0],
            &NelderMeadOptions::default(),
        );
        assert!(res.converged);
        for (xi, ti) in res.x.iter().zip(&target) {
            assert_abs_diff_eq!(xi, ti, epsilon = 1e-4);
        }
    }

    #[test]
    fn nelder_mead_respects_bounds() {
        // minimum outside the box; solution must sit on the boundary
        let f = |x: &[f64]| (x[0] - 10.0) * (x[0] - 10.0);
        let res = nelder_mead_bounded(f, &[0.0], &[-1.0], &[2.0], &NelderMeadOptions::default());
        assert_abs_diff_eq!(res.x[0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn nelder_mead_rosenbrock_with_restarts() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a)
        };
        let opts = NelderMeadOptions { max_evals: 4000, ..Default::default() };
        let res = nelder_mead_bounded(f, &[-1.5, 2.0], &[-3.0, -3.0], &[3.0, 3.0], &opts);
        assert!(res.fx < 1e-6, "fx = {}", res.fx);
    }

    #[test]
    fn nelder_mead_is_deterministic_given_seed() {
        let f = |x: &[f64]| x[0].sin() * x[1].cos() + 0.1 * (x[0] * x[0] + x[1] * x[1]);
        let opts = NelderMeadOptions { seed: 42, ..Default::default() };
        let a = nelder_mead_bounded(f, &[1.0, 1.0], &[-4.0, -4.0], &[4.0, 4.0], &opts);
        let b = nelder_mead_bounded(f, &[1.0, 1.0], &[-4.0, -4.0], &[4.0, 4.0], &opts);
        assert_eq!(a.x, b.x);
        assert_eq!(a.fx, b.fx);
    }
}
