//! Adaptive embedded Runge-Kutta integration (Dormand-Prince 5(4)) for
//! complex-matrix-valued states, used for the vectorised master-equation
//! right-hand side. Output times are hit exactly by clamping the step, so no
//! dense-output interpolation is needed.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::spin::CMat;

// Dormand-Prince coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const MAX_REJECTIONS: usize = 60;

/// `y += a * x` elementwise, without allocating.
#[inline]
pub(crate) fn axpy_mat(y: &mut CMat, a: C64, x: &CMat) {
    y.zip_apply(x, |yi, xi| *yi += a * xi);
}

/// Adaptive Dormand-Prince 5(4) stepper.
#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
}

impl Dopri5 {
    /// Integrate `dy/dt = rhs(t, y)` from `t_grid[0]`, invoking `post_step`
    /// after every accepted step and `on_output(k, t_k, &y)` at each grid
    /// point (including the initial one). `post_step` must return `true` if
    /// it modified the state (this invalidates the first-same-as-last
    /// optimisation for the next step). The grid must be strictly increasing.
    pub fn integrate<F, P, O>(
        &self,
        mut rhs: F,
        y0: &CMat,
        t_grid: &[f64],
        mut post_step: P,
        mut on_output: O,
    ) -> Result<()>
    where
        F: FnMut(f64, &CMat, &mut CMat),
        P: FnMut(f64, &mut CMat) -> bool,
        O: FnMut(usize, f64, &CMat),
    {
        assert!(!t_grid.is_empty(), "empty output grid");
        assert!(
            t_grid.windows(2).all(|w| w[1] > w[0]),
            "output grid must be strictly increasing"
        );
        assert!(self.rtol > 0.0 && self.atol > 0.0 && self.max_step > 0.0);

        let (nr, nc) = (y0.nrows(), y0.ncols());
        let mut y = y0.clone();
        let mut k: Vec<CMat> = (0..7).map(|_| CMat::zeros(nr, nc)).collect();
        let mut ytmp = CMat::zeros(nr, nc);
        let mut y5 = CMat::zeros(nr, nc);

        let mut t = t_grid[0];
        on_output(0, t, &y);

        let mut h = self.max_step;
        let mut k1_fresh = false;

        for (out_idx, &t_target) in t_grid.iter().enumerate().skip(1) {
            while t < t_target {
                let remaining = t_target - t;
                if remaining <= 1e-12 * t_target.abs().max(1.0) {
                    // within accumulated rounding of the target; snap. The
                    // skipped evolution is far below the error tolerance.
                    t = t_target;
                    break;
                }
                let h_step = h.min(self.max_step).min(remaining);
                if h_step < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepSizeUnderflow { t_us: t, step_us: h_step });
                }

                if !k1_fresh {
                    rhs(t, &y, &mut k[0]);
                }

                let mut rejections = 0usize;
                let mut hs = h_step;
                loop {
                    // stages 2..7
                    for i in 0..6 {
                        ytmp.copy_from(&y);
                        for (j, kj) in k.iter().enumerate().take(i + 1) {
                            let a = A[i][j];
                            if a != 0.0 {
                                axpy_mat(&mut ytmp, C64::new(hs * a, 0.0), kj);
                            }
                        }
                        let (head, tail) = k.split_at_mut(i + 1);
                        let _ = head;
                        rhs(t + C[i + 1] * hs, &ytmp, &mut tail[0]);
                    }

                    // 5th-order solution
                    y5.copy_from(&y);
                    for (j, kj) in k.iter().enumerate() {
                        if B5[j] != 0.0 {
                            axpy_mat(&mut y5, C64::new(hs * B5[j], 0.0), kj);
                        }
                    }

                    // embedded error estimate against the 4th-order weights
                    let mut err_sq = 0.0;
                    let n = (nr * nc) as f64;
                    for idx in 0..nr * nc {
                        let mut e = C64::new(0.0, 0.0);
                        for (j, kj) in k.iter().enumerate() {
                            let d = B5[j] - B4[j];
                            if d != 0.0 {
                                e += kj[idx] * C64::new(hs * d, 0.0);
                            }
                        }
                        let sc = self.atol + self.rtol * y[idx].norm().max(y5[idx].norm());
                        let r = e.norm() / sc;
                        err_sq += r * r;
                    }
                    let err = (err_sq / n).sqrt();

                    if err <= 1.0 {
                        t += hs;
                        std::mem::swap(&mut y, &mut y5);
                        let modified = post_step(t, &mut y);
                        // FSAL: stage 7 was evaluated at (t+h, y5), which is
                        // next step's (t, y) unless post_step changed y.
                        k.swap(0, 6);
                        k1_fresh = !modified;
                        let fac = if err == 0.0 {
                            FAC_MAX
                        } else {
                            (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
                        };
                        h = (hs * fac).min(self.max_step);
                        break;
                    }

                    rejections += 1;
                    if rejections > MAX_REJECTIONS {
                        return Err(Error::ToleranceFailure { t_us: t, rejections });
                    }
                    let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
                    hs *= fac;
                    if hs < 1e-14 * t.abs().max(1.0) {
                        return Err(Error::StepSizeUnderflow { t_us: t, step_us: hs });
                    }
                }
            }
            on_output(out_idx, t_target, &y);
        }
        Ok(())
    }
}
