//! Adaptive Dormand-Prince 5(4) integrator with dense output, on complex
//! state vectors.
//!
//! The solver advances with embedded error control and evaluates requested
//! output times from the quartic dense interpolant of each accepted step,
//! so output resolution never constrains the step size. An optional
//! post-step hook lets callers re-project the state (the master-equation
//! driver re-Hermitizes the density matrix there).

use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("maximum number of steps exceeded at t = {t}")]
    TooManySteps { t: f64 },
    #[error("output grid must be strictly increasing")]
    BadGrid,
}

#[derive(Copy, Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; 0 picks a heuristic.
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            h_init: 0.0,
            h_max: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

const A: [[f64; 6]; 6] = [
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Dense interpolation coefficients of one accepted step.
struct DenseSegment {
    t0: f64,
    h: f64,
    cont: [Vec<C64>; 5],
}

impl DenseSegment {
    fn eval(&self, t: f64, out: &mut [C64]) {
        let s = if self.h == 0.0 {
            0.0
        } else {
            (t - self.t0) / self.h
        };
        let s1 = 1.0 - s;
        for (i, o) in out.iter_mut().enumerate() {
            let c = &self.cont;
            *o = c[0][i]
                + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])));
        }
    }
}

/// Integrate dy/dt = f(t, y) from `t_grid[0]`, producing the state at every
/// grid time. `post_step` runs on each accepted end-of-step state (and is
/// not applied to interpolated outputs, which matter only at output
/// accuracy).
pub fn integrate_dense<F, P>(
    mut f: F,
    y0: &[C64],
    t_grid: &[f64],
    opts: &OdeOptions,
    mut post_step: P,
) -> Result<Vec<Vec<C64>>, OdeError>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    P: FnMut(&mut [C64]),
{
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OdeError::BadGrid);
    }
    let n = y0.len();
    let t_end = *t_grid.last().unwrap();
    let mut t = t_grid[0];
    let mut y = y0.to_vec();

    let mut out: Vec<Vec<C64>> = Vec::with_capacity(t_grid.len());
    out.push(y.clone());
    let mut next_out = 1;

    let mut k: [Vec<C64>; 7] = Default::default();
    for ki in k.iter_mut() {
        *ki = vec![C64::ZERO; n];
    }
    let mut y_stage = vec![C64::ZERO; n];
    let mut y_new = vec![C64::ZERO; n];

    f(t, &y, &mut k[0]);

    let mut h = if opts.h_init > 0.0 {
        opts.h_init
    } else {
        initial_step(&y, &k[0], opts)
    };
    h = h.min(opts.h_max).min(t_end - t);

    let mut steps = 0usize;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(OdeError::TooManySteps { t });
        }
        steps += 1;
        if t + h > t_end {
            h = t_end - t;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { t });
        }

        // stages 2..7 (k[0] is FSAL from the previous step)
        for stage in 0..6 {
            for i in 0..n {
                let mut acc = C64::ZERO;
                for (j, kj) in k.iter().enumerate().take(stage + 1) {
                    let a = A[stage][j];
                    if a != 0.0 {
                        acc += a * kj[i];
                    }
                }
                y_stage[i] = y[i] + h * acc;
            }
            if stage == 5 {
                y_new.copy_from_slice(&y_stage);
                post_step(&mut y_new);
            }
            let tc = t + C[stage] * h;
            let target = stage + 1;
            if target == 6 {
                f(tc, &y_new, &mut k[6]);
            } else {
                f(tc, &y_stage, &mut k[target]);
            }
        }

        // embedded error estimate
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = C64::ZERO;
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    e += E[j] * kj[i];
                }
            }
            let e = h * e;
            let sk = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
            err_sq += e.norm_sqr() / (sk * sk);
        }
        let err = (err_sq / n as f64).sqrt();

        if err <= 1.0 {
            // accept: build the dense interpolant before moving on
            let mut cont: [Vec<C64>; 5] = Default::default();
            cont[0] = y.clone();
            cont[1] = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
            cont[2] = k[0]
                .iter()
                .zip(&cont[1])
                .map(|(k0, d)| h * k0 - d)
                .collect();
            cont[3] = cont[1]
                .iter()
                .zip(&k[6])
                .zip(&cont[2])
                .map(|((d, k6), b)| d - h * k6 - b)
                .collect();
            cont[4] = (0..n)
                .map(|i| {
                    let mut acc = C64::ZERO;
                    for (j, kj) in k.iter().enumerate() {
                        if D[j] != 0.0 {
                            acc += D[j] * kj[i];
                        }
                    }
                    h * acc
                })
                .collect();
            let seg = DenseSegment { t0: t, h, cont };

            let t_new = t + h;
            while next_out < t_grid.len() && t_grid[next_out] <= t_new + 1e-14 {
                let tg = t_grid[next_out];
                if (tg - t_new).abs() <= 1e-14 {
                    out.push(y_new.clone());
                } else {
                    let mut yi = vec![C64::ZERO; n];
                    seg.eval(tg, &mut yi);
                    out.push(yi);
                }
                next_out += 1;
            }

            std::mem::swap(&mut y, &mut y_new);
            t = t_new;
            k.swap(0, 6); // FSAL

            let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
            h = (h * fac).min(opts.h_max);
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
        }
    }

    // grid times exactly at t_end may remain if the loop exited on rounding
    while next_out < t_grid.len() {
        out.push(y.clone());
        next_out += 1;
    }
    Ok(out)
}

fn initial_step(y: &[C64], dy: &[C64], opts: &OdeOptions) -> f64 {
    let norm = |v: &[C64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let d0 = norm(y);
    let d1 = norm(dy);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    (h0 * opts.rtol.powf(0.25)).max(1e-10)
}
