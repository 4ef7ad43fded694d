//! Nonlinear least-squares fitting: a damped (Levenberg-Marquardt) trust
//! region core with finite-difference Jacobians, plus the specific fit
//! models used by the experiments — exponential pumping histograms, the
//! saturation curve of the optical pumping rate, Gaussian Ramsey decay and
//! damped cosines for Rabi fringes.

use crate::noise;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {need} data points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("histogram bins must be uniform and increasing")]
    BadBins,
    #[error("histogram counts must be nonnegative")]
    NegativeCounts,
    #[error("no convergence after {iterations} iterations (best cost {cost:.3e}, best params {best:?})")]
    NoConvergence {
        iterations: usize,
        cost: f64,
        best: Vec<f64>,
    },
    #[error("singular normal equations; degenerate parameter combination: {0}")]
    Singular(String),
    #[error("fidelity undefined: fitted pumped amplitude I1 = {0} is not positive")]
    NonPositiveAmplitude(f64),
    #[error("fit did not converge")]
    NotConverged,
    #[error(transparent)]
    Quad(#[from] crate::quad::QuadError),
}

/// Result of a least-squares fit: named parameters with 1-sigma
/// uncertainties from the scaled covariance (J^T J)^-1 chi2_red.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Row-major symmetric covariance matrix.
    pub covariance: Vec<Vec<f64>>,
    pub chi2_reduced: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when a parameter (combination) is not constrained by the data.
    pub non_identifiable: Option<String>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> f64 {
        self.try_value(name)
            .unwrap_or_else(|| panic!("no fit parameter named {name}"))
    }

    pub fn try_value(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn sigma_of(&self, name: &str) -> f64 {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("no fit parameter named {name}"));
        self.sigma[i]
    }

    /// Parenthesis notation, e.g. 0.243 +- 0.005 renders as "0.243(5)".
    pub fn paren(&self, name: &str) -> String {
        format_paren(self.value(name), self.sigma_of(name))
    }
}

/// Format value(uncertainty) with the uncertainty in units of the last
/// quoted digit; two digits are kept when the leading digit is 1.
pub fn format_paren(value: f64, sigma: f64) -> String {
    if !(sigma.is_finite() && sigma > 0.0) {
        return format!("{value}");
    }
    let mut d = sigma.abs().log10().floor() as i32;
    if (sigma / 10f64.powi(d)).round() < 2.0 {
        d -= 1; // keep two digits for leading 1
    }
    let paren = (sigma / 10f64.powi(d)).round() as i64;
    if d <= 0 {
        let decimals = (-d) as usize;
        format!("{value:.decimals$}({paren})")
    } else {
        let scale = 10f64.powi(d);
        let v = (value / scale).round() * scale;
        format!("{v:.0}({})", paren as f64 * scale)
    }
}

#[derive(Copy, Clone, Debug)]
pub struct LsqOptions {
    pub max_iterations: usize,
    pub gtol: f64,
    pub xtol: f64,
    pub ftol: f64,
    /// Initial damping is tau * max(diag(J^T J)).
    pub tau: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gtol: 1e-10,
            xtol: 1e-12,
            ftol: 1e-10,
            tau: 1e-3,
        }
    }
}

fn solve_sym(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let (piv, pmag) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|p, q| p.1.total_cmp(&q.1))?;
        if pmag < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        x.swap(col, piv);
        let d = m[col][col];
        for r in (col + 1)..n {
            let f = m[r][col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[r][k] -= f * m[col][k];
            }
            x[r] -= f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for k in (row + 1)..n {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Name the parameter whose Jacobian column is (numerically) linearly
/// dependent on the preceding ones, for singularity diagnostics.
fn degenerate_direction(j: &[Vec<f64>], names: &[String]) -> String {
    let m = j.len();
    let n = names.len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for p in 0..n {
        let mut col: Vec<f64> = (0..m).map(|r| j[r][p]).collect();
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        for b in &basis {
            let dot: f64 = col.iter().zip(b).map(|(x, y)| x * y).sum();
            for (c, y) in col.iter_mut().zip(b) {
                *c -= dot * y;
            }
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * norm0.max(1e-300) {
            return names[p].clone();
        }
        for c in col.iter_mut() {
            *c /= norm;
        }
        basis.push(col);
    }
    names.join(", ")
}

/// Damped least squares (Levenberg-Marquardt with Nielsen lambda updates).
/// Residuals are whatever the closure returns; weighting is the caller's
/// business. Bounds are enforced by clamping trial steps. Deterministic
/// given the initial guess.
pub fn least_squares<F>(
    mut f: F,
    names: &[&str],
    init: &[f64],
    bounds: &[(f64, f64)],
    opts: &LsqOptions,
) -> Result<FitResult, FitError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = init.len();
    assert_eq!(names.len(), n);
    assert_eq!(bounds.len(), n);
    let clamp = |x: &mut [f64]| {
        for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };

    let mut x = init.to_vec();
    clamp(&mut x);
    let mut r = f(&x);
    let m = r.len();
    let mut cost: f64 = 0.5 * r.iter().map(|v| v * v).sum::<f64>();

    let scales: Vec<f64> = init.iter().map(|v| v.abs().max(1e-8)).collect();
    let fd_step = f64::EPSILON.cbrt();

    let jacobian = |f: &mut F, x: &[f64]| -> Vec<Vec<f64>> {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        for p in 0..n {
            let h = fd_step * scales[p].max(x[p].abs());
            let (lo, hi) = bounds[p];
            let xp = (x[p] + h).min(hi);
            let xm = (x[p] - h).max(lo);
            let mut xa = x.to_vec();
            xa[p] = xp;
            let ra = f(&xa);
            xa[p] = xm;
            let rb = f(&xa);
            let denom = xp - xm;
            cols.push(
                ra.iter()
                    .zip(&rb)
                    .map(|(a, b)| {
                        if denom == 0.0 {
                            0.0
                        } else {
                            (a - b) / denom
                        }
                    })
                    .collect(),
            );
        }
        // row-major m x n
        (0..cols[0].len())
            .map(|row| (0..n).map(|p| cols[p][row]).collect())
            .collect()
    };

    let mut iterations = 0usize;
    let mut converged = false;
    let mut stalled = false;
    let mut lambda = -1.0; // initialized from the first J^T J
    let mut nu = 2.0;
    let mut j = jacobian(&mut f, &x);
    let mut best_cost = cost;
    let mut passes_since_progress = 0usize;

    for _ in 0..opts.max_iterations {
        // plateau detection: data noise off the model family keeps the
        // gradient finite, so stop once the cost has stopped moving
        if cost < best_cost * (1.0 - 1e-8) {
            best_cost = cost;
            passes_since_progress = 0;
        } else {
            passes_since_progress += 1;
            if passes_since_progress >= 20 {
                converged = true;
                break;
            }
        }
        // g = J^T r, A = J^T J
        let mut g = vec![0.0; n];
        let mut a = vec![vec![0.0; n]; n];
        for row in 0..m {
            for p in 0..n {
                g[p] += j[row][p] * r[row];
                for q in p..n {
                    a[p][q] += j[row][p] * j[row][q];
                }
            }
        }
        for p in 0..n {
            for q in 0..p {
                a[p][q] = a[q][p];
            }
        }
        let gmax = g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if gmax <= opts.gtol * (1.0 + cost) {
            converged = true;
            break;
        }
        if lambda < 0.0 {
            let dmax = (0..n).map(|p| a[p][p]).fold(0.0f64, f64::max);
            lambda = opts.tau * dmax.max(1e-300);
        }

        let mut damped = a.clone();
        for (p, row) in damped.iter_mut().enumerate() {
            row[p] += lambda;
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let dx = match solve_sym(&damped, &neg_g) {
            Some(dx) => dx,
            None => return Err(FitError::Singular(degenerate_direction(&j, &names_vec(names)))),
        };

        let mut x_new: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        clamp(&mut x_new);
        let step: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let r_new = f(&x_new);
        let cost_new: f64 = 0.5 * r_new.iter().map(|v| v * v).sum::<f64>();

        let predicted: f64 = 0.5
            * step
                .iter()
                .zip(&g)
                .map(|(s, gi)| s * (lambda * s - gi))
                .sum::<f64>();
        // predicted reduction at machine noise: the optimum is resolved
        if predicted.abs() <= opts.ftol * cost.max(1e-300) && cost_new >= cost {
            converged = true;
            break;
        }
        let rho = if predicted > 0.0 {
            (cost - cost_new) / predicted
        } else if cost_new < cost {
            1.0
        } else {
            -1.0
        };

        if rho > 0.0 {
            let step_norm: f64 = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            let x_norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let df = cost - cost_new;
            x = x_new;
            r = r_new;
            cost = cost_new;
            iterations += 1;
            lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
            j = jacobian(&mut f, &x);
            if step_norm <= opts.xtol * (x_norm + opts.xtol)
                || df <= opts.ftol * cost.max(1e-300)
            {
                converged = true;
                break;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e16 {
                // no descent direction at the damping limit: a (possibly
                // degenerate) local optimum
                stalled = true;
                break;
            }
        }
    }

    let mut warnings = Vec::new();
    if stalled && !converged {
        converged = true;
        warnings.push("stalled at the damping limit; possibly degenerate optimum".into());
    }
    if !converged {
        return Err(FitError::NoConvergence {
            iterations,
            cost,
            best: x,
        });
    }

    // covariance = (J^T J)^-1 * chi2_red at the solution
    let mut a = vec![vec![0.0; n]; n];
    for row in 0..m {
        for p in 0..n {
            for q in p..n {
                a[p][q] += j[row][p] * j[row][q];
            }
        }
    }
    for p in 0..n {
        for q in 0..p {
            a[p][q] = a[q][p];
        }
    }
    let chi2 = 2.0 * cost;
    let dof = m.saturating_sub(n);
    let chi2_red = if dof > 0 { chi2 / dof as f64 } else { f64::NAN };
    let scale = if dof > 0 { chi2_red } else { 1.0 };

    let mut covariance = vec![vec![0.0; n]; n];
    let mut singular = false;
    for p in 0..n {
        let mut e = vec![0.0; n];
        e[p] = 1.0;
        match solve_sym(&a, &e) {
            Some(col) => {
                for q in 0..n {
                    covariance[q][p] = col[q] * scale;
                }
            }
            None => {
                singular = true;
                break;
            }
        }
    }
    let non_identifiable = if singular {
        covariance = vec![vec![f64::NAN; n]; n];
        Some(degenerate_direction(&j, &names_vec(names)))
    } else {
        None
    };
    let sigma: Vec<f64> = (0..n)
        .map(|p| covariance[p][p].max(0.0).sqrt())
        .collect();

    Ok(FitResult {
        names: names_vec(names),
        values: x,
        sigma,
        covariance,
        chi2_reduced: chi2_red,
        converged,
        iterations,
        non_identifiable,
        warnings,
    })
}

fn names_vec(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Time-binned fluorescence record.
#[derive(Clone, Debug)]
pub struct Histogram {
    pub bin_centers: Vec<f64>,
    pub counts: Vec<f64>,
    /// Constant background level included in `counts`.
    pub background: f64,
}

impl Histogram {
    pub fn new(bin_centers: Vec<f64>, counts: Vec<f64>, background: f64) -> Result<Self, FitError> {
        if bin_centers.len() != counts.len() || bin_centers.is_empty() {
            return Err(FitError::BadBins);
        }
        if bin_centers.len() > 1 {
            let d0 = bin_centers[1] - bin_centers[0];
            if d0 <= 0.0 {
                return Err(FitError::BadBins);
            }
            for w in bin_centers.windows(2) {
                if ((w[1] - w[0]) - d0).abs() > 1e-9 * d0 {
                    return Err(FitError::BadBins);
                }
            }
        }
        if counts.iter().any(|&c| c < -1e-9) {
            return Err(FitError::NegativeCounts);
        }
        Ok(Self {
            bin_centers,
            counts,
            background,
        })
    }

    /// Poisson weights: 1/sqrt(max(count, 1)).
    fn weights(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| 1.0 / c.max(1.0).sqrt())
            .collect()
    }
}

/// Fit I(t) = I0 + I1 exp(-gamma_osp t) to a histogram. Initial guesses
/// come from a log-linear regression on the background-subtracted tail.
pub fn fit_exponential(hist: &Histogram) -> Result<FitResult, FitError> {
    let m = hist.counts.len();
    if m < 3 {
        return Err(FitError::TooFewPoints { need: 3, got: m });
    }
    let t = &hist.bin_centers;
    let c = &hist.counts;

    let top = c.iter().cloned().fold(f64::MIN, f64::max);
    let bottom = c.iter().cloned().fold(f64::MAX, f64::min);
    if (top - bottom).abs() <= 1e-9 * top.abs().max(1e-300) {
        // flat histogram: gamma is not constrained by the data
        let mean = c.iter().sum::<f64>() / m as f64;
        return Ok(FitResult {
            names: names_vec(&["i0", "i1", "gamma_osp"]),
            values: vec![mean, 0.0, 0.0],
            sigma: vec![0.0; 3],
            covariance: vec![vec![0.0; 3]; 3],
            chi2_reduced: 0.0,
            converged: true,
            iterations: 0,
            non_identifiable: Some("gamma_osp (flat histogram)".into()),
            warnings: vec![],
        });
    }

    // tail mean as the offset guess
    let tail = (m / 6).max(1);
    let i0_guess = c[m - tail..].iter().sum::<f64>() / tail as f64;
    // log-linear regression on the early positive part
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let peak = top - i0_guess;
    for (ti, ci) in t.iter().zip(c) {
        let v = ci - i0_guess;
        if v > 0.02 * peak {
            xs.push(*ti);
            ys.push(v.ln());
        }
    }
    let (slope, intercept) = if xs.len() >= 2 {
        linear_regression(&xs, &ys)
    } else {
        (-1.0 / (t[m - 1] - t[0]), peak.max(1e-12).ln())
    };
    let gamma_guess = (-slope).max(1e-6);
    let i1_guess = intercept.exp();

    let mut warnings = Vec::new();
    if m < 5 {
        warnings.push("fewer than 5 bins".into());
    }
    if gamma_guess * (t[m - 1] - t[0]) < 1.0 {
        warnings.push("window spans less than one decay time".into());
    }

    let w = hist.weights();
    let model = |p: &[f64]| -> Vec<f64> {
        let (i0, i1, g) = (p[0], p[1], p[2]);
        t.iter()
            .zip(c)
            .zip(&w)
            .map(|((ti, ci), wi)| (i0 + i1 * (-g * (ti - t[0])).exp() - ci) * wi)
            .collect()
    };
    // amplitude referenced to the first bin for conditioning; slow decays
    // (window well under one decay time) converge geometrically and need
    // the larger iteration budget
    let i1_at_start = i1_guess * (-gamma_guess * t[0]).exp();
    let opts = LsqOptions {
        max_iterations: 600,
        ..Default::default()
    };
    let mut res = least_squares(
        model,
        &["i0", "i1", "gamma_osp"],
        &[i0_guess, i1_at_start, gamma_guess],
        &[(f64::NEG_INFINITY, f64::INFINITY), (0.0, f64::INFINITY), (0.0, f64::INFINITY)],
        &opts,
    )?;
    res.warnings.extend(warnings);
    Ok(res)
}

/// Closed-form least squares line y = a + b x; returns (b, a).
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Optical spin-pumping rate: gamma_x times the Gaussian spectral-diffusion
/// average of Omega_p^2 / (2 Omega_p^2 + gamma_0^2 + 4 Delta^2) with
/// Omega_p = gamma_0 sqrt(P/P_sat).
pub fn eval_pumping_rate(
    p_over_psat: f64,
    gamma_x: f64,
    gamma_0: f64,
    sigma: f64,
    nodes: usize,
) -> Result<f64, FitError> {
    let omega_sq = gamma_0 * gamma_0 * p_over_psat;
    let g0_sq = gamma_0 * gamma_0;
    let avg = noise::gauss_average(
        |d| omega_sq / (2.0 * omega_sq + g0_sq + 4.0 * d * d),
        sigma,
        nodes,
    )?;
    Ok(gamma_x * avg)
}

/// Weighting mode for [`fit_saturation`].
#[derive(Copy, Clone, Debug, Default, PartialEq)]
pub enum SaturationWeights {
    /// All points weighted equally (default).
    #[default]
    Uniform,
    /// Weight each point by the inverse of the supplied per-point sigma.
    PerPoint,
}

/// Fit the saturation curve gamma_osp(P) with gamma_x and P_sat free and
/// (gamma_0, sigma) held fixed. `point_sigma` is used only with
/// [`SaturationWeights::PerPoint`].
pub fn fit_saturation(
    points: &[(f64, f64)],
    gamma_0: f64,
    sigma: f64,
    weights: SaturationWeights,
    point_sigma: Option<&[f64]>,
) -> Result<FitResult, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints {
            need: 3,
            got: points.len(),
        });
    }
    let w: Vec<f64> = match weights {
        SaturationWeights::Uniform => vec![1.0; points.len()],
        SaturationWeights::PerPoint => point_sigma
            .expect("per-point weights need point_sigma")
            .iter()
            .map(|s| 1.0 / s.max(1e-300))
            .collect(),
    };

    let rate_max = points.iter().map(|p| p.1).fold(0.0f64, f64::max);
    let p_max = points.iter().map(|p| p.0).fold(0.0f64, f64::max);
    let p_med = {
        let mut ps: Vec<f64> = points.iter().map(|p| p.0).collect();
        ps.sort_by(f64::total_cmp);
        ps[ps.len() / 2]
    };

    let model = |par: &[f64]| -> Vec<f64> {
        let (gx, psat) = (par[0], par[1]);
        points
            .iter()
            .zip(&w)
            .map(|((p, y), wi)| {
                let model = eval_pumping_rate(p / psat, gx, gamma_0, sigma, 64)
                    .unwrap_or(f64::NAN);
                (model - y) * wi
            })
            .collect()
    };

    // deterministic multi-start on the knee position
    let mut best: Option<FitResult> = None;
    for start_scale in [1.0, 0.2, 5.0] {
        let init = [2.0 * rate_max.max(1e-6), p_med * start_scale];
        let r = least_squares(
            model,
            &["gamma_x", "p_sat"],
            &init,
            &[(0.0, f64::INFINITY), (1e-12, f64::INFINITY)],
            &LsqOptions::default(),
        );
        if let Ok(r) = r {
            let better = match &best {
                None => true,
                Some(b) => r.chi2_reduced < b.chi2_reduced,
            };
            if better {
                best = Some(r);
            }
        }
    }
    let mut res = best.ok_or(FitError::NotConverged)?;
    if res.value("p_sat") > 5.0 * p_max {
        res.non_identifiable = Some("p_sat (all points in the linear regime)".into());
    }
    Ok(res)
}

/// Fit the Ramsey fringe envelope I(tau) = I0 exp(-(tau/T2*)^2).
pub fn fit_ramsey(points: &[(f64, f64)]) -> Result<FitResult, FitError> {
    if points.len() < 4 {
        return Err(FitError::TooFewPoints {
            need: 4,
            got: points.len(),
        });
    }
    let i0_guess = points
        .iter()
        .cloned()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
        .1;
    let tau_max = points.iter().map(|p| p.0).fold(0.0f64, f64::max);
    let t2_guess = points
        .iter()
        .find(|(_, i)| *i < i0_guess / std::f64::consts::E)
        .map(|(t, _)| *t)
        .unwrap_or(tau_max)
        .max(1e-6);

    let model = |p: &[f64]| -> Vec<f64> {
        let (i0, t2) = (p[0], p[1]);
        points
            .iter()
            .map(|(tau, y)| i0 * (-(tau / t2).powi(2)).exp() - y)
            .collect()
    };
    let mut res = least_squares(
        model,
        &["i0", "t2_star"],
        &[i0_guess.max(1e-12), t2_guess],
        &[(0.0, f64::INFINITY), (1e-9, f64::INFINITY)],
        &LsqOptions::default(),
    )?;
    if res.value("t2_star") > 10.0 * tau_max {
        res.non_identifiable = Some("t2_star (no decay within the scanned delays)".into());
    }
    Ok(res)
}

/// Spin-initialization fidelity lower bound from a pumping histogram fit:
/// F >= 1 - I0_ss / (I0_ss + I1), with I0_ss the fitted steady-state level
/// above background and I1 the pumped amplitude.
pub fn fidelity_lower_bound(hist: &Histogram, fit: &FitResult) -> Result<f64, FitError> {
    if !fit.converged {
        return Err(FitError::NotConverged);
    }
    let i1 = fit.value("i1");
    if i1 <= 0.0 {
        return Err(FitError::NonPositiveAmplitude(i1));
    }
    let i0_ss = (fit.value("i0") - hist.background).max(0.0);
    Ok(1.0 - i0_ss / (i0_ss + i1))
}

/// Fit a damped cosine a + b cos(w t + phi) exp(-lambda t); used for Rabi
/// fringes and for comparing the full and reduced Raman models. Runs a
/// deterministic multi-start over the initial phase.
pub fn fit_damped_cosine(
    points: &[(f64, f64)],
    freq_hint: f64,
) -> Result<FitResult, FitError> {
    if points.len() < 6 {
        return Err(FitError::TooFewPoints {
            need: 6,
            got: points.len(),
        });
    }
    let mean = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let amp0 = points
        .iter()
        .map(|p| (p.1 - mean).abs())
        .fold(0.0f64, f64::max);
    let t_span = points.iter().map(|p| p.0).fold(0.0f64, f64::max)
        - points.iter().map(|p| p.0).fold(f64::MAX, f64::min);

    let model = |p: &[f64]| -> Vec<f64> {
        let (a, b, w, phi, lam) = (p[0], p[1], p[2], p[3], p[4]);
        points
            .iter()
            .map(|(t, y)| a + b * (w * t + phi).cos() * (-lam * t).exp() - y)
            .collect()
    };
    let opts = LsqOptions {
        max_iterations: 500,
        ..Default::default()
    };
    let mut best: Option<FitResult> = None;
    for phase in [0.0, std::f64::consts::FRAC_PI_2, std::f64::consts::PI, -std::f64::consts::FRAC_PI_2] {
        let init = [mean, amp0.max(1e-12), freq_hint, phase, 0.1 / t_span.max(1e-9)];
        if let Ok(r) = least_squares(
            model,
            &["offset", "amplitude", "frequency", "phase", "decay"],
            &init,
            &[
                (f64::NEG_INFINITY, f64::INFINITY),
                (0.0, f64::INFINITY),
                (0.0, f64::INFINITY),
                (-7.0, 7.0),
                (0.0, f64::INFINITY),
            ],
            &opts,
        ) {
            let better = match &best {
                None => true,
                Some(b) => r.chi2_reduced < b.chi2_reduced,
            };
            if better {
                best = Some(r);
            }
        }
    }
    best.ok_or(FitError::NotConverged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn linear_model_matches_closed_form() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.7 - 0.45 * v).collect();
        // LM on the linear model
        let res = least_squares(
            |p| {
                x.iter()
                    .zip(&y)
                    .map(|(xi, yi)| p[0] + p[1] * xi - yi)
                    .collect()
            },
            &["a", "b"],
            &[0.0, 0.0],
            &[(f64::NEG_INFINITY, f64::INFINITY); 2],
            &LsqOptions::default(),
        )
        .unwrap();
        let (slope, intercept) = linear_regression(&x, &y);
        assert_abs_diff_eq!(res.value("a"), intercept, epsilon = 1e-10);
        assert_abs_diff_eq!(res.value("b"), slope, epsilon = 1e-10);
    }

    #[test]
    fn rosenbrock_valley_converges() {
        let res = least_squares(
            |p| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]],
            &["x", "y"],
            &[-1.2, 1.0],
            &[(f64::NEG_INFINITY, f64::INFINITY); 2],
            &LsqOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(res.value("x"), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(res.value("y"), 1.0, epsilon = 1e-6);
        assert!(res.converged);
    }

    #[test]
    fn init_at_optimum_takes_no_iterations() {
        let res = least_squares(
            |p| vec![p[0] - 2.0, 2.0 * (p[0] - 2.0)],
            &["x"],
            &[2.0],
            &[(f64::NEG_INFINITY, f64::INFINITY)],
            &LsqOptions::default(),
        )
        .unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.converged);
    }

    #[test]
    fn exponential_recovery_noiseless() {
        let t: Vec<f64> = (0..500).map(|i| i as f64 * 0.2).collect();
        let c: Vec<f64> = t.iter().map(|ti| 0.1 + 1.0 * (-0.2 * ti).exp()).collect();
        let hist = Histogram::new(t, c, 0.0).unwrap();
        let res = fit_exponential(&hist).unwrap();
        assert_relative_eq!(res.value("i0"), 0.1, max_relative = 1e-8);
        assert_relative_eq!(res.value("i1"), 1.0, max_relative = 1e-8);
        assert_relative_eq!(res.value("gamma_osp"), 0.2, max_relative = 1e-8);
    }

    #[test]
    fn exponential_noisy_3sigma_coverage() {
        // 1% Gaussian noise, 500 bins: gamma within 3 sigma of truth in at
        // least 99 of 100 seeded trials.
        let t: Vec<f64> = (0..500).map(|i| i as f64 * 0.2).collect();
        let clean: Vec<f64> = t.iter().map(|ti| 0.1 + 1.0 * (-0.2 * ti).exp()).collect();
        let mut hits = 0;
        let trials = 100;
        for trial in 0..trials {
            let mut rng = RngStream::new(555, trial);
            let noisy: Vec<f64> = clean
                .iter()
                .map(|c| (c + 0.01 * rng.normal()).max(0.0))
                .collect();
            let hist = Histogram::new(t.clone(), noisy, 0.0).unwrap();
            let res = fit_exponential(&hist).unwrap();
            if (res.value("gamma_osp") - 0.2).abs() <= 3.0 * res.sigma_of("gamma_osp") {
                hits += 1;
            }
        }
        assert!(hits >= 99, "3-sigma coverage {hits}/{trials}");
    }

    #[test]
    fn flat_histogram_flagged_non_identifiable() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let hist = Histogram::new(t, vec![0.7; 50], 0.0).unwrap();
        let res = fit_exponential(&hist).unwrap();
        assert!(res.non_identifiable.is_some());
        assert_abs_diff_eq!(res.value("i1"), 0.0);
    }

    #[test]
    fn pumping_rate_closed_forms() {
        // P = 0 -> 0
        assert_abs_diff_eq!(eval_pumping_rate(0.0, 0.243, 3.07, 0.0, 64).unwrap(), 0.0);
        // P = P_sat, sigma = 0 -> gamma_x/3 exactly
        assert_relative_eq!(
            eval_pumping_rate(1.0, 0.243, 3.07, 0.0, 64).unwrap(),
            0.243 / 3.0,
            max_relative = 1e-12
        );
        // P -> infinity -> gamma_x/2
        assert_relative_eq!(
            eval_pumping_rate(1e9, 0.243, 3.07, 0.0, 64).unwrap(),
            0.243 / 2.0,
            max_relative = 1e-6
        );
    }

    #[test]
    fn pumping_rate_monotonicity() {
        let sig = std::f64::consts::TAU * 0.345;
        let mut prev = 0.0;
        for i in 1..40 {
            let p = 0.05 * i as f64;
            let v = eval_pumping_rate(p, 0.158, 2.48, sig, 64).unwrap();
            assert!(v > prev);
            prev = v;
        }
        // decreasing in sigma at fixed P
        let lo = eval_pumping_rate(1.0, 0.158, 2.48, 0.1, 64).unwrap();
        let hi = eval_pumping_rate(1.0, 0.158, 2.48, 2.0, 64).unwrap();
        assert!(hi < lo);
    }

    #[test]
    fn saturation_fit_recovers_truth_and_scales() {
        let gamma_0 = 3.07;
        let sigma = std::f64::consts::TAU * 0.140;
        let (gx_true, psat_true) = (0.243, 3.5);
        let powers: Vec<f64> = (0..9).map(|i| psat_true * 0.05 * 2f64.powi(i)).collect();
        let pts: Vec<(f64, f64)> = powers
            .iter()
            .map(|&p| {
                (
                    p,
                    eval_pumping_rate(p / psat_true, gx_true, gamma_0, sigma, 64).unwrap(),
                )
            })
            .collect();
        let res =
            fit_saturation(&pts, gamma_0, sigma, SaturationWeights::Uniform, None).unwrap();
        assert_relative_eq!(res.value("gamma_x"), gx_true, max_relative = 1e-6);
        assert_relative_eq!(res.value("p_sat"), psat_true, max_relative = 1e-5);

        // scaling all powers and P_sat together leaves gamma_x unchanged
        let scaled: Vec<(f64, f64)> = pts.iter().map(|(p, y)| (p * 137.0, *y)).collect();
        let res2 =
            fit_saturation(&scaled, gamma_0, sigma, SaturationWeights::Uniform, None).unwrap();
        assert_relative_eq!(
            res2.value("gamma_x"),
            res.value("gamma_x"),
            max_relative = 1e-9
        );
    }

    #[test]
    fn sigma_refit_shifts_cyclicity_by_under_three_percent() {
        // refitting diffusion-averaged data with a sigma = 0 model moves
        // the recovered cyclicity only a little
        let gamma_0 = 3.07;
        let sigma = std::f64::consts::TAU * 0.140;
        let (gx_true, psat_true) = (0.243, 3.5);
        let powers: Vec<f64> = (0..9).map(|i| psat_true * 0.05 * 2f64.powi(i)).collect();
        let pts: Vec<(f64, f64)> = powers
            .iter()
            .map(|&p| {
                (
                    p,
                    eval_pumping_rate(p / psat_true, gx_true, gamma_0, sigma, 64).unwrap(),
                )
            })
            .collect();
        let with_sigma =
            fit_saturation(&pts, gamma_0, sigma, SaturationWeights::Uniform, None).unwrap();
        let without =
            fit_saturation(&pts, gamma_0, 0.0, SaturationWeights::Uniform, None).unwrap();
        let c = |gx: f64| (gamma_0 - gx) / gx;
        let shift = (c(without.value("gamma_x")) - c(with_sigma.value("gamma_x"))).abs()
            / c(with_sigma.value("gamma_x"));
        assert!(shift < 0.03, "cyclicity shift {shift:.4}");
    }

    #[test]
    fn saturation_linear_regime_flagged() {
        let gamma_0 = 3.07;
        let pts: Vec<(f64, f64)> = (1..=6)
            .map(|i| {
                let p = i as f64 * 1e-4;
                (
                    p,
                    eval_pumping_rate(p / 3.5, 0.243, gamma_0, 0.0, 64).unwrap(),
                )
            })
            .collect();
        let res = fit_saturation(&pts, gamma_0, 0.0, SaturationWeights::Uniform, None).unwrap();
        assert!(res.non_identifiable.is_some());
    }

    #[test]
    fn ramsey_fit_noiseless_and_flat() {
        let taus: Vec<f64> = (0..20).map(|i| i as f64 * 2.5).collect();
        let pts: Vec<(f64, f64)> = taus
            .iter()
            .map(|&t| (t, 0.8 * (-(t / 21.4f64).powi(2)).exp()))
            .collect();
        let res = fit_ramsey(&pts).unwrap();
        assert_relative_eq!(res.value("t2_star"), 21.4, max_relative = 1e-7);
        assert_relative_eq!(res.value("i0"), 0.8, max_relative = 1e-7);

        let flat: Vec<(f64, f64)> = taus.iter().map(|&t| (t, 0.8)).collect();
        let res = fit_ramsey(&flat).unwrap();
        assert!(res.non_identifiable.is_some());
    }

    #[test]
    fn fidelity_bound_examples() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.5).collect();
        // perfect pumping: I0 = 0 -> F = 1
        let c: Vec<f64> = t.iter().map(|ti| (-0.1 * ti).exp()).collect();
        let hist = Histogram::new(t.clone(), c, 0.0).unwrap();
        let fit = fit_exponential(&hist).unwrap();
        let f = fidelity_lower_bound(&hist, &fit).unwrap();
        assert!(f > 0.999999, "F = {f}");

        // residual steady state
        let c: Vec<f64> = t.iter().map(|ti| 0.02 + (-0.1 * ti).exp()).collect();
        let hist = Histogram::new(t.clone(), c, 0.0).unwrap();
        let fit = fit_exponential(&hist).unwrap();
        let f = fidelity_lower_bound(&hist, &fit).unwrap();
        assert_relative_eq!(f, 1.0 - 0.02 / 1.02, max_relative = 1e-6);

        // monotone decreasing in the steady-state level
        let c2: Vec<f64> = t.iter().map(|ti| 0.05 + (-0.1 * ti).exp()).collect();
        let hist2 = Histogram::new(t.clone(), c2, 0.0).unwrap();
        let fit2 = fit_exponential(&hist2).unwrap();
        assert!(fidelity_lower_bound(&hist2, &fit2).unwrap() < f);
    }

    #[test]
    fn damped_cosine_recovery() {
        let pts: Vec<(f64, f64)> = (0..80)
            .map(|i| {
                let t = i as f64 * 0.25;
                (t, 0.5 + 0.4 * (0.9 * t + 0.3).cos() * (-0.02 * t).exp())
            })
            .collect();
        let res = fit_damped_cosine(&pts, 1.1).unwrap();
        assert_relative_eq!(res.value("frequency"), 0.9, max_relative = 1e-6);
        assert_relative_eq!(res.value("amplitude"), 0.4, max_relative = 1e-5);
    }

    #[test]
    fn paren_notation() {
        assert_eq!(format_paren(0.243, 0.005), "0.243(5)");
        assert_eq!(format_paren(3.07, 0.06), "3.07(6)");
        assert_eq!(format_paren(21.4, 0.7), "21.4(7)");
        assert_eq!(format_paren(11.6, 0.4), "11.6(4)");
        assert_eq!(format_paren(14.7, 0.2), "14.7(2)");
        assert_eq!(format_paren(2.48, 0.02), "2.48(2)");
    }

    #[test]
    fn histogram_validation() {
        assert!(Histogram::new(vec![0.0, 1.0, 2.5], vec![1.0; 3], 0.0).is_err());
        assert!(Histogram::new(vec![0.0, 1.0, 2.0], vec![1.0, -5.0, 1.0], 0.0).is_err());
        assert!(Histogram::new(vec![], vec![], 0.0).is_err());
    }
}
