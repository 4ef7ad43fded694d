//! Frequency-domain observables: weak-probe waveguide transmission and
//! p-shell emission spectra with Fabry-Perot folding.
//!
//! Transmission uses the single-mode weak-probe emitter response with
//! independent-resonance additivity, valid when the Zeeman splittings are
//! large compared to the linewidth. Spectral diffusion convolves the power
//! transmission (each shot sees a frozen detuning), not the amplitude.

use crate::fit::{self, FitError, FitResult, LsqOptions};
use crate::model::{DecayRates, Level, LevelScheme, Polarization};
use num_complex::Complex64 as C64;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error("grid must be uniform, increasing, with at least {0} points")]
    BadGrid(usize),
    #[error("populations must be nonnegative and sum to 1 (got {0})")]
    BadPopulations(f64),
    #[error("free spectral range must exceed the scanner linewidth")]
    BadScanner,
    #[error("no resolvable peaks in the spectrum")]
    NoPeaks,
    #[error("peak fit failed: {0}; worst residual {1:.3e}")]
    PeakFit(String, f64),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Weak-probe power transmission over a detuning grid.
#[derive(Clone, Debug)]
pub struct TransmissionSpectrum {
    /// Probe detuning grid (GHz, ordinary frequency, relative to the
    /// reference used at construction).
    pub detunings_ghz: Vec<f64>,
    /// Population-averaged transmission amplitude per point.
    pub amplitude: Vec<C64>,
    /// Power transmission per point, in [0, 1].
    pub power: Vec<f64>,
    /// Set when two transitions sit closer than a linewidth, where
    /// single-resonance additivity degrades.
    pub overlap_flagged: bool,
}

fn check_uniform_grid(grid: &[f64], min_len: usize) -> Result<f64, SpectraError> {
    if grid.len() < min_len {
        return Err(SpectraError::BadGrid(min_len));
    }
    let d = grid[1] - grid[0];
    if d <= 0.0 {
        return Err(SpectraError::BadGrid(min_len));
    }
    for w in grid.windows(2) {
        if ((w[1] - w[0]) - d).abs() > 1e-9 * d {
            return Err(SpectraError::BadGrid(min_len));
        }
    }
    Ok(d)
}

/// Convolve `values` (above `baseline`) with a normalized Gaussian kernel
/// of standard deviation `sigma_ghz` on a uniform grid.
fn gaussian_convolve(step: f64, values: &[f64], sigma_ghz: f64, baseline: f64) -> Vec<f64> {
    if sigma_ghz <= 0.0 {
        return values.to_vec();
    }
    let half = ((6.0 * sigma_ghz / step).ceil() as usize).max(1);
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let x = (i as f64 - half as f64) * step;
            (-0.5 * (x / sigma_ghz).powi(2)).exp()
        })
        .collect();
    let norm: f64 = kernel.iter().sum();
    let n = values.len();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let j = i as isize + k as isize - half as isize;
                let v = if j < 0 || j >= n as isize {
                    baseline
                } else {
                    values[j as usize]
                };
                acc += kv * v;
            }
            acc / norm
        })
        .collect()
}

/// Weak-probe waveguide transmission for given spin populations.
///
/// Per ground state s the amplitude is
/// t_s(d) = 1 - sum_k beta_k (G/2) / (G/2 + gamma_dp + i(d - d_k))
/// over the two transitions out of s, with G = gamma_0 and
/// beta_k = gamma_{k,wg}/gamma_0; the power transmission is the
/// population-weighted |t_s|^2, convolved with the spectral-diffusion
/// kernel of std `sigma` (rad/ns).
pub fn weak_probe_transmission(
    scheme: &LevelScheme,
    rates: &DecayRates,
    spin_populations: (f64, f64),
    dephasing: f64,
    sigma: f64,
    reference_thz: f64,
    grid_ghz: &[f64],
) -> Result<TransmissionSpectrum, SpectraError> {
    let step = check_uniform_grid(grid_ghz, 2)?;
    let (p1, p2) = spin_populations;
    let psum = p1 + p2;
    if p1 < 0.0 || p2 < 0.0 || (psum - 1.0).abs() > 1e-9 {
        return Err(SpectraError::BadPopulations(psum));
    }

    let gamma_0 = rates.gamma_0();
    let gamma_half = 0.5 * gamma_0;
    let width = gamma_half + dephasing;

    // transitions out of each ground state: (angular offset, beta)
    let resp = |ground: Level| -> Vec<(f64, f64)> {
        [scheme.vertical(ground), scheme.diagonal(ground)]
            .iter()
            .map(|t| {
                let offset = TAU * (t.frequency_thz - reference_thz) * 1e3;
                let (wg, _) = rates.split(t.polarization);
                (offset, wg / gamma_0)
            })
            .collect()
    };
    let lines_g1 = resp(Level::G1);
    let lines_g2 = resp(Level::G2);

    // flag overlaps closer than a linewidth
    let mut offsets: Vec<f64> = scheme
        .transitions()
        .iter()
        .map(|t| TAU * (t.frequency_thz - reference_thz) * 1e3)
        .collect();
    offsets.sort_by(f64::total_cmp);
    let overlap_flagged = offsets.windows(2).any(|w| (w[1] - w[0]).abs() < gamma_0);

    let amp = |lines: &[(f64, f64)], delta: f64| -> C64 {
        let mut t = C64::new(1.0, 0.0);
        for &(d_k, beta) in lines {
            t -= beta * gamma_half / C64::new(width, delta - d_k);
        }
        t
    };

    let mut amplitude = Vec::with_capacity(grid_ghz.len());
    let mut power = Vec::with_capacity(grid_ghz.len());
    for &d_ghz in grid_ghz {
        let delta = TAU * d_ghz;
        let t1 = amp(&lines_g1, delta);
        let t2 = amp(&lines_g2, delta);
        amplitude.push(p1 * t1 + p2 * t2);
        power.push(p1 * t1.norm_sqr() + p2 * t2.norm_sqr());
    }
    let power = gaussian_convolve(step, &power, sigma / TAU, 1.0);

    Ok(TransmissionSpectrum {
        detunings_ghz: grid_ghz.to_vec(),
        amplitude,
        power,
        overlap_flagged,
    })
}

/// Location, depth and width of one transmission dip.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DipMetric {
    pub center_ghz: f64,
    /// 1 - T at the minimum.
    pub depth: f64,
    /// Full width at half depth of 1 - T (GHz).
    pub fwhm_ghz: f64,
}

/// Locate local transmission minima and report depth and FWHM of 1 - T.
/// Returns an empty list for featureless spectra.
pub fn dip_metrics(spec: &TransmissionSpectrum) -> Vec<DipMetric> {
    let t = &spec.power;
    let x = &spec.detunings_ghz;
    let n = t.len();
    let mut dips = Vec::new();
    for i in 1..n - 1 {
        if t[i] <= t[i - 1] && t[i] < t[i + 1] && 1.0 - t[i] > 1e-6 {
            let depth = 1.0 - t[i];
            let half = 1.0 - depth / 2.0;
            // walk outward to the half-depth crossings
            let mut left = x[0];
            for k in (0..i).rev() {
                if t[k] >= half {
                    let f = (half - t[k]) / (t[k + 1] - t[k]);
                    left = x[k] + f * (x[k + 1] - x[k]);
                    break;
                }
            }
            let mut right = x[n - 1];
            for k in (i + 1)..n {
                if t[k] >= half {
                    let f = (half - t[k - 1]) / (t[k] - t[k - 1]);
                    right = x[k - 1] + f * (x[k] - x[k - 1]);
                    break;
                }
            }
            dips.push(DipMetric {
                center_ghz: x[i],
                depth,
                fwhm_ghz: right - left,
            });
        }
    }
    dips
}

/// One emission line.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct EmissionPeak {
    /// Center relative to the spectrum reference (GHz).
    pub center_ghz: f64,
    pub fwhm_ghz: f64,
    /// Integrated intensity (waveguide-collected).
    pub area: f64,
    pub polarization: Polarization,
}

/// Emission spectrum on a frequency grid relative to nu0.
#[derive(Clone, Debug)]
pub struct EmissionSpectrum {
    pub frequencies_ghz: Vec<f64>,
    pub intensity: Vec<f64>,
    pub peaks: Vec<EmissionPeak>,
}

impl EmissionSpectrum {
    pub fn total_intensity(&self) -> f64 {
        let step = if self.frequencies_ghz.len() > 1 {
            self.frequencies_ghz[1] - self.frequencies_ghz[0]
        } else {
            1.0
        };
        self.intensity.iter().sum::<f64>() * step
    }
}

/// Spontaneous-emission spectrum with both trions populated (p-shell
/// pumping): one Lorentzian per transition at its frequency offset from
/// nu0, FWHM gamma_0 (angular; gamma_0/2pi in GHz), area equal to the
/// feeding excited population times the waveguide rate of the transition,
/// optionally Gaussian-broadened by `sigma` (rad/ns).
pub fn emission_spectrum(
    scheme: &LevelScheme,
    rates: &DecayRates,
    excited_populations: (f64, f64),
    sigma: f64,
    grid_ghz: &[f64],
) -> Result<EmissionSpectrum, SpectraError> {
    let step = check_uniform_grid(grid_ghz, 2)?;
    let (pe1, pe2) = excited_populations;
    let psum = pe1 + pe2;
    if pe1 < 0.0 || pe2 < 0.0 || (psum - 1.0).abs() > 1e-9 {
        return Err(SpectraError::BadPopulations(psum));
    }

    let fwhm_ghz = rates.gamma_0() / TAU;
    let mut peaks = Vec::new();
    for t in scheme.transitions() {
        let pop = match t.upper {
            Level::E1 => pe1,
            Level::E2 => pe2,
            _ => unreachable!(),
        };
        let (wg, _) = rates.split(t.polarization);
        let area = pop * wg;
        if area > 0.0 {
            peaks.push(EmissionPeak {
                center_ghz: (t.frequency_thz - scheme.nu0_thz) * 1e3,
                fwhm_ghz,
                area,
                polarization: t.polarization,
            });
        }
    }

    let mut intensity: Vec<f64> = grid_ghz
        .iter()
        .map(|&nu| {
            peaks
                .iter()
                .map(|p| p.area * lorentzian(nu - p.center_ghz, p.fwhm_ghz))
                .sum()
        })
        .collect();
    intensity = gaussian_convolve(step, &intensity, sigma / TAU, 0.0);

    Ok(EmissionSpectrum {
        frequencies_ghz: grid_ghz.to_vec(),
        intensity,
        peaks,
    })
}

/// Unit-area Lorentzian of the given FWHM.
fn lorentzian(x: f64, fwhm: f64) -> f64 {
    let hw = 0.5 * fwhm;
    hw / (std::f64::consts::PI * (x * x + hw * hw))
}

/// Scanning Fabry-Perot filter used to analyze the emission.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FabryPerotScanner {
    /// Free spectral range (GHz).
    pub fsr_ghz: f64,
    /// Scanner linewidth (GHz); must be below the FSR.
    pub linewidth_ghz: f64,
    /// Absolute reference frequency (THz) defining the fold origin.
    pub reference_thz: f64,
}

impl FabryPerotScanner {
    pub fn new(fsr_ghz: f64, linewidth_ghz: f64, reference_thz: f64) -> Result<Self, SpectraError> {
        if !(fsr_ghz > linewidth_ghz && linewidth_ghz > 0.0) {
            return Err(SpectraError::BadScanner);
        }
        Ok(Self {
            fsr_ghz,
            linewidth_ghz,
            reference_thz,
        })
    }
}

/// Alias an emission spectrum into one free spectral range of the scanner:
/// every feature at frequency nu appears at (nu - reference) mod FSR.
/// Intensity (and each peak's area) is preserved; peaks may re-order.
pub fn fold_through_cavity(
    spec: &EmissionSpectrum,
    scanner: &FabryPerotScanner,
    nu0_thz: f64,
) -> EmissionSpectrum {
    let fsr = scanner.fsr_ghz;
    let ref_rel_ghz = (scanner.reference_thz - nu0_thz) * 1e3;
    let modulo = |x: f64| -> f64 { ((x % fsr) + fsr) % fsr };

    let step = if spec.frequencies_ghz.len() > 1 {
        spec.frequencies_ghz[1] - spec.frequencies_ghz[0]
    } else {
        1.0
    };
    let n_out = (fsr / step).round().max(1.0) as usize;
    let step_out = fsr / n_out as f64;
    let mut intensity = vec![0.0; n_out];
    for (nu, i_in) in spec.frequencies_ghz.iter().zip(&spec.intensity) {
        let pos = modulo(nu - ref_rel_ghz);
        let bin = ((pos / step_out) as usize).min(n_out - 1);
        // accumulate area, then renormalize to the output bin width
        intensity[bin] += i_in * step / step_out;
    }
    let frequencies_ghz = (0..n_out).map(|i| (i as f64 + 0.5) * step_out).collect();
    let peaks = spec
        .peaks
        .iter()
        .map(|p| EmissionPeak {
            center_ghz: modulo(p.center_ghz - ref_rel_ghz),
            ..*p
        })
        .collect();
    EmissionSpectrum {
        frequencies_ghz,
        intensity,
        peaks,
    }
}

/// Multi-Lorentzian least-squares fit of an emission spectrum. Returns the
/// fit result with parameters named `center_k`, `fwhm_k`, `area_k` and the
/// reconstructed peak records sorted by center.
pub fn fit_spectrum_peaks(
    spec: &EmissionSpectrum,
    n_peaks: usize,
) -> Result<(FitResult, Vec<EmissionPeak>), SpectraError> {
    let x = &spec.frequencies_ghz;
    let y = &spec.intensity;
    check_uniform_grid(x, 8)?;

    // seed by iterative peak subtraction on a lightly smoothed copy: take
    // the tallest remaining point, estimate its width from the half-height
    // crossings, subtract the estimated Lorentzian and repeat. Shoulders
    // and noise bumps of strong lines are removed before weak lines are
    // searched for.
    let w0 = (x[x.len() - 1] - x[0]) / (6.0 * n_peaks as f64);
    let step = x[1] - x[0];
    let half = ((0.125 * w0 / step) as usize).clamp(1, y.len() / 8);
    let mut work: Vec<f64> = (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let tallest = work.iter().cloned().fold(0.0f64, f64::max);
    if tallest <= 0.0 {
        return Err(SpectraError::NoPeaks);
    }
    let mut maxima: Vec<(f64, f64)> = Vec::new();
    for _ in 0..n_peaks {
        let (idx, &h) = work
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        if h < 0.02 * tallest {
            break; // remaining structure is noise; pad by splitting below
        }
        // half-height crossings of the current residual
        let mut li = idx;
        while li > 0 && work[li] > 0.5 * h {
            li -= 1;
        }
        let mut ri = idx;
        while ri + 1 < work.len() && work[ri] > 0.5 * h {
            ri += 1;
        }
        let w_est = ((ri - li) as f64 * step).clamp(3.0 * step, w0 * 2.0);
        maxima.push((x[idx], h));
        let center = x[idx];
        let norm = lorentzian(0.0, w_est);
        for (xi, wv) in x.iter().zip(work.iter_mut()) {
            *wv -= h * lorentzian(xi - center, w_est) / norm;
        }
    }
    if maxima.is_empty() {
        return Err(SpectraError::NoPeaks);
    }
    maxima.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut init = Vec::new();
    let mut names_owned = Vec::new();
    for (k, (c, h)) in maxima.iter().enumerate() {
        names_owned.push(format!("center_{k}"));
        names_owned.push(format!("fwhm_{k}"));
        names_owned.push(format!("area_{k}"));
        init.extend_from_slice(&[*c, w0, h * w0 * std::f64::consts::PI / 2.0]);
    }
    // unresolved peaks: split the tallest maximum into offset copies
    for k in maxima.len()..n_peaks {
        let (c, h) = maxima[k % maxima.len()];
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        names_owned.push(format!("center_{k}"));
        names_owned.push(format!("fwhm_{k}"));
        names_owned.push(format!("area_{k}"));
        init.extend_from_slice(&[
            c + sign * 0.5 * w0,
            w0,
            0.5 * h * w0 * std::f64::consts::PI / 2.0,
        ]);
    }
    let names: Vec<&str> = names_owned.iter().map(|s| s.as_str()).collect();
    let bounds: Vec<(f64, f64)> = (0..n_peaks)
        .flat_map(|_| {
            [
                (x[0], x[x.len() - 1]),
                (1e-6, f64::INFINITY),
                (0.0, f64::INFINITY),
            ]
        })
        .collect();

    let model = |p: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(y)
            .map(|(xi, yi)| {
                let mut v = 0.0;
                for k in 0..n_peaks {
                    let (c, w, a) = (p[3 * k], p[3 * k + 1], p[3 * k + 2]);
                    v += a * lorentzian(xi - c, w);
                }
                v - yi
            })
            .collect()
    };
    let opts = LsqOptions {
        max_iterations: 500,
        ..Default::default()
    };
    let mut res = fit::least_squares(model, &names, &init, &bounds, &opts).map_err(|e| {
        let worst = 0.0;
        SpectraError::PeakFit(e.to_string(), worst)
    })?;
    if !res.converged {
        // degenerate (overlapping-peak) optima stall the damping loop with a
        // negligible residual; accept those with a warning
        let r = model(&res.values);
        let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst < 1e-5 * scale {
            res.converged = true;
            res.warnings
                .push("stalled near a degenerate optimum".into());
        } else {
            return Err(SpectraError::PeakFit("did not converge".into(), worst));
        }
    }

    let mut out = Vec::new();
    for k in 0..n_peaks {
        let c = res.value(&format!("center_{k}"));
        let w = res.value(&format!("fwhm_{k}"));
        let a = res.value(&format!("area_{k}"));
        // label by the nearest constructed peak when available
        let pol = spec
            .peaks
            .iter()
            .min_by(|p, q| {
                (p.center_ghz - c)
                    .abs()
                    .total_cmp(&(q.center_ghz - c).abs())
            })
            .map(|p| p.polarization)
            .unwrap_or(Polarization::Y);
        out.push(EmissionPeak {
            center_ghz: c,
            fwhm_ghz: w,
            area: a,
            polarization: pol,
        });
    }
    out.sort_by(|a, b| a.center_ghz.total_cmp(&b.center_ghz));

    // warn on merged peaks
    for i in 0..out.len() {
        for j in (i + 1)..out.len() {
            let w = out[i].fwhm_ghz.max(out[j].fwhm_ghz);
            if (out[i].center_ghz - out[j].center_ghz).abs() < w / 4.0 {
                res.warnings
                    .push(format!("peaks {i} and {j} closer than width/4"));
            }
        }
    }
    Ok((res, out))
}

/// Ratio of two fitted peak areas with its 1-sigma uncertainty, using the
/// full covariance between the two area parameters.
pub fn area_ratio(res: &FitResult, k_num: usize, k_den: usize) -> (f64, f64) {
    let idx = |name: &str| res.names.iter().position(|n| n == name).unwrap();
    let i = idx(&format!("area_{k_num}"));
    let j = idx(&format!("area_{k_den}"));
    let (a, b) = (res.values[i], res.values[j]);
    let ratio = a / b;
    let var = res.covariance[i][i] / (b * b)
        + a * a * res.covariance[j][j] / (b * b * b * b)
        - 2.0 * a * res.covariance[i][j] / (b * b * b);
    (ratio, var.max(0.0).sqrt())
}
