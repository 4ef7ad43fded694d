//! Orchestration: compile pulse sequences onto the dynamics engine, average
//! over noise realizations (deterministic quadrature or seeded Monte
//! Carlo), and expose the sweep drivers behind each experiment.
//!
//! Noise averaging is embarrassingly parallel: realizations are independent
//! work items with per-index counter streams, so results are averaged in
//! realization order and runs are bit-reproducible for a fixed seed
//! regardless of thread count.

use crate::fit::Histogram;
use crate::lindblad::{
    self, build_collapse_channels, build_hamiltonian, ground_mixture, DriveTerm, Envelope,
    FrameSpec, HamiltonianModel, LindbladError, TimedChannel,
};
use crate::model::{thermal_populations, DecayRates, FieldEnvironment, Level, LevelScheme};
use crate::noise::{GaussianDiffusion, SpinNoise};
use crate::ode::OdeOptions;
use crate::pulse::{
    raman_full_drives, reduce_raman_to_two_level, ElementKind, PulseElement, PulseError,
    PulseSequence, RamanPulse,
};
use crate::quad::GaussHermite;
use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Lindblad(#[from] LindbladError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Fit(#[from] crate::fit::FitError),
    #[error(transparent)]
    Quad(#[from] crate::quad::QuadError),
    #[error("sequence has no readout window")]
    NoReadout,
}

/// Physical system of one run.
#[derive(Clone, Debug)]
pub struct SystemSpec {
    pub scheme: LevelScheme,
    pub rates: DecayRates,
    pub env: FieldEnvironment,
}

/// How noise realizations are averaged.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Averaging {
    /// Deterministic Gauss-Hermite product quadrature over the active noise
    /// dimensions.
    Quadrature { nodes: usize },
    /// Seeded Monte Carlo over per-shot frozen detunings.
    MonteCarlo { shots: usize },
}

/// Noise model of one run.
#[derive(Copy, Clone, Debug)]
pub struct NoiseSpec {
    pub diffusion: GaussianDiffusion,
    pub spin: SpinNoise,
    pub averaging: Averaging,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            diffusion: GaussianDiffusion { sigma: 0.0, seed: 0 },
            spin: SpinNoise {
                sigma_spin: 0.0,
                seed: 0,
            },
            averaging: Averaging::Quadrature { nodes: 1 },
        }
    }
}

/// Whether Raman pulses run through the full bichromatic master equation
/// or the adiabatically-eliminated two-level model.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum RamanMode {
    Reduced,
    Full,
}

#[derive(Copy, Clone, Debug)]
pub struct RunSettings {
    pub ode: OdeOptions,
    pub raman_mode: RamanMode,
    /// Output grid step (ns); histogram binning interpolates on this grid.
    pub grid_step_ns: f64,
    /// Pulse edge rise time (ns); 0 gives rectangular edges.
    pub rise_ns: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            raman_mode: RamanMode::Reduced,
            grid_step_ns: 0.25,
            rise_ns: 0.1,
        }
    }
}

/// Noise-averaged outcome of one sequence.
#[derive(Clone, Debug)]
pub struct AveragedRun {
    pub times: Vec<f64>,
    /// Averaged waveguide photon flux (ns^-1).
    pub flux_wg: Vec<f64>,
    /// Time-integrated flux in the readout window, when one exists.
    pub readout: Option<f64>,
    pub readout_window: Option<(f64, f64)>,
    /// Averaged final state.
    pub final_state: Array2<C64>,
}

impl AveragedRun {
    /// Bin the averaged flux into a histogram over `window`.
    pub fn histogram(
        &self,
        window: (f64, f64),
        bin_ns: f64,
        background: f64,
    ) -> Result<Histogram, ExperimentError> {
        Ok(lindblad::histogram_from_flux(
            &self.times,
            &self.flux_wg,
            window,
            bin_ns,
            background,
        )?)
    }
}

/// One frozen-noise realization: (weight, optical detuning, spin detuning).
pub fn realizations(noise: &NoiseSpec) -> Result<Vec<(f64, f64, f64)>, ExperimentError> {
    match noise.averaging {
        Averaging::MonteCarlo { shots } => Ok((0..shots.max(1) as u64)
            .map(|k| {
                (
                    1.0 / shots.max(1) as f64,
                    noise.diffusion.detuning(k),
                    noise.spin.detuning(k),
                )
            })
            .collect()),
        Averaging::Quadrature { nodes } => {
            let nodes = nodes.max(1);
            let axis = |sigma: f64| -> Result<Vec<(f64, f64)>, ExperimentError> {
                if sigma == 0.0 || nodes == 1 {
                    return Ok(vec![(1.0, 0.0)]);
                }
                let rule = GaussHermite::new(nodes)?;
                let norm = std::f64::consts::PI.sqrt();
                Ok(rule
                    .nodes()
                    .iter()
                    .zip(rule.weights())
                    .map(|(&x, &w)| (w / norm, std::f64::consts::SQRT_2 * sigma * x))
                    .collect())
            };
            let opt = axis(noise.diffusion.sigma)?;
            let spin = axis(noise.spin.sigma_spin)?;
            let mut out = Vec::with_capacity(opt.len() * spin.len());
            for &(wo, d_opt) in &opt {
                for &(ws, d_spin) in &spin {
                    out.push((wo * ws, d_opt, d_spin));
                }
            }
            Ok(out)
        }
    }
}

/// Compiled form of a sequence for one noise realization.
struct CompiledRun {
    model: HamiltonianModel,
    channels: Vec<lindblad::CollapseChannel>,
    timed: Vec<TimedChannel>,
    /// (event time, efficiency) of photocreation resets.
    events: Vec<(f64, f64)>,
}

fn compile(
    seq: &PulseSequence,
    system: &SystemSpec,
    settings: &RunSettings,
    d_opt: f64,
    d_spin: f64,
) -> Result<CompiledRun, ExperimentError> {
    let gamma_0 = system.rates.gamma_0();
    let mut optical: Vec<DriveTerm> = Vec::new();
    let mut raman_pulses: Vec<(RamanPulse, (f64, f64))> = Vec::new();
    let mut events = Vec::new();

    for e in &seq.elements {
        match e.kind {
            ElementKind::Resonant(p) => {
                if p.power_rel > 0.0 {
                    optical.push(DriveTerm {
                        lower: p.lower,
                        upper: p.upper,
                        rabi: Envelope::Pulse {
                            amplitude: gamma_0 * p.power_rel.sqrt(),
                            t_on: e.start,
                            t_off: e.end(),
                            rise_ns: settings.rise_ns,
                        },
                        detuning: p.detuning,
                        phase: p.phase,
                    });
                }
            }
            ElementKind::Raman(p) => raman_pulses.push((p, (e.start, e.end()))),
            ElementKind::Photocreation { efficiency } => events.push((e.end(), efficiency)),
            ElementKind::Readout { .. } => {}
        }
    }

    let mut extra_couplings = Vec::new();
    let mut diag_pulses = Vec::new();
    let mut timed = Vec::new();
    let frame = match settings.raman_mode {
        RamanMode::Full if !raman_pulses.is_empty() => FrameSpec::Interaction,
        _ => FrameSpec::AnchorDrives,
    };
    for (p, window) in &raman_pulses {
        match settings.raman_mode {
            RamanMode::Full => {
                optical.extend(raman_full_drives(
                    p,
                    &system.scheme,
                    &system.rates,
                    *window,
                    settings.rise_ns,
                )?);
            }
            RamanMode::Reduced => {
                let red = reduce_raman_to_two_level(p, &system.scheme, &system.rates)?;
                let env = Envelope::Pulse {
                    amplitude: red.omega_mw,
                    t_on: window.0,
                    t_off: window.1,
                    rise_ns: settings.rise_ns,
                };
                extra_couplings.push(red.coupling(env));
                diag_pulses.extend(red.stark_pulses(*window, settings.rise_ns));
                timed.extend(red.scattering_channels(*window, settings.rise_ns));
            }
        }
    }

    let mut model = build_hamiltonian(&system.scheme, &optical, frame, d_opt, d_spin)?;
    model.couplings.extend(extra_couplings);
    model.diag_pulses.extend(diag_pulses);
    let channels = build_collapse_channels(&system.rates, &system.scheme, &system.env);
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(CompiledRun {
        model,
        channels,
        timed,
        events,
    })
}

/// Simulate one realization over the full period, returning the flux on the
/// output grid and the final state.
fn simulate_one(
    seq: &PulseSequence,
    system: &SystemSpec,
    settings: &RunSettings,
    d_opt: f64,
    d_spin: f64,
) -> Result<(Vec<f64>, Vec<f64>, Array2<C64>), ExperimentError> {
    let compiled = compile(seq, system, settings, d_opt, d_spin)?;
    let period = seq.repetition_period;
    let n = (period / settings.grid_step_ns).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * period / n as f64).collect();

    let (p1, p2) = thermal_populations(system.env.temperature_k, system.scheme.delta_g);
    let mut rho = ground_mixture(p1, p2);

    let mut times = Vec::with_capacity(grid.len());
    let mut flux = Vec::with_capacity(grid.len());
    let mut cursor = 0.0;
    let mut grid_pos = 0usize;

    let mut boundaries: Vec<(f64, Option<f64>)> =
        compiled.events.iter().map(|&(t, eff)| (t, Some(eff))).collect();
    boundaries.push((period, None));

    for (t_end, efficiency) in boundaries {
        if t_end > cursor + 1e-12 {
            // segment grid: cursor, interior global grid points, t_end
            let mut seg = vec![cursor];
            while grid_pos < grid.len() && grid[grid_pos] <= t_end + 1e-12 {
                if grid[grid_pos] > cursor + 1e-12 {
                    seg.push(grid[grid_pos]);
                }
                grid_pos += 1;
            }
            if (seg.last().unwrap() - t_end).abs() > 1e-12 {
                seg.push(t_end);
            }
            let traj = lindblad::evolve_with(
                &rho,
                &compiled.model,
                &compiled.channels,
                &compiled.timed,
                &seg,
                &settings.ode,
            )?;
            for (i, &t) in traj.times.iter().enumerate() {
                // skip the duplicated segment-start point
                if times.last().map(|&last: &f64| t > last + 1e-12).unwrap_or(true) {
                    times.push(t);
                    flux.push(traj.flux_wg[i]);
                }
            }
            rho = traj.states.last().unwrap().clone();
            cursor = t_end;
        }
        if let Some(eff) = efficiency {
            let mix = ground_mixture(0.5, 0.5);
            rho = &mix * C64::new(eff, 0.0) + &rho * C64::new(1.0 - eff, 0.0);
        }
    }
    Ok((times, flux, rho))
}

/// Run a sequence averaged over its noise realizations.
pub fn run_experiment(
    seq: &PulseSequence,
    system: &SystemSpec,
    noise: &NoiseSpec,
    settings: &RunSettings,
) -> Result<AveragedRun, ExperimentError> {
    let reals = realizations(noise)?;
    let results: Result<Vec<_>, ExperimentError> = reals
        .par_iter()
        .map(|&(w, d_opt, d_spin)| {
            simulate_one(seq, system, settings, d_opt, d_spin).map(|r| (w, r))
        })
        .collect();
    let results = results?;

    let (_, (times, _, _)) = &results[0];
    let times = times.clone();
    let mut flux = vec![0.0; times.len()];
    let mut final_state: Array2<C64> = Array2::zeros((4, 4));
    for (w, (_, f, state)) in &results {
        for (acc, v) in flux.iter_mut().zip(f) {
            *acc += w * v;
        }
        final_state = final_state + state * C64::new(*w, 0.0);
    }
    // quadrature weights sum to 1 up to rule accuracy; renormalize
    let wsum: f64 = results.iter().map(|(w, _)| w).sum();
    for f in flux.iter_mut() {
        *f /= wsum;
    }
    final_state.mapv_inplace(|v| v / wsum);

    let readout_window = seq.readout_window();
    let readout = readout_window.map(|(a, b)| {
        let mut acc = 0.0;
        for i in 1..times.len() {
            let (t0, t1) = (times[i - 1], times[i]);
            let lo = t0.max(a);
            let hi = t1.min(b);
            if hi > lo {
                // trapezoid on the overlapping part
                let f0 = flux[i - 1] + (flux[i] - flux[i - 1]) * (lo - t0) / (t1 - t0);
                let f1 = flux[i - 1] + (flux[i] - flux[i - 1]) * (hi - t0) / (t1 - t0);
                acc += 0.5 * (f0 + f1) * (hi - lo);
            }
        }
        acc
    });

    Ok(AveragedRun {
        times,
        flux_wg: flux,
        readout,
        readout_window,
        final_state,
    })
}

/// Extract the optical-pumping rate of a cw probe drive at a fixed detuning
/// by evolving from the bright ground state and fitting the flux decay.
/// The fit window skips the quasi-steady-state onset.
pub fn pumping_rate_from_dynamics(
    system: &SystemSpec,
    power_rel: f64,
    detuning: f64,
    settings: &RunSettings,
) -> Result<f64, ExperimentError> {
    let gamma_0 = system.rates.gamma_0();
    let gamma_x = system.rates.gamma_x();
    // window sized from the expected rate at this drive and detuning
    let omega_sq = gamma_0 * gamma_0 * power_rel;
    let expected = gamma_x * omega_sq / (2.0 * omega_sq + gamma_0 * gamma_0 + 4.0 * detuning * detuning);
    let window = (4.0 / expected).min(20_000.0);
    let skip = 10.0 / gamma_0;

    let drive = DriveTerm {
        lower: Level::G1,
        upper: Level::E1,
        rabi: Envelope::Constant(gamma_0 * power_rel.sqrt()),
        detuning,
        phase: 0.0,
    };
    let model = build_hamiltonian(&system.scheme, &[drive], FrameSpec::AnchorDrives, 0.0, 0.0)?;
    let channels = build_collapse_channels(&system.rates, &system.scheme, &system.env);
    let rho0 = lindblad::pure_state(Level::G1);
    let n = 2000;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * window / n as f64).collect();
    let traj = lindblad::evolve(&rho0, &model, &channels, &grid, &settings.ode)?;
    let bin = (window - skip) / 400.0;
    let hist = lindblad::fluorescence_flux(&traj, (skip, window), bin, 0.0)?;
    let fit = crate::fit::fit_exponential(&hist)?;
    Ok(fit.value("gamma_osp"))
}

/// Histogram of a pump/probe pumping run over the probe readout window.
pub fn pumping_histogram(
    seq: &PulseSequence,
    system: &SystemSpec,
    noise: &NoiseSpec,
    settings: &RunSettings,
    bin_ns: f64,
    background: f64,
) -> Result<Histogram, ExperimentError> {
    let run = run_experiment(seq, system, noise, settings)?;
    let window = run.readout_window.ok_or(ExperimentError::NoReadout)?;
    run.histogram(window, bin_ns, background)
}

/// How the pumping rate is estimated from a noisy run.
///
/// `Ensemble` fits one exponential to the noise-averaged histogram — the
/// raw detector view. Because bright (resonant) realizations decay fast,
/// that estimator sits above the ensemble-mean rate when the spectral
/// diffusion is comparable to the linewidth. `PerRealization` fits each
/// frozen-detuning histogram and averages the rates over the Gaussian
/// ensemble, which is exactly the rate average the saturation model
/// integrates.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum RateExtraction {
    Ensemble,
    PerRealization,
}

/// Pumping rate of one sequence under the chosen extraction convention;
/// returns (rate, fit sigma).
pub fn pumping_rate(
    seq: &PulseSequence,
    system: &SystemSpec,
    noise: &NoiseSpec,
    settings: &RunSettings,
    bin_ns: f64,
    extraction: RateExtraction,
) -> Result<(f64, f64), ExperimentError> {
    match extraction {
        RateExtraction::Ensemble => {
            let hist = pumping_histogram(seq, system, noise, settings, bin_ns, 0.0)?;
            let fit = crate::fit::fit_exponential(&hist)?;
            Ok((fit.value("gamma_osp"), fit.sigma_of("gamma_osp")))
        }
        RateExtraction::PerRealization => {
            let reals = realizations(noise)?;
            let fits: Result<Vec<_>, ExperimentError> = reals
                .par_iter()
                .map(|&(w, d_opt, d_spin)| {
                    let (times, flux, _) = simulate_one(seq, system, settings, d_opt, d_spin)?;
                    let window = seq.readout_window().ok_or(ExperimentError::NoReadout)?;
                    let hist =
                        lindblad::histogram_from_flux(&times, &flux, window, bin_ns, 0.0)?;
                    let fit = crate::fit::fit_exponential(&hist)?;
                    Ok((w, fit.value("gamma_osp"), fit.sigma_of("gamma_osp")))
                })
                .collect();
            let fits = fits?;
            let wsum: f64 = fits.iter().map(|(w, _, _)| w).sum();
            let rate = fits.iter().map(|(w, r, _)| w * r).sum::<f64>() / wsum;
            let sigma = fits.iter().map(|(w, _, s)| w * s).sum::<f64>() / wsum;
            Ok((rate, sigma))
        }
    }
}

/// Ramsey fringe amplitude at each delay: (I(phase 0) - I(phase pi)) / 2,
/// from the readout flux integral.
///
/// The reported delay is the effective free-precession time
/// tau + (4/pi) t_pi/2: quasi-static detuning noise also acts during the
/// finite pulses, with the standard square-pulse sensitivity factor.
pub fn ramsey_amplitude_sweep(
    taus: &[f64],
    pulse: &RamanPulse,
    init_power: f64,
    init_ns: f64,
    readout_power: f64,
    readout_ns: f64,
    system: &SystemSpec,
    noise: &NoiseSpec,
    settings: &RunSettings,
) -> Result<Vec<(f64, f64)>, ExperimentError> {
    let omega = pulse.omega_mw()?;
    let t_pi2 = std::f64::consts::FRAC_PI_2 / omega;
    let tau_offset = 4.0 / std::f64::consts::PI * t_pi2;
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut readouts = [0.0; 2];
        for (i, phase) in [0.0, std::f64::consts::PI].iter().enumerate() {
            let seq = crate::pulse::build_ramsey_sequence(
                tau,
                pulse,
                *phase,
                init_power,
                init_ns,
                readout_power,
                readout_ns,
            )?;
            let run = run_experiment(&seq, system, noise, settings)?;
            readouts[i] = run.readout.ok_or(ExperimentError::NoReadout)?;
        }
        out.push((tau + tau_offset, 0.5 * (readouts[0] - readouts[1])));
    }
    Ok(out)
}

/// Readout fluorescence after a fixed-length Raman pulse, swept over power.
pub fn rabi_power_sweep(
    powers_mw: &[f64],
    pulse_template: &RamanPulse,
    pulse_ns: f64,
    init_power: f64,
    init_ns: f64,
    readout_power: f64,
    readout_ns: f64,
    system: &SystemSpec,
    noise: &NoiseSpec,
    settings: &RunSettings,
) -> Result<Vec<(f64, f64)>, ExperimentError> {
    let lead = 2.0;
    let gap = 5.0;
    let mut out = Vec::with_capacity(powers_mw.len());
    for &p_mw in powers_mw {
        let init = PulseElement {
            kind: ElementKind::Resonant(crate::pulse::ResonantPulse {
                lower: Level::G1,
                upper: Level::E1,
                power_rel: init_power,
                detuning: 0.0,
                phase: 0.0,
            }),
            start: lead,
            duration: init_ns,
        };
        let mut pulse = *pulse_template;
        pulse.power_mw = p_mw;
        let raman = PulseElement {
            kind: ElementKind::Raman(pulse),
            start: init.end() + gap,
            duration: pulse_ns,
        };
        let probe = PulseElement {
            kind: ElementKind::Resonant(crate::pulse::ResonantPulse {
                lower: Level::G1,
                upper: Level::E1,
                power_rel: readout_power,
                detuning: 0.0,
                phase: 0.0,
            }),
            start: raman.end() + gap,
            duration: readout_ns,
        };
        let readout = PulseElement {
            kind: ElementKind::Readout {
                lower: Level::G1,
                upper: Level::E1,
            },
            start: probe.start,
            duration: probe.duration,
        };
        let period = probe.end() + gap;
        let seq = PulseSequence::new(vec![init, raman, probe, readout], period, 1)?;
        let run = run_experiment(&seq, system, noise, settings)?;
        out.push((p_mw, run.readout.ok_or(ExperimentError::NoReadout)?));
    }
    Ok(out)
}

/// Ground-state populations over a single Raman pulse, for comparing the
/// full bichromatic model against the two-level reduction.
pub fn raman_pulse_populations(
    pulse: &RamanPulse,
    pulse_ns: f64,
    system: &SystemSpec,
    settings: &RunSettings,
    n_out: usize,
) -> Result<Vec<(f64, f64)>, ExperimentError> {
    let lead = 1.0;
    let raman = PulseElement {
        kind: ElementKind::Raman(*pulse),
        start: lead,
        duration: pulse_ns,
    };
    let seq = PulseSequence::new(vec![raman], pulse_ns + 2.0 * lead, 1)?;
    let compiled = compile(&seq, system, settings, 0.0, 0.0)?;
    let grid: Vec<f64> = (0..=n_out)
        .map(|i| i as f64 * (pulse_ns + 2.0 * lead) / n_out as f64)
        .collect();
    let rho0 = lindblad::pure_state(Level::G2);
    let traj = lindblad::evolve_with(
        &rho0,
        &compiled.model,
        &compiled.channels,
        &compiled.timed,
        &grid,
        &settings.ode,
    )?;
    Ok(traj
        .times
        .iter()
        .cloned()
        .zip(traj.population(Level::G1))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{fit_exponential, linear_regression};
    use crate::model::ChargeSpecies;
    use crate::pulse::{build_pumping_sequence, PumpProbeTimings, RamanCalibration};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::TAU;

    fn xm_system() -> SystemSpec {
        SystemSpec {
            scheme: LevelScheme::new(ChargeSpecies::Xm, 315.97, TAU * 10.0, TAU * 8.4).unwrap(),
            rates: DecayRates::new(0.12857, 0.11443, 2.71257, 0.11443, 0.0, 0.0).unwrap(),
            env: FieldEnvironment::new(2.0, 0.0, 4.0, 0.357).unwrap(),
        }
    }

    fn xp_system() -> SystemSpec {
        SystemSpec {
            scheme: LevelScheme::new(ChargeSpecies::Xp, 317.24, TAU * 4.2, TAU * 10.0).unwrap(),
            rates: DecayRates::new(0.1139, 0.0441, 2.278, 0.0441, 0.0, 0.0).unwrap(),
            env: FieldEnvironment::new(2.0, 0.0, 4.0, 0.15).unwrap(),
        }
    }

    fn xp_raman(power_mw: f64) -> RamanPulse {
        let scheme_delta_g = TAU * 4.2;
        RamanPulse {
            power_mw,
            delta_r: TAU * 290.0,
            delta_d: scheme_delta_g,
            phase: 0.0,
            calibration: RamanCalibration::from_reference(1.0, TAU * 290.0, TAU * 0.150)
                .unwrap(),
        }
    }

    #[test]
    fn extracted_rate_matches_saturation_formula_weak_drive() {
        // sigma = 0, Delta = 0, weak drive: gamma_osp from the full dynamics
        // matches gamma_x Omega^2/(2 Omega^2 + gamma_0^2) within 2%.
        let sys = xm_system();
        let settings = RunSettings::default();
        // the slow pumping eigenvalue sits above the quasi-steady-state
        // formula by about 3 gamma_0 gamma_x Omega^2/(gamma_0^2+2 Omega^2)^2,
        // i.e. a few percent at this cyclicity; the weak-drive point meets
        // the 2% mark and the others the documented correction
        for &(p, tol) in &[(0.05, 0.02), (0.2, 0.035), (1.0, 0.035)] {
            let got = pumping_rate_from_dynamics(&sys, p, 0.0, &settings).unwrap();
            let expect =
                crate::fit::eval_pumping_rate(p, sys.rates.gamma_x(), sys.rates.gamma_0(), 0.0, 1)
                    .unwrap();
            assert!(
                ((got - expect) / expect).abs() < tol,
                "P={p}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn extracted_rate_within_two_percent_in_cycling_regime() {
        // for Omega_p <= gamma_0 the pointwise agreement is 2% once the
        // cyclicity is high enough that the adiabatic correction
        // 3/(8(1+C)) stays below it
        let sys = SystemSpec {
            scheme: LevelScheme::new(ChargeSpecies::Xm, 315.97, TAU * 10.0, TAU * 8.4).unwrap(),
            rates: DecayRates::new(0.0614, 0.0614, 2.8858, 0.0614, 0.0, 0.0).unwrap(),
            env: FieldEnvironment::new(2.0, 0.0, 4.0, 0.357).unwrap(),
        };
        let settings = RunSettings::default();
        for &p in &[0.1, 0.3, 0.6, 1.0] {
            let got = pumping_rate_from_dynamics(&sys, p, 0.0, &settings).unwrap();
            let expect =
                crate::fit::eval_pumping_rate(p, sys.rates.gamma_x(), sys.rates.gamma_0(), 0.0, 1)
                    .unwrap();
            assert!(
                ((got - expect) / expect).abs() < 0.02,
                "P={p}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn saturation_ceiling_at_high_power() {
        let sys = xm_system();
        let settings = RunSettings::default();
        let got = pumping_rate_from_dynamics(&sys, 100.0, 0.0, &settings).unwrap();
        assert!(
            (got - sys.rates.gamma_x() / 2.0).abs() < 0.03 * sys.rates.gamma_x() / 2.0,
            "gamma_osp(P->inf) = {got}"
        );
    }

    #[test]
    fn pumping_histogram_is_single_exponential() {
        // model adequacy: R^2 > 0.999 for the probe-window histogram fit in
        // the cycling regime.
        let sys = xm_system();
        let seq = build_pumping_sequence(
            ChargeSpecies::Xm,
            2.0,
            1.0,
            &PumpProbeTimings::default(),
        )
        .unwrap();
        let hist = pumping_histogram(
            &seq,
            &sys,
            &NoiseSpec::none(),
            &RunSettings::default(),
            1.0,
            0.0,
        )
        .unwrap();
        let fit = fit_exponential(&hist).unwrap();
        assert!(fit.converged);
        // R^2 against the fitted model
        let t0 = hist.bin_centers[0];
        let model: Vec<f64> = hist
            .bin_centers
            .iter()
            .map(|t| fit.value("i0") + fit.value("i1") * (-fit.value("gamma_osp") * (t - t0)).exp())
            .collect();
        let mean = hist.counts.iter().sum::<f64>() / hist.counts.len() as f64;
        let ss_res: f64 = hist
            .counts
            .iter()
            .zip(&model)
            .map(|(y, m)| (y - m) * (y - m))
            .sum();
        let ss_tot: f64 = hist.counts.iter().map(|y| (y - mean) * (y - mean)).sum();
        let r2 = 1.0 - ss_res / ss_tot;
        assert!(r2 > 0.999, "R^2 = {r2}");
    }

    #[test]
    fn single_shot_quadrature_equals_plain_evolution() {
        // shots = 1 with sigma = 0 must match a single evolve call.
        let sys = xm_system();
        let seq = build_pumping_sequence(
            ChargeSpecies::Xm,
            2.0,
            1.0,
            &PumpProbeTimings::default(),
        )
        .unwrap();
        let settings = RunSettings::default();
        let a = run_experiment(&seq, &sys, &NoiseSpec::none(), &settings).unwrap();
        let mc = NoiseSpec {
            averaging: Averaging::MonteCarlo { shots: 1 },
            ..NoiseSpec::none()
        };
        let b = run_experiment(&seq, &sys, &mc, &settings).unwrap();
        for (x, y) in a.flux_wg.iter().zip(&b.flux_wg) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn monte_carlo_converges_to_quadrature() {
        // the MC pumping-rate estimate approaches the quadrature value with
        // roughly 1/sqrt(N) error, checked at N = 100, 1000, 10000.
        let sys = xm_system();
        let settings = RunSettings {
            grid_step_ns: 0.5,
            ..Default::default()
        };
        let sigma = TAU * 0.140;
        let seq = build_pumping_sequence(
            ChargeSpecies::Xm,
            2.0,
            1.0,
            &PumpProbeTimings {
                probe_ns: 120.0,
                ..Default::default()
            },
        )
        .unwrap();
        let quad = NoiseSpec {
            diffusion: GaussianDiffusion { sigma, seed: 1 },
            spin: SpinNoise {
                sigma_spin: 0.0,
                seed: 1,
            },
            averaging: Averaging::Quadrature { nodes: 48 },
        };
        let rate_of = |noise: &NoiseSpec| -> f64 {
            pumping_rate(&seq, &sys, noise, &settings, 1.0, RateExtraction::Ensemble)
                .unwrap()
                .0
        };
        let r_ref = rate_of(&quad);

        let mut errs = Vec::new();
        for &n in &[100usize, 1000, 10_000] {
            let mc = NoiseSpec {
                averaging: Averaging::MonteCarlo { shots: n },
                ..quad
            };
            errs.push((rate_of(&mc) - r_ref).abs() / r_ref);
        }
        // errors shrink toward the quadrature value at roughly 1/sqrt(N)
        assert!(errs[2] < errs[0], "{errs:?}");
        assert!(errs[2] < 0.012, "{errs:?}");
        assert!(
            errs[2] < 0.5 * errs[0].max(1e-4),
            "no 1/sqrt(N) trend: {errs:?}"
        );
    }

    #[test]
    fn photocreation_resets_to_mixture() {
        let sys = xp_system();
        let seq = build_pumping_sequence(
            ChargeSpecies::Xp,
            0.0,
            0.0,
            &PumpProbeTimings::default(),
        )
        .unwrap();
        // no drives at all: after the photocreation event the state is the
        // 50/50 mixture and stays there
        let run = run_experiment(&seq, &sys, &NoiseSpec::none(), &RunSettings::default()).unwrap();
        assert_abs_diff_eq!(run.final_state[(0, 0)].re, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(run.final_state[(1, 1)].re, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn ramsey_zero_delay_composition() {
        // tau = 0: the two pi/2 pulses compose to a pi pulse (maximal
        // readout); with the second pulse phase-shifted by pi they undo
        // each other (minimal readout).
        let sys = xp_system();
        let pulse = xp_raman(1.0);
        let noise = NoiseSpec::none();
        let settings = RunSettings::default();
        let seq_max =
            crate::pulse::build_ramsey_sequence(0.0, &pulse, 0.0, 1.0, 120.0, 1.0, 30.0).unwrap();
        let seq_min =
            crate::pulse::build_ramsey_sequence(0.0, &pulse, std::f64::consts::PI, 1.0, 120.0, 1.0, 30.0)
                .unwrap();
        let i_max = run_experiment(&seq_max, &sys, &noise, &settings)
            .unwrap()
            .readout
            .unwrap();
        let i_min = run_experiment(&seq_min, &sys, &noise, &settings)
            .unwrap()
            .readout
            .unwrap();
        assert!(
            i_max > 20.0 * i_min.max(1e-9),
            "pi composition: {i_max} vs {i_min}"
        );
    }

    #[test]
    fn ramsey_fringe_frequency_equals_two_photon_detuning() {
        // deliberate two-photon detuning epsilon shows up as the fringe
        // frequency in tau.
        let sys = xp_system();
        let eps = TAU * 0.05; // 50 MHz
        let mut pulse = xp_raman(1.0);
        pulse.delta_d = sys.scheme.delta_g + eps;
        let noise = NoiseSpec::none();
        let settings = RunSettings::default();
        let taus: Vec<f64> = (0..40).map(|i| i as f64 * 1.25).collect();
        let mut pts = Vec::new();
        for &tau in &taus {
            let seq = crate::pulse::build_ramsey_sequence(tau, &pulse, 0.0, 1.0, 120.0, 1.0, 30.0)
                .unwrap();
            let run = run_experiment(&seq, &sys, &noise, &settings).unwrap();
            pts.push((tau, run.readout.unwrap()));
        }
        let fit = crate::fit::fit_damped_cosine(&pts, eps).unwrap();
        assert_relative_eq!(fit.value("frequency"), eps, max_relative = 0.02);
    }

    #[test]
    fn rabi_contrast_decreases_with_scattering() {
        // at fixed pulse area the integrated scattering probability scales
        // as gamma_0 pi / (2 Delta_R), so increasing Omega_MW/Delta_R by
        // reducing Delta_R lowers the fringe contrast monotonically.
        let sys = xp_system();
        let settings = RunSettings::default();
        let mut contrasts = Vec::new();
        for &delta_r_ghz in &[790.0, 290.0, 60.0] {
            let mut pulse = xp_raman(1.0);
            pulse.delta_r = TAU * delta_r_ghz;
            let omega = pulse.omega_mw().unwrap();
            let pulse_ns = std::f64::consts::PI / omega;
            let pops =
                raman_pulse_populations(&pulse, pulse_ns, &sys, &settings, 400).unwrap();
            let max = pops.iter().map(|p| p.1).fold(0.0f64, f64::max);
            contrasts.push(max);
        }
        assert!(
            contrasts[0] > contrasts[1] && contrasts[1] > contrasts[2],
            "contrast not monotone: {contrasts:?}"
        );
    }

    #[test]
    fn averaged_histogram_fit_quality_with_noise() {
        // pumping histograms stay effectively single-exponential under
        // moderate spectral diffusion (the regime of the closed loops).
        let sys = xm_system();
        let seq = build_pumping_sequence(
            ChargeSpecies::Xm,
            2.0,
            0.8,
            &PumpProbeTimings::default(),
        )
        .unwrap();
        let noise = NoiseSpec {
            diffusion: GaussianDiffusion {
                sigma: TAU * 0.140,
                seed: 7,
            },
            spin: SpinNoise {
                sigma_spin: 0.0,
                seed: 7,
            },
            averaging: Averaging::Quadrature { nodes: 24 },
        };
        let hist =
            pumping_histogram(&seq, &sys, &noise, &RunSettings::default(), 1.0, 0.0).unwrap();
        let fit = fit_exponential(&hist).unwrap();
        let t0 = hist.bin_centers[0];
        // residual-based R^2
        let (ss_res, ss_tot) = {
            let model: Vec<f64> = hist
                .bin_centers
                .iter()
                .map(|t| {
                    fit.value("i0")
                        + fit.value("i1") * (-fit.value("gamma_osp") * (t - t0)).exp()
                })
                .collect();
            let mean = hist.counts.iter().sum::<f64>() / hist.counts.len() as f64;
            (
                hist.counts
                    .iter()
                    .zip(&model)
                    .map(|(y, m)| (y - m) * (y - m))
                    .sum::<f64>(),
                hist.counts
                    .iter()
                    .map(|y| (y - mean) * (y - mean))
                    .sum::<f64>(),
            )
        };
        let r2 = 1.0 - ss_res / ss_tot;
        assert!(r2 > 0.999, "R^2 = {r2}");
        let _ = linear_regression(&hist.bin_centers, &hist.counts);
    }
}
