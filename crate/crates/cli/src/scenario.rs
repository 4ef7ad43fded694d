//! Scenario execution: dispatch a resolved configuration to the right
//! pipeline, write the data tables and the machine-readable summary, and
//! emit a run manifest.

use crate::config::{self, Experiment, Populations};
use crate::manifest::RunManifest;
use crate::output::{write_json, DataFormat, Table};
use serde_json::json;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::time::Instant;
use trion_core::experiment::{
    pumping_histogram, pumping_rate, rabi_power_sweep, ramsey_amplitude_sweep, RunSettings,
};
use trion_core::fit::{
    fidelity_lower_bound, fit_damped_cosine, fit_exponential, fit_ramsey, fit_saturation,
    format_paren, SaturationWeights,
};
use trion_core::model::{cyclicity_from_total, thermal_populations};
use trion_core::pulse::{build_pumping_sequence, raman_effective_coupling, PumpProbeTimings};
use trion_core::spectra::{
    area_ratio, dip_metrics, emission_spectrum, fit_spectrum_peaks, fold_through_cavity,
    weak_probe_transmission, FabryPerotScanner,
};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Experiment(#[from] trion_core::experiment::ExperimentError),
    #[error(transparent)]
    Pulse(#[from] trion_core::pulse::PulseError),
    #[error(transparent)]
    Fit(#[from] trion_core::fit::FitError),
    #[error(transparent)]
    Spectra(#[from] trion_core::spectra::SpectraError),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("config kind {found:?} does not match requested {requested:?}")]
    KindMismatch { found: String, requested: String },
}

pub struct RunArtifacts {
    pub files: Vec<PathBuf>,
    pub results: serde_json::Value,
}

fn fit_summary(fit: &trion_core::fit::FitResult) -> serde_json::Value {
    let mut params = serde_json::Map::new();
    for (i, name) in fit.names.iter().enumerate() {
        params.insert(
            name.clone(),
            json!({
                "value": fit.values[i],
                "sigma": fit.sigma[i],
                "quoted": format_paren(fit.values[i], fit.sigma[i]),
            }),
        );
    }
    json!({
        "params": params,
        "chi2_reduced": fit.chi2_reduced,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "non_identifiable": fit.non_identifiable,
        "warnings": fit.warnings,
    })
}

fn timings_for(exp: &Experiment) -> PumpProbeTimings {
    let mut t = PumpProbeTimings::default();
    match exp {
        Experiment::Pumping {
            photocreation_ns,
            pump_ns,
            probe_ns,
            ..
        }
        | Experiment::Saturation {
            photocreation_ns,
            pump_ns,
            probe_ns,
            ..
        } => {
            if let Some(pc) = photocreation_ns {
                t.photocreation_ns = *pc;
            }
            t.pump_ns = *pump_ns;
            t.probe_ns = *probe_ns;
        }
        _ => {}
    }
    t
}

/// Run one scenario end to end, writing the data tables plus
/// `<prefix>_results.json` and `<prefix>_manifest.json` under `outdir`.
pub fn run_scenario(
    config_text: &str,
    seed_override: Option<u64>,
    outdir: &Path,
    format: DataFormat,
) -> Result<RunArtifacts, ScenarioError> {
    let started = Instant::now();
    let cfg = config::parse_str(config_text)?;
    let resolved = config::resolve(&cfg, seed_override)?;
    std::fs::create_dir_all(outdir)?;

    let settings = RunSettings::default();
    let mut files = Vec::new();
    let prefix = resolved.prefix.clone();

    let results = match &resolved.experiment {
        Experiment::Pumping {
            pump_rel,
            probe_rel,
            bin_ns,
            background,
            ..
        } => {
            let seq = build_pumping_sequence(
                resolved.system.scheme.species,
                *pump_rel,
                *probe_rel,
                &timings_for(&resolved.experiment),
            )?;
            let hist = pumping_histogram(
                &seq,
                &resolved.system,
                &resolved.noise,
                &settings,
                *bin_ns,
                *background,
            )?;
            let mut table = Table::new(&["time_ns", "rate_per_ns"]);
            for (t, c) in hist.bin_centers.iter().zip(&hist.counts) {
                table.push(vec![*t, *c]);
            }
            files.push(table.write(outdir, &format!("{prefix}_histogram"), format)?);

            let fit = fit_exponential(&hist)?;
            let fidelity = fidelity_lower_bound(&hist, &fit)?;
            json!({
                "scenario": "pumping",
                "fit": fit_summary(&fit),
                "pumping_rate_per_ns": fit.value("gamma_osp"),
                "fidelity_lower_bound": fidelity,
            })
        }

        Experiment::Saturation {
            pump_rel,
            probe_powers,
            bin_ns,
            extraction,
            ..
        } => {
            let timings = timings_for(&resolved.experiment);
            let mut table = Table::new(&[
                "power_nW",
                "gamma_osp_per_ns",
                "gamma_osp_sigma_per_ns",
            ]);
            let mut points = Vec::new();
            let mut sigmas = Vec::new();
            for (p_nw, p_rel) in probe_powers {
                let seq = build_pumping_sequence(
                    resolved.system.scheme.species,
                    *pump_rel,
                    *p_rel,
                    &timings,
                )?;
                let (rate, sigma) = pumping_rate(
                    &seq,
                    &resolved.system,
                    &resolved.noise,
                    &settings,
                    *bin_ns,
                    *extraction,
                )?;
                table.push(vec![*p_nw, rate, sigma]);
                points.push((*p_nw, rate));
                sigmas.push(sigma);
            }
            files.push(table.write(outdir, &format!("{prefix}_rates"), format)?);

            let gamma_0 = resolved.system.rates.gamma_0();
            let sat = fit_saturation(
                &points,
                gamma_0,
                resolved.noise.diffusion.sigma,
                SaturationWeights::Uniform,
                None,
            )?;
            let gx = sat.value("gamma_x");
            let gx_sigma = sat.sigma_of("gamma_x");
            let c = cyclicity_from_total(gamma_0, gx);
            let c_sigma = gamma_0 * gx_sigma / (gx * gx);
            json!({
                "scenario": "saturation",
                "gamma_0_fixed_per_ns": gamma_0,
                "sigma_fixed_rad_per_ns": resolved.noise.diffusion.sigma,
                "fit": fit_summary(&sat),
                "gamma_x_per_ns": gx,
                "p_sat_nW": sat.value("p_sat"),
                "cyclicity": c,
                "cyclicity_sigma": c_sigma,
                "cyclicity_quoted": format_paren(c, c_sigma),
            })
        }

        Experiment::Rabi {
            pulse,
            powers_mw,
            pulse_ns,
            init_power_rel,
            init_ns,
            readout_power_rel,
            readout_ns,
        } => {
            let sweep = rabi_power_sweep(
                powers_mw,
                pulse,
                *pulse_ns,
                *init_power_rel,
                *init_ns,
                *readout_power_rel,
                *readout_ns,
                &resolved.system,
                &resolved.noise,
                &settings,
            )?;
            let mut table = Table::new(&["power_mW", "readout_photons", "omega_mw_mhz"]);
            for (p, i) in &sweep {
                let omega = raman_effective_coupling(*p, pulse.delta_r, &pulse.calibration)?;
                table.push(vec![*p, *i, omega / TAU * 1e3]);
            }
            files.push(table.write(outdir, &format!("{prefix}_fringes"), format)?);

            // fringes are periodic in power: angle = Omega_MW(P) t
            let omega_max =
                raman_effective_coupling(*powers_mw.last().unwrap(), pulse.delta_r, &pulse.calibration)?;
            let freq_hint = omega_max * pulse_ns / powers_mw.last().unwrap();
            let fit = fit_damped_cosine(&sweep, freq_hint)?;
            let omega_from_fringes = fit.value("frequency") / pulse_ns;
            json!({
                "scenario": "rabi",
                "fit": fit_summary(&fit),
                "omega_mw_max_rad_per_ns": omega_max,
                "omega_mw_max_over_2pi_MHz": omega_max / TAU * 1e3,
                "omega_mw_per_mw_from_fringes_rad_per_ns": omega_from_fringes,
                "fringe_frequency_per_mW": fit.value("frequency"),
            })
        }

        Experiment::Ramsey {
            pulse,
            taus,
            init_power_rel,
            init_ns,
            readout_power_rel,
            readout_ns,
        } => {
            let sweep = ramsey_amplitude_sweep(
                taus,
                pulse,
                *init_power_rel,
                *init_ns,
                *readout_power_rel,
                *readout_ns,
                &resolved.system,
                &resolved.noise,
                &settings,
            )?;
            let mut table = Table::new(&["tau_ns", "fringe_amplitude_photons"]);
            for (t, a) in &sweep {
                table.push(vec![*t, *a]);
            }
            files.push(table.write(outdir, &format!("{prefix}_ramsey"), format)?);

            let fit = fit_ramsey(&sweep)?;
            json!({
                "scenario": "ramsey",
                "fit": fit_summary(&fit),
                "t2_star_ns": fit.value("t2_star"),
                "t2_star_quoted": fit.paren("t2_star"),
                "sigma_spin_rad_per_ns": resolved.noise.spin.sigma_spin,
            })
        }

        Experiment::Transmission {
            populations,
            reference_thz,
            grid_ghz,
        } => {
            let pops = match populations {
                Populations::Thermal => thermal_populations(
                    resolved.system.env.temperature_k,
                    resolved.system.scheme.delta_g,
                ),
                Populations::Fixed(a, b) => (*a, *b),
            };
            let spec = weak_probe_transmission(
                &resolved.system.scheme,
                &resolved.system.rates,
                pops,
                resolved.system.rates.dephasing,
                resolved.noise.diffusion.sigma,
                *reference_thz,
                grid_ghz,
            )?;
            let mut table = Table::new(&["detuning_GHz", "transmission"]);
            for (d, p) in spec.detunings_ghz.iter().zip(&spec.power) {
                table.push(vec![*d, *p]);
            }
            files.push(table.write(outdir, &format!("{prefix}_transmission"), format)?);

            let dips = dip_metrics(&spec);
            let dip_rows: Vec<serde_json::Value> = dips
                .iter()
                .map(|d| {
                    json!({
                        "center_GHz": d.center_ghz,
                        "depth": d.depth,
                        "fwhm_GHz": d.fwhm_ghz,
                    })
                })
                .collect();
            json!({
                "scenario": "transmission",
                "spin_populations": [pops.0, pops.1],
                "overlap_flagged": spec.overlap_flagged,
                "dips": dip_rows,
            })
        }

        Experiment::Spectrum {
            excited_populations,
            grid_ghz,
            fsr_ghz,
            scanner_linewidth_ghz,
            scanner_reference_thz,
        } => {
            let spec = emission_spectrum(
                &resolved.system.scheme,
                &resolved.system.rates,
                *excited_populations,
                resolved.noise.diffusion.sigma,
                grid_ghz,
            )?;
            let mut table = Table::new(&["frequency_GHz", "intensity"]);
            for (f, i) in spec.frequencies_ghz.iter().zip(&spec.intensity) {
                table.push(vec![*f, *i]);
            }
            files.push(table.write(outdir, &format!("{prefix}_spectrum"), format)?);

            let scanner = FabryPerotScanner::new(
                *fsr_ghz,
                *scanner_linewidth_ghz,
                *scanner_reference_thz,
            )?;
            let folded = fold_through_cavity(&spec, &scanner, resolved.system.scheme.nu0_thz);
            let mut ftable = Table::new(&["folded_frequency_GHz", "intensity"]);
            for (f, i) in folded.frequencies_ghz.iter().zip(&folded.intensity) {
                ftable.push(vec![*f, *i]);
            }
            files.push(ftable.write(outdir, &format!("{prefix}_folded"), format)?);

            let (fit, peaks) = fit_spectrum_peaks(&spec, 4)?;
            // label fitted peaks against the constructed ones and build the
            // vertical/diagonal intensity ratios per trion
            let ratios = intensity_ratios(&resolved.system, &fit, &spec.peaks)?;
            let peak_rows: Vec<serde_json::Value> = peaks
                .iter()
                .map(|p| {
                    json!({
                        "center_GHz": p.center_ghz,
                        "fwhm_GHz": p.fwhm_ghz,
                        "area": p.area,
                        "polarization": format!("{:?}", p.polarization),
                    })
                })
                .collect();
            json!({
                "scenario": "spectrum",
                "fit": fit_summary(&fit),
                "peaks": peak_rows,
                "intensity_ratio_y1_x1": ratios.0,
                "intensity_ratio_y1_x1_sigma": ratios.1,
                "intensity_ratio_y2_x2": ratios.2,
                "intensity_ratio_y2_x2_sigma": ratios.3,
            })
        }
    };

    files.push(write_json(outdir, &format!("{prefix}_results"), &results)?);
    let manifest = RunManifest::new(
        config_text,
        resolved.seed,
        started.elapsed().as_secs_f64(),
    );
    files.push(write_json(outdir, &format!("{prefix}_manifest"), &manifest)?);

    Ok(RunArtifacts { files, results })
}

/// Map the four fitted peaks onto (y1/x1, y2/x2) area ratios using the
/// constructed peak table for labeling.
fn intensity_ratios(
    system: &trion_core::experiment::SystemSpec,
    fit: &trion_core::fit::FitResult,
    constructed: &[trion_core::spectra::EmissionPeak],
) -> Result<(f64, f64, f64, f64), ScenarioError> {
    use trion_core::model::{Level, Polarization};
    // constructed peaks follow scheme.transitions() order
    let find = |pol: Polarization, upper: Level| -> Option<usize> {
        let target = system
            .scheme
            .transitions()
            .iter()
            .position(|t| t.polarization == pol && t.upper == upper)?;
        let center = (system.scheme.transitions()[target].frequency_thz
            - system.scheme.nu0_thz)
            * 1e3;
        let _ = constructed;
        // fitted peak index whose center parameter is closest
        let mut best = None;
        for k in 0..4 {
            let c = fit.try_value(&format!("center_{k}"))?;
            let d = (c - center).abs();
            match best {
                None => best = Some((k, d)),
                Some((_, bd)) if d < bd => best = Some((k, d)),
                _ => {}
            }
        }
        best.map(|(k, _)| k)
    };
    let y1 = find(Polarization::Y, Level::E1);
    let x1 = find(Polarization::X, Level::E1);
    let y2 = find(Polarization::Y, Level::E2);
    let x2 = find(Polarization::X, Level::E2);
    match (y1, x1, y2, x2) {
        (Some(y1), Some(x1), Some(y2), Some(x2)) => {
            let (r1, s1) = area_ratio(fit, y1, x1);
            let (r2, s2) = area_ratio(fit, y2, x2);
            Ok((r1, s1, r2, s2))
        }
        _ => Ok((f64::NAN, f64::NAN, f64::NAN, f64::NAN)),
    }
}

/// `fit <kind>` on an external two-column data file.
pub fn fit_file(
    kind: &str,
    data_path: &Path,
    gamma_0: Option<f64>,
    sigma: Option<f64>,
    background: f64,
) -> Result<serde_json::Value, ScenarioError> {
    let text = std::fs::read_to_string(data_path)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.chars().any(|c| c.is_alphabetic()) {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() < 2 {
            continue;
        }
        let x: f64 = cells[0].trim().parse().map_err(|_| {
            ScenarioError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: cannot parse {:?}", i + 1, cells[0]),
            ))
        })?;
        let y: f64 = cells[1].trim().parse().map_err(|_| {
            ScenarioError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("line {}: cannot parse {:?}", i + 1, cells[1]),
            ))
        })?;
        xs.push(x);
        ys.push(y);
    }

    let value = match kind {
        "exponential" => {
            let hist = trion_core::fit::Histogram::new(xs, ys, background)?;
            let fit = fit_exponential(&hist)?;
            let fidelity = fidelity_lower_bound(&hist, &fit).ok();
            json!({
                "fit": fit_summary(&fit),
                "fidelity_lower_bound": fidelity,
            })
        }
        "saturation" => {
            let g0 = gamma_0.ok_or_else(|| {
                ScenarioError::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidInput,
                    "fit saturation needs --gamma0",
                ))
            })?;
            let points: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
            let fit = fit_saturation(&points, g0, sigma.unwrap_or(0.0), SaturationWeights::Uniform, None)?;
            let gx = fit.value("gamma_x");
            let c = cyclicity_from_total(g0, gx);
            json!({
                "fit": fit_summary(&fit),
                "cyclicity": c,
            })
        }
        "ramsey" => {
            let points: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
            let fit = fit_ramsey(&points)?;
            json!({
                "fit": fit_summary(&fit),
                "t2_star_ns": fit.value("t2_star"),
            })
        }
        other => {
            return Err(ScenarioError::KindMismatch {
                found: other.into(),
                requested: "exponential | saturation | ramsey".into(),
            })
        }
    };
    Ok(value)
}
