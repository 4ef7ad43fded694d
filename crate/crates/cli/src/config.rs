//! Scenario configuration: TOML files with explicit unit suffixes on every
//! physical value. Unknown keys are rejected at parse time; unit or range
//! problems are reported with the offending key path.

use serde::Deserialize;
use std::f64::consts::TAU;
use trion_core::experiment::{Averaging, NoiseSpec, SystemSpec};
use trion_core::model::{ChargeSpecies, DecayRates, FieldEnvironment, LevelScheme};
use trion_core::noise::{GaussianDiffusion, SpinNoise};
use trion_core::pulse::{RamanCalibration, RamanPulse};
use trion_core::units::Quantity;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSection,
    pub noise: NoiseSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub species: String,
    pub nu0: String,
    pub delta_g: String,
    pub delta_e: String,
    pub gx_wg: String,
    pub gx_rad: String,
    pub gy_wg: String,
    pub gy_rad: String,
    pub dephasing: String,
    pub cotunneling: String,
    pub b_field: String,
    pub angle_rad: f64,
    pub temperature: String,
    pub g_ground: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma: String,
    pub sigma_spin: String,
    pub seed: u64,
    pub averaging: String,
    pub nodes: Option<usize>,
    pub shots: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: String,
    // pumping / saturation
    pub p_sat: Option<String>,
    pub pump_power: Option<String>,
    pub probe_power: Option<String>,
    pub probe_powers: Option<Vec<String>>,
    pub photocreation_ns: Option<String>,
    pub pump_ns: Option<String>,
    pub probe_ns: Option<String>,
    pub bin: Option<String>,
    pub background: Option<f64>,
    pub rate_extraction: Option<String>,
    // rabi / ramsey
    pub delta_r: Option<String>,
    pub delta_d: Option<String>,
    pub cal_power: Option<String>,
    pub cal_delta: Option<String>,
    pub cal_omega: Option<String>,
    pub pulse_ns: Option<String>,
    pub power_max: Option<String>,
    pub power_points: Option<usize>,
    pub raman_power: Option<String>,
    pub tau_start: Option<String>,
    pub tau_stop: Option<String>,
    pub tau_points: Option<usize>,
    pub init_power: Option<String>,
    pub init_ns: Option<String>,
    pub readout_power: Option<String>,
    pub readout_ns: Option<String>,
    // transmission / spectrum
    pub populations: Option<toml::Value>,
    pub excited_populations: Option<[f64; 2]>,
    pub reference: Option<String>,
    pub grid_start: Option<String>,
    pub grid_stop: Option<String>,
    pub grid_points: Option<usize>,
    pub fsr: Option<String>,
    pub scanner_linewidth: Option<String>,
    pub scanner_reference: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub prefix: String,
}

/// Spin populations for a transmission run.
#[derive(Copy, Clone, Debug)]
pub enum Populations {
    Thermal,
    Fixed(f64, f64),
}

/// Fully validated scenario in internal units.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub system: SystemSpec,
    pub noise: NoiseSpec,
    pub experiment: Experiment,
    pub prefix: String,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub enum Experiment {
    Pumping {
        pump_rel: f64,
        probe_rel: f64,
        photocreation_ns: Option<f64>,
        pump_ns: f64,
        probe_ns: f64,
        bin_ns: f64,
        background: f64,
    },
    Saturation {
        pump_rel: f64,
        /// (absolute power in nW, P/P_sat)
        probe_powers: Vec<(f64, f64)>,
        photocreation_ns: Option<f64>,
        pump_ns: f64,
        probe_ns: f64,
        bin_ns: f64,
        background: f64,
        extraction: trion_core::experiment::RateExtraction,
    },
    Rabi {
        pulse: RamanPulse,
        powers_mw: Vec<f64>,
        pulse_ns: f64,
        init_power_rel: f64,
        init_ns: f64,
        readout_power_rel: f64,
        readout_ns: f64,
    },
    Ramsey {
        pulse: RamanPulse,
        taus: Vec<f64>,
        init_power_rel: f64,
        init_ns: f64,
        readout_power_rel: f64,
        readout_ns: f64,
    },
    Transmission {
        populations: Populations,
        reference_thz: f64,
        grid_ghz: Vec<f64>,
    },
    Spectrum {
        excited_populations: (f64, f64),
        grid_ghz: Vec<f64>,
        fsr_ghz: f64,
        scanner_linewidth_ghz: f64,
        scanner_reference_thz: f64,
    },
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Pumping { .. } => "pumping",
            Experiment::Saturation { .. } => "saturation",
            Experiment::Rabi { .. } => "rabi",
            Experiment::Ramsey { .. } => "ramsey",
            Experiment::Transmission { .. } => "transmission",
            Experiment::Spectrum { .. } => "spectrum",
        }
    }
}

/// Collects key-qualified validation problems.
struct Check {
    errors: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self { errors: Vec::new() }
    }

    fn quantity<T>(
        &mut self,
        key: &str,
        raw: &str,
        convert: impl Fn(&Quantity) -> Result<T, trion_core::units::UnitError>,
    ) -> Option<T> {
        match Quantity::parse(raw).and_then(|q| convert(&q)) {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{key}: {e} (value {raw:?})"));
                None
            }
        }
    }

    fn nonnegative(&mut self, key: &str, value: Option<f64>) -> Option<f64> {
        match value {
            Some(v) if v >= 0.0 => Some(v),
            Some(v) => {
                self.errors.push(format!("{key}: must be nonnegative, got {v}"));
                None
            }
            None => None,
        }
    }

    fn required<T>(&mut self, key: &str, kind: &str, value: Option<T>) -> Option<T> {
        if value.is_none() {
            self.errors
                .push(format!("experiment.{key}: required for kind {kind:?}"));
        }
        value
    }
}

pub fn parse_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
}

pub fn load_path(path: &std::path::Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text)
}

/// Validate and convert to internal units. `seed_override` replaces the
/// configured master seed when given.
pub fn resolve(cfg: &ScenarioConfig, seed_override: Option<u64>) -> Result<Resolved, ConfigError> {
    let mut ck = Check::new();

    let species = match cfg.system.species.as_str() {
        "XM" => Some(ChargeSpecies::Xm),
        "XP" => Some(ChargeSpecies::Xp),
        other => {
            ck.errors
                .push(format!("system.species: expected \"XM\" or \"XP\", got {other:?}"));
            None
        }
    };
    let nu0 = ck.quantity("system.nu0", &cfg.system.nu0, Quantity::frequency_thz);
    let delta_g = ck.quantity("system.delta_g", &cfg.system.delta_g, Quantity::angular_rad_ns);
    let delta_e = ck.quantity("system.delta_e", &cfg.system.delta_e, Quantity::angular_rad_ns);
    let rate = |ckk: &mut Check, key: &str, raw: &str| -> Option<f64> {
        let v = ckk.quantity(key, raw, Quantity::rate_per_ns);
        ckk.nonnegative(key, v)
    };
    let gx_wg = rate(&mut ck, "system.gx_wg", &cfg.system.gx_wg);
    let gx_rad = rate(&mut ck, "system.gx_rad", &cfg.system.gx_rad);
    let gy_wg = rate(&mut ck, "system.gy_wg", &cfg.system.gy_wg);
    let gy_rad = rate(&mut ck, "system.gy_rad", &cfg.system.gy_rad);
    let dephasing = rate(&mut ck, "system.dephasing", &cfg.system.dephasing);
    let cotunneling = rate(&mut ck, "system.cotunneling", &cfg.system.cotunneling);
    let b_field = ck.quantity("system.b_field", &cfg.system.b_field, Quantity::tesla);
    let temperature = ck.quantity(
        "system.temperature",
        &cfg.system.temperature,
        Quantity::kelvin,
    );

    let sigma = ck.quantity("noise.sigma", &cfg.noise.sigma, Quantity::angular_rad_ns);
    let sigma_spin = ck.quantity(
        "noise.sigma_spin",
        &cfg.noise.sigma_spin,
        Quantity::angular_rad_ns,
    );
    let averaging = match cfg.noise.averaging.as_str() {
        "quadrature" => Some(Averaging::Quadrature {
            nodes: cfg.noise.nodes.unwrap_or(64),
        }),
        "monte-carlo" => Some(Averaging::MonteCarlo {
            shots: cfg.noise.shots.unwrap_or(400),
        }),
        other => {
            ck.errors.push(format!(
                "noise.averaging: expected \"quadrature\" or \"monte-carlo\", got {other:?}"
            ));
            None
        }
    };

    let kind = cfg.experiment.kind.clone();
    let e = &cfg.experiment;
    let experiment = match kind.as_str() {
        "pumping" | "saturation" => {
            let p_sat = ck
                .required("p_sat", &kind, e.p_sat.as_deref())
                .and_then(|s| ck.quantity("experiment.p_sat", s, Quantity::milliwatt));
            let pump = ck
                .required("pump_power", &kind, e.pump_power.as_deref())
                .and_then(|s| ck.quantity("experiment.pump_power", s, Quantity::milliwatt));
            let pump_ns = ck
                .required("pump_ns", &kind, e.pump_ns.as_deref())
                .and_then(|s| ck.quantity("experiment.pump_ns", s, Quantity::time_ns));
            let probe_ns = ck
                .required("probe_ns", &kind, e.probe_ns.as_deref())
                .and_then(|s| ck.quantity("experiment.probe_ns", s, Quantity::time_ns));
            let bin_ns = ck
                .required("bin", &kind, e.bin.as_deref())
                .and_then(|s| ck.quantity("experiment.bin", s, Quantity::time_ns));
            let photocreation_ns = e.photocreation_ns.as_deref().and_then(|s| {
                ck.quantity("experiment.photocreation_ns", s, Quantity::time_ns)
            });
            let background = e.background.unwrap_or(0.0);
            match kind.as_str() {
                "pumping" => {
                    let probe = ck
                        .required("probe_power", &kind, e.probe_power.as_deref())
                        .and_then(|s| {
                            ck.quantity("experiment.probe_power", s, Quantity::milliwatt)
                        });
                    match (p_sat, pump, probe, pump_ns, probe_ns, bin_ns) {
                        (Some(ps), Some(pu), Some(pr), Some(tpu), Some(tpr), Some(b))
                            if ps > 0.0 =>
                        {
                            Some(Experiment::Pumping {
                                pump_rel: pu / ps,
                                probe_rel: pr / ps,
                                photocreation_ns,
                                pump_ns: tpu,
                                probe_ns: tpr,
                                bin_ns: b,
                                background,
                            })
                        }
                        _ => None,
                    }
                }
                _ => {
                    let extraction = match e.rate_extraction.as_deref() {
                        None | Some("per-realization") => {
                            Some(trion_core::experiment::RateExtraction::PerRealization)
                        }
                        Some("ensemble") => Some(trion_core::experiment::RateExtraction::Ensemble),
                        Some(other) => {
                            ck.errors.push(format!(
                                "experiment.rate_extraction: expected \"per-realization\" or \"ensemble\", got {other:?}"
                            ));
                            None
                        }
                    };
                    let probe_powers = ck
                        .required("probe_powers", &kind, e.probe_powers.as_ref())
                        .map(|list| {
                            list.iter()
                                .enumerate()
                                .filter_map(|(i, s)| {
                                    ck.quantity(
                                        &format!("experiment.probe_powers[{i}]"),
                                        s,
                                        Quantity::milliwatt,
                                    )
                                })
                                .collect::<Vec<f64>>()
                        });
                    match (p_sat, pump, probe_powers, pump_ns, probe_ns, bin_ns, extraction) {
                        (
                            Some(ps),
                            Some(pu),
                            Some(list),
                            Some(tpu),
                            Some(tpr),
                            Some(b),
                            Some(ex),
                        ) if ps > 0.0 && !list.is_empty() => {
                            Some(Experiment::Saturation {
                                pump_rel: pu / ps,
                                probe_powers: list
                                    .iter()
                                    .map(|&p| (p * 1e6, p / ps)) // mW -> nW label
                                    .collect(),
                                photocreation_ns,
                                pump_ns: tpu,
                                probe_ns: tpr,
                                bin_ns: b,
                                background,
                                extraction: ex,
                            })
                        }
                        _ => None,
                    }
                }
            }
        }
        "rabi" | "ramsey" => {
            let delta_r = ck
                .required("delta_r", &kind, e.delta_r.as_deref())
                .and_then(|s| ck.quantity("experiment.delta_r", s, Quantity::angular_rad_ns));
            let delta_d = match e.delta_d.as_deref() {
                Some(s) => ck.quantity("experiment.delta_d", s, Quantity::angular_rad_ns),
                None => delta_g, // two-photon resonance by default
            };
            let cal = {
                let p = ck
                    .required("cal_power", &kind, e.cal_power.as_deref())
                    .and_then(|s| ck.quantity("experiment.cal_power", s, Quantity::milliwatt));
                let d = ck
                    .required("cal_delta", &kind, e.cal_delta.as_deref())
                    .and_then(|s| ck.quantity("experiment.cal_delta", s, Quantity::angular_rad_ns));
                let o = ck
                    .required("cal_omega", &kind, e.cal_omega.as_deref())
                    .and_then(|s| ck.quantity("experiment.cal_omega", s, Quantity::angular_rad_ns));
                match (p, d, o) {
                    (Some(p), Some(d), Some(o)) => match RamanCalibration::from_reference(p, d, o)
                    {
                        Ok(c) => Some(c),
                        Err(err) => {
                            ck.errors.push(format!("experiment.cal_*: {err}"));
                            None
                        }
                    },
                    _ => None,
                }
            };
            let p_sat = ck
                .required("p_sat", &kind, e.p_sat.as_deref())
                .and_then(|s| ck.quantity("experiment.p_sat", s, Quantity::milliwatt));
            let init_power = ck
                .required("init_power", &kind, e.init_power.as_deref())
                .and_then(|s| ck.quantity("experiment.init_power", s, Quantity::milliwatt));
            let init_ns = ck
                .required("init_ns", &kind, e.init_ns.as_deref())
                .and_then(|s| ck.quantity("experiment.init_ns", s, Quantity::time_ns));
            let readout_power = ck
                .required("readout_power", &kind, e.readout_power.as_deref())
                .and_then(|s| ck.quantity("experiment.readout_power", s, Quantity::milliwatt));
            let readout_ns = ck
                .required("readout_ns", &kind, e.readout_ns.as_deref())
                .and_then(|s| ck.quantity("experiment.readout_ns", s, Quantity::time_ns));

            match kind.as_str() {
                "rabi" => {
                    let pulse_ns = ck
                        .required("pulse_ns", &kind, e.pulse_ns.as_deref())
                        .and_then(|s| ck.quantity("experiment.pulse_ns", s, Quantity::time_ns));
                    let power_max = ck
                        .required("power_max", &kind, e.power_max.as_deref())
                        .and_then(|s| ck.quantity("experiment.power_max", s, Quantity::milliwatt));
                    let n = ck.required("power_points", &kind, e.power_points);
                    match (
                        delta_r, delta_d, cal, p_sat, init_power, init_ns, readout_power,
                        readout_ns, pulse_ns, power_max, n,
                    ) {
                        (
                            Some(dr),
                            Some(dd),
                            Some(cal),
                            Some(ps),
                            Some(ip),
                            Some(ins),
                            Some(rp),
                            Some(rns),
                            Some(pns),
                            Some(pm),
                            Some(n),
                        ) if ps > 0.0 && n >= 2 => Some(Experiment::Rabi {
                            pulse: RamanPulse {
                                power_mw: pm,
                                delta_r: dr,
                                delta_d: dd,
                                phase: 0.0,
                                calibration: cal,
                            },
                            powers_mw: (0..n)
                                .map(|i| pm * i as f64 / (n - 1) as f64)
                                .collect(),
                            pulse_ns: pns,
                            init_power_rel: ip / ps,
                            init_ns: ins,
                            readout_power_rel: rp / ps,
                            readout_ns: rns,
                        }),
                        _ => None,
                    }
                }
                _ => {
                    let raman_power = ck
                        .required("raman_power", &kind, e.raman_power.as_deref())
                        .and_then(|s| ck.quantity("experiment.raman_power", s, Quantity::milliwatt));
                    let t0 = ck
                        .required("tau_start", &kind, e.tau_start.as_deref())
                        .and_then(|s| ck.quantity("experiment.tau_start", s, Quantity::time_ns));
                    let t1 = ck
                        .required("tau_stop", &kind, e.tau_stop.as_deref())
                        .and_then(|s| ck.quantity("experiment.tau_stop", s, Quantity::time_ns));
                    let n = ck.required("tau_points", &kind, e.tau_points);
                    match (
                        delta_r, delta_d, cal, p_sat, init_power, init_ns, readout_power,
                        readout_ns, raman_power, t0, t1, n,
                    ) {
                        (
                            Some(dr),
                            Some(dd),
                            Some(cal),
                            Some(ps),
                            Some(ip),
                            Some(ins),
                            Some(rp),
                            Some(rns),
                            Some(rpw),
                            Some(t0),
                            Some(t1),
                            Some(n),
                        ) if ps > 0.0 && n >= 4 && t1 > t0 => Some(Experiment::Ramsey {
                            pulse: RamanPulse {
                                power_mw: rpw,
                                delta_r: dr,
                                delta_d: dd,
                                phase: 0.0,
                                calibration: cal,
                            },
                            taus: (0..n)
                                .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
                                .collect(),
                            init_power_rel: ip / ps,
                            init_ns: ins,
                            readout_power_rel: rp / ps,
                            readout_ns: rns,
                        }),
                        _ => None,
                    }
                }
            }
        }
        "transmission" => {
            let populations = match e.populations.as_ref() {
                Some(toml::Value::String(s)) if s == "thermal" => Some(Populations::Thermal),
                Some(toml::Value::Array(a)) if a.len() == 2 => {
                    let p: Vec<f64> = a.iter().filter_map(|v| v.as_float()).collect();
                    if p.len() == 2 && (p[0] + p[1] - 1.0).abs() < 1e-9 {
                        Some(Populations::Fixed(p[0], p[1]))
                    } else {
                        ck.errors.push(
                            "experiment.populations: two floats summing to 1 required".into(),
                        );
                        None
                    }
                }
                Some(_) => {
                    ck.errors.push(
                        "experiment.populations: \"thermal\" or [p1, p2] expected".into(),
                    );
                    None
                }
                None => Some(Populations::Thermal),
            };
            let reference = ck
                .required("reference", &kind, e.reference.as_deref())
                .and_then(|s| ck.quantity("experiment.reference", s, Quantity::frequency_thz));
            let grid = grid_from(&mut ck, e, &kind);
            match (populations, reference, grid) {
                (Some(p), Some(r), Some(g)) => Some(Experiment::Transmission {
                    populations: p,
                    reference_thz: r,
                    grid_ghz: g,
                }),
                _ => None,
            }
        }
        "spectrum" => {
            let pops = e.excited_populations.unwrap_or([0.5, 0.5]);
            if (pops[0] + pops[1] - 1.0).abs() > 1e-9 || pops[0] < 0.0 || pops[1] < 0.0 {
                ck.errors
                    .push("experiment.excited_populations: must be nonnegative and sum to 1".into());
            }
            let grid = grid_from(&mut ck, e, &kind);
            let fsr = ck
                .required("fsr", &kind, e.fsr.as_deref())
                .and_then(|s| ck.quantity("experiment.fsr", s, Quantity::frequency_thz))
                .map(|thz| thz * 1e3);
            let lw = ck
                .required("scanner_linewidth", &kind, e.scanner_linewidth.as_deref())
                .and_then(|s| ck.quantity("experiment.scanner_linewidth", s, Quantity::frequency_thz))
                .map(|thz| thz * 1e3);
            let sref = ck
                .required("scanner_reference", &kind, e.scanner_reference.as_deref())
                .and_then(|s| {
                    ck.quantity("experiment.scanner_reference", s, Quantity::frequency_thz)
                });
            match (grid, fsr, lw, sref) {
                (Some(g), Some(fsr), Some(lw), Some(sref)) => Some(Experiment::Spectrum {
                    excited_populations: (pops[0], pops[1]),
                    grid_ghz: g,
                    fsr_ghz: fsr,
                    scanner_linewidth_ghz: lw,
                    scanner_reference_thz: sref,
                }),
                _ => None,
            }
        }
        other => {
            ck.errors.push(format!(
                "experiment.kind: unknown kind {other:?} (expected pumping, saturation, rabi, ramsey, transmission or spectrum)"
            ));
            None
        }
    };

    // assemble core types, collecting any constructor errors
    let system = (|| -> Option<SystemSpec> {
        let scheme = match LevelScheme::new(species?, nu0?, delta_g?, delta_e?) {
            Ok(s) => s,
            Err(e) => {
                ck.errors.push(format!("system: {e}"));
                return None;
            }
        };
        let rates = match DecayRates::new(
            gx_wg?,
            gx_rad?,
            gy_wg?,
            gy_rad?,
            dephasing?,
            cotunneling?,
        ) {
            Ok(r) => r,
            Err(e) => {
                ck.errors.push(format!("system: {e}"));
                return None;
            }
        };
        let env = match FieldEnvironment::new(
            b_field?,
            cfg.system.angle_rad,
            temperature?,
            cfg.system.g_ground,
        ) {
            Ok(e) => e,
            Err(e) => {
                ck.errors.push(format!("system: {e}"));
                return None;
            }
        };
        Some(SystemSpec { scheme, rates, env })
    })();

    let seed = seed_override.unwrap_or(cfg.noise.seed);
    let noise = match (sigma, sigma_spin, averaging) {
        (Some(s), Some(ss), Some(avg)) => {
            let diffusion = GaussianDiffusion::new(s, seed);
            let spin = SpinNoise::new(ss, seed);
            match (diffusion, spin) {
                (Ok(d), Ok(sp)) => Some(NoiseSpec {
                    diffusion: d,
                    spin: sp,
                    averaging: avg,
                }),
                (d, sp) => {
                    if let Err(e) = d {
                        ck.errors.push(format!("noise.sigma: {e}"));
                    }
                    if let Err(e) = sp {
                        ck.errors.push(format!("noise.sigma_spin: {e}"));
                    }
                    None
                }
            }
        }
        _ => None,
    };

    if !ck.errors.is_empty() {
        return Err(ConfigError::Invalid(ck.errors));
    }
    Ok(Resolved {
        system: system.expect("validated"),
        noise: noise.expect("validated"),
        experiment: experiment.expect("validated"),
        prefix: cfg.output.prefix.clone(),
        seed,
    })
}

fn grid_from(ck: &mut Check, e: &ExperimentSection, kind: &str) -> Option<Vec<f64>> {
    let start = ck
        .required("grid_start", kind, e.grid_start.as_deref())
        .and_then(|s| ck.quantity("experiment.grid_start", s, Quantity::frequency_thz))
        .map(|thz| thz * 1e3);
    let stop = ck
        .required("grid_stop", kind, e.grid_stop.as_deref())
        .and_then(|s| ck.quantity("experiment.grid_stop", s, Quantity::frequency_thz))
        .map(|thz| thz * 1e3);
    let n = ck.required("grid_points", kind, e.grid_points);
    match (start, stop, n) {
        (Some(a), Some(b), Some(n)) if n >= 2 && b > a => Some(
            (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect(),
        ),
        (Some(_), Some(_), Some(n)) => {
            ck.errors.push(format!(
                "experiment.grid: need at least 2 points and stop > start (got {n} points)"
            ));
            None
        }
        _ => None,
    }
}

/// Convenience wrapper: sigma of the optical diffusion in rad/ns.
pub fn sigma_of(noise: &NoiseSpec) -> f64 {
    noise.diffusion.sigma
}

/// Parse "140 MHz"-style angular quantities in tests and tools.
pub fn angular(s: &str) -> f64 {
    Quantity::parse(s).unwrap().angular_rad_ns().unwrap()
}

/// The bundled scenario files compiled into the binary, used by
/// `reproduce` and available as starting points for custom runs.
pub const BUNDLED: &[(&str, &str)] = &[
    ("xm_pumping", include_str!("../../../configs/xm_pumping.toml")),
    ("xp_pumping", include_str!("../../../configs/xp_pumping.toml")),
    (
        "xm_saturation",
        include_str!("../../../configs/xm_saturation.toml"),
    ),
    (
        "xp_saturation",
        include_str!("../../../configs/xp_saturation.toml"),
    ),
    (
        "xm_transmission",
        include_str!("../../../configs/xm_transmission.toml"),
    ),
    (
        "xm_spectrum",
        include_str!("../../../configs/xm_spectrum.toml"),
    ),
    (
        "xp_rabi_290",
        include_str!("../../../configs/xp_rabi_290.toml"),
    ),
    (
        "xp_rabi_790",
        include_str!("../../../configs/xp_rabi_790.toml"),
    ),
    ("xp_ramsey", include_str!("../../../configs/xp_ramsey.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// Ground splitting consistency: warn-level check used by `validate`.
pub fn derived_delta_g(system: &SystemSpec) -> f64 {
    system.env.ground_splitting()
}

pub fn delta_g_of(system: &SystemSpec) -> f64 {
    system.scheme.delta_g
}

/// Rough consistency indicator between the configured delta_g and the one
/// derived from (g_ground, B).
pub fn splitting_mismatch(system: &SystemSpec) -> f64 {
    let derived = derived_delta_g(system);
    if derived == 0.0 {
        return 0.0;
    }
    (system.scheme.delta_g - derived).abs() / derived.max(TAU * 1e-3)
}
