//! Experiment descriptions: pump/probe spin pumping, Raman spin control
//! and Ramsey sequences, compiled onto the dynamics engine.
//!
//! The Raman drive is a far red-detuned carrier amplitude-modulated at
//! Delta_D/2, i.e. two coherent tones at +-Delta_D/2 around the carrier.
//! The full master-equation picture keeps all eight tone-transition
//! couplings; `reduce_raman_to_two_level` adiabatically eliminates both
//! trion levels into an effective ground-state coupling Omega_MW with AC
//! Stark shifts and pulse-gated spontaneous-scattering terms.

use crate::lindblad::{Coupling, DriveTerm, Envelope, TimedChannel};
use crate::model::{ChargeSpecies, DecayRates, Level, LevelScheme};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PulseError {
    #[error("power must be nonnegative, got {0}")]
    NegativePower(f64),
    #[error("Raman detuning must be positive (red-detuned model), got {0} rad/ns")]
    NonPositiveRamanDetuning(f64),
    #[error("calibration constant must be positive")]
    BadCalibration,
    #[error("pulse duration must be positive, got {0} ns")]
    BadDuration(f64),
    #[error("elements overlap: {0} and {1}")]
    Overlap(String, String),
    #[error("sequence does not fit in the repetition period")]
    PeriodOverflow,
    #[error("readout window must coincide with a resonant pulse")]
    OrphanReadout,
    #[error("negative free-evolution delay {0} ns")]
    NegativeDelay(f64),
    #[error("effective Raman coupling is zero; pi/2 duration undefined")]
    ZeroCoupling,
    #[error("shots must be at least 1")]
    ZeroShots,
}

/// Proportionality of the Raman coupling: Omega_MW = kappa * P_R / Delta_R,
/// with P_R in mW and Delta_R in rad/ns.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RamanCalibration {
    pub kappa: f64,
}

impl RamanCalibration {
    pub fn new(kappa: f64) -> Result<Self, PulseError> {
        if kappa <= 0.0 {
            return Err(PulseError::BadCalibration);
        }
        Ok(Self { kappa })
    }

    /// Calibrate kappa from one reference point (P_ref, Delta_ref) with a
    /// known coupling Omega_ref.
    pub fn from_reference(p_ref_mw: f64, delta_ref: f64, omega_ref: f64) -> Result<Self, PulseError> {
        if p_ref_mw <= 0.0 || delta_ref <= 0.0 || omega_ref <= 0.0 {
            return Err(PulseError::BadCalibration);
        }
        Self::new(omega_ref * delta_ref / p_ref_mw)
    }
}

/// Effective two-photon Rabi frequency Omega_MW = kappa P_R / Delta_R.
pub fn raman_effective_coupling(
    p_r_mw: f64,
    delta_r: f64,
    cal: &RamanCalibration,
) -> Result<f64, PulseError> {
    if delta_r <= 0.0 {
        return Err(PulseError::NonPositiveRamanDetuning(delta_r));
    }
    if p_r_mw < 0.0 {
        return Err(PulseError::NegativePower(p_r_mw));
    }
    Ok(cal.kappa * p_r_mw / delta_r)
}

/// A resonant optical pulse on one transition. The Rabi amplitude follows
/// the saturation convention Omega = gamma_0 sqrt(P/P_sat).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ResonantPulse {
    pub lower: Level,
    pub upper: Level,
    /// P / P_sat.
    pub power_rel: f64,
    /// Laser detuning from the nominal transition (rad/ns).
    pub detuning: f64,
    pub phase: f64,
}

/// A far-detuned bichromatic Raman pulse coupling the two ground states.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RamanPulse {
    /// Raman laser power P_R (mW).
    pub power_mw: f64,
    /// Red detuning Delta_R of the carrier from the optical transitions
    /// (rad/ns), > 0.
    pub delta_r: f64,
    /// Sideband splitting Delta_D (rad/ns); two-photon resonance at
    /// Delta_D = delta_g.
    pub delta_d: f64,
    /// Two-photon drive phase (rad).
    pub phase: f64,
    pub calibration: RamanCalibration,
}

impl RamanPulse {
    pub fn omega_mw(&self) -> Result<f64, PulseError> {
        raman_effective_coupling(self.power_mw, self.delta_r, &self.calibration)
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum ElementKind {
    Resonant(ResonantPulse),
    /// Instantaneous preparation of an incoherent 50/50 ground mixture with
    /// the given efficiency, applied at the end of the window.
    Photocreation { efficiency: f64 },
    Raman(RamanPulse),
    /// Fluorescence collection window; must lie within a resonant pulse on
    /// the same transition.
    Readout { lower: Level, upper: Level },
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PulseElement {
    pub kind: ElementKind,
    pub start: f64,
    pub duration: f64,
}

impl PulseElement {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    fn label(&self) -> String {
        let kind = match self.kind {
            ElementKind::Resonant(_) => "resonant",
            ElementKind::Photocreation { .. } => "photocreation",
            ElementKind::Raman(_) => "raman",
            ElementKind::Readout { .. } => "readout",
        };
        format!("{kind}@{}ns", self.start)
    }
}

/// A timed experiment: ordered elements within one repetition period.
#[derive(Clone, Debug)]
pub struct PulseSequence {
    pub elements: Vec<PulseElement>,
    pub repetition_period: f64,
    pub shots: u32,
}

impl PulseSequence {
    pub fn new(
        mut elements: Vec<PulseElement>,
        repetition_period: f64,
        shots: u32,
    ) -> Result<Self, PulseError> {
        if shots == 0 {
            return Err(PulseError::ZeroShots);
        }
        for e in &elements {
            if e.duration <= 0.0 {
                return Err(PulseError::BadDuration(e.duration));
            }
        }
        elements.sort_by(|a, b| a.start.total_cmp(&b.start));
        if elements.iter().any(|e| e.start < 0.0 || e.end() > repetition_period) {
            return Err(PulseError::PeriodOverflow);
        }
        // readout windows must sit inside a resonant pulse on the same
        // transition
        for e in &elements {
            if let ElementKind::Readout { lower, upper } = e.kind {
                let host = elements.iter().any(|h| {
                    matches!(h.kind, ElementKind::Resonant(p)
                        if p.lower == lower && p.upper == upper
                            && h.start <= e.start + 1e-9 && h.end() >= e.end() - 1e-9)
                });
                if !host {
                    return Err(PulseError::OrphanReadout);
                }
            }
        }
        Ok(Self {
            elements,
            repetition_period,
            shots,
        })
    }

    pub fn readout_window(&self) -> Option<(f64, f64)> {
        self.elements.iter().find_map(|e| match e.kind {
            ElementKind::Readout { .. } => Some((e.start, e.end())),
            _ => None,
        })
    }

    pub fn readout_transition(&self) -> Option<(Level, Level)> {
        self.elements.iter().find_map(|e| match e.kind {
            ElementKind::Readout { lower, upper } => Some((lower, upper)),
            _ => None,
        })
    }
}

/// Timing layout for the pump/probe pumping sequence.
#[derive(Copy, Clone, Debug)]
pub struct PumpProbeTimings {
    pub photocreation_ns: f64,
    pub pump_ns: f64,
    pub gap_ns: f64,
    pub probe_ns: f64,
    pub lead_ns: f64,
    /// Margin between the probe edges and the readout window, skipping the
    /// turn-on transient and the falling edge.
    pub readout_margin_ns: f64,
}

impl Default for PumpProbeTimings {
    fn default() -> Self {
        Self {
            photocreation_ns: 100.0,
            pump_ns: 150.0,
            gap_ns: 10.0,
            probe_ns: 400.0,
            lead_ns: 2.0,
            readout_margin_ns: 3.0,
        }
    }
}

/// Two-color pump/probe spin-pumping sequence. The pump drives the
/// vertical transition of g2 (preparing g1 empty of pumping, i.e. filling
/// g1... the pump empties g2 into g1), the probe drives the vertical
/// transition of g1 and is monitored by the readout window. XP runs are
/// preceded by a photocreation pulse populating the hole.
pub fn build_pumping_sequence(
    species: ChargeSpecies,
    pump_power: f64,
    probe_power: f64,
    timings: &PumpProbeTimings,
) -> Result<PulseSequence, PulseError> {
    if pump_power < 0.0 {
        return Err(PulseError::NegativePower(pump_power));
    }
    if probe_power < 0.0 {
        return Err(PulseError::NegativePower(probe_power));
    }
    let mut t = timings.lead_ns;
    let mut elements = Vec::new();
    if species == ChargeSpecies::Xp {
        elements.push(PulseElement {
            kind: ElementKind::Photocreation { efficiency: 1.0 },
            start: t,
            duration: timings.photocreation_ns,
        });
        t += timings.photocreation_ns + timings.gap_ns;
    }
    let pump = PulseElement {
        kind: ElementKind::Resonant(ResonantPulse {
            lower: Level::G2,
            upper: Level::E2,
            power_rel: pump_power,
            detuning: 0.0,
            phase: 0.0,
        }),
        start: t,
        duration: timings.pump_ns,
    };
    t += timings.pump_ns + timings.gap_ns;
    let probe = PulseElement {
        kind: ElementKind::Resonant(ResonantPulse {
            lower: Level::G1,
            upper: Level::E1,
            power_rel: probe_power,
            detuning: 0.0,
            phase: 0.0,
        }),
        start: t,
        duration: timings.probe_ns,
    };
    if pump.end() > probe.start {
        return Err(PulseError::Overlap(pump.label(), probe.label()));
    }
    let margin = timings.readout_margin_ns.min(0.25 * timings.probe_ns);
    let readout = PulseElement {
        kind: ElementKind::Readout {
            lower: Level::G1,
            upper: Level::E1,
        },
        start: probe.start + margin,
        duration: probe.duration - 2.0 * margin,
    };
    let period = probe.end() + timings.gap_ns;
    elements.extend_from_slice(&[pump, probe, readout]);
    PulseSequence::new(elements, period, 1)
}

/// Ramsey sequence: initialization pumping, two pi/2 Raman pulses separated
/// by the free-evolution delay tau, then a probe readout of the bright
/// state. The pi/2 duration is pi/(2 Omega_MW). `tau` measures end of the
/// first pulse to the start of the second.
pub fn build_ramsey_sequence(
    tau: f64,
    pulse: &RamanPulse,
    second_pulse_phase: f64,
    init_power: f64,
    init_ns: f64,
    readout_power: f64,
    readout_ns: f64,
) -> Result<PulseSequence, PulseError> {
    if tau < 0.0 {
        return Err(PulseError::NegativeDelay(tau));
    }
    let omega = pulse.omega_mw()?;
    if omega <= 0.0 {
        return Err(PulseError::ZeroCoupling);
    }
    let t_pi2 = std::f64::consts::FRAC_PI_2 / omega;
    let lead = 2.0;
    let gap = 5.0;

    let init = PulseElement {
        kind: ElementKind::Resonant(ResonantPulse {
            lower: Level::G1,
            upper: Level::E1,
            power_rel: init_power,
            detuning: 0.0,
            phase: 0.0,
        }),
        start: lead,
        duration: init_ns,
    };
    let p1 = PulseElement {
        kind: ElementKind::Raman(*pulse),
        start: init.end() + gap,
        duration: t_pi2,
    };
    let mut second = *pulse;
    second.phase += second_pulse_phase;
    let p2 = PulseElement {
        kind: ElementKind::Raman(second),
        start: p1.end() + tau,
        duration: t_pi2,
    };
    let probe = PulseElement {
        kind: ElementKind::Resonant(ResonantPulse {
            lower: Level::G1,
            upper: Level::E1,
            power_rel: readout_power,
            detuning: 0.0,
            phase: 0.0,
        }),
        start: p2.end() + gap,
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
    PulseSequence::new(vec![init, p1, p2, probe, readout], period, 1)
}

/// Result of adiabatically eliminating the trion levels from a bichromatic
/// Raman drive.
#[derive(Clone, Debug)]
pub struct RamanReduced {
    /// Effective ground-state Rabi frequency (rad/ns).
    pub omega_mw: f64,
    /// Two-photon drive phase.
    pub phase: f64,
    /// Phase velocity of the effective coupling in the nominal ground
    /// frame: Delta_D - delta_g (zero on two-photon resonance).
    pub phase_velocity: f64,
    /// AC Stark shifts of (g1, g2) while the pulse is on (rad/ns).
    pub stark: (f64, f64),
    /// Single-photon sideband Rabi frequency used on every leg (rad/ns).
    pub omega_leg: f64,
    /// Pulse-gated scattering rates (src, dst, ns^-1), from photon
    /// scattering off the virtually-excited trions.
    pub scattering: Vec<(Level, Level, f64)>,
    /// Set when Delta_R / max(Omega_leg, gamma_0) < 10, outside the
    /// validity range of the elimination.
    pub validity_warning: bool,
}

/// Tone offsets of the bichromatic drive relative to the scheme center
/// (rad/ns): carrier at -Delta_R, sidebands at +-Delta_D/2.
fn tone_offsets(pulse: &RamanPulse) -> [f64; 2] {
    [
        -pulse.delta_r + 0.5 * pulse.delta_d,
        -pulse.delta_r - 0.5 * pulse.delta_d,
    ]
}

/// Detuning of a tone from the nominal transition (g -> e), rad/ns.
fn leg_detuning(scheme: &LevelScheme, g: Level, e: Level, tone: f64) -> f64 {
    tone - (scheme.level_offset(e) - scheme.level_offset(g))
}

/// Adiabatic elimination of both trion levels for a bichromatic Raman
/// pulse: effective Rabi Omega_MW = sum over both Lambda paths of
/// Omega_1 Omega_2 / (2 Delta_path), plus AC Stark shifts of both ground
/// states and the induced photon-scattering rates.
pub fn reduce_raman_to_two_level(
    pulse: &RamanPulse,
    scheme: &LevelScheme,
    rates: &DecayRates,
) -> Result<RamanReduced, PulseError> {
    let omega_target = pulse.omega_mw()?;
    let tones = tone_offsets(pulse);

    // Two-photon transfer g1 -> g2 absorbs the lower tone on (g1, e) and
    // emits the upper tone on (g2, e); the virtual level sits below each
    // trion by Delta_path(e).
    let path_denominator = |e: Level| -> f64 {
        let d_absorb = leg_detuning(scheme, Level::G1, e, tones[1]);
        -d_absorb // red detuning: virtual level below the trion
    };
    let inv_sum: f64 = [Level::E1, Level::E2]
        .iter()
        .map(|&e| 1.0 / (2.0 * path_denominator(e)))
        .sum();
    let omega_leg = if omega_target > 0.0 {
        (omega_target / inv_sum).sqrt()
    } else {
        0.0
    };

    // AC Stark shift of each ground state from every tone and trion.
    let stark_of = |g: Level| -> f64 {
        [Level::E1, Level::E2]
            .iter()
            .flat_map(|&e| tones.iter().map(move |&t| (e, t)))
            .map(|(e, t)| {
                let d = leg_detuning(scheme, g, e, t);
                omega_leg * omega_leg / (4.0 * d)
            })
            .sum()
    };
    let stark = (stark_of(Level::G1), stark_of(Level::G2));

    // Photon scattering from the virtual trion admixture, branched by the
    // radiative decay table.
    let mut scattering = Vec::new();
    for g in [Level::G1, Level::G2] {
        for e in [Level::E1, Level::E2] {
            let admixture: f64 = tones
                .iter()
                .map(|&t| {
                    let d = leg_detuning(scheme, g, e, t);
                    (omega_leg / (2.0 * d)).powi(2)
                })
                .sum();
            if admixture == 0.0 {
                continue;
            }
            for t in scheme.transitions().iter().filter(|t| t.upper == e) {
                let (wg, rad) = rates.split(t.polarization);
                let rate = admixture * (wg + rad);
                if rate > 0.0 {
                    scattering.push((g, t.lower, rate));
                }
            }
        }
    }

    let validity = pulse.delta_r / omega_leg.max(rates.gamma_0());
    Ok(RamanReduced {
        omega_mw: omega_target,
        phase: pulse.phase,
        phase_velocity: pulse.delta_d - scheme.delta_g,
        stark,
        omega_leg,
        scattering,
        validity_warning: validity < 10.0,
    })
}

impl RamanReduced {
    /// Effective ground-manifold coupling for the dynamics engine, gated by
    /// `env`.
    pub fn coupling(&self, env: Envelope) -> Coupling {
        Coupling {
            lower: Level::G2.idx(),
            upper: Level::G1.idx(),
            envelope: env,
            phase_velocity: self.phase_velocity,
            phase: self.phase,
        }
    }

    /// Stark-shift diagonal pulses gated by the normalized envelope of the
    /// pulse window.
    pub fn stark_pulses(&self, window: (f64, f64), rise_ns: f64) -> Vec<(usize, Envelope)> {
        let gate = |amp: f64| Envelope::Pulse {
            amplitude: amp,
            t_on: window.0,
            t_off: window.1,
            rise_ns,
        };
        vec![
            (Level::G1.idx(), gate(self.stark.0)),
            (Level::G2.idx(), gate(self.stark.1)),
        ]
    }

    /// Scattering terms gated by the pulse window: spin-flip jumps between
    /// the grounds plus a pure dephaser for the Rayleigh (g -> g) part.
    pub fn scattering_channels(&self, window: (f64, f64), rise_ns: f64) -> Vec<TimedChannel> {
        let gate = Envelope::Pulse {
            amplitude: 1.0,
            t_on: window.0,
            t_off: window.1,
            rise_ns,
        };
        let mut out = Vec::new();
        for &(src, dst, rate) in &self.scattering {
            if src == dst {
                out.push(TimedChannel {
                    src,
                    dst,
                    rate: 0.5 * rate,
                    envelope: gate,
                    dephasing: true,
                });
            } else {
                out.push(TimedChannel {
                    src,
                    dst,
                    rate,
                    envelope: gate,
                    dephasing: false,
                });
            }
        }
        out
    }
}

/// The eight tone-transition drives of the full bichromatic picture.
pub fn raman_full_drives(
    pulse: &RamanPulse,
    scheme: &LevelScheme,
    rates: &DecayRates,
    window: (f64, f64),
    rise_ns: f64,
) -> Result<Vec<DriveTerm>, PulseError> {
    let reduced = reduce_raman_to_two_level(pulse, scheme, rates)?;
    let tones = tone_offsets(pulse);
    let mut drives = Vec::with_capacity(8);
    for t in scheme.transitions() {
        for (k, &tone) in tones.iter().enumerate() {
            drives.push(DriveTerm {
                lower: t.lower,
                upper: t.upper,
                rabi: Envelope::Pulse {
                    amplitude: reduced.omega_leg,
                    t_on: window.0,
                    t_off: window.1,
                    rise_ns,
                },
                detuning: leg_detuning(scheme, t.lower, t.upper, tone),
                // the upper tone carries the two-photon phase
                phase: if k == 0 { pulse.phase } else { 0.0 },
            });
        }
    }
    Ok(drives)
}
