//! Physical system definition: levels, transitions, decay-rate algebra and
//! the magnetic/thermal environment.
//!
//! The four-level system has two ground states (g1, g2, split by delta_g)
//! and two trion states (e1, e2, split by delta_e). Level indexing is fixed:
//! g1 is the higher-energy ground state and e1 the higher-energy trion
//! state. "Vertical" transitions (g1-e1, g2-e2) are y-polarized, "diagonal"
//! ones (g1-e2, g2-e1) are x-polarized. The scheme topology is the same for
//! the negative (XM) and positive (XP) charge configurations; only the
//! parameter values differ.

use crate::units::{HBAR_UEV_NS, KB_UEV_PER_K};
use std::f64::consts::TAU;
use thiserror::Error;

/// Charge configuration of the dot: resident electron (XM) or hole (XP).
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ChargeSpecies {
    Xm,
    Xp,
}

impl std::fmt::Display for ChargeSpecies {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChargeSpecies::Xm => write!(f, "XM"),
            ChargeSpecies::Xp => write!(f, "XP"),
        }
    }
}

/// Linear dipole orientation relative to the waveguide axis.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Polarization {
    X,
    Y,
}

/// One of the four levels. `G1`/`E1` are the higher-energy members of each
/// Zeeman doublet.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    G1,
    G2,
    E1,
    E2,
}

impl Level {
    /// Basis index used by the dynamics engine (G1=0, G2=1, E1=2, E2=3).
    #[inline]
    pub fn idx(self) -> usize {
        match self {
            Level::G1 => 0,
            Level::G2 => 1,
            Level::E1 => 2,
            Level::E2 => 3,
        }
    }

    #[inline]
    pub fn is_ground(self) -> bool {
        matches!(self, Level::G1 | Level::G2)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("negative splitting: {0} rad/ns")]
    NegativeSplitting(f64),
    #[error("negative rate for {name}: {value} ns^-1")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("gamma_x = 0: pumping time undefined")]
    ZeroGammaX,
    #[error("zero total rate for polarization {0:?}")]
    ZeroTotalRate(Polarization),
    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("no transition between the requested levels")]
    NoSuchTransition,
}

/// A single optical transition of the scheme.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Transition {
    pub lower: Level,
    pub upper: Level,
    pub polarization: Polarization,
    /// Absolute optical frequency in THz (ordinary, not angular).
    pub frequency_thz: f64,
}

impl Transition {
    /// Offset from the scheme center nu0 in angular units (rad/ns).
    pub fn offset_rad_ns(&self, nu0_thz: f64) -> f64 {
        TAU * (self.frequency_thz - nu0_thz) * 1e3
    }
}

/// The four-level scheme of one charge species.
#[derive(Clone, Debug)]
pub struct LevelScheme {
    pub species: ChargeSpecies,
    /// Optical center frequency (THz).
    pub nu0_thz: f64,
    /// Ground-state Zeeman splitting (rad/ns), >= 0.
    pub delta_g: f64,
    /// Excited-state Zeeman splitting (rad/ns), >= 0.
    pub delta_e: f64,
    transitions: [Transition; 4],
}

impl LevelScheme {
    /// Build the scheme from splittings. Transition frequencies follow from
    /// the level energies: E(g1,g2) = +-delta_g/2, E(e1,e2) = nu0 +- delta_e/2
    /// (angular, relative to the ground-manifold center).
    pub fn new(
        species: ChargeSpecies,
        nu0_thz: f64,
        delta_g: f64,
        delta_e: f64,
    ) -> Result<Self, ModelError> {
        if delta_g < 0.0 {
            return Err(ModelError::NegativeSplitting(delta_g));
        }
        if delta_e < 0.0 {
            return Err(ModelError::NegativeSplitting(delta_e));
        }
        let ghz = |omega: f64| omega / TAU * 1e-3; // rad/ns -> THz offset
        let transitions = [
            // vertical, y-polarized
            Transition {
                lower: Level::G1,
                upper: Level::E1,
                polarization: Polarization::Y,
                frequency_thz: nu0_thz + ghz(0.5 * (delta_e - delta_g)),
            },
            Transition {
                lower: Level::G2,
                upper: Level::E2,
                polarization: Polarization::Y,
                frequency_thz: nu0_thz - ghz(0.5 * (delta_e - delta_g)),
            },
            // diagonal, x-polarized
            Transition {
                lower: Level::G1,
                upper: Level::E2,
                polarization: Polarization::X,
                frequency_thz: nu0_thz - ghz(0.5 * (delta_e + delta_g)),
            },
            Transition {
                lower: Level::G2,
                upper: Level::E1,
                polarization: Polarization::X,
                frequency_thz: nu0_thz + ghz(0.5 * (delta_e + delta_g)),
            },
        ];
        Ok(Self {
            species,
            nu0_thz,
            delta_g,
            delta_e,
            transitions,
        })
    }

    pub fn transitions(&self) -> &[Transition; 4] {
        &self.transitions
    }

    /// Look up the transition connecting two levels (order-insensitive).
    pub fn transition(&self, a: Level, b: Level) -> Result<&Transition, ModelError> {
        self.transitions
            .iter()
            .find(|t| (t.lower == a && t.upper == b) || (t.lower == b && t.upper == a))
            .ok_or(ModelError::NoSuchTransition)
    }

    /// The vertical (y-polarized) transition out of a ground state.
    pub fn vertical(&self, ground: Level) -> &Transition {
        self.transitions
            .iter()
            .find(|t| t.lower == ground && t.polarization == Polarization::Y)
            .expect("every ground state has a vertical transition")
    }

    /// The diagonal (x-polarized) transition out of a ground state.
    pub fn diagonal(&self, ground: Level) -> &Transition {
        self.transitions
            .iter()
            .find(|t| t.lower == ground && t.polarization == Polarization::X)
            .expect("every ground state has a diagonal transition")
    }

    /// All four transition frequencies sorted ascending, with polarization
    /// labels.
    pub fn transition_frequencies(&self) -> Vec<(f64, Polarization)> {
        let mut v: Vec<(f64, Polarization)> = self
            .transitions
            .iter()
            .map(|t| (t.frequency_thz, t.polarization))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }

    /// Level energy in the rotating-frame bookkeeping: offset (rad/ns) from
    /// the manifold centers (ground manifold at 0, excited at nu0).
    pub fn level_offset(&self, level: Level) -> f64 {
        match level {
            Level::G1 => 0.5 * self.delta_g,
            Level::G2 => -0.5 * self.delta_g,
            Level::E1 => 0.5 * self.delta_e,
            Level::E2 => -0.5 * self.delta_e,
        }
    }
}

/// Radiative decay rates split into waveguide (wg) and free-space radiative
/// (rad) parts, per dipole polarization, plus pure dephasing and the
/// co-tunneling ground-state spin-flip rate. All in ns^-1.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DecayRates {
    pub gx_wg: f64,
    pub gx_rad: f64,
    pub gy_wg: f64,
    pub gy_rad: f64,
    /// Optical pure-dephasing rate gamma_dp.
    pub dephasing: f64,
    /// Ground-state spin-flip rate kappa_co.
    pub cotunneling: f64,
}

impl DecayRates {
    pub fn new(
        gx_wg: f64,
        gx_rad: f64,
        gy_wg: f64,
        gy_rad: f64,
        dephasing: f64,
        cotunneling: f64,
    ) -> Result<Self, ModelError> {
        for (name, value) in [
            ("gx_wg", gx_wg),
            ("gx_rad", gx_rad),
            ("gy_wg", gy_wg),
            ("gy_rad", gy_rad),
            ("dephasing", dephasing),
            ("cotunneling", cotunneling),
        ] {
            if value < 0.0 || !value.is_finite() {
                return Err(ModelError::NegativeRate { name, value });
            }
        }
        Ok(Self {
            gx_wg,
            gx_rad,
            gy_wg,
            gy_rad,
            dephasing,
            cotunneling,
        })
    }

    /// Total diagonal (x) decay rate gamma_x = gx_wg + gx_rad.
    #[inline]
    pub fn gamma_x(&self) -> f64 {
        self.gx_wg + self.gx_rad
    }

    /// Total vertical (y) decay rate gamma_y = gy_wg + gy_rad.
    #[inline]
    pub fn gamma_y(&self) -> f64 {
        self.gy_wg + self.gy_rad
    }

    /// Total excited-state decay rate gamma_0 = gamma_x + gamma_y.
    #[inline]
    pub fn gamma_0(&self) -> f64 {
        self.gamma_x() + self.gamma_y()
    }

    /// Cyclicity C = gamma_y / gamma_x. Returns `f64::INFINITY` when
    /// gamma_x = 0 (fully cycling).
    pub fn cyclicity(&self) -> f64 {
        let gx = self.gamma_x();
        if gx == 0.0 {
            f64::INFINITY
        } else {
            self.gamma_y() / gx
        }
    }

    /// Waveguide-coupling asymmetry A = gy_wg / gx_wg. `f64::INFINITY` when
    /// gx_wg = 0.
    pub fn asymmetry(&self) -> f64 {
        if self.gx_wg == 0.0 {
            f64::INFINITY
        } else {
            self.gy_wg / self.gx_wg
        }
    }

    /// Beta factors (gx_wg/gamma_x, gy_wg/gamma_y), each in [0, 1].
    pub fn beta_factors(&self) -> Result<(f64, f64), ModelError> {
        let gx = self.gamma_x();
        let gy = self.gamma_y();
        if gx == 0.0 {
            return Err(ModelError::ZeroTotalRate(Polarization::X));
        }
        if gy == 0.0 {
            return Err(ModelError::ZeroTotalRate(Polarization::Y));
        }
        Ok((self.gx_wg / gx, self.gy_wg / gy))
    }

    /// 1/e spin pumping time at infinite probe power, 2/gamma_x.
    pub fn pumping_time(&self) -> Result<f64, ModelError> {
        let gx = self.gamma_x();
        if gx == 0.0 {
            Err(ModelError::ZeroGammaX)
        } else {
            Ok(2.0 / gx)
        }
    }

    /// Decay rate of the transition with the given polarization, split as
    /// (waveguide, free-space radiative).
    pub fn split(&self, pol: Polarization) -> (f64, f64) {
        match pol {
            Polarization::X => (self.gx_wg, self.gx_rad),
            Polarization::Y => (self.gy_wg, self.gy_rad),
        }
    }
}

/// Cyclicity in the measurement form (gamma_0 - gamma_x)/gamma_x, used when
/// gamma_0 is known from lifetime data and gamma_x from a pumping fit.
/// Identical to gamma_y/gamma_x by definition.
pub fn cyclicity_from_total(gamma_0: f64, gamma_x: f64) -> f64 {
    if gamma_x == 0.0 {
        f64::INFINITY
    } else {
        (gamma_0 - gamma_x) / gamma_x
    }
}

/// In-plane magnetic field and sample environment.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct FieldEnvironment {
    /// Field magnitude (T), >= 0.
    pub b_tesla: f64,
    /// In-plane field orientation (rad). Affects Zeeman axes only; the
    /// dipole/waveguide coupling is insensitive to it.
    pub angle_rad: f64,
    /// Temperature (K), > 0.
    pub temperature_k: f64,
    /// Ground-state g-factor (dimensionless).
    pub g_ground: f64,
}

impl FieldEnvironment {
    pub fn new(
        b_tesla: f64,
        angle_rad: f64,
        temperature_k: f64,
        g_ground: f64,
    ) -> Result<Self, ModelError> {
        if temperature_k <= 0.0 {
            return Err(ModelError::NonPositiveTemperature(temperature_k));
        }
        if b_tesla < 0.0 {
            return Err(ModelError::NegativeSplitting(b_tesla));
        }
        Ok(Self {
            b_tesla,
            angle_rad,
            temperature_k,
            g_ground,
        })
    }

    /// Ground Zeeman splitting derived from the field (rad/ns).
    pub fn ground_splitting(&self) -> f64 {
        crate::units::zeeman_splitting_rad_ns(self.g_ground, self.b_tesla)
    }
}

/// Boltzmann weights of the two ground states at the given splitting:
/// p1 = 1/(1 + exp(-hbar delta_g / k T)), p2 = 1 - p1.
pub fn thermal_populations(temperature_k: f64, delta_g: f64) -> (f64, f64) {
    if temperature_k.is_infinite() {
        return (0.5, 0.5);
    }
    let x = HBAR_UEV_NS * delta_g / (KB_UEV_PER_K * temperature_k);
    let p1 = 1.0 / (1.0 + (-x).exp());
    (p1, 1.0 - p1)
}
