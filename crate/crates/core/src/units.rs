//! Unit conventions and conversions.
//!
//! Internally everything runs in ns for time and rad/ns for rates and
//! angular frequencies. Frequencies quoted in Hz-family units (MHz, GHz,
//! THz) always mean nu = omega/2pi and pick up a factor of 2pi when
//! converted to angular form; inverse-time units (`ns^-1`, `us^-1`) are
//! plain rates with no 2pi. Every boundary (config files, CSV headers)
//! spells the unit out as a string suffix parsed here.

use std::f64::consts::TAU;
use thiserror::Error;

/// Bohr magneton over Planck constant, in GHz per tesla: mu_B/h = 13.996 GHz/T.
/// The angular form mu_B/hbar is 2pi * 13.996 GHz/T.
pub const MU_B_GHZ_PER_T: f64 = 13.996;

/// Reduced Planck constant in ueV*ns.
pub const HBAR_UEV_NS: f64 = 0.658_211_956_9;

/// Boltzmann constant in ueV/K.
pub const KB_UEV_PER_K: f64 = 86.173_332_62;

/// Speed of light in nm*THz (nm/ps * 1e-3), for wavelength conversions.
pub const C_NM_THZ: f64 = 299_792.458;

/// Convert an ordinary frequency in GHz to angular frequency in rad/ns.
#[inline]
pub fn ghz_to_rad_ns(nu_ghz: f64) -> f64 {
    TAU * nu_ghz
}

/// Convert an angular frequency in rad/ns to ordinary frequency in GHz.
#[inline]
pub fn rad_ns_to_ghz(omega: f64) -> f64 {
    omega / TAU
}

/// Convert an ordinary frequency in MHz to angular frequency in rad/ns.
#[inline]
pub fn mhz_to_rad_ns(nu_mhz: f64) -> f64 {
    TAU * nu_mhz * 1e-3
}

/// Ground-state Zeeman splitting (rad/ns) from a g-factor and field (T).
#[inline]
pub fn zeeman_splitting_rad_ns(g_factor: f64, b_tesla: f64) -> f64 {
    TAU * MU_B_GHZ_PER_T * g_factor.abs() * b_tesla
}

/// Physical dimension of a parsed quantity.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Dimension {
    Time,
    /// Plain inverse time (decay rates).
    Rate,
    /// Ordinary frequency, nu = omega/2pi.
    Frequency,
    /// Angular frequency.
    AngularFrequency,
    MagneticField,
    Temperature,
    Power,
    Dimensionless,
}

#[derive(Debug, Error, PartialEq)]
pub enum UnitError {
    #[error("empty quantity string")]
    Empty,
    #[error("cannot parse numeric value in {0:?}")]
    BadNumber(String),
    #[error("unknown unit {0:?}")]
    UnknownUnit(String),
    #[error("unit {unit:?} has dimension {found:?}, expected {expected:?}")]
    DimensionMismatch {
        unit: String,
        found: Dimension,
        expected: Dimension,
    },
}

/// A number with an explicit unit, as written in configuration files
/// (for example `"3.07 ns^-1"`, `"140 MHz"`, `"2 T"`).
#[derive(Clone, Debug, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
}

impl Quantity {
    /// Parse `"<number> <unit>"`. A bare number is dimensionless.
    pub fn parse(s: &str) -> Result<Self, UnitError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(UnitError::Empty);
        }
        let (num, unit) = match s.split_once(char::is_whitespace) {
            Some((n, u)) => (n, u.trim().to_string()),
            None => (s, String::new()),
        };
        let value: f64 = num
            .parse()
            .map_err(|_| UnitError::BadNumber(num.to_string()))?;
        let q = Self { value, unit };
        q.dimension()?; // reject unknown units at parse time
        Ok(q)
    }

    /// The dimension implied by the unit suffix.
    pub fn dimension(&self) -> Result<Dimension, UnitError> {
        let d = match self.unit.as_str() {
            "" => Dimension::Dimensionless,
            "ns" | "us" | "ms" | "s" => Dimension::Time,
            "ns^-1" | "1/ns" | "us^-1" | "1/us" => Dimension::Rate,
            "Hz" | "kHz" | "MHz" | "GHz" | "THz" => Dimension::Frequency,
            "rad/ns" | "rad/us" => Dimension::AngularFrequency,
            "T" | "mT" => Dimension::MagneticField,
            "K" | "mK" => Dimension::Temperature,
            "nW" | "uW" | "mW" | "W" => Dimension::Power,
            other => return Err(UnitError::UnknownUnit(other.to_string())),
        };
        Ok(d)
    }

    fn expect(&self, expected: Dimension) -> Result<(), UnitError> {
        let found = self.dimension()?;
        if found == expected {
            Ok(())
        } else {
            Err(UnitError::DimensionMismatch {
                unit: self.unit.clone(),
                found,
                expected,
            })
        }
    }

    /// Time in ns.
    pub fn time_ns(&self) -> Result<f64, UnitError> {
        self.expect(Dimension::Time)?;
        let f = match self.unit.as_str() {
            "ns" => 1.0,
            "us" => 1e3,
            "ms" => 1e6,
            "s" => 1e9,
            _ => unreachable!(),
        };
        Ok(self.value * f)
    }

    /// Plain decay rate in ns^-1. Accepts inverse-time units directly and
    /// Hz-family units via the nu = omega/2pi convention (rate = 2pi nu).
    pub fn rate_per_ns(&self) -> Result<f64, UnitError> {
        match self.dimension()? {
            Dimension::Rate => {
                let f = match self.unit.as_str() {
                    "ns^-1" | "1/ns" => 1.0,
                    "us^-1" | "1/us" => 1e-3,
                    _ => unreachable!(),
                };
                Ok(self.value * f)
            }
            Dimension::Frequency => self.angular_rad_ns(),
            found => Err(UnitError::DimensionMismatch {
                unit: self.unit.clone(),
                found,
                expected: Dimension::Rate,
            }),
        }
    }

    /// Angular frequency in rad/ns. Hz-family units are quoted as
    /// nu = omega/2pi and multiplied by 2pi here; `rad/ns` is direct.
    pub fn angular_rad_ns(&self) -> Result<f64, UnitError> {
        match self.dimension()? {
            Dimension::AngularFrequency => {
                let f = match self.unit.as_str() {
                    "rad/ns" => 1.0,
                    "rad/us" => 1e-3,
                    _ => unreachable!(),
                };
                Ok(self.value * f)
            }
            Dimension::Frequency => {
                let ghz = match self.unit.as_str() {
                    "Hz" => self.value * 1e-9,
                    "kHz" => self.value * 1e-6,
                    "MHz" => self.value * 1e-3,
                    "GHz" => self.value,
                    "THz" => self.value * 1e3,
                    _ => unreachable!(),
                };
                Ok(ghz_to_rad_ns(ghz))
            }
            found => Err(UnitError::DimensionMismatch {
                unit: self.unit.clone(),
                found,
                expected: Dimension::AngularFrequency,
            }),
        }
    }

    /// Ordinary frequency in THz (optical scale).
    pub fn frequency_thz(&self) -> Result<f64, UnitError> {
        self.expect(Dimension::Frequency)?;
        let f = match self.unit.as_str() {
            "Hz" => 1e-12,
            "kHz" => 1e-9,
            "MHz" => 1e-6,
            "GHz" => 1e-3,
            "THz" => 1.0,
            _ => unreachable!(),
        };
        Ok(self.value * f)
    }

    pub fn tesla(&self) -> Result<f64, UnitError> {
        self.expect(Dimension::MagneticField)?;
        let f = if self.unit == "mT" { 1e-3 } else { 1.0 };
        Ok(self.value * f)
    }

    pub fn kelvin(&self) -> Result<f64, UnitError> {
        self.expect(Dimension::Temperature)?;
        let f = if self.unit == "mK" { 1e-3 } else { 1.0 };
        Ok(self.value * f)
    }

    /// Power in mW.
    pub fn milliwatt(&self) -> Result<f64, UnitError> {
        self.expect(Dimension::Power)?;
        let f = match self.unit.as_str() {
            "nW" => 1e-6,
            "uW" => 1e-3,
            "mW" => 1.0,
            "W" => 1e3,
            _ => unreachable!(),
        };
        Ok(self.value * f)
    }

    pub fn dimensionless(&self) -> Result<f64, UnitError> {
        self.expect(Dimension::Dimensionless)?;
        Ok(self.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn parses_rate_and_frequency() {
        let q = Quantity::parse("3.07 ns^-1").unwrap();
        assert_relative_eq!(q.rate_per_ns().unwrap(), 3.07);

        let q = Quantity::parse("140 MHz").unwrap();
        assert_relative_eq!(q.angular_rad_ns().unwrap(), TAU * 0.140, epsilon = 1e-12);

        let q = Quantity::parse("315.97 THz").unwrap();
        assert_relative_eq!(q.frequency_thz().unwrap(), 315.97);
    }

    #[test]
    fn frequency_units_imply_two_pi_for_rates() {
        // kappa_co quoted as 5 MHz means 2pi * 5e-3 rad/ns.
        let q = Quantity::parse("5 MHz").unwrap();
        assert_relative_eq!(q.rate_per_ns().unwrap(), TAU * 5e-3, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let q = Quantity::parse("4 K").unwrap();
        assert!(matches!(
            q.rate_per_ns(),
            Err(UnitError::DimensionMismatch { .. })
        ));
        assert!(Quantity::parse("3 parsec").is_err());
        assert!(Quantity::parse("fast").is_err());
    }

    #[test]
    fn zeeman_conversion_constant() {
        // g = 1, B = 1 T: omega = 2pi * 13.996 rad/ns.
        assert_relative_eq!(zeeman_splitting_rad_ns(1.0, 1.0), TAU * 13.996);
    }

    proptest! {
        // ns^-1 -> GHz (ordinary, /2pi) -> ns^-1 round-trips to 1e-12 relative.
        #[test]
        fn unit_round_trip(rate in 1e-6f64..1e3) {
            let ghz = rad_ns_to_ghz(rate);
            let back = ghz_to_rad_ns(ghz);
            prop_assert!(((back - rate) / rate).abs() < 1e-12);
        }
    }
}
