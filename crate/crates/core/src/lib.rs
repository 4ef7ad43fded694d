//! Simulation and inference toolkit for a four-level quantum-dot spin system
//! coupled to a polarization-selective waveguide.
//!
//! The model is two Zeeman-split ground states and two Zeeman-split trion
//! states connected by four linear dipoles (two y-polarized "vertical"
//! transitions, two x-polarized "diagonal" ones). The waveguide selectively
//! enhances the y dipoles, which makes the vertical transitions cycling and
//! enables optical spin pumping, coherent Raman spin control and a strong
//! dip in the waveguide transmission spectrum.
//!
//! The crate provides
//! - [`model`]: level schemes, decay-rate algebra (cyclicity, asymmetry,
//!   beta factors), thermal ground-state populations;
//! - [`lindblad`]: a Lindblad master-equation engine with time-dependent
//!   drives, per-channel photon-flux records and a steady-state solver;
//! - [`noise`]: quasi-static Gaussian spectral diffusion and spin dephasing,
//!   both as deterministic Gauss-Hermite averages and as seeded Monte Carlo;
//! - [`pulse`] and [`experiment`]: pump/probe, Raman Rabi and Ramsey
//!   sequences compiled onto the dynamics engine;
//! - [`spectra`]: weak-probe waveguide transmission and emission spectra
//!   with Fabry-Perot folding;
//! - [`fit`]: Levenberg-Marquardt least squares plus the specific fit models
//!   (exponential pumping histograms, saturation curves, Ramsey decay).
//!
//! Internal unit conventions: times in ns, rates and angular frequencies in
//! rad/ns. User-facing frequencies are quoted as nu = omega/2pi in GHz or
//! MHz; conversions live in [`units`].

pub mod experiment;
pub mod fit;
pub mod linalg;
pub mod lindblad;
pub mod model;
pub mod noise;
pub mod ode;
pub mod pulse;
pub mod quad;
pub mod rng;
pub mod spectra;
pub mod units;

pub use model::{ChargeSpecies, DecayRates, FieldEnvironment, LevelScheme, Polarization};
