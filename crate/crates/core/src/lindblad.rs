//! Lindblad master-equation dynamics of the four-level system.
//!
//! The Hamiltonian is assembled in a rotating frame: either a per-level
//! anchored frame (each driven excited level co-rotates with the first
//! laser addressing it, so single-tone pump/probe problems become fully
//! static) or the interaction picture (zero diagonal, every drive carries
//! an explicit time-dependent phase; used for bichromatic Raman drives).
//! Dissipation enters through collapse channels: radiative decay split per
//! transition into waveguide and free-space parts, ground-state spin flips
//! (co-tunneling, detailed-balance weighted), and optical pure dephasing.
//!
//! States evolve with the adaptive integrator from [`crate::ode`]; the
//! density matrix is re-Hermitized after every accepted step. Trajectories
//! record per-channel photon flux so fluorescence histograms come straight
//! from the waveguide channels.

use crate::linalg;
use crate::model::{DecayRates, FieldEnvironment, Level, LevelScheme, ModelError};
use crate::ode::{self, OdeError, OdeOptions};
use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use thiserror::Error;

pub const DIM: usize = 4;

#[derive(Debug, Error)]
pub enum LindbladError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("drive targets levels {0:?}-{1:?} which are not a transition of the scheme")]
    NoSuchTransition(Level, Level),
    #[error("duplicate drive on transition {0:?}-{1:?} with identical detuning")]
    DuplicateDrive(Level, Level),
    #[error("negative Rabi amplitude {0}")]
    NegativeRabi(f64),
    #[error("drive detuning must be finite")]
    NonFiniteDetuning,
    #[error("Hamiltonian is time dependent; steady state needs a static generator")]
    NonStaticHamiltonian,
    #[error("steady-state manifold is degenerate (null-space dimension {dim})")]
    DegenerateSteadyState { dim: usize },
    #[error("initial state is not a density matrix: {0}")]
    BadInitialState(String),
    #[error("state validation failed at t = {t} ns: {what}")]
    InvalidState { t: f64, what: String },
    #[error("empty flux window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("bin width must be positive, got {0} ns")]
    BadBinWidth(f64),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
}

/// Pulse envelope for a drive amplitude (rad/ns). Edges are smoothed with a
/// tanh profile of the given rise time; `rise_ns = 0` gives sharp edges.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Envelope {
    Constant(f64),
    Pulse {
        amplitude: f64,
        t_on: f64,
        t_off: f64,
        rise_ns: f64,
    },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant(a) => a,
            Envelope::Pulse {
                amplitude,
                t_on,
                t_off,
                rise_ns,
            } => {
                if rise_ns <= 0.0 {
                    if t >= t_on && t < t_off {
                        amplitude
                    } else {
                        0.0
                    }
                } else {
                    let up = 0.5 * (1.0 + ((t - t_on) / rise_ns).tanh());
                    let down = 0.5 * (1.0 + ((t_off - t) / rise_ns).tanh());
                    amplitude * up * down
                }
            }
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            Envelope::Constant(a) => a,
            Envelope::Pulse { amplitude, .. } => amplitude,
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Envelope::Constant(_))
    }

    fn span(&self) -> (f64, f64) {
        match *self {
            Envelope::Constant(_) => (f64::NEG_INFINITY, f64::INFINITY),
            Envelope::Pulse { t_on, t_off, .. } => (t_on, t_off),
        }
    }

    fn overlaps(&self, other: &Envelope) -> bool {
        let (a0, a1) = self.span();
        let (b0, b1) = other.span();
        a0.max(b0) < a1.min(b1)
    }
}

/// A coherent drive on one optical transition.
#[derive(Clone, Debug)]
pub struct DriveTerm {
    pub lower: Level,
    pub upper: Level,
    /// Rabi amplitude envelope Omega(t) >= 0 (rad/ns).
    pub rabi: Envelope,
    /// Laser detuning from the nominal transition frequency (rad/ns).
    pub detuning: f64,
    /// Optical phase (rad).
    pub phase: f64,
}

impl DriveTerm {
    pub fn resonant(lower: Level, upper: Level, rabi: Envelope) -> Self {
        Self {
            lower,
            upper,
            rabi,
            detuning: 0.0,
            phase: 0.0,
        }
    }
}

/// Rotating-frame choice for [`build_hamiltonian`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FrameSpec {
    /// Full interaction picture: zero diagonal, all drives carry explicit
    /// phases at (detuning - spectral offset).
    Interaction,
    /// Each driven excited level co-rotates with the first laser addressing
    /// it; single-tone drives become static couplings with the detuning on
    /// the diagonal.
    AnchorDrives,
}

/// One rotating-wave coupling term (Omega(t)/2) e^{-i(nu t + phi)} |u><l| + h.c.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub lower: usize,
    pub upper: usize,
    pub envelope: Envelope,
    pub phase_velocity: f64,
    pub phase: f64,
}

/// Time-dependent Hamiltonian in the chosen rotating frame.
#[derive(Clone, Debug)]
pub struct HamiltonianModel {
    /// Static diagonal (rad/ns).
    pub diag: [f64; DIM],
    pub couplings: Vec<Coupling>,
    /// Pulsed diagonal terms (level, envelope): AC Stark shifts active only
    /// while their envelope is on. The envelope value is the shift in
    /// rad/ns.
    pub diag_pulses: Vec<(usize, Envelope)>,
}

impl HamiltonianModel {
    pub fn new(diag: [f64; DIM], couplings: Vec<Coupling>) -> Self {
        Self {
            diag,
            couplings,
            diag_pulses: Vec::new(),
        }
    }

    /// True when the generator has no explicit time dependence.
    pub fn is_static(&self) -> bool {
        self.couplings
            .iter()
            .all(|c| c.phase_velocity == 0.0 && c.envelope.is_constant())
            && self.diag_pulses.iter().all(|(_, e)| e.is_constant())
    }

    /// Assemble H(t) into a flat row-major 4x4 buffer.
    pub fn eval_flat(&self, t: f64, h: &mut [C64; DIM * DIM]) {
        h.fill(C64::ZERO);
        for (i, d) in self.diag.iter().enumerate() {
            h[i * DIM + i] = C64::new(*d, 0.0);
        }
        for (l, env) in &self.diag_pulses {
            h[l * DIM + l] += C64::new(env.value(t), 0.0);
        }
        for c in &self.couplings {
            let amp = 0.5 * c.envelope.value(t);
            if amp == 0.0 {
                continue;
            }
            let ph = c.phase_velocity * t + c.phase;
            let (s, cs) = ph.sin_cos();
            let z = amp * C64::new(cs, -s);
            h[c.upper * DIM + c.lower] += z;
            h[c.lower * DIM + c.upper] += z.conj();
        }
    }

    pub fn eval(&self, t: f64) -> Array2<C64> {
        let mut flat = [C64::ZERO; DIM * DIM];
        self.eval_flat(t, &mut flat);
        Array2::from_shape_vec((DIM, DIM), flat.to_vec()).unwrap()
    }
}

/// Build the rotating-frame Hamiltonian for a set of drives.
///
/// `spectral_offset` is the quasi-static spectral-diffusion detuning of the
/// optical transitions for this realization (rad/ns); it shifts both
/// excited levels, so every drive sees an effective detuning of
/// (drive detuning - offset). `spin_offset` is the quasi-static fluctuation
/// of the ground splitting; it moves the ground levels by +-spin_offset/2.
///
/// Frame shifts always use the nominal level energies (lasers are set
/// against nominal transition frequencies), so the noise offsets end up on
/// the diagonal and ground coherences evolve consistently across frames.
pub fn build_hamiltonian(
    scheme: &LevelScheme,
    drives: &[DriveTerm],
    frame: FrameSpec,
    spectral_offset: f64,
    spin_offset: f64,
) -> Result<HamiltonianModel, LindbladError> {
    // Nominal level energies relative to the manifold centers; the optical
    // gap cancels out of every frame quantity.
    let nominal = |l: Level| -> f64 { scheme.level_offset(l) };
    let actual = |l: Level| -> f64 {
        match l {
            Level::G1 => nominal(l) + 0.5 * spin_offset,
            Level::G2 => nominal(l) - 0.5 * spin_offset,
            Level::E1 | Level::E2 => nominal(l) + spectral_offset,
        }
    };

    for d in drives {
        let t = scheme
            .transition(d.lower, d.upper)
            .map_err(|_| LindbladError::NoSuchTransition(d.lower, d.upper))?;
        if t.lower != d.lower {
            return Err(LindbladError::NoSuchTransition(d.lower, d.upper));
        }
        if d.rabi.amplitude() < 0.0 {
            return Err(LindbladError::NegativeRabi(d.rabi.amplitude()));
        }
        if !d.detuning.is_finite() {
            return Err(LindbladError::NonFiniteDetuning);
        }
    }
    for (i, a) in drives.iter().enumerate() {
        for b in drives.iter().skip(i + 1) {
            if a.lower == b.lower
                && a.upper == b.upper
                && a.detuning == b.detuning
                && a.rabi.overlaps(&b.rabi)
            {
                return Err(LindbladError::DuplicateDrive(a.lower, a.upper));
            }
        }
    }

    // Laser frequency of a drive, minus the optical gap (which cancels):
    // omega_L = nominal transition splitting + detuning.
    let laser = |d: &DriveTerm| -> f64 { nominal(d.upper) - nominal(d.lower) + d.detuning };

    // Per-level frame shifts. Grounds are never anchored.
    let mut shift = [0.0f64; DIM];
    for l in [Level::G1, Level::G2] {
        shift[l.idx()] = nominal(l);
    }
    for l in [Level::E1, Level::E2] {
        shift[l.idx()] = match frame {
            FrameSpec::Interaction => nominal(l),
            FrameSpec::AnchorDrives => drives
                .iter()
                .find(|d| d.upper == l)
                .map(|d| laser(d) + nominal(d.lower))
                .unwrap_or_else(|| nominal(l)),
        };
    }

    let mut diag = [0.0f64; DIM];
    for l in [Level::G1, Level::G2, Level::E1, Level::E2] {
        diag[l.idx()] = actual(l) - shift[l.idx()];
    }
    let couplings = drives
        .iter()
        .map(|d| {
            let mut nu = laser(d) - (shift[d.upper.idx()] - shift[d.lower.idx()]);
            if nu.abs() < 1e-12 {
                nu = 0.0;
            }
            Coupling {
                lower: d.lower.idx(),
                upper: d.upper.idx(),
                envelope: d.rabi,
                phase_velocity: nu,
                phase: d.phase,
            }
        })
        .collect();

    Ok(HamiltonianModel::new(diag, couplings))
}

/// Dissipation channel kinds.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    RadiativeWg,
    RadiativeFree,
    SpinFlip,
    Dephasing,
}

/// One collapse channel. For jump kinds `lower`/`upper` are the destination
/// and source levels; dephasing channels have `lower == upper`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CollapseChannel {
    pub kind: ChannelKind,
    pub lower: Level,
    pub upper: Level,
    /// ns^-1; for dephasing this is the optical-coherence decay rate.
    pub rate: f64,
}

/// Build the standard channel set: 4 transitions x {waveguide, free-space},
/// co-tunneling spin flips with detailed-balance weights, and optional pure
/// dephasing on each excited level. Zero-rate channels are omitted.
pub fn build_collapse_channels(
    rates: &DecayRates,
    scheme: &LevelScheme,
    env: &FieldEnvironment,
) -> Vec<CollapseChannel> {
    let mut out = Vec::with_capacity(12);
    for t in scheme.transitions() {
        let (wg, rad) = rates.split(t.polarization);
        out.push(CollapseChannel {
            kind: ChannelKind::RadiativeWg,
            lower: t.lower,
            upper: t.upper,
            rate: wg,
        });
        out.push(CollapseChannel {
            kind: ChannelKind::RadiativeFree,
            lower: t.lower,
            upper: t.upper,
            rate: rad,
        });
    }
    if rates.cotunneling > 0.0 {
        let (p1, p2) = crate::model::thermal_populations(env.temperature_k, scheme.delta_g);
        out.push(CollapseChannel {
            kind: ChannelKind::SpinFlip,
            lower: Level::G1,
            upper: Level::G2,
            rate: rates.cotunneling * p1,
        });
        out.push(CollapseChannel {
            kind: ChannelKind::SpinFlip,
            lower: Level::G2,
            upper: Level::G1,
            rate: rates.cotunneling * p2,
        });
    }
    if rates.dephasing > 0.0 {
        for e in [Level::E1, Level::E2] {
            out.push(CollapseChannel {
                kind: ChannelKind::Dephasing,
                lower: e,
                upper: e,
                rate: rates.dephasing,
            });
        }
    }
    out.retain(|c| c.rate > 0.0 || c.kind == ChannelKind::RadiativeWg);
    out
}

/// Internal dissipator tables extracted from the channel list.
struct Dissipator {
    /// (source index, destination index, rate): L = sqrt(rate)|dst><src|.
    jumps: Vec<(usize, usize, f64)>,
    /// (level index, coherence decay rate): L = sqrt(2 rate)|l><l|.
    dephasers: Vec<(usize, f64)>,
}

impl Dissipator {
    fn new(channels: &[CollapseChannel]) -> Self {
        let mut jumps = Vec::new();
        let mut dephasers = Vec::new();
        for c in channels {
            match c.kind {
                ChannelKind::RadiativeWg | ChannelKind::RadiativeFree | ChannelKind::SpinFlip => {
                    if c.rate > 0.0 {
                        jumps.push((c.upper.idx(), c.lower.idx(), c.rate));
                    }
                }
                ChannelKind::Dephasing => {
                    if c.rate > 0.0 {
                        dephasers.push((c.upper.idx(), c.rate));
                    }
                }
            }
        }
        Self { jumps, dephasers }
    }

    /// Add the dissipator action on rho (flat 4x4) into drho.
    #[inline]
    fn apply(&self, rho: &[C64], drho: &mut [C64]) {
        for &(src, dst, rate) in &self.jumps {
            drho[dst * DIM + dst] += rate * rho[src * DIM + src];
            for k in 0..DIM {
                drho[src * DIM + k] -= 0.5 * rate * rho[src * DIM + k];
                drho[k * DIM + src] -= 0.5 * rate * rho[k * DIM + src];
            }
        }
        for &(l, rate) in &self.dephasers {
            for k in 0..DIM {
                if k != l {
                    drho[l * DIM + k] -= rate * rho[l * DIM + k];
                    drho[k * DIM + l] -= rate * rho[k * DIM + l];
                }
            }
        }
    }
}

/// Time-gridded solution of the master equation with photon-flux records.
#[derive(Clone, Debug)]
pub struct DensityMatrixTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array2<C64>>,
    /// Total waveguide photon flux at each grid time (ns^-1).
    pub flux_wg: Vec<f64>,
    /// Per-channel flux records, same order as the radiative channels.
    pub flux_per_channel: Vec<(CollapseChannel, Vec<f64>)>,
}

impl DensityMatrixTrajectory {
    pub fn population(&self, level: Level) -> Vec<f64> {
        let i = level.idx();
        self.states.iter().map(|s| s[(i, i)].re).collect()
    }

    /// Check trace preservation, Hermiticity and positivity on every state.
    pub fn validate(&self) -> Result<(), LindbladError> {
        for (t, s) in self.times.iter().zip(&self.states) {
            let tr = linalg::trace(s);
            if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-10 {
                return Err(LindbladError::InvalidState {
                    t: *t,
                    what: format!("trace deviates: {tr}"),
                });
            }
            for i in 0..DIM {
                for j in 0..DIM {
                    if (s[(i, j)] - s[(j, i)].conj()).norm() > 1e-10 {
                        return Err(LindbladError::InvalidState {
                            t: *t,
                            what: format!("not Hermitian at ({i},{j})"),
                        });
                    }
                }
            }
            let min_ev = linalg::hermitian_eigenvalues(s)[0];
            if min_ev < -1e-7 {
                return Err(LindbladError::InvalidState {
                    t: *t,
                    what: format!("negative eigenvalue {min_ev:.3e}"),
                });
            }
        }
        Ok(())
    }
}

fn check_density_matrix(rho: &Array2<C64>) -> Result<(), LindbladError> {
    if rho.nrows() != DIM || rho.ncols() != DIM {
        return Err(LindbladError::BadInitialState("wrong shape".into()));
    }
    let tr = linalg::trace(rho);
    if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-10 {
        return Err(LindbladError::BadInitialState(format!("trace {tr}")));
    }
    for i in 0..DIM {
        for j in 0..DIM {
            if (rho[(i, j)] - rho[(j, i)].conj()).norm() > 1e-9 {
                return Err(LindbladError::BadInitialState("not Hermitian".into()));
            }
        }
    }
    if linalg::hermitian_eigenvalues(rho)[0] < -1e-7 {
        return Err(LindbladError::BadInitialState("not positive".into()));
    }
    Ok(())
}

/// A collapse term gated by a pulse envelope (the envelope value scales the
/// rate); used for scattering induced by far-detuned Raman pulses.
#[derive(Clone, Debug)]
pub struct TimedChannel {
    pub src: Level,
    pub dst: Level,
    /// Peak rate (ns^-1), scaled by the envelope value in [0, 1].
    pub rate: f64,
    pub envelope: Envelope,
    /// When set the term is a pure dephaser on `src` instead of a jump.
    pub dephasing: bool,
}

/// Evolve `rho0` under the given generator and channels, with dense output
/// on `times`.
pub fn evolve(
    rho0: &Array2<C64>,
    model: &HamiltonianModel,
    channels: &[CollapseChannel],
    times: &[f64],
    opts: &OdeOptions,
) -> Result<DensityMatrixTrajectory, LindbladError> {
    evolve_with(rho0, model, channels, &[], times, opts)
}

/// [`evolve`] with additional envelope-gated collapse terms.
pub fn evolve_with(
    rho0: &Array2<C64>,
    model: &HamiltonianModel,
    channels: &[CollapseChannel],
    timed: &[TimedChannel],
    times: &[f64],
    opts: &OdeOptions,
) -> Result<DensityMatrixTrajectory, LindbladError> {
    check_density_matrix(rho0)?;
    let dissipator = Dissipator::new(channels);
    let mut h = [C64::ZERO; DIM * DIM];

    let rhs = move |t: f64, y: &[C64], dy: &mut [C64]| {
        model.eval_flat(t, &mut h);
        // dy = -i (H rho - rho H) + D[rho]
        for r in 0..DIM {
            for c in 0..DIM {
                let mut acc = C64::ZERO;
                for k in 0..DIM {
                    acc += h[r * DIM + k] * y[k * DIM + c] - y[r * DIM + k] * h[k * DIM + c];
                }
                dy[r * DIM + c] = C64::new(acc.im, -acc.re); // -i * acc
            }
        }
        dissipator.apply(y, dy);
        for tc in timed {
            let rate = tc.rate * tc.envelope.value(t);
            if rate <= 0.0 {
                continue;
            }
            let (src, dst) = (tc.src.idx(), tc.dst.idx());
            if tc.dephasing {
                for k in 0..DIM {
                    if k != src {
                        dy[src * DIM + k] -= rate * y[src * DIM + k];
                        dy[k * DIM + src] -= rate * y[k * DIM + src];
                    }
                }
            } else {
                dy[dst * DIM + dst] += rate * y[src * DIM + src];
                for k in 0..DIM {
                    dy[src * DIM + k] -= 0.5 * rate * y[src * DIM + k];
                    dy[k * DIM + src] -= 0.5 * rate * y[k * DIM + src];
                }
            }
        }
    };

    let y0: Vec<C64> = rho0.iter().cloned().collect();
    let raw = ode::integrate_dense(rhs, &y0, times, opts, hermitize_flat)?;

    let states: Vec<Array2<C64>> = raw
        .into_iter()
        .map(|v| {
            let mut m = Array2::from_shape_vec((DIM, DIM), v).unwrap();
            linalg::hermitize(&mut m);
            m
        })
        .collect();

    let mut flux_per_channel = Vec::new();
    for c in channels {
        if matches!(c.kind, ChannelKind::RadiativeWg | ChannelKind::RadiativeFree) {
            let src = c.upper.idx();
            let f: Vec<f64> = states.iter().map(|s| c.rate * s[(src, src)].re).collect();
            flux_per_channel.push((*c, f));
        }
    }
    let flux_wg: Vec<f64> = (0..times.len())
        .map(|i| {
            flux_per_channel
                .iter()
                .filter(|(c, _)| c.kind == ChannelKind::RadiativeWg)
                .map(|(_, f)| f[i])
                .sum()
        })
        .collect();

    Ok(DensityMatrixTrajectory {
        times: times.to_vec(),
        states,
        flux_wg,
        flux_per_channel,
    })
}

fn hermitize_flat(y: &mut [C64]) {
    for i in 0..DIM {
        y[i * DIM + i] = C64::new(y[i * DIM + i].re, 0.0);
        for j in (i + 1)..DIM {
            let avg = 0.5 * (y[i * DIM + j] + y[j * DIM + i].conj());
            y[i * DIM + j] = avg;
            y[j * DIM + i] = avg.conj();
        }
    }
}

/// Steady state of a static generator: the (unique) null vector of the
/// Liouvillian with unit trace. Errors if the generator is time dependent
/// or the null space has dimension other than one.
pub fn steady_state(
    model: &HamiltonianModel,
    channels: &[CollapseChannel],
) -> Result<Array2<C64>, LindbladError> {
    if !model.is_static() {
        return Err(LindbladError::NonStaticHamiltonian);
    }
    let dissipator = Dissipator::new(channels);
    let mut h = [C64::ZERO; DIM * DIM];
    model.eval_flat(0.0, &mut h);

    let n = DIM * DIM;
    let mut liouv = Array2::<C64>::zeros((n, n));
    let mut basis = vec![C64::ZERO; n];
    let mut col = vec![C64::ZERO; n];
    for b in 0..n {
        basis.fill(C64::ZERO);
        basis[b] = C64::new(1.0, 0.0);
        for r in 0..DIM {
            for c in 0..DIM {
                let mut acc = C64::ZERO;
                for k in 0..DIM {
                    acc += h[r * DIM + k] * basis[k * DIM + c]
                        - basis[r * DIM + k] * h[k * DIM + c];
                }
                col[r * DIM + c] = C64::new(acc.im, -acc.re);
            }
        }
        dissipator.apply(&basis, &mut col);
        for (r, v) in col.iter().enumerate() {
            liouv[(r, b)] = *v;
        }
    }

    let nullity = n - linalg::rank(&liouv, 1e-9);
    if nullity != 1 {
        return Err(LindbladError::DegenerateSteadyState { dim: nullity });
    }

    // Solve the normal equations of [L; trace row] x = [0; 1].
    let mut a = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = C64::ZERO;
            for r in 0..n {
                acc += liouv[(r, i)].conj() * liouv[(r, j)];
            }
            a[(i, j)] = acc;
        }
    }
    let mut rhs = Array1::<C64>::zeros(n);
    for d in 0..DIM {
        let i = d * DIM + d;
        rhs[i] += C64::new(1.0, 0.0);
        for d2 in 0..DIM {
            let j = d2 * DIM + d2;
            a[(i, j)] += C64::new(1.0, 0.0);
        }
    }
    let x = linalg::solve(&a, &rhs)?;
    let mut rho = Array2::from_shape_vec((DIM, DIM), x.to_vec()).unwrap();
    linalg::hermitize(&mut rho);
    let tr = linalg::trace(&rho).re;
    rho.mapv_inplace(|v| v / tr);
    Ok(rho)
}

/// Time-binned fluorescence histogram extracted from the waveguide flux.
///
/// Bin values are mean photon rates over each bin (flux integrated with the
/// trapezoid rule, divided by the bin width), plus an optional constant
/// background level.
pub fn fluorescence_flux(
    traj: &DensityMatrixTrajectory,
    window: (f64, f64),
    bin_ns: f64,
    background: f64,
) -> Result<crate::fit::Histogram, LindbladError> {
    histogram_from_flux(&traj.times, &traj.flux_wg, window, bin_ns, background)
}

/// [`fluorescence_flux`] on a bare (times, flux) record.
pub fn histogram_from_flux(
    times: &[f64],
    flux_record: &[f64],
    window: (f64, f64),
    bin_ns: f64,
    background: f64,
) -> Result<crate::fit::Histogram, LindbladError> {
    let (w0, w1) = window;
    if bin_ns <= 0.0 {
        return Err(LindbladError::BadBinWidth(bin_ns));
    }
    let t_first = *times.first().unwrap();
    let t_last = *times.last().unwrap();
    if w1 <= w0 || w0 < t_first - 1e-9 || w1 > t_last + 1e-9 {
        return Err(LindbladError::EmptyWindow(w0, w1));
    }
    let n_bins = ((w1 - w0) / bin_ns + 1e-9).floor() as usize;
    if n_bins == 0 {
        return Err(LindbladError::EmptyWindow(w0, w1));
    }

    // linear interpolation of the flux record
    let flux_at = |t: f64| -> f64 {
        let i = match times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return flux_record[i],
            Err(i) => i.clamp(1, times.len() - 1),
        };
        let (t0, t1) = (times[i - 1], times[i]);
        let f = (t - t0) / (t1 - t0);
        flux_record[i - 1] * (1.0 - f) + flux_record[i] * f
    };

    let mut centers = Vec::with_capacity(n_bins);
    let mut counts = Vec::with_capacity(n_bins);
    let mut cursor = times.partition_point(|&t| t <= w0);
    for b in 0..n_bins {
        let a = w0 + b as f64 * bin_ns;
        let c = a + bin_ns;
        // trapezoid over the record samples inside [a, c]
        let mut integral = 0.0;
        let mut prev_t = a;
        let mut prev_f = flux_at(a);
        while cursor < times.len() && times[cursor] < c {
            let t = times[cursor];
            if t > a {
                integral += 0.5 * (prev_f + flux_record[cursor]) * (t - prev_t);
                prev_t = t;
                prev_f = flux_record[cursor];
            }
            cursor += 1;
        }
        integral += 0.5 * (prev_f + flux_at(c)) * (c - prev_t);
        centers.push(a + 0.5 * bin_ns);
        counts.push(integral / bin_ns + background);
    }
    crate::fit::Histogram::new(centers, counts, background)
        .map_err(|e| LindbladError::BadInitialState(e.to_string()))
}

/// Density matrix with all population in one level.
pub fn pure_state(level: Level) -> Array2<C64> {
    let mut rho = Array2::zeros((DIM, DIM));
    rho[(level.idx(), level.idx())] = C64::new(1.0, 0.0);
    rho
}

/// Diagonal mixture over the two ground states.
pub fn ground_mixture(p1: f64, p2: f64) -> Array2<C64> {
    let mut rho = Array2::zeros((DIM, DIM));
    rho[(0, 0)] = C64::new(p1, 0.0);
    rho[(1, 1)] = C64::new(p2, 0.0);
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChargeSpecies;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::TAU;

    fn xm_scheme() -> LevelScheme {
        LevelScheme::new(ChargeSpecies::Xm, 315.97, TAU * 10.0, TAU * 8.4).unwrap()
    }

    fn xm_rates() -> DecayRates {
        DecayRates::new(0.12857, 0.11443, 2.71257, 0.11443, 0.0, 0.0).unwrap()
    }

    fn env() -> FieldEnvironment {
        FieldEnvironment::new(2.0, 0.0, 4.0, 0.357).unwrap()
    }

    #[test]
    fn no_drives_gives_frame_diagonal() {
        let s = xm_scheme();
        let h = build_hamiltonian(&s, &[], FrameSpec::AnchorDrives, 0.0, 0.0).unwrap();
        assert!(h.is_static());
        let m = h.eval(0.0);
        // interaction-equivalent: anchored frame without drives zeroes all
        for i in 0..DIM {
            for j in 0..DIM {
                assert_abs_diff_eq!(m[(i, j)].norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn single_resonant_drive_is_textbook_rwa_block() {
        let s = xm_scheme();
        let omega = 1.3;
        let d = DriveTerm::resonant(Level::G1, Level::E1, Envelope::Constant(omega));
        let h = build_hamiltonian(&s, &[d], FrameSpec::AnchorDrives, 0.0, 0.0).unwrap();
        assert!(h.is_static());
        let m = h.eval(0.0);
        assert_abs_diff_eq!(m[(2, 0)].re, omega / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(0, 2)].re, omega / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(2, 2)].norm(), 0.0, epsilon = 1e-12); // resonant
        for (i, j) in [(1, 1), (3, 3), (0, 1), (1, 2)] {
            assert_abs_diff_eq!(m[(i, j)].norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn detuned_drive_puts_detuning_on_diagonal() {
        let s = xm_scheme();
        let delta = 0.8;
        let d = DriveTerm {
            lower: Level::G1,
            upper: Level::E1,
            rabi: Envelope::Constant(1.0),
            detuning: delta,
            phase: 0.0,
        };
        let h = build_hamiltonian(&s, &[d], FrameSpec::AnchorDrives, 0.0, 0.0).unwrap();
        let m = h.eval(0.0);
        assert_abs_diff_eq!(m[(2, 2)].re, -delta, epsilon = 1e-12);
    }

    #[test]
    fn spectral_offset_shifts_effective_detuning() {
        let s = xm_scheme();
        let d = DriveTerm::resonant(Level::G1, Level::E1, Envelope::Constant(1.0));
        let offset = 0.35;
        let h = build_hamiltonian(&s, &[d], FrameSpec::AnchorDrives, offset, 0.0).unwrap();
        let m = h.eval(0.0);
        // laser stays at nominal frequency, transition moved up by offset:
        // diagonal shows -(0 - offset) = +offset
        assert_abs_diff_eq!(m[(2, 2)].re, offset, epsilon = 1e-12);
    }

    #[test]
    fn invalid_drives_are_rejected() {
        let s = xm_scheme();
        let bad = DriveTerm::resonant(Level::G1, Level::G2, Envelope::Constant(1.0));
        assert!(matches!(
            build_hamiltonian(&s, &[bad], FrameSpec::Interaction, 0.0, 0.0),
            Err(LindbladError::NoSuchTransition(..))
        ));
        let d = DriveTerm::resonant(Level::G1, Level::E1, Envelope::Constant(1.0));
        let dup = d.clone();
        assert!(matches!(
            build_hamiltonian(&s, &[d, dup], FrameSpec::Interaction, 0.0, 0.0),
            Err(LindbladError::DuplicateDrive(..))
        ));
    }

    #[test]
    fn channel_counting_and_sums() {
        let s = xm_scheme();
        let r = xm_rates();
        let ch = build_collapse_channels(&r, &s, &env());
        assert_eq!(ch.len(), 8);
        // decay out of each excited level sums to gamma_0 = 3.07
        for e in [Level::E1, Level::E2] {
            let total: f64 = ch.iter().filter(|c| c.upper == e).map(|c| c.rate).sum();
            assert_relative_eq!(total, 3.07, max_relative = 1e-6);
        }
        // spin flips at zero splitting are symmetric
        let s0 = LevelScheme::new(ChargeSpecies::Xm, 315.97, 0.0, TAU * 8.4).unwrap();
        let r = DecayRates::new(0.1, 0.1, 2.0, 0.1, 0.0, 0.02).unwrap();
        let ch = build_collapse_channels(&r, &s0, &env());
        let flips: Vec<f64> = ch
            .iter()
            .filter(|c| c.kind == ChannelKind::SpinFlip)
            .map(|c| c.rate)
            .collect();
        assert_eq!(flips.len(), 2);
        assert_relative_eq!(flips[0], flips[1], max_relative = 1e-12);
        assert_relative_eq!(flips[0] + flips[1], 0.02, max_relative = 1e-12);
    }

    #[test]
    fn free_evolution_is_constant() {
        let s = xm_scheme();
        let h = build_hamiltonian(&s, &[], FrameSpec::AnchorDrives, 0.0, 0.0).unwrap();
        let rho0 = ground_mixture(0.7, 0.3);
        let times: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let traj = evolve(&rho0, &h, &[], &times, &OdeOptions::default()).unwrap();
        for st in &traj.states {
            assert_abs_diff_eq!(st[(0, 0)].re, 0.7, epsilon = 1e-10);
            assert_abs_diff_eq!(st[(1, 1)].re, 0.3, epsilon = 1e-10);
        }
    }

    #[test]
    fn pure_decay_matches_exponential() {
        let s = xm_scheme();
        let h = build_hamiltonian(&s, &[], FrameSpec::AnchorDrives, 0.0, 0.0).unwrap();
        let gamma = 3.07;
        let channels = build_collapse_channels(&xm_rates(), &s, &env());
        let rho0 = pure_state(Level::E1);
        let times: Vec<f64> = (0..=60).map(|i| i as f64 * 0.05).collect();
        let traj = evolve(&rho0, &h, &channels, &times, &OdeOptions::default()).unwrap();
        for (t, p) in times.iter().zip(traj.population(Level::E1)) {
            let exact = (-gamma * t).exp();
            assert!(
                (p - exact).abs() <= 1e-6 * exact.max(1e-3),
                "t={t}: {p} vs {exact}"
            );
        }
        traj.validate().unwrap();
        // branching: g1 ends with gamma_y/gamma_0, g2 with gamma_x/gamma_0
        let p_g1 = traj.population(Level::G1).last().cloned().unwrap();
        let p_g2 = traj.population(Level::G2).last().cloned().unwrap();
        let decayed = 1.0 - traj.population(Level::E1).last().unwrap();
        assert_relative_eq!(p_g1 / decayed, 2.827 / 3.07, max_relative = 1e-5);
        assert_relative_eq!(p_g2 / decayed, 0.243 / 3.07, max_relative = 1e-4);
    }

    #[test]
    fn flux_decay_balance() {
        // photon-number conservation: integrated radiative flux equals the
        // excited population lost, and the per-channel records agree with
        // the direct population bookkeeping.
        let s = xm_scheme();
        let h = build_hamiltonian(&s, &[], FrameSpec::AnchorDrives, 0.0, 0.0).unwrap();
        let channels = build_collapse_channels(&xm_rates(), &s, &env());
        let rho0 = pure_state(Level::E1);
        let times: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.002).collect();
        let traj = evolve(&rho0, &h, &channels, &times, &OdeOptions::default()).unwrap();
        let total_flux: Vec<f64> = (0..times.len())
            .map(|i| traj.flux_per_channel.iter().map(|(_, f)| f[i]).sum())
            .collect();
        // composite Simpson on the uniform grid
        let h_step = times[1] - times[0];
        let mut integral = total_flux[0] + total_flux[total_flux.len() - 1];
        for (i, f) in total_flux.iter().enumerate().skip(1).take(total_flux.len() - 2) {
            integral += if i % 2 == 1 { 4.0 * f } else { 2.0 * f };
        }
        integral *= h_step / 3.0;
        let lost = 1.0 - traj.population(Level::E1).last().unwrap();
        assert_relative_eq!(integral, lost, max_relative = 1e-6);
    }

    #[test]
    fn steady_state_thermal_under_spin_flips() {
        // kappa_co only: steady state must match the thermal weights.
        let s = xm_scheme();
        let e = env();
        let r = DecayRates::new(0.12857, 0.11443, 2.71257, 0.11443, 0.0, 0.05).unwrap();
        let h = build_hamiltonian(&s, &[], FrameSpec::AnchorDrives, 0.0, 0.0).unwrap();
        let channels = build_collapse_channels(&r, &s, &e);
        let rho = steady_state(&h, &channels).unwrap();
        let (p1, p2) = crate::model::thermal_populations(e.temperature_k, s.delta_g);
        assert_abs_diff_eq!(rho[(0, 0)].re, p1, epsilon = 1e-3);
        assert_abs_diff_eq!(rho[(1, 1)].re, p2, epsilon = 1e-3);
    }

    #[test]
    fn steady_state_degenerate_manifold_detected() {
        // no drive, no spin flips: the whole ground 2x2 block is stationary
        // (two populations plus the free coherence), null space dimension 4.
        let s = xm_scheme();
        let h = build_hamiltonian(&s, &[], FrameSpec::AnchorDrives, 0.0, 0.0).unwrap();
        let channels = build_collapse_channels(&xm_rates(), &s, &env()).to_vec();
        match steady_state(&h, &channels) {
            Err(LindbladError::DegenerateSteadyState { dim }) => assert_eq!(dim, 4),
            other => panic!("expected degenerate manifold, got {other:?}"),
        }
    }

    #[test]
    fn steady_state_spin_pumping_traps_dark_state() {
        // resonant y-drive on g1-e1 with kappa_co = 0: everything collects
        // in g2.
        let s = xm_scheme();
        let d = DriveTerm::resonant(Level::G1, Level::E1, Envelope::Constant(1.5));
        let h = build_hamiltonian(&s, &[d], FrameSpec::AnchorDrives, 0.0, 0.0).unwrap();
        let channels = build_collapse_channels(&xm_rates(), &s, &env());
        let rho = steady_state(&h, &channels).unwrap();
        assert!(rho[(1, 1)].re > 0.999999, "p_g2 = {}", rho[(1, 1)].re);
    }

    #[test]
    fn histogram_from_constant_flux() {
        // constant excited population p held by construction: flat histogram
        // at gamma_wg * p. Use a trajectory built by hand.
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let flux = vec![0.42; times.len()];
        let traj = DensityMatrixTrajectory {
            times: times.clone(),
            states: vec![ground_mixture(1.0, 0.0); times.len()],
            flux_wg: flux,
            flux_per_channel: vec![],
        };
        let h = fluorescence_flux(&traj, (0.0, 10.0), 1.0, 0.0).unwrap();
        assert_eq!(h.bin_centers.len(), 10);
        for c in &h.counts {
            assert_relative_eq!(*c, 0.42, max_relative = 1e-12);
        }
        assert!(fluorescence_flux(&traj, (5.0, 5.0), 1.0, 0.0).is_err());
        assert!(fluorescence_flux(&traj, (0.0, 10.0), 0.0, 0.0).is_err());
    }
}
