//! Classical rate-equation model of the optical cycle with nuclear-spin
//! resolved levels.
//!
//! Ten levels: four ground and four excited triplet states labelled like the
//! readout basis, plus a singlet shelf that keeps only the nuclear label. The
//! laser is on for the whole window, so the generator is constant and each
//! step is an exact matrix exponential. An eleventh row integrates the
//! detected radiative flux, which makes bin counts exact as well.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{BasisSet, PhotonTimeTrace, PopulationVector, ReadoutState, TypeError};

pub const N_LEVELS: usize = 10;
const PHOTON_ROW: usize = N_LEVELS;

#[derive(Debug, Error, PartialEq)]
pub enum PhotoError {
    #[error("non-physical rate model: {0}")]
    NonPhysicalConfig(String),
    #[error("time step {dt} ns must be <= bin_width/4 and divide the bin width {bin} ns")]
    InvalidStep { dt: f64, bin: f64 },
    #[error("level populations must be non-negative and sum to one")]
    InvalidPopulation,
    #[error("contrast target {0} cannot be reached by tuning the singlet branching")]
    CalibrationFailed(f64),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// Rates of the optical cycle. Rates are in 1/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateModelConfig {
    #[serde(rename = "pump_rate_per_ns")]
    pub pump_rate: f64,
    #[serde(rename = "rad_rate_ms0_per_ns")]
    pub rad_rate_ms0: f64,
    #[serde(rename = "rad_rate_ms1_per_ns")]
    pub rad_rate_ms1: f64,
    #[serde(rename = "isc_rate_ms0_per_ns")]
    pub isc_rate_ms0: f64,
    #[serde(rename = "isc_rate_ms1_per_ns")]
    pub isc_rate_ms1: f64,
    #[serde(rename = "singlet_rate_per_ns")]
    pub singlet_rate: f64,
    /// Fraction of singlet decay that returns to mS = 0; the rest goes to mS = -1.
    pub singlet_branch_ms0: f64,
    /// Excited-state |0,↑⟩ ↔ |1,↓⟩ exchange per pump cycle.
    pub eslac_rate: f64,
    pub detection_efficiency: f64,
    /// Additive counts per bin per sweep (dark counts, background).
    pub background_per_bin: f64,
    #[serde(rename = "bin_width_ns")]
    pub bin_width: f64,
    #[serde(rename = "window_ns")]
    pub window: f64,
}

impl Default for RateModelConfig {
    fn default() -> Self {
        Self {
            pump_rate: 0.05,
            rad_rate_ms0: 1.0 / 12.0,
            rad_rate_ms1: 1.0 / 7.8,
            isc_rate_ms0: 0.002,
            isc_rate_ms1: 0.3,
            singlet_rate: 1.0 / 250.0,
            singlet_branch_ms0: 0.42,
            eslac_rate: 0.045,
            detection_efficiency: 0.01,
            background_per_bin: 0.0,
            bin_width: 2.0,
            window: 2500.0,
        }
    }
}

impl RateModelConfig {
    pub fn validate(&self) -> Result<(), PhotoError> {
        let bad = |msg: String| Err(PhotoError::NonPhysicalConfig(msg));
        let rates = [
            ("pump_rate", self.pump_rate),
            ("rad_rate_ms0", self.rad_rate_ms0),
            ("rad_rate_ms1", self.rad_rate_ms1),
            ("isc_rate_ms0", self.isc_rate_ms0),
            ("isc_rate_ms1", self.isc_rate_ms1),
            ("singlet_rate", self.singlet_rate),
            ("eslac_rate", self.eslac_rate),
            ("background_per_bin", self.background_per_bin),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.eslac_rate > 1.0 {
            return bad(format!("eslac_rate is a probability per cycle, got {}", self.eslac_rate));
        }
        if !(self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0) {
            return bad(format!(
                "detection_efficiency must lie in (0, 1], got {}",
                self.detection_efficiency
            ));
        }
        if !(0.0..=1.0).contains(&self.singlet_branch_ms0) {
            return bad(format!(
                "singlet_branch_ms0 must lie in [0, 1], got {}",
                self.singlet_branch_ms0
            ));
        }
        if self.isc_rate_ms1 <= self.isc_rate_ms0 {
            return bad(format!(
                "isc_rate_ms1 ({}) must exceed isc_rate_ms0 ({})",
                self.isc_rate_ms1, self.isc_rate_ms0
            ));
        }
        if !(self.bin_width.is_finite() && self.bin_width > 0.0) {
            return bad(format!("bin_width must be > 0, got {}", self.bin_width));
        }
        let ratio = self.window / self.bin_width;
        if !(ratio.is_finite() && ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return bad(format!(
                "window {} ns is not a positive multiple of bin_width {} ns",
                self.window, self.bin_width
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        (self.window / self.bin_width).round() as usize
    }

    /// Largest step accepted by [`propagate`], used by the convenience wrappers.
    pub fn default_step(&self) -> f64 {
        self.bin_width / 4.0
    }
}

/// Levels of the rate model in index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Ground(ReadoutState),
    Excited(ReadoutState),
    /// Singlet shelf; `false` is nuclear ↑ (mI = 0), `true` is ↓ (mI = +1).
    Singlet { down: bool },
}

impl Level {
    pub fn index(self) -> usize {
        match self {
            Level::Ground(s) => s.index(),
            Level::Excited(s) => 4 + s.index(),
            Level::Singlet { down } => 8 + down as usize,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0..=3 => ReadoutState::from_index(i).map(Level::Ground),
            4..=7 => ReadoutState::from_index(i - 4).map(Level::Excited),
            8 => Some(Level::Singlet { down: false }),
            9 => Some(Level::Singlet { down: true }),
            _ => None,
        }
    }
}

/// Probabilities of the ten levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelPopulation(pub [f64; N_LEVELS]);

impl LevelPopulation {
    pub fn ground(state: ReadoutState) -> Self {
        let mut p = [0.0; N_LEVELS];
        p[state.index()] = 1.0;
        Self(p)
    }

    /// Ground-state mixture with readout populations `c`.
    pub fn from_populations(c: &PopulationVector) -> Self {
        let mut p = [0.0; N_LEVELS];
        p[..4].copy_from_slice(&c.0);
        Self(p)
    }

    pub fn get(&self, level: Level) -> f64 {
        self.0[level.index()]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|&x| x.is_finite() && x >= -tol) && (self.total() - 1.0).abs() <= tol
    }

    /// Level with the largest population.
    pub fn argmax(&self) -> Level {
        let i = (0..N_LEVELS)
            .max_by(|&a, &b| self.0[a].total_cmp(&self.0[b]))
            .unwrap_or(0);
        Level::from_index(i).expect("index in range")
    }
}

/// Rate generator Q with dp/dt = Q p, extended by the photon accumulator row.
pub fn rate_matrix(config: &RateModelConfig) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(N_LEVELS + 1, N_LEVELS + 1);
    let mut link = |from: usize, to: usize, rate: f64| {
        q[(to, from)] += rate;
        q[(from, from)] -= rate;
    };

    for s in ReadoutState::ALL {
        let g = Level::Ground(s).index();
        let e = Level::Excited(s).index();
        let singlet = Level::Singlet { down: s.mi() == 1 }.index();
        let (rad, isc) = if s.ms() == 0 {
            (config.rad_rate_ms0, config.isc_rate_ms0)
        } else {
            (config.rad_rate_ms1, config.isc_rate_ms1)
        };
        link(g, e, config.pump_rate);
        link(e, g, rad);
        link(e, singlet, isc);
    }

    for down in [false, true] {
        let from = Level::Singlet { down }.index();
        let (zero, one) = if down {
            (ReadoutState::ZeroDown, ReadoutState::OneDown)
        } else {
            (ReadoutState::ZeroUp, ReadoutState::OneUp)
        };
        link(from, Level::Ground(zero).index(), config.singlet_rate * config.singlet_branch_ms0);
        link(from, Level::Ground(one).index(), config.singlet_rate * (1.0 - config.singlet_branch_ms0));
    }

    let mix = config.eslac_rate * config.pump_rate;
    let a = Level::Excited(ReadoutState::ZeroUp).index();
    let b = Level::Excited(ReadoutState::OneDown).index();
    link(a, b, mix);
    link(b, a, mix);

    for s in ReadoutState::ALL {
        let rad = if s.ms() == 0 {
            config.rad_rate_ms0
        } else {
            config.rad_rate_ms1
        };
        q[(PHOTON_ROW, Level::Excited(s).index())] = config.detection_efficiency * rad;
    }
    q
}

fn check_step(config: &RateModelConfig, dt: f64) -> Result<usize, PhotoError> {
    let err = PhotoError::InvalidStep {
        dt,
        bin: config.bin_width,
    };
    if !(dt.is_finite() && dt > 0.0 && dt <= config.bin_width / 4.0 * (1.0 + 1e-12)) {
        return Err(err);
    }
    let per_bin = config.bin_width / dt;
    if (per_bin - per_bin.round()).abs() > 1e-9 {
        return Err(err);
    }
    Ok(per_bin.round() as usize)
}

/// Evolves `initial` over the configured window with step `dt`.
///
/// Returns the populations at every step (first entry is `initial`) and the
/// expected detected counts per bin for a single sweep.
pub fn propagate(
    config: &RateModelConfig,
    initial: &LevelPopulation,
    dt: f64,
) -> Result<(Vec<LevelPopulation>, PhotonTimeTrace), PhotoError> {
    config.validate()?;
    if !initial.is_valid(1e-12) {
        return Err(PhotoError::InvalidPopulation);
    }
    let per_bin = check_step(config, dt)?;
    let n_bins = config.n_bins();
    let step = (rate_matrix(config) * dt).exp();

    let mut state = DVector::zeros(N_LEVELS + 1);
    state.rows_mut(0, N_LEVELS).copy_from_slice(&initial.0);
    let mut trajectory = Vec::with_capacity(n_bins * per_bin + 1);
    trajectory.push(*initial);
    let mut counts = Vec::with_capacity(n_bins);

    for _ in 0..n_bins {
        state[PHOTON_ROW] = 0.0;
        for _ in 0..per_bin {
            state = &step * &state;
            let mut p = [0.0; N_LEVELS];
            p.copy_from_slice(state.rows(0, N_LEVELS).as_slice());
            trajectory.push(LevelPopulation(p));
        }
        counts.push(state[PHOTON_ROW].max(0.0) + config.background_per_bin);
    }
    Ok((trajectory, PhotonTimeTrace::new(config.bin_width, counts)?))
}

/// Single-sweep trace for ground-state populations `c`.
pub fn simulate_trace(config: &RateModelConfig, c: &PopulationVector) -> Result<PhotonTimeTrace, PhotoError> {
    let initial = LevelPopulation::from_populations(c);
    propagate(config, &initial, config.default_step()).map(|(_, t)| t)
}

/// Per-sweep traces of the four readout states, columns in (0↑, 0↓, 1↑, 1↓) order.
pub fn simulate_basis_traces(config: &RateModelConfig) -> Result<BasisSet, PhotoError> {
    config.validate()?;
    let traces = ReadoutState::ALL.map(|s| simulate_trace(config, &PopulationVector::pure(s)));
    let [a, b, c, d] = traces;
    Ok(BasisSet::from_traces(&[a?, b?, c?, d?], 1.0)?)
}

/// Bin-wise mixture Σ c_k L_k.
pub fn superpose_trace(basis: &BasisSet, c: &PopulationVector) -> Result<PhotonTimeTrace, PhotoError> {
    if !c.is_on_simplex(PopulationVector::SIMPLEX_TOL) {
        return Err(TypeError::NotOnSimplex(c.0).into());
    }
    let cv = DVector::from_column_slice(&c.0);
    let m = basis.matrix() * cv;
    Ok(PhotonTimeTrace::new(basis.bin_width_ns, m.iter().map(|x| x.max(0.0)).collect())?)
}

/// Window-integrated counts of |0,↓⟩ over |1,↓⟩.
pub fn contrast(basis: &BasisSet) -> f64 {
    let t = basis.totals();
    t[ReadoutState::ZeroDown.index()] / t[ReadoutState::OneDown.index()]
}

/// Bisects `singlet_branch_ms0` so that [`contrast`] hits `target`.
pub fn calibrate_singlet_branching(config: &RateModelConfig, target: f64) -> Result<RateModelConfig, PhotoError> {
    let eval = |b: f64| -> Result<f64, PhotoError> {
        let cfg = RateModelConfig {
            singlet_branch_ms0: b,
            ..*config
        };
        Ok(contrast(&simulate_basis_traces(&cfg)?) - target)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let (f_lo, f_hi) = (eval(lo)?, eval(hi)?);
    if f_lo.signum() == f_hi.signum() {
        return Err(PhotoError::CalibrationFailed(target));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if eval(mid)?.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(RateModelConfig {
        singlet_branch_ms0: 0.5 * (lo + hi),
        ..*config
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Leave the expected counts untouched.
    None,
    #[default]
    Poisson,
    /// Gaussian with variance m truncated to ±√m, clamped at zero.
    #[serde(alias = "gauss")]
    TruncatedGaussian,
}

impl std::str::FromStr for NoiseModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(NoiseModel::None),
            "poisson" => Ok(NoiseModel::Poisson),
            "gauss" | "gaussian" | "truncated_gaussian" | "truncated-gaussian" => Ok(NoiseModel::TruncatedGaussian),
            other => Err(format!("unknown noise model `{other}` (expected poisson or gauss)")),
        }
    }
}

impl NoiseModel {
    /// One noisy realization of a bin with expected value `mean`.
    pub fn sample<R: Rng + ?Sized>(self, mean: f64, rng: &mut R) -> f64 {
        if mean <= 0.0 {
            return 0.0;
        }
        match self {
            NoiseModel::None => mean,
            NoiseModel::Poisson => Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(mean),
            NoiseModel::TruncatedGaussian => {
                let sd = mean.sqrt();
                loop {
                    let z: f64 = StandardNormal.sample(rng);
                    if z.abs() <= 1.0 {
                        return (mean + z * sd).max(0.0);
                    }
                }
            }
        }
    }
}

/// Noisy copy of `trace`, drawing from `rng`.
pub fn add_shot_noise_with<R: Rng + ?Sized>(trace: &PhotonTimeTrace, model: NoiseModel, rng: &mut R) -> PhotonTimeTrace {
    PhotonTimeTrace {
        bin_width_ns: trace.bin_width_ns,
        counts: trace.counts.iter().map(|&m| model.sample(m, rng)).collect(),
    }
}

/// Noisy copy of `trace`; deterministic in `seed`.
pub fn add_shot_noise(trace: &PhotonTimeTrace, model: NoiseModel, seed: u64) -> PhotonTimeTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_shot_noise_with(trace, model, &mut rng)
}
