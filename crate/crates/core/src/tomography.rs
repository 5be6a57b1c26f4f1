//! Two-qubit state tomography with MW/RF pulse sequences and fluorescence
//! readout.
//!
//! Basis order is (|0↑⟩, |0↓⟩, |1↑⟩, |1↓⟩). A readout of ρ gives
//! `Σ_k ρ_kk L_k` with the scalar levels L of the four basis states.
//! Populations are read with the four mapping sequences of the traditional
//! method; each coherence ρ_pq = a + i b is read with a fixed pre-sequence
//! that moves it onto an addressable transition, followed by a π/2 pulse in
//! the four phases X, −X, Y, −Y.

use nalgebra::{Complex, Matrix4, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{traditional_invert, EstimatorError, FourLevelCounts};
use crate::photodynamics::NoiseModel;
use crate::types::{PopulationVector, ReadoutState};

pub type C64 = Complex<f64>;
pub type CMatrix4 = Matrix4<C64>;

#[derive(Debug, Error, PartialEq)]
pub enum TomographyError {
    #[error("level difference {delta:e} too small to resolve element {element}")]
    DegenerateLevels { element: OffDiagonal, delta: f64 },
    #[error("missing record for element {0}")]
    MissingRecord(OffDiagonal),
    #[error("duplicate record for element {0}")]
    DuplicateRecord(OffDiagonal),
    #[error("not a valid density matrix: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// |0↑⟩ ↔ |1↑⟩
    Mw1,
    /// |0↓⟩ ↔ |1↓⟩
    Mw2,
    /// |0↑⟩ ↔ |0↓⟩
    Rf1,
    /// |1↑⟩ ↔ |1↓⟩
    Rf2,
}

impl Channel {
    /// Basis indices (i, j) of the addressed transition.
    pub fn levels(self) -> (usize, usize) {
        use ReadoutState::*;
        let (a, b) = match self {
            Channel::Mw1 => (ZeroUp, OneUp),
            Channel::Mw2 => (ZeroDown, OneDown),
            Channel::Rf1 => (ZeroUp, ZeroDown),
            Channel::Rf2 => (OneUp, OneDown),
        };
        (a.index(), b.index())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Angle {
    Pi,
    HalfPi,
}

impl Angle {
    pub fn radians(self) -> f64 {
        match self {
            Angle::Pi => std::f64::consts::PI,
            Angle::HalfPi => std::f64::consts::FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    X,
    MinusX,
    Y,
    MinusY,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::X, Phase::MinusX, Phase::Y, Phase::MinusY];

    pub fn radians(self) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Phase::X => 0.0,
            Phase::MinusX => PI,
            Phase::Y => FRAC_PI_2,
            Phase::MinusY => 3.0 * FRAC_PI_2,
        }
    }
}

/// π-pulse durations in ns; a π/2 pulse takes half as long.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseDurations {
    pub mw_pi_ns: f64,
    pub rf1_pi_ns: f64,
    pub rf2_pi_ns: f64,
}

impl Default for PulseDurations {
    fn default() -> Self {
        Self {
            mw_pi_ns: 2785.0,
            rf1_pi_ns: 156169.0,
            rf2_pi_ns: 167389.0,
        }
    }
}

impl PulseDurations {
    pub fn duration(&self, channel: Channel, angle: Angle) -> f64 {
        let pi = match channel {
            Channel::Mw1 | Channel::Mw2 => self.mw_pi_ns,
            Channel::Rf1 => self.rf1_pi_ns,
            Channel::Rf2 => self.rf2_pi_ns,
        };
        match angle {
            Angle::Pi => pi,
            Angle::HalfPi => pi / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub channel: Channel,
    pub angle: Angle,
    pub phase: Phase,
    pub duration_ns: f64,
}

impl Pulse {
    /// Pulse with the default duration for its channel and angle.
    pub fn new(channel: Channel, angle: Angle, phase: Phase) -> Self {
        Self {
            channel,
            angle,
            phase,
            duration_ns: PulseDurations::default().duration(channel, angle),
        }
    }

    pub fn pi(channel: Channel) -> Self {
        Self::new(channel, Angle::Pi, Phase::X)
    }
}

/// Pulses in time order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PulseSequence(pub Vec<Pulse>);

impl PulseSequence {
    pub fn duration_ns(&self) -> f64 {
        self.0.iter().map(|p| p.duration_ns).sum()
    }

    pub fn unitary(&self) -> CMatrix4 {
        self.0
            .iter()
            .fold(CMatrix4::identity(), |acc, p| pulse_unitary(p) * acc)
    }

    pub fn with_durations(mut self, durations: &PulseDurations) -> Self {
        for p in &mut self.0 {
            p.duration_ns = durations.duration(p.channel, p.angle);
        }
        self
    }
}

/// exp(−iθ(cos φ σx + sin φ σy)/2) on the addressed pair, identity elsewhere.
pub fn pulse_unitary(pulse: &Pulse) -> CMatrix4 {
    let (i, j) = pulse.channel.levels();
    let half = pulse.angle.radians() / 2.0;
    let phi = pulse.phase.radians();
    let (c, s) = (half.cos(), half.sin());
    let mut u = CMatrix4::identity();
    u[(i, i)] = C64::new(c, 0.0);
    u[(j, j)] = C64::new(c, 0.0);
    // −i s e^{∓iφ}
    u[(i, j)] = C64::new(0.0, -s) * C64::from_polar(1.0, -phi);
    u[(j, i)] = C64::new(0.0, -s) * C64::from_polar(1.0, phi);
    u
}

/// 4×4 density matrix in the readout basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub CMatrix4);

impl DensityMatrix {
    pub fn pure(psi: [C64; 4]) -> Self {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let v = nalgebra::Vector4::from(psi.map(|z| z / norm));
        Self(v * v.adjoint())
    }

    pub fn basis(state: ReadoutState) -> Self {
        let mut m = CMatrix4::zeros();
        m[(state.index(), state.index())] = C64::new(1.0, 0.0);
        Self(m)
    }

    pub fn maximally_mixed() -> Self {
        Self(CMatrix4::identity() * C64::new(0.25, 0.0))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn populations(&self) -> PopulationVector {
        PopulationVector(std::array::from_fn(|k| self.0[(k, k)].re))
    }

    /// Element ρ_pq.
    pub fn element(&self, e: OffDiagonal) -> C64 {
        let (p, q) = e.indices();
        self.0[(p, q)]
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let h = (self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let ev = SymmetricEigen::new(h).eigenvalues;
        [ev[0], ev[1], ev[2], ev[3]]
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn validate(&self, tol: f64) -> Result<(), TomographyError> {
        let herm = self.hermiticity_error();
        if herm > tol {
            return Err(TomographyError::InvalidState(format!("not Hermitian ({herm:e})")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > tol {
            return Err(TomographyError::InvalidState(format!("trace {tr}")));
        }
        let min = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < -1e-9 {
            return Err(TomographyError::InvalidState(format!("eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        (self.0 - other.0).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨ψ|ρ|ψ⟩ for a normalized ψ.
    pub fn fidelity_with_pure(&self, psi: [C64; 4]) -> f64 {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let v = nalgebra::Vector4::from(psi);
        (v.adjoint() * self.0 * v)[(0, 0)].re / norm2
    }

    /// Nearest unit-trace PSD matrix by eigenvalue clipping and renormalization.
    pub fn project_psd(&self) -> DensityMatrix {
        let h = (self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        let mut out = CMatrix4::zeros();
        if total > 0.0 {
            for (k, &l) in clipped.iter().enumerate() {
                let v = eig.eigenvectors.column(k);
                out += v * v.adjoint() * C64::new(l / total, 0.0);
            }
        } else {
            out = DensityMatrix::maximally_mixed().0;
        }
        DensityMatrix(out)
    }
}

/// ρ' = U ρ U† with U the product of the sequence's pulses.
pub fn apply_sequence(rho: &DensityMatrix, seq: &PulseSequence) -> DensityMatrix {
    let u = seq.unitary();
    DensityMatrix(u * rho.0 * u.adjoint())
}

/// Fluorescence Σ_k ρ_kk L_k.
pub fn expected_counts(rho: &DensityMatrix, levels: &[f64; 4]) -> f64 {
    (0..4).map(|k| rho.0[(k, k)].re * levels[k]).sum()
}

/// The six upper-triangle coherences ρ_pq, p < q.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OffDiagonal {
    ZeroUpZeroDown,
    ZeroUpOneUp,
    ZeroUpOneDown,
    ZeroDownOneUp,
    ZeroDownOneDown,
    OneUpOneDown,
}

impl std::fmt::Display for OffDiagonal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (p, q) = self.states();
        let q = q.to_string();
        write!(f, "{p}⟨{}|", q.trim_start_matches('|').trim_end_matches('⟩'))
    }
}

impl From<OffDiagonal> for String {
    fn from(e: OffDiagonal) -> String {
        e.label()
    }
}

impl TryFrom<String> for OffDiagonal {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        OffDiagonal::from_label(&s).ok_or_else(|| format!("unknown element label `{s}`"))
    }
}

impl OffDiagonal {
    pub const ALL: [OffDiagonal; 6] = [
        OffDiagonal::ZeroUpZeroDown,
        OffDiagonal::ZeroUpOneUp,
        OffDiagonal::ZeroUpOneDown,
        OffDiagonal::ZeroDownOneUp,
        OffDiagonal::ZeroDownOneDown,
        OffDiagonal::OneUpOneDown,
    ];

    pub fn states(self) -> (ReadoutState, ReadoutState) {
        use ReadoutState::*;
        match self {
            OffDiagonal::ZeroUpZeroDown => (ZeroUp, ZeroDown),
            OffDiagonal::ZeroUpOneUp => (ZeroUp, OneUp),
            OffDiagonal::ZeroUpOneDown => (ZeroUp, OneDown),
            OffDiagonal::ZeroDownOneUp => (ZeroDown, OneUp),
            OffDiagonal::ZeroDownOneDown => (ZeroDown, OneDown),
            OffDiagonal::OneUpOneDown => (OneUp, OneDown),
        }
    }

    pub fn indices(self) -> (usize, usize) {
        let (p, q) = self.states();
        (p.index(), q.index())
    }

    /// Stable label used in record files, e.g. `0up_1down`.
    pub fn label(self) -> String {
        let (p, q) = self.states();
        format!("{}_{}", p.slug(), q.slug())
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.label() == s)
    }

    /// π pulses that move this coherence onto the final pulse's transition.
    pub fn pre_sequence(self) -> Vec<Pulse> {
        use Channel::*;
        let pi = Pulse::pi;
        match self {
            OffDiagonal::ZeroUpZeroDown => vec![],
            OffDiagonal::ZeroUpOneUp => vec![pi(Rf2), pi(Mw2)],
            OffDiagonal::ZeroUpOneDown => vec![pi(Mw2)],
            OffDiagonal::ZeroDownOneUp => vec![pi(Rf2)],
            OffDiagonal::ZeroDownOneDown => vec![],
            OffDiagonal::OneUpOneDown => vec![pi(Mw1), pi(Mw2)],
        }
    }

    /// Channel of the final π/2 pulse.
    pub fn final_channel(self) -> Channel {
        match self {
            OffDiagonal::ZeroDownOneUp | OffDiagonal::ZeroDownOneDown => Channel::Mw2,
            _ => Channel::Rf1,
        }
    }

    pub fn sequence(self, phase: Phase) -> PulseSequence {
        let mut p = self.pre_sequence();
        p.push(Pulse::new(self.final_channel(), Angle::HalfPi, phase));
        PulseSequence(p)
    }

    /// Level difference that sets the signal size for this element.
    pub fn level_difference(self, levels: &[f64; 4]) -> f64 {
        let (i, j) = self.final_channel().levels();
        levels[i] - levels[j]
    }
}

/// Mapping sequences of the population readout, in row order of the
/// traditional readout matrix.
pub fn diagonal_sequences() -> [PulseSequence; 4] {
    use Channel::*;
    let pi = Pulse::pi;
    [
        PulseSequence(vec![]),
        PulseSequence(vec![pi(Mw2)]),
        PulseSequence(vec![pi(Rf1)]),
        PulseSequence(vec![pi(Mw2), pi(Rf2), pi(Mw2)]),
    ]
}

/// Four phase-cycled counts of one coherence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalRecord {
    #[serde(rename = "element_label")]
    pub element: OffDiagonal,
    #[serde(rename = "X1")]
    pub x1: f64,
    #[serde(rename = "X2")]
    pub x2: f64,
    #[serde(rename = "Y1")]
    pub y1: f64,
    #[serde(rename = "Y2")]
    pub y2: f64,
    pub sweeps: f64,
}

/// Totals (L₀, L₁, L₂, L₃) of the population readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalRecord {
    pub totals: [f64; 4],
    pub sweeps: f64,
}

/// Everything needed for one full reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyRecords {
    /// Per-sweep levels (L₀↑, L₀↓, L₁↑, L₁↓).
    pub levels: [f64; 4],
    pub diagonal: DiagonalRecord,
    pub offdiagonal: Vec<OffDiagonalRecord>,
}

/// Noiseless or noisy records of `rho` over `sweeps` repetitions per sequence.
/// Counts are totals over the sweeps; `levels` are per sweep.
pub fn simulate_records<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    levels: &[f64; 4],
    sweeps: f64,
    noise: NoiseModel,
    rng: &mut R,
) -> TomographyRecords {
    let mut count = |seq: &PulseSequence| noise.sample(sweeps * expected_counts(&apply_sequence(rho, seq), levels), rng);
    let diag = diagonal_sequences();
    let totals = std::array::from_fn(|k| count(&diag[k]));
    let offdiagonal = OffDiagonal::ALL
        .iter()
        .map(|&e| {
            let [x1, x2, y1, y2] = Phase::ALL.map(|ph| count(&e.sequence(ph)));
            OffDiagonalRecord {
                element: e,
                x1,
                x2,
                y1,
                y2,
                sweeps,
            }
        })
        .collect();
    TomographyRecords {
        levels: *levels,
        diagonal: DiagonalRecord { totals, sweeps },
        offdiagonal,
    }
}

/// O = U† diag(L) U, so that a readout after U equals tr(ρ O).
fn readout_operator(seq: &PulseSequence, levels: &[f64; 4]) -> CMatrix4 {
    let u = seq.unitary();
    let d = CMatrix4::from_diagonal(&nalgebra::Vector4::from(levels.map(|l| C64::new(l, 0.0))));
    u.adjoint() * d * u
}

/// Real and imaginary part (a, b) of ρ_pq from its four phase-cycled counts.
///
/// X₁ − X₂ and Y₁ − Y₂ depend on ρ_pq alone: 2(u a − v b) with u + i v the
/// (q, p) entry of the difference of the two readout operators. For the
/// |0↑⟩⟨1↓| element this is a = (X₂ − X₁)/(2ΔL), b = (Y₁ − Y₂)/(2ΔL) with
/// ΔL = L₀↑ − L₀↓.
pub fn reconstruct_offdiagonal(record: &OffDiagonalRecord, levels: &[f64; 4]) -> Result<(f64, f64), TomographyError> {
    let e = record.element;
    let scale = levels.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let delta = e.level_difference(levels);
    if !(delta.abs() > 1e-9 * scale) {
        return Err(TomographyError::DegenerateLevels { element: e, delta });
    }
    let (p, q) = e.indices();
    let entry = |a: Phase, b: Phase| {
        let w = readout_operator(&e.sequence(a), levels) - readout_operator(&e.sequence(b), levels);
        w[(q, p)]
    };
    let wx = entry(Phase::X, Phase::MinusX);
    let wy = entry(Phase::Y, Phase::MinusY);
    let dx = (record.x1 - record.x2) / (2.0 * record.sweeps);
    let dy = (record.y1 - record.y2) / (2.0 * record.sweeps);
    // [wx.re  -wx.im] [a]   [dx]
    // [wy.re  -wy.im] [b] = [dy]
    let det = -wx.re * wy.im + wx.im * wy.re;
    if det.abs() <= 1e-12 * delta * delta {
        return Err(TomographyError::DegenerateLevels { element: e, delta });
    }
    let a = (-dx * wy.im + wx.im * dy) / det;
    let b = (wx.re * dy - wy.re * dx) / det;
    Ok((a, b))
}

/// Result of a full reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Linear-inversion estimate, Hermitian but not necessarily positive.
    pub raw: DensityMatrix,
    /// PSD projection of `raw` (present when requested).
    pub projected: Option<DensityMatrix>,
    pub elements: Vec<(OffDiagonal, f64, f64)>,
}

impl Reconstruction {
    /// Projected matrix if available, raw otherwise.
    pub fn best(&self) -> &DensityMatrix {
        self.projected.as_ref().unwrap_or(&self.raw)
    }
}

/// Populations from the traditional inversion, coherences from the six
/// phase-cycled records.
pub fn full_tomography(records: &TomographyRecords, project: bool) -> Result<Reconstruction, TomographyError> {
    let levels = records.levels;
    let mut by_element = Vec::with_capacity(6);
    for e in OffDiagonal::ALL {
        let mut found = records.offdiagonal.iter().filter(|r| r.element == e);
        let rec = found.next().ok_or(TomographyError::MissingRecord(e))?;
        if found.next().is_some() {
            return Err(TomographyError::DuplicateRecord(e));
        }
        by_element.push(*rec);
    }

    let sweeps = records.diagonal.sweeps;
    let inv = traditional_invert(&FourLevelCounts {
        levels: levels.map(|l| l * sweeps),
        totals: records.diagonal.totals,
    })?;
    let mut rho = CMatrix4::zeros();
    for k in 0..4 {
        rho[(k, k)] = C64::new(inv.c.0[k], 0.0);
    }
    let mut elements = Vec::with_capacity(6);
    for rec in &by_element {
        let (a, b) = reconstruct_offdiagonal(rec, &levels)?;
        let (p, q) = rec.element.indices();
        rho[(p, q)] = C64::new(a, b);
        rho[(q, p)] = C64::new(a, -b);
        elements.push((rec.element, a, b));
    }
    let raw = DensityMatrix(rho);
    let projected = project.then(|| raw.project_psd());
    Ok(Reconstruction { raw, projected, elements })
}

/// Random mixed state ρ = G G† / tr(G G†) with complex Gaussian G.
pub fn random_density_matrix<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    let g = CMatrix4::from_fn(|_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let m = g * g.adjoint();
    let tr = m.trace();
    DensityMatrix(m / tr)
}
