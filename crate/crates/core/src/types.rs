//! Data types shared by the simulator, the estimators and the study drivers.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Readout basis of the electron-nuclear register.
///
/// `0`/`1` are the electron levels mS = 0 / mS = -1, `Up`/`Down` the nuclear
/// levels mI = 0 / mI = +1. The discriminant is the column index used by every
/// population vector and basis matrix in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutState {
    ZeroUp = 0,
    ZeroDown = 1,
    OneUp = 2,
    OneDown = 3,
}

impl ReadoutState {
    pub const ALL: [ReadoutState; 4] = [
        ReadoutState::ZeroUp,
        ReadoutState::ZeroDown,
        ReadoutState::OneUp,
        ReadoutState::OneDown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Electron projection mS.
    pub fn ms(self) -> i8 {
        match self {
            ReadoutState::ZeroUp | ReadoutState::ZeroDown => 0,
            ReadoutState::OneUp | ReadoutState::OneDown => -1,
        }
    }

    /// Nuclear projection mI.
    pub fn mi(self) -> i8 {
        match self {
            ReadoutState::ZeroUp | ReadoutState::OneUp => 0,
            ReadoutState::ZeroDown | ReadoutState::OneDown => 1,
        }
    }

    /// Short file-name friendly label, e.g. `0down`.
    pub fn slug(self) -> &'static str {
        match self {
            ReadoutState::ZeroUp => "0up",
            ReadoutState::ZeroDown => "0down",
            ReadoutState::OneUp => "1up",
            ReadoutState::OneDown => "1down",
        }
    }
}

impl fmt::Display for ReadoutState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ReadoutState::ZeroUp => "|0,↑⟩",
            ReadoutState::ZeroDown => "|0,↓⟩",
            ReadoutState::OneUp => "|1,↑⟩",
            ReadoutState::OneDown => "|1,↓⟩",
        };
        f.write_str(s)
    }
}

impl FromStr for ReadoutState {
    type Err = TypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0up" | "0u" | "zero_up" => Ok(ReadoutState::ZeroUp),
            "0down" | "0d" | "zero_down" => Ok(ReadoutState::ZeroDown),
            "1up" | "1u" | "one_up" => Ok(ReadoutState::OneUp),
            "1down" | "1d" | "one_down" => Ok(ReadoutState::OneDown),
            other => Err(TypeError::UnknownState(other.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TypeError {
    #[error("unknown readout state `{0}` (expected 0up, 0down, 1up or 1down)")]
    UnknownState(String),
    #[error("population vector {0:?} is not on the probability simplex")]
    NotOnSimplex([f64; 4]),
    #[error("trace counts must be finite and non-negative (bin {bin}: {value})")]
    InvalidCount { bin: usize, value: f64 },
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error("basis columns have different lengths")]
    RaggedBasis,
    #[error("a basis needs exactly 4 columns, got {0}")]
    BasisColumns(usize),
    #[error("could not parse population vector `{0}`")]
    ParsePopulation(String),
}

/// Probabilities of the four readout states, ordered as [`ReadoutState::ALL`].
///
/// The type itself does not enforce the simplex so that raw solver output
/// (unit-norm mode, unconstrained inversion) can be carried around; use
/// [`PopulationVector::simplex`] where a probability vector is required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PopulationVector(pub [f64; 4]);

impl PopulationVector {
    pub const SIMPLEX_TOL: f64 = 1e-9;

    pub fn new(c: [f64; 4]) -> Self {
        Self(c)
    }

    /// Checked constructor: entries >= 0 and summing to one within 1e-9.
    pub fn simplex(c: [f64; 4]) -> Result<Self, TypeError> {
        let v = Self(c);
        if v.is_on_simplex(Self::SIMPLEX_TOL) {
            Ok(v)
        } else {
            Err(TypeError::NotOnSimplex(c))
        }
    }

    pub fn pure(state: ReadoutState) -> Self {
        let mut c = [0.0; 4];
        c[state.index()] = 1.0;
        Self(c)
    }

    pub fn as_array(&self) -> &[f64; 4] {
        &self.0
    }

    pub fn get(&self, state: ReadoutState) -> f64 {
        self.0[state.index()]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn is_on_simplex(&self, tol: f64) -> bool {
        self.0.iter().all(|&x| x.is_finite() && x >= -tol) && (self.sum() - 1.0).abs() <= tol
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl FromStr for PopulationVector {
    type Err = TypeError;

    /// Parses `c0u,c0d,c1u,c1d`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| TypeError::ParsePopulation(s.to_string()))?;
        let arr: [f64; 4] = parts
            .try_into()
            .map_err(|_| TypeError::ParsePopulation(s.to_string()))?;
        Ok(Self(arr))
    }
}

/// Photon counts per time bin over one readout window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonTimeTrace {
    pub bin_width_ns: f64,
    pub counts: Vec<f64>,
}

impl PhotonTimeTrace {
    pub fn new(bin_width_ns: f64, counts: Vec<f64>) -> Result<Self, TypeError> {
        if !(bin_width_ns.is_finite() && bin_width_ns > 0.0) {
            return Err(TypeError::InvalidBinWidth(bin_width_ns));
        }
        if let Some((bin, &value)) = counts
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v.is_finite() && v >= 0.0))
        {
            return Err(TypeError::InvalidCount { bin, value });
        }
        Ok(Self {
            bin_width_ns,
            counts,
        })
    }

    pub fn zeros(bin_width_ns: f64, n_bins: usize) -> Self {
        Self {
            bin_width_ns,
            counts: vec![0.0; n_bins],
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn window_ns(&self) -> f64 {
        self.bin_width_ns * self.counts.len() as f64
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Start time of each bin.
    pub fn bin_starts(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(move |i| i as f64 * self.bin_width_ns)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            bin_width_ns: self.bin_width_ns,
            counts: self.counts.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Calibrated time traces of the four readout states, one column per state.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    columns: DMatrix<f64>,
    pub bin_width_ns: f64,
    pub sweeps_calibration: f64,
    pub field_g: Option<f64>,
}

impl BasisSet {
    pub fn new(columns: DMatrix<f64>, bin_width_ns: f64, sweeps_calibration: f64) -> Result<Self, TypeError> {
        if columns.ncols() != 4 {
            return Err(TypeError::BasisColumns(columns.ncols()));
        }
        if !(bin_width_ns.is_finite() && bin_width_ns > 0.0) {
            return Err(TypeError::InvalidBinWidth(bin_width_ns));
        }
        for (bin, row) in columns.row_iter().enumerate() {
            if let Some(&value) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(TypeError::InvalidCount { bin, value });
            }
        }
        Ok(Self {
            columns,
            bin_width_ns,
            sweeps_calibration,
            field_g: None,
        })
    }

    /// Builds a basis from traces given in [`ReadoutState::ALL`] order.
    pub fn from_traces(traces: &[PhotonTimeTrace; 4], sweeps_calibration: f64) -> Result<Self, TypeError> {
        let n = traces[0].len();
        if traces.iter().any(|t| t.len() != n) {
            return Err(TypeError::RaggedBasis);
        }
        let columns = DMatrix::from_fn(n, 4, |i, j| traces[j].counts[i]);
        Self::new(columns, traces[0].bin_width_ns, sweeps_calibration)
    }

    pub fn with_field(mut self, field_g: f64) -> Self {
        self.field_g = Some(field_g);
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn n_bins(&self) -> usize {
        self.columns.nrows()
    }

    pub fn window_ns(&self) -> f64 {
        self.bin_width_ns * self.n_bins() as f64
    }

    pub fn trace(&self, state: ReadoutState) -> PhotonTimeTrace {
        PhotonTimeTrace {
            bin_width_ns: self.bin_width_ns,
            counts: self.columns.column(state.index()).iter().copied().collect(),
        }
    }

    /// Window-integrated counts of each column, i.e. the scalar levels
    /// (L0↑, L0↓, L1↑, L1↓) used by the pulse-sequence readout.
    pub fn totals(&self) -> [f64; 4] {
        let mut t = [0.0; 4];
        for (j, slot) in t.iter_mut().enumerate() {
            *slot = self.columns.column(j).sum();
        }
        t
    }

    /// Same basis with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            columns: &self.columns * factor,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_indices_follow_column_order() {
        for (i, s) in ReadoutState::ALL.iter().enumerate() {
            assert_eq!(s.index(), i);
            assert_eq!(ReadoutState::from_index(i), Some(*s));
            assert_eq!(s.slug().parse::<ReadoutState>().unwrap(), *s);
        }
        assert_eq!(ReadoutState::OneDown.ms(), -1);
        assert_eq!(ReadoutState::OneDown.mi(), 1);
        assert_eq!(ReadoutState::ZeroUp.mi(), 0);
    }

    #[test]
    fn simplex_constructor_rejects_bad_vectors() {
        assert!(PopulationVector::simplex([0.25; 4]).is_ok());
        assert!(PopulationVector::simplex([0.5, 0.6, 0.0, -0.1]).is_err());
        assert!(PopulationVector::simplex([0.5, 0.5, 0.5, 0.0]).is_err());
    }

    #[test]
    fn population_parses_from_comma_list() {
        let c: PopulationVector = "0.5, 0.5,0,0".parse().unwrap();
        assert_eq!(c.0, [0.5, 0.5, 0.0, 0.0]);
        assert!("0.5,0.5".parse::<PopulationVector>().is_err());
    }

    #[test]
    fn trace_rejects_negative_counts() {
        assert!(PhotonTimeTrace::new(2.0, vec![1.0, -1.0]).is_err());
        assert!(PhotonTimeTrace::new(0.0, vec![1.0]).is_err());
        let t = PhotonTimeTrace::new(2.0, vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.window_ns(), 6.0);
        assert_eq!(t.bin_starts().collect::<Vec<_>>(), vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn basis_totals_sum_columns() {
        let traces = [
            PhotonTimeTrace::new(2.0, vec![1.0, 1.0]).unwrap(),
            PhotonTimeTrace::new(2.0, vec![2.0, 1.0]).unwrap(),
            PhotonTimeTrace::new(2.0, vec![0.0, 1.0]).unwrap(),
            PhotonTimeTrace::new(2.0, vec![3.0, 3.0]).unwrap(),
        ];
        let b = BasisSet::from_traces(&traces, 1e9).unwrap();
        assert_eq!(b.totals(), [2.0, 3.0, 1.0, 6.0]);
        assert_eq!(b.trace(ReadoutState::OneDown), traces[3]);
    }
}
