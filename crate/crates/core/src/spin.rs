//! Spin Hamiltonian of the NV electron (S = 1) coupled to the ¹⁴N nucleus (I = 1).
//!
//! Both the ground and the excited orbital manifolds use
//!
//! ```text
//! H = D Sz² + γe B Sz + γn B Iz + A S·I + Q Iz²
//! ```
//!
//! in the product basis |mS⟩ ⊗ |mI⟩ with mS, mI ∈ {-1, 0, +1}, index
//! `3 (mS + 1) + (mI + 1)`. The flip-flop part of S·I is real, so the matrix
//! is real symmetric and the eigenvectors are real.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ReadoutState;

pub const DIM: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum SpinError {
    #[error("magnetic field must be finite and >= 0 G, got {0}")]
    InvalidField(f64),
    #[error("invalid scan: range [{lo}, {hi}] G with resolution {resolution} G")]
    InvalidScan { lo: f64, hi: f64, resolution: f64 },
    #[error("no anti-crossing inside [{lo}, {hi}] G: the gap is monotone over the window")]
    EslacNotInRange { lo: f64, hi: f64 },
    #[error("invalid basis label mS={ms}, mI={mi}")]
    InvalidLabel { ms: i8, mi: i8 },
}

/// Hamiltonian constants. Units: MHz and MHz/G.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpinSystemParams {
    #[serde(rename = "d_gs_mhz")]
    pub d_gs: f64,
    #[serde(rename = "d_es_mhz")]
    pub d_es: f64,
    #[serde(rename = "gamma_e_mhz_per_g")]
    pub gamma_e: f64,
    #[serde(rename = "gamma_n_mhz_per_g")]
    pub gamma_n: f64,
    #[serde(rename = "a_gs_mhz")]
    pub a_gs: f64,
    #[serde(rename = "a_es_mhz")]
    pub a_es: f64,
    /// Nuclear quadrupole term Q Iz², applied in both manifolds.
    #[serde(rename = "quadrupole_mhz")]
    pub quadrupole: f64,
}

impl Default for SpinSystemParams {
    fn default() -> Self {
        Self {
            d_gs: 2870.0,
            d_es: 1400.0,
            gamma_e: 2.8025,
            gamma_n: -3.077e-4,
            a_gs: -2.16,
            a_es: -40.0,
            quadrupole: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manifold {
    Ground,
    Excited,
}

impl SpinSystemParams {
    pub fn zero_field_splitting(&self, manifold: Manifold) -> f64 {
        match manifold {
            Manifold::Ground => self.d_gs,
            Manifold::Excited => self.d_es,
        }
    }

    pub fn hyperfine(&self, manifold: Manifold) -> f64 {
        match manifold {
            Manifold::Ground => self.a_gs,
            Manifold::Excited => self.a_es,
        }
    }
}

/// A product-basis state |mS, mI⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisLabel {
    pub ms: i8,
    pub mi: i8,
}

impl BasisLabel {
    pub fn new(ms: i8, mi: i8) -> Result<Self, SpinError> {
        if (-1..=1).contains(&ms) && (-1..=1).contains(&mi) {
            Ok(Self { ms, mi })
        } else {
            Err(SpinError::InvalidLabel { ms, mi })
        }
    }

    pub fn index(self) -> usize {
        3 * (self.ms + 1) as usize + (self.mi + 1) as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self {
            ms: (i / 3) as i8 - 1,
            mi: (i % 3) as i8 - 1,
        }
    }

    pub fn all() -> impl Iterator<Item = BasisLabel> {
        (0..DIM).map(Self::from_index)
    }
}

impl From<ReadoutState> for BasisLabel {
    fn from(s: ReadoutState) -> Self {
        Self {
            ms: s.ms(),
            mi: s.mi(),
        }
    }
}

fn spin1_ops() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    // Order (-1, 0, +1); S+|m⟩ = √2 |m+1⟩ for m ∈ {-1, 0}.
    let r2 = std::f64::consts::SQRT_2;
    let sz = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.0, 1.0]));
    let mut sp = DMatrix::zeros(3, 3);
    sp[(1, 0)] = r2;
    sp[(2, 1)] = r2;
    let sm = sp.transpose();
    (sz, sp, sm)
}

fn check_field(field: f64) -> Result<(), SpinError> {
    if field.is_finite() && field >= 0.0 {
        Ok(())
    } else {
        Err(SpinError::InvalidField(field))
    }
}

/// Builds the 9×9 Hamiltonian (MHz) at axial field `field` (G).
pub fn build_hamiltonian(
    params: &SpinSystemParams,
    manifold: Manifold,
    field: f64,
) -> Result<DMatrix<f64>, SpinError> {
    check_field(field)?;
    let (sz, sp, sm) = spin1_ops();
    let id = DMatrix::<f64>::identity(3, 3);
    let d = params.zero_field_splitting(manifold);
    let a = params.hyperfine(manifold);

    let sz2 = &sz * &sz;
    let mut h = (sz2.kronecker(&id)) * d;
    h += sz.kronecker(&id) * (params.gamma_e * field);
    h += id.kronecker(&sz) * (params.gamma_n * field);
    // A (Sz Iz + (S+ I- + S- I+) / 2)
    h += sz.kronecker(&sz) * a;
    h += (sp.kronecker(&sm) + sm.kronecker(&sp)) * (0.5 * a);
    h += id.kronecker(&(&sz * &sz)) * params.quadrupole;
    Ok(h)
}

/// Eigen-decomposition at one field value.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinEigensystem {
    pub field: f64,
    /// Ascending energies in MHz.
    pub energies: Vec<f64>,
    /// Eigenvectors as columns, in the order of `energies`.
    pub states: DMatrix<f64>,
}

impl SpinEigensystem {
    /// |⟨label|ψ_k⟩|².
    pub fn overlap(&self, label: BasisLabel, k: usize) -> f64 {
        self.states[(label.index(), k)].powi(2)
    }

    /// Index of the eigenstate with the largest weight on `label`.
    pub fn dominant_state(&self, label: BasisLabel) -> usize {
        self.dominant_state_excluding(label, None)
    }

    fn dominant_state_excluding(&self, label: BasisLabel, skip: Option<usize>) -> usize {
        (0..DIM)
            .filter(|&k| Some(k) != skip)
            .max_by(|&i, &j| self.overlap(label, i).total_cmp(&self.overlap(label, j)))
            .expect("nine eigenstates")
    }

    /// Total weight of eigenstate `k` inside the electron level `ms`.
    pub fn electron_weight(&self, ms: i8, k: usize) -> f64 {
        (-1..=1).map(|mi| self.overlap(BasisLabel { ms, mi }, k)).sum()
    }

    /// Occupation-weighted mean energy of the electron level `ms`.
    pub fn manifold_energy(&self, ms: i8) -> f64 {
        let (num, den) = (0..DIM).fold((0.0, 0.0), |(n, d), k| {
            let w = self.electron_weight(ms, k);
            (n + w * self.energies[k], d + w)
        });
        num / den
    }
}

/// Diagonalizes the Hamiltonian; energies ascending, each eigenvector's
/// largest-magnitude component made positive.
pub fn eigensystem(
    params: &SpinSystemParams,
    manifold: Manifold,
    field: f64,
) -> Result<SpinEigensystem, SpinError> {
    let h = build_hamiltonian(params, manifold, field)?;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..DIM).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let energies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut states = DMatrix::zeros(DIM, DIM);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).clone_owned();
        let pivot = v
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        if pivot < 0.0 {
            v.neg_mut();
        }
        states.set_column(dst, &v);
    }
    Ok(SpinEigensystem {
        field,
        energies,
        states,
    })
}

/// |⟨bra|ψ⟩|² for the eigenstate ψ that has the largest weight on `ket`.
pub fn mixing_fraction(eigsys: &SpinEigensystem, bra: BasisLabel, ket: BasisLabel) -> f64 {
    let k = eigsys.dominant_state(ket);
    eigsys.overlap(bra, k)
}

/// Gap (MHz) between the mS = 0 and mS = -1 levels of a manifold, each taken
/// as the occupation-weighted mean over its hyperfine sublevels.
pub fn electronic_gap(params: &SpinSystemParams, manifold: Manifold, field: f64) -> Result<f64, SpinError> {
    let eig = eigensystem(params, manifold, field)?;
    Ok((eig.manifold_energy(-1) - eig.manifold_energy(0)).abs())
}

/// Energy gap (MHz) between the eigenstates dominated by `a` and by `b`.
pub fn pair_gap(
    params: &SpinSystemParams,
    manifold: Manifold,
    field: f64,
    a: BasisLabel,
    b: BasisLabel,
) -> Result<f64, SpinError> {
    let eig = eigensystem(params, manifold, field)?;
    let i = eig.dominant_state(a);
    let j = eig.dominant_state_excluding(b, Some(i));
    Ok((eig.energies[i] - eig.energies[j]).abs())
}

/// Locates the excited-state level anti-crossing: the field in `scan` where
/// the excited mS = 0 and mS = -1 levels meet.
pub fn find_eslac(params: &SpinSystemParams, scan: (f64, f64), resolution: f64) -> Result<f64, SpinError> {
    scan_minimum(scan, resolution, |b| electronic_gap(params, Manifold::Excited, b))
}

/// Field of the avoided crossing between the eigenstates dominated by `a` and `b`.
pub fn find_anticrossing(
    params: &SpinSystemParams,
    manifold: Manifold,
    a: BasisLabel,
    b: BasisLabel,
    scan: (f64, f64),
    resolution: f64,
) -> Result<f64, SpinError> {
    scan_minimum(scan, resolution, |f| pair_gap(params, manifold, f, a, b))
}

/// Grid scan followed by golden-section refinement inside the bracketing cell.
fn scan_minimum<F>(scan: (f64, f64), resolution: f64, mut gap: F) -> Result<f64, SpinError>
where
    F: FnMut(f64) -> Result<f64, SpinError>,
{
    let (lo, hi) = scan;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo && resolution > 0.0) {
        return Err(SpinError::InvalidScan { lo, hi, resolution });
    }
    let n = ((hi - lo) / resolution).round() as usize;
    if n < 2 {
        return Err(SpinError::InvalidScan { lo, hi, resolution });
    }
    let step = (hi - lo) / n as f64;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..=n {
        let g = gap(lo + i as f64 * step)?;
        if g < best.1 {
            best = (i, g);
        }
    }
    if best.0 == 0 || best.0 == n {
        return Err(SpinError::EslacNotInRange { lo, hi });
    }

    let grid_min = lo + best.0 as f64 * step;
    let (mut a, mut b) = (grid_min - step, grid_min + step);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (gap(c)?, gap(d)?);
    while (b - a) > 1e-9 * step.max(1.0) {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = gap(c)?;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = gap(d)?;
        }
    }
    let refined = 0.5 * (a + b);
    // Keep the grid point if refinement landed on a worse value.
    if gap(refined)? <= best.1 {
        Ok(refined)
    } else {
        Ok(grid_min)
    }
}
