//! Direct readout of NV electron-nuclear spin populations from photon
//! arrival-time traces.
//!
//! * [`spin`]: spin Hamiltonian, eigensystems and the excited-state anti-crossing.
//! * [`photodynamics`]: rate-equation optical cycle producing photon time traces.
//! * [`estimator`]: constrained least-squares population fit, the four-count
//!   inversion, population fidelity and the noise-magnification factor κ.
//! * [`tomography`]: pulse algebra and two-qubit density-matrix reconstruction.
//! * [`studies`]: Monte-Carlo fidelity curves, fits, speedups and field scans.
//! * [`io`]: CSV/JSON/TOML file formats.

pub mod error;
pub mod estimator;
pub mod io;
pub mod photodynamics;
pub mod spin;
pub mod studies;
pub mod tomography;
pub mod types;

pub use error::{Error, Result};
pub use estimator::{
    estimate_populations, noise_magnification, population_fidelity, traditional_invert, Constraint, Estimate,
    Estimator, FourLevelCounts,
};
pub use photodynamics::{
    add_shot_noise, propagate, simulate_basis_traces, superpose_trace, LevelPopulation, NoiseModel, RateModelConfig,
};
pub use spin::{build_hamiltonian, eigensystem, find_eslac, mixing_fraction, Manifold, SpinEigensystem, SpinSystemParams};
pub use studies::{
    field_dependence_study, fit_fidelity_curve, run_sweep_study, speedup, time_axis, time_to_fidelity, FidelityCurve,
    FitModel, FitParams, Method, SweepStudyConfig, Timing,
};
pub use tomography::{full_tomography, DensityMatrix, OffDiagonal, Pulse, PulseSequence};
pub use types::{BasisSet, PhotonTimeTrace, PopulationVector, ReadoutState};
