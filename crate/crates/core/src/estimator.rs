//! Population estimation from photon time traces.
//!
//! The direct method fits a measured trace M with the four basis columns,
//! `min ‖L c − M‖₂`, either on the probability simplex or on the unit sphere.
//! Both reduce to a 4×4 problem through a thin QR factorization of L, so the
//! per-trace cost is one pass over the bins.

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{BasisSet, PhotonTimeTrace, PopulationVector};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("basis matrix is rank deficient (σ_min/σ_max = {0:e})")]
    RankDeficientBasis(f64),
    #[error("trace has {got} bins, basis has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("readout matrix is singular (|det| = {0:e})")]
    SingularSystem(f64),
    #[error("fidelity of a zero vector is undefined")]
    ZeroVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// c ≥ 0, Σc = 1.
    #[default]
    Simplex,
    /// cᵀc = 1.
    UnitNorm,
}

impl std::str::FromStr for Constraint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simplex" => Ok(Constraint::Simplex),
            "unit-norm" | "unit_norm" => Ok(Constraint::UnitNorm),
            other => Err(format!("unknown constraint `{other}` (expected simplex or unit-norm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub c: PopulationVector,
    pub residual: f64,
    pub constraint: Constraint,
}

const RANK_TOL: f64 = 1e-12;

/// Precomputed factorization of a basis, reusable across many traces.
#[derive(Debug, Clone)]
pub struct Estimator {
    l: DMatrix<f64>,
    q: DMatrix<f64>,
    r: Matrix4<f64>,
}

impl Estimator {
    pub fn new(basis: &BasisSet) -> Result<Self, EstimatorError> {
        let l = basis.matrix().clone();
        if l.nrows() < 4 {
            return Err(EstimatorError::RankDeficientBasis(0.0));
        }
        let qr = l.clone().qr();
        let q = qr.q();
        let r: Matrix4<f64> = qr.r().fixed_view::<4, 4>(0, 0).into_owned();
        let sv = r.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smax > 0.0) || smin <= RANK_TOL * smax {
            return Err(EstimatorError::RankDeficientBasis(if smax > 0.0 { smin / smax } else { 0.0 }));
        }
        Ok(Self { l, q, r })
    }

    pub fn n_bins(&self) -> usize {
        self.l.nrows()
    }

    pub fn estimate(&self, m: &[f64], constraint: Constraint) -> Result<Estimate, EstimatorError> {
        if m.len() != self.n_bins() {
            return Err(EstimatorError::DimensionMismatch {
                expected: self.n_bins(),
                got: m.len(),
            });
        }
        let mv = DVector::from_column_slice(m);
        let z: Vector4<f64> = (self.q.transpose() * &mv).fixed_rows::<4>(0).into_owned();
        let c = match constraint {
            Constraint::Simplex => simplex_lsq(&self.r, &z),
            Constraint::UnitNorm => unit_norm_lsq(&self.r, &z),
        };
        let residual = (&self.l * DVector::from_column_slice(c.as_slice()) - mv).norm();
        Ok(Estimate {
            c: PopulationVector([c[0], c[1], c[2], c[3]]),
            residual,
            constraint,
        })
    }
}

/// Fits `m` with the columns of `basis`. Basis and trace must be in the same
/// units (e.g. both per sweep).
pub fn estimate_populations(
    basis: &BasisSet,
    m: &PhotonTimeTrace,
    constraint: Constraint,
) -> Result<Estimate, EstimatorError> {
    Estimator::new(basis)?.estimate(&m.counts, constraint)
}

/// Global minimizer of ‖R c − z‖ over the probability simplex.
///
/// Every face of the simplex is visited; on each face the affine least-squares
/// problem is solved exactly and the best feasible candidate wins. With
/// rank-4 R the objective is strictly convex, so the optimum is the interior
/// minimizer of exactly one face.
pub fn simplex_lsq(r: &Matrix4<f64>, z: &Vector4<f64>) -> Vector4<f64> {
    const FEAS_TOL: f64 = 1e-12;
    let mut best: Option<(f64, Vector4<f64>)> = None;
    for mask in 1u8..16 {
        let support: Vec<usize> = (0..4).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len();
        let last = support[k - 1];
        let r_last = r.column(last).into_owned();
        let mut x = Vector4::zeros();
        if k == 1 {
            x[last] = 1.0;
        } else {
            let a = DMatrix::from_fn(4, k - 1, |i, j| r[(i, support[j])] - r_last[i]);
            let rhs = DVector::from_column_slice((z - r_last).as_slice());
            let Ok(sol) = a.svd(true, true).solve(&rhs, 1e-14) else {
                continue;
            };
            let mut rest = 1.0;
            for (j, &i) in support[..k - 1].iter().enumerate() {
                x[i] = sol[j];
                rest -= sol[j];
            }
            x[last] = rest;
            if x.iter().any(|&v| v < -FEAS_TOL) {
                continue;
            }
            x.iter_mut().for_each(|v| *v = v.max(0.0));
            x /= x.sum();
        }
        let obj = (r * x - z).norm_squared();
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, x));
        }
    }
    best.map(|(_, x)| x).expect("vertices are always feasible")
}

/// Global minimizer of ‖R c − z‖ on the unit sphere ‖c‖ = 1.
///
/// Stationary points satisfy (G − μI) c = h with G = RᵀR, h = Rᵀz; the
/// global minimum has μ ≤ λ_min(G) and is found from the secular equation.
pub fn unit_norm_lsq(r: &Matrix4<f64>, z: &Vector4<f64>) -> Vector4<f64> {
    let g = r.transpose() * r;
    let h = r.transpose() * z;
    let eig = SymmetricEigen::new(g);
    let lam = eig.eigenvalues;
    let v = eig.eigenvectors;
    let gv = v.transpose() * h;
    let imin = lam.imin();
    let lmin = lam[imin];
    let hnorm = h.norm();
    let scale = lam.amax().max(hnorm).max(f64::MIN_POSITIVE);

    let coeffs = |mu: f64| Vector4::from_fn(|i, _| gv[i] / (lam[i] - mu));
    let fix_sign = |c: Vector4<f64>| if c.sum() < 0.0 { -c } else { c };

    // Hard case: h (almost) orthogonal to the lowest eigenvector.
    if gv[imin].abs() <= 1e-12 * scale {
        let mut c = Vector4::zeros();
        let mut norm2 = 0.0;
        for i in (0..4).filter(|&i| i != imin) {
            let gap = lam[i] - lmin;
            if gap > 1e-14 * scale {
                let w = gv[i] / gap;
                c += v.column(i) * w;
                norm2 += w * w;
            }
        }
        if norm2 <= 1.0 {
            c += v.column(imin) * (1.0 - norm2).sqrt();
            return fix_sign(c);
        }
    }

    let secular = |mu: f64| coeffs(mu).norm_squared() - 1.0;
    let mut lo = lmin - hnorm.max(f64::MIN_POSITIVE);
    let mut hi = lmin;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if secular(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c = v * coeffs(0.5 * (lo + hi));
    c / c.norm()
}

/// Scalar fluorescence levels of the four basis states and the four measured
/// totals of the traditional readout sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourLevelCounts {
    /// (L₀↑, L₀↓, L₁↑, L₁↓)
    pub levels: [f64; 4],
    /// (L₀, L₁, L₂, L₃)
    pub totals: [f64; 4],
}

/// Readout matrix of the traditional method. Row j lists the level seen by
/// each basis state after the j-th mapping sequence: none, MW₂ π, RF₁ π and
/// MW₂ π · RF₂ π · MW₂ π.
pub fn traditional_matrix(levels: &[f64; 4]) -> Matrix4<f64> {
    let [l0u, l0d, l1u, l1d] = *levels;
    Matrix4::new(
        l0u, l0d, l1u, l1d, //
        l0u, l1d, l1u, l0d, //
        l0d, l0u, l1u, l1d, //
        l0u, l1u, l0d, l1d,
    )
}

/// Totals produced by populations `c`.
pub fn forward_counts(levels: &[f64; 4], c: &PopulationVector) -> [f64; 4] {
    let t = traditional_matrix(levels) * Vector4::from(c.0);
    [t[0], t[1], t[2], t[3]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inversion {
    pub c: PopulationVector,
    /// Σc of the raw solution.
    pub raw_sum: f64,
    /// True when Σc was within 1e-6 of one and the result was rescaled.
    pub normalized: bool,
}

/// Exact solve of the 4×4 traditional readout system.
pub fn traditional_invert(counts: &FourLevelCounts) -> Result<Inversion, EstimatorError> {
    let m = traditional_matrix(&counts.levels);
    let scale = counts.levels.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let det = m.determinant();
    if !(scale > 0.0) || det.abs() < 1e-12 * scale.powi(4) {
        return Err(EstimatorError::SingularSystem(det.abs()));
    }
    let c = m
        .lu()
        .solve(&Vector4::from(counts.totals))
        .ok_or(EstimatorError::SingularSystem(det.abs()))?;
    let raw_sum = c.sum();
    let normalized = (raw_sum - 1.0).abs() <= 1e-6;
    let c = if normalized { c / raw_sum } else { c };
    Ok(Inversion {
        c: PopulationVector([c[0], c[1], c[2], c[3]]),
        raw_sum,
        normalized,
    })
}

/// Cosine similarity of two population vectors, clamped to [0, 1].
pub fn population_fidelity(c_th: &PopulationVector, c_exp: &PopulationVector) -> Result<f64, EstimatorError> {
    let nth = c_th.dot(c_th);
    let nexp = c_exp.dot(c_exp);
    if !(nth > 0.0 && nexp > 0.0) {
        return Err(EstimatorError::ZeroVector);
    }
    Ok((c_th.dot(c_exp) / (nth * nexp).sqrt()).clamp(0.0, 1.0))
}

/// Condition number σ_max/σ_min of the basis after scaling each column to unit norm.
pub fn noise_magnification(basis: &BasisSet) -> Result<f64, EstimatorError> {
    let mut l = basis.matrix().clone();
    for mut col in l.column_iter_mut() {
        let n = col.norm();
        if !(n > 0.0) {
            return Err(EstimatorError::RankDeficientBasis(0.0));
        }
        col /= n;
    }
    let sv = l.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= RANK_TOL * smax {
        return Err(EstimatorError::RankDeficientBasis(smin / smax));
    }
    Ok(smax / smin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photodynamics::{simulate_basis_traces, superpose_trace, RateModelConfig};
    use crate::types::ReadoutState;
    use approx::assert_abs_diff_eq;
    use std::sync::OnceLock;

    fn basis() -> &'static BasisSet {
        static B: OnceLock<BasisSet> = OnceLock::new();
        B.get_or_init(|| simulate_basis_traces(&RateModelConfig::default()).unwrap())
    }

    /// ‖Lc − m‖ expanded through the Gram matrix, computed with plain loops.
    struct Objective {
        gram: [[f64; 4]; 4],
        lm: [f64; 4],
        mm: f64,
    }

    impl Objective {
        fn new(l: &DMatrix<f64>, m: &[f64]) -> Self {
            let mut gram = [[0.0; 4]; 4];
            let mut lm = [0.0; 4];
            for (i, &mi) in m.iter().enumerate() {
                for a in 0..4 {
                    lm[a] += l[(i, a)] * mi;
                    for b in 0..4 {
                        gram[a][b] += l[(i, a)] * l[(i, b)];
                    }
                }
            }
            let mm = m.iter().map(|x| x * x).sum();
            Self { gram, lm, mm }
        }

        fn eval(&self, c: [f64; 4]) -> f64 {
            let mut q = self.mm;
            for a in 0..4 {
                q -= 2.0 * self.lm[a] * c[a];
                for b in 0..4 {
                    q += c[a] * self.gram[a][b] * c[b];
                }
            }
            q.max(0.0).sqrt()
        }
    }

    #[test]
    fn basis_column_is_recovered_exactly() {
        let m = basis().trace(ReadoutState::ZeroDown);
        let e = estimate_populations(basis(), &m, Constraint::Simplex).unwrap();
        assert_abs_diff_eq!(e.c.0.as_slice(), [0.0, 1.0, 0.0, 0.0].as_slice(), epsilon = 1e-9);
        assert!(e.residual < 1e-9);
    }

    #[test]
    fn simplex_solution_beats_grid_search() {
        // Oracle: exhaustive search on a 1e-2 simplex lattice plus a local
        // 1e-3 lattice around the best node.
        let l = basis().matrix().clone();
        let c_true = PopulationVector([0.5, 0.5, 0.0, 0.0]);
        let m = superpose_trace(basis(), &c_true).unwrap();
        let obj = Objective::new(&l, &m.counts);
        let est = estimate_populations(basis(), &m, Constraint::Simplex).unwrap();
        assert!(est.c.max_abs_diff(&c_true) < 1e-9);

        let grid = |centre: [f64; 4], half: i32, step: f64| {
            let mut best = (f64::INFINITY, [0.0; 4]);
            for i in -half..=half {
                for j in -half..=half {
                    for k in -half..=half {
                        let c = [
                            centre[0] + i as f64 * step,
                            centre[1] + j as f64 * step,
                            centre[2] + k as f64 * step,
                            0.0,
                        ];
                        let c = [c[0], c[1], c[2], 1.0 - c[0] - c[1] - c[2]];
                        if c.iter().any(|&x| x < -1e-12) {
                            continue;
                        }
                        let f = obj.eval(c);
                        if f < best.0 {
                            best = (f, c);
                        }
                    }
                }
            }
            best
        };
        let coarse = grid([0.5, 0.5, 0.5, 0.0], 50, 0.01);
        let fine = grid(coarse.1, 10, 0.001);
        assert!(est.residual <= fine.0 + 1e-9);
        for (a, b) in est.c.0.iter().zip(fine.1.iter()) {
            assert!((a - b).abs() <= 1e-3 + 1e-12);
        }
    }

    #[test]
    fn face_solutions_are_exact_zeros() {
        // Target outside the cone: optimum on an edge of the simplex.
        let mut m = basis().trace(ReadoutState::ZeroDown).counts;
        for (x, y) in m.iter_mut().zip(basis().trace(ReadoutState::OneUp).counts) {
            *x = 1.3 * *x - 0.2 * y;
        }
        let e = Estimator::new(basis()).unwrap().estimate(&m, Constraint::Simplex).unwrap();
        assert!(e.c.0.iter().filter(|&&x| x == 0.0).count() >= 1);
        assert!(e.c.is_on_simplex(1e-12));
    }

    #[test]
    fn unit_norm_matches_sphere_search() {
        let est = Estimator::new(basis()).unwrap();
        let m = superpose_trace(basis(), &PopulationVector([0.3, 0.4, 0.2, 0.1])).unwrap();
        let e = est.estimate(&m.counts, Constraint::UnitNorm).unwrap();
        assert_abs_diff_eq!(e.c.dot(&e.c), 1.0, epsilon = 1e-10);

        // Oracle: hyperspherical grid followed by shrinking compass search.
        let l = basis().matrix().clone();
        let obj = Objective::new(&l, &m.counts);
        let point = |a: f64, b: f64, g: f64| {
            [
                a.cos(),
                a.sin() * b.cos(),
                a.sin() * b.sin() * g.cos(),
                a.sin() * b.sin() * g.sin(),
            ]
        };
        let mut best = (f64::INFINITY, (0.0, 0.0, 0.0));
        let n = 40;
        let pi = std::f64::consts::PI;
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..2 * n {
                    let ang = (pi * i as f64 / n as f64, pi * j as f64 / n as f64, pi * k as f64 / n as f64);
                    let f = obj.eval(point(ang.0, ang.1, ang.2));
                    if f < best.0 {
                        best = (f, ang);
                    }
                }
            }
        }
        let mut step = pi / n as f64;
        while step > 1e-10 {
            let mut improved = false;
            for d in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut a = best.1;
                    match d {
                        0 => a.0 += s * step,
                        1 => a.1 += s * step,
                        _ => a.2 += s * step,
                    }
                    let f = obj.eval(point(a.0, a.1, a.2));
                    if f < best.0 {
                        best = (f, a);
                        improved = true;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        assert!(e.residual <= best.0 * (1.0 + 1e-6) + 1e-12);
    }

    #[test]
    fn unit_norm_hard_case() {
        let r = Matrix4::from_diagonal(&Vector4::new(1.0, 2.0, 3.0, 4.0));
        let z = Vector4::new(0.0, 0.5, 0.0, 0.0);
        let c = unit_norm_lsq(&r, &z);
        assert_abs_diff_eq!(c.norm(), 1.0, epsilon = 1e-12);
        // (G - λ_min I) c = h → c_2 = 1 / 3, c_1 = ±√(8/9)
        assert_abs_diff_eq!(c[1], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[0].abs(), (8.0f64 / 9.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn dimension_and_rank_are_checked() {
        let m = PhotonTimeTrace::new(2.0, vec![1.0; 10]).unwrap();
        assert!(matches!(
            estimate_populations(basis(), &m, Constraint::Simplex),
            Err(EstimatorError::DimensionMismatch { expected: 1250, got: 10 })
        ));
        let mut cols = basis().matrix().clone();
        let c0 = cols.column(0).into_owned();
        cols.set_column(1, &c0);
        let degenerate = BasisSet::new(cols, 2.0, 1.0).unwrap();
        assert!(matches!(Estimator::new(&degenerate), Err(EstimatorError::RankDeficientBasis(_))));
        assert!(matches!(noise_magnification(&degenerate), Err(EstimatorError::RankDeficientBasis(_))));
    }

    #[test]
    fn traditional_round_trip() {
        let levels = basis().totals();
        for c in [[1.0, 0.0, 0.0, 0.0], [0.1, 0.2, 0.3, 0.4]] {
            let c = PopulationVector(c);
            let inv = traditional_invert(&FourLevelCounts {
                levels,
                totals: forward_counts(&levels, &c),
            })
            .unwrap();
            assert!(inv.normalized);
            assert!(inv.c.max_abs_diff(&c) < 1e-10);
        }
    }

    #[test]
    fn traditional_rejects_degenerate_levels() {
        let counts = FourLevelCounts {
            levels: [1.0; 4],
            totals: [1.0; 4],
        };
        assert!(matches!(traditional_invert(&counts), Err(EstimatorError::SingularSystem(_))));
    }

    #[test]
    fn fidelity_examples() {
        let q = PopulationVector([0.25; 4]);
        assert_abs_diff_eq!(population_fidelity(&q, &q).unwrap(), 1.0, epsilon = 1e-15);
        let a = PopulationVector::pure(ReadoutState::ZeroUp);
        let b = PopulationVector::pure(ReadoutState::ZeroDown);
        assert_eq!(population_fidelity(&a, &b).unwrap(), 0.0);
        assert_eq!(
            population_fidelity(&a, &PopulationVector([0.0; 4])),
            Err(EstimatorError::ZeroVector)
        );
    }

    #[test]
    fn kappa_of_orthonormal_basis_is_one() {
        let cols = DMatrix::from_fn(8, 4, |i, j| if i == 2 * j { 3.0 } else { 0.0 });
        let b = BasisSet::new(cols, 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(noise_magnification(&b).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kappa_matches_gram_eigenvalues() {
        // Oracle: κ² = λ_max/λ_min of the Gram matrix of the normalized columns.
        let l = basis().matrix();
        let mut gram = Matrix4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let (a, b) = (l.column(i), l.column(j));
                gram[(i, j)] = a.dot(&b) / (a.norm() * b.norm());
            }
        }
        let ev = SymmetricEigen::new(gram).eigenvalues;
        let oracle = (ev.max() / ev.min()).sqrt();
        let kappa = noise_magnification(basis()).unwrap();
        assert!((kappa - oracle).abs() / oracle < 1e-6);
        assert!(kappa >= 1.0);
    }
}
