//! Monte-Carlo fidelity studies, curve fits and field scans.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{
    noise_magnification, population_fidelity, traditional_invert, Constraint, Estimator, EstimatorError,
    FourLevelCounts, forward_counts,
};
use crate::photodynamics::{simulate_basis_traces, NoiseModel, PhotoError, RateModelConfig};
use crate::spin::{eigensystem, mixing_fraction, Manifold, SpinError, SpinSystemParams};
use crate::types::{BasisSet, PopulationVector, ReadoutState};

#[derive(Debug, Error, PartialEq)]
pub enum StudyError {
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("fitted curve never stays above F = {0}")]
    TargetUnreachable(f64),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Photo(#[from] PhotoError),
    #[error(transparent)]
    Spin(#[from] SpinError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Least-squares fit of one laser-pulse time trace.
    #[default]
    Direct,
    /// Four mapping sequences and the 4×4 inversion of total counts.
    Traditional,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Method::Direct),
            "traditional" => Ok(Method::Traditional),
            other => Err(format!("unknown method `{other}` (expected direct or traditional)")),
        }
    }
}

/// Durations in ns of the laser readout and the π pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timing {
    pub laser_ns: f64,
    pub mw_pi_ns: f64,
    pub rf1_pi_ns: f64,
    pub rf2_pi_ns: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            laser_ns: 2500.0,
            mw_pi_ns: 2785.0,
            rf1_pi_ns: 156169.0,
            rf2_pi_ns: 167389.0,
        }
    }
}

impl Timing {
    pub fn validate(&self) -> Result<(), StudyError> {
        let all = [self.laser_ns, self.mw_pi_ns, self.rf1_pi_ns, self.rf2_pi_ns];
        if all.iter().all(|d| d.is_finite() && *d >= 0.0) && self.laser_ns > 0.0 {
            Ok(())
        } else {
            Err(StudyError::InvalidConfig(format!("durations must be >= 0 with laser > 0: {self:?}")))
        }
    }

    /// Duration of one repetition. The traditional method averages the four
    /// mapping sequences (none, MW π, RF₁ π, MW π + RF₂ π + MW π).
    pub fn per_shot_ns(&self, method: Method) -> f64 {
        match method {
            Method::Direct => self.laser_ns,
            Method::Traditional => {
                let ops = [
                    0.0,
                    self.mw_pi_ns,
                    self.rf1_pi_ns,
                    2.0 * self.mw_pi_ns + self.rf2_pi_ns,
                ];
                ops.iter().map(|o| o + self.laser_ns).sum::<f64>() / 4.0
            }
        }
    }

    /// log₁₀ of the per-shot duration.
    pub fn delta(&self, method: Method) -> f64 {
        self.per_shot_ns(method).log10()
    }
}

/// Wall time in ns spent on `sweeps` repetitions.
pub fn time_axis(sweeps: f64, method: Method, timing: &Timing) -> Result<f64, StudyError> {
    if !(sweeps >= 1.0) {
        return Err(StudyError::InvalidConfig(format!("sweeps must be >= 1, got {sweeps}")));
    }
    Ok(sweeps * timing.per_shot_ns(method))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepStudyConfig {
    /// Sweeps behind the calibration basis (S1).
    pub calibration_sweeps: f64,
    /// Test sweep counts (S2), ascending.
    pub test_sweeps: Vec<f64>,
    pub trials: usize,
    pub noise: NoiseModel,
    pub method: Method,
    pub constraint: Constraint,
    /// Draw one noisy calibration basis at S1 sweeps instead of using the expected basis.
    pub calibration_noise: bool,
    pub timing: Timing,
    pub seed: u64,
}

impl Default for SweepStudyConfig {
    fn default() -> Self {
        Self {
            calibration_sweeps: 1e9,
            test_sweeps: log_grid(1e3, 1e9, 1),
            trials: 100,
            noise: NoiseModel::Poisson,
            method: Method::Direct,
            constraint: Constraint::Simplex,
            calibration_noise: false,
            timing: Timing::default(),
            seed: 0,
        }
    }
}

impl SweepStudyConfig {
    pub fn validate(&self) -> Result<(), StudyError> {
        let bad = |m: String| Err(StudyError::InvalidConfig(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.test_sweeps.is_empty() {
            return bad("test_sweeps is empty".into());
        }
        if self.test_sweeps.iter().any(|s| !(s.is_finite() && *s >= 1.0)) {
            return bad("test sweeps must be finite and >= 1".into());
        }
        if self.test_sweeps.windows(2).any(|w| w[1] <= w[0]) {
            return bad("test sweeps must be strictly increasing".into());
        }
        let max = self.test_sweeps.iter().copied().fold(0.0, f64::max);
        if !(self.calibration_sweeps >= max) {
            return bad(format!(
                "calibration sweeps {} below largest test sweeps {max}",
                self.calibration_sweeps
            ));
        }
        self.timing.validate()
    }
}

/// `per_decade` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let n = ((b - a) * per_decade as f64).round() as usize;
    (0..=n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / n.max(1) as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityPoint {
    pub sweeps: f64,
    pub time_ns: f64,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

impl FidelityPoint {
    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        self.std / (self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityCurve {
    pub method: Method,
    pub per_shot_ns: f64,
    pub points: Vec<FidelityPoint>,
}

impl FidelityCurve {
    /// Point-wise linear interpolation in log₁₀(sweeps) of the first crossing of `target`.
    pub fn sweeps_to_fidelity(&self, target: f64) -> Option<f64> {
        let p = &self.points;
        if p.first()?.mean >= target {
            return Some(p[0].sweeps);
        }
        p.windows(2).find(|w| w[1].mean >= target).map(|w| {
            let (x0, x1) = (w[0].sweeps.log10(), w[1].sweeps.log10());
            let t = (target - w[0].mean) / (w[1].mean - w[0].mean);
            10f64.powf(x0 + t * (x1 - x0))
        })
    }
}

fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

/// Uniform draw from the probability simplex.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R) -> PopulationVector {
    let d = Dirichlet::new([1.0; 4]).expect("valid concentration");
    PopulationVector(d.sample(rng))
}

fn clip_nonnegative(c: &PopulationVector) -> PopulationVector {
    PopulationVector(c.0.map(|x| x.max(0.0)))
}

fn score(c_th: &PopulationVector, c_est: &PopulationVector) -> f64 {
    population_fidelity(c_th, c_est).unwrap_or(0.0)
}

/// Fidelity-vs-sweeps curve for one method. Trials run in parallel; each
/// trial owns an RNG stream keyed by (point, trial), so the result does not
/// depend on scheduling.
pub fn run_sweep_study(config: &SweepStudyConfig, basis: &BasisSet) -> Result<FidelityCurve, StudyError> {
    config.validate()?;
    let expected = basis.scaled(1.0 / basis.sweeps_calibration);
    let per_sweep = if config.calibration_noise {
        let mut rng = trial_rng(config.seed, u32::MAX as usize, 0);
        let s1 = config.calibration_sweeps;
        let noisy = expected.matrix().map(|m| config.noise.sample(m * s1, &mut rng) / s1);
        BasisSet::new(noisy, basis.bin_width_ns, 1.0).expect("noisy counts stay valid")
    } else {
        expected.clone()
    };
    let estimator = Estimator::new(&per_sweep)?;
    let levels = per_sweep.totals();
    let true_l = expected.matrix();
    let true_levels = expected.totals();

    let mut points = Vec::with_capacity(config.test_sweeps.len());
    for (pi, &s2) in config.test_sweeps.iter().enumerate() {
        let fids: Vec<Result<f64, StudyError>> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = trial_rng(config.seed, pi, t);
                let c = random_simplex(&mut rng);
                match config.method {
                    Method::Direct => {
                        let m_th = true_l * DVector::from_column_slice(&c.0);
                        let m: Vec<f64> = m_th.iter().map(|&x| config.noise.sample(x * s2, &mut rng) / s2).collect();
                        let est = estimator.estimate(&m, config.constraint)?;
                        Ok(score(&c, &est.c))
                    }
                    Method::Traditional => {
                        let n_seq = s2 / 4.0;
                        let totals = forward_counts(&true_levels, &c).map(|x| config.noise.sample(x * n_seq, &mut rng));
                        let inv = traditional_invert(&FourLevelCounts {
                            levels: levels.map(|l| l * n_seq),
                            totals,
                        })?;
                        Ok(score(&c, &clip_nonnegative(&inv.c)))
                    }
                }
            })
            .collect();
        let fids = fids.into_iter().collect::<Result<Vec<f64>, _>>()?;
        let n = fids.len() as f64;
        let mean = fids.iter().sum::<f64>() / n;
        let var = if fids.len() > 1 {
            fids.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        points.push(FidelityPoint {
            sweeps: s2,
            time_ns: time_axis(s2, config.method, &config.timing)?,
            mean,
            std: var.sqrt(),
            trials: fids.len(),
        });
    }
    Ok(FidelityCurve {
        method: config.method,
        per_shot_ns: config.timing.per_shot_ns(config.method),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// F = 1 − exp(a s² + b s + c), s = log₁₀ sweeps.
    Sweeps,
    /// F = 1 − exp(a (ι−δ)² + b (ι−δ) + c), ι = log₁₀ time in ns.
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub delta: f64,
    pub model: FitModel,
    /// RMS residual of ln(1 − F).
    pub residual: f64,
    pub n_points: usize,
}

impl FitParams {
    pub fn new(a: f64, b: f64, c: f64, delta: f64, model: FitModel) -> Self {
        Self {
            a,
            b,
            c,
            delta,
            model,
            residual: 0.0,
            n_points: 0,
        }
    }

    /// Fitted fidelity at abscissa ι (log₁₀ sweeps or log₁₀ ns).
    pub fn fidelity_at(&self, iota: f64) -> f64 {
        let x = iota - self.delta;
        1.0 - (self.a * x * x + self.b * x + self.c).exp()
    }
}

/// Least-squares quadratic y ≈ p₀ x² + p₁ x + p₂.
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Result<[f64; 3], StudyError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(StudyError::DegenerateFit(format!("need >= 3 paired points, got {}", xs.len())));
    }
    let a = DMatrix::from_fn(xs.len(), 3, |i, j| xs[i].powi(2 - j as i32));
    let y = DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    if sv.min() <= 1e-12 * sv.max() {
        return Err(StudyError::DegenerateFit("abscissae do not determine a quadratic".into()));
    }
    let p = svd
        .solve(&y, 0.0)
        .map_err(|e| StudyError::DegenerateFit(e.to_string()))?;
    Ok([p[0], p[1], p[2]])
}

/// Fits ln(1 − F) with a quadratic in x = ι − δ. Points with F ≥ 1 are skipped.
pub fn fit_log_quadratic(xs: &[f64], fs: &[f64]) -> Result<(f64, f64, f64, f64, usize), StudyError> {
    let (px, py): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(fs)
        .filter(|(_, &f)| f < 1.0)
        .map(|(&x, &f)| (x, (1.0 - f).ln()))
        .unzip();
    if px.len() < 4 {
        return Err(StudyError::DegenerateFit(format!(
            "need >= 4 points with F < 1, got {}",
            px.len()
        )));
    }
    let [a, b, c] = quadratic_fit(&px, &py)?;
    let rms = (px
        .iter()
        .zip(&py)
        .map(|(x, y)| (a * x * x + b * x + c - y).powi(2))
        .sum::<f64>()
        / px.len() as f64)
        .sqrt();
    Ok((a, b, c, rms, px.len()))
}

/// Fit of a fidelity curve in the chosen parameterization. For the time
/// model δ is fixed to log₁₀ of the per-shot duration.
pub fn fit_fidelity_curve(curve: &FidelityCurve, model: FitModel) -> Result<FitParams, StudyError> {
    let delta = match model {
        FitModel::Sweeps => 0.0,
        FitModel::Time => curve.per_shot_ns.log10(),
    };
    let xs: Vec<f64> = curve
        .points
        .iter()
        .map(|p| match model {
            FitModel::Sweeps => p.sweeps.log10(),
            FitModel::Time => (p.sweeps * curve.per_shot_ns).log10() - delta,
        })
        .collect();
    let fs: Vec<f64> = curve.points.iter().map(|p| p.mean).collect();
    let (a, b, c, residual, n_points) = fit_log_quadratic(&xs, &fs)?;
    Ok(FitParams {
        a,
        b,
        c,
        delta,
        model,
        residual,
        n_points,
    })
}

/// Earliest abscissa 10^ι (ns for the time model, sweeps for the sweeps
/// model) from which the fitted fidelity stays at or above `target`, with
/// ι ≥ δ.
pub fn time_to_fidelity(fit: &FitParams, target: f64) -> Result<f64, StudyError> {
    if !(0.0..1.0).contains(&target) {
        return Err(StudyError::InvalidConfig(format!("target must lie in [0, 1), got {target}")));
    }
    // F ≥ target ⇔ g(x) = a x² + b x + c − ln(1 − target) ≤ 0
    let (a, b) = (fit.a, fit.b);
    let c = fit.c - (1.0 - target).ln();
    let unreachable = Err(StudyError::TargetUnreachable(target));
    let x = if a < 0.0 {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            0.0
        } else {
            let sq = disc.sqrt();
            let r = ((-b - sq) / (2.0 * a)).max((-b + sq) / (2.0 * a));
            r.max(0.0)
        }
    } else if a == 0.0 {
        if b < 0.0 {
            (-c / b).max(0.0)
        } else if b == 0.0 && c <= 0.0 {
            0.0
        } else {
            return unreachable;
        }
    } else {
        return unreachable;
    };
    Ok(10f64.powf(fit.delta + x))
}

/// Time ratio traditional / direct to reach `target`.
pub fn speedup(fit_direct: &FitParams, fit_traditional: &FitParams, target: f64) -> Result<f64, StudyError> {
    Ok(time_to_fidelity(fit_traditional, target)? / time_to_fidelity(fit_direct, target)?)
}

/// Probability that the excited eigenstate dominated by |0,↑⟩ carries |1,↓⟩.
pub fn eslac_mixing(params: &SpinSystemParams, field: f64) -> Result<f64, StudyError> {
    let eig = eigensystem(params, Manifold::Excited, field)?;
    Ok(mixing_fraction(&eig, ReadoutState::OneDown.into(), ReadoutState::ZeroUp.into()))
}

/// ESLAC exchange rate at `field`: `peak` at full two-level mixing, scaled
/// linearly below it.
pub fn eslac_rate_for_field(params: &SpinSystemParams, field: f64, peak: f64) -> Result<f64, StudyError> {
    Ok(peak * (2.0 * eslac_mixing(params, field)?).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldStudyConfig {
    pub fields: Vec<f64>,
    /// ESLAC rate reached at maximal mixing.
    pub eslac_peak: f64,
    pub target_fidelity: f64,
    /// Sweep settings for every field; not part of the `[field_scan]` file table.
    #[serde(skip)]
    pub study: SweepStudyConfig,
}

impl Default for FieldStudyConfig {
    fn default() -> Self {
        Self {
            fields: vec![400.0, 450.0, 500.0, 550.0, 600.0],
            eslac_peak: 0.08,
            target_fidelity: 0.9,
            study: SweepStudyConfig {
                test_sweeps: log_grid(1e3, 1e7, 1),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub field_g: f64,
    pub mixing: f64,
    pub eslac_rate: f64,
    pub kappa: f64,
    pub fit: Option<FitParams>,
    /// Sweeps to reach the target according to the fit.
    pub sweeps_to_target: Option<f64>,
    /// Sweeps to reach the target by interpolating the curve itself.
    pub sweeps_to_target_interp: Option<f64>,
    pub curve: FidelityCurve,
}

/// One row per field: simulate the basis with the field's ESLAC rate, run the
/// sweep study, fit it and compute κ.
pub fn field_dependence_study(
    config: &FieldStudyConfig,
    spin: &SpinSystemParams,
    rates: &RateModelConfig,
) -> Result<Vec<FieldRow>, StudyError> {
    if config.fields.len() < 2 {
        return Err(StudyError::InvalidConfig("field scan needs at least 2 fields".into()));
    }
    config.study.validate()?;
    config
        .fields
        .iter()
        .map(|&field| {
            let mixing = eslac_mixing(spin, field)?;
            let eslac_rate = eslac_rate_for_field(spin, field, config.eslac_peak)?;
            let cfg = RateModelConfig { eslac_rate, ..*rates };
            let basis = simulate_basis_traces(&cfg)?.with_field(field);
            let kappa = noise_magnification(&basis)?;
            let curve = run_sweep_study(&config.study, &basis)?;
            let fit = fit_fidelity_curve(&curve, FitModel::Sweeps).ok();
            let sweeps_to_target = fit.and_then(|f| time_to_fidelity(&f, config.target_fidelity).ok());
            Ok(FieldRow {
                field_g: field,
                mixing,
                eslac_rate,
                kappa,
                fit,
                sweeps_to_target,
                sweeps_to_target_interp: curve.sweeps_to_fidelity(config.target_fidelity),
                curve,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn per_shot_durations() {
        let t = Timing::default();
        assert_eq!(time_axis(1.0, Method::Direct, &t).unwrap(), 2500.0);
        assert_abs_diff_eq!(t.delta(Method::Direct), 2500f64.log10(), epsilon = 1e-15);
        let trad = t.per_shot_ns(Method::Traditional);
        assert_abs_diff_eq!(trad, 2500.0 + (2785.0 + 156169.0 + 2.0 * 2785.0 + 167389.0) / 4.0, epsilon = 1e-9);
        assert!(trad / t.per_shot_ns(Method::Direct) > 10.0);
        let zero = Timing {
            mw_pi_ns: 0.0,
            rf1_pi_ns: 0.0,
            rf2_pi_ns: 0.0,
            ..t
        };
        assert_eq!(time_axis(1e4, Method::Traditional, &zero).unwrap(), 1e4 * 2500.0);
        assert!(time_axis(0.5, Method::Direct, &t).is_err());
    }

    #[test]
    fn log_grid_has_decades() {
        let g = log_grid(1e3, 1e9, 1);
        assert_eq!(g.len(), 7);
        assert_abs_diff_eq!(g[3], 1e6, epsilon = 1e-6);
    }

    fn synthetic(a: f64, b: f64, c: f64) -> FidelityCurve {
        let points = (0..8)
            .map(|i| {
                let s = 3.0 + 0.5 * i as f64;
                FidelityPoint {
                    sweeps: 10f64.powf(s),
                    time_ns: 0.0,
                    mean: 1.0 - (a * s * s + b * s + c).exp(),
                    std: 0.0,
                    trials: 1,
                }
            })
            .collect();
        FidelityCurve {
            method: Method::Direct,
            per_shot_ns: 2500.0,
            points,
        }
    }

    #[test]
    fn fit_recovers_generating_constants() {
        for (a, b, c) in [(-0.31, 1.78, -3.47), (-0.33, 1.45, -1.28)] {
            let f = fit_fidelity_curve(&synthetic(a, b, c), FitModel::Sweeps).unwrap();
            assert_abs_diff_eq!(f.a, a, epsilon = 1e-6);
            assert_abs_diff_eq!(f.b, b, epsilon = 1e-6);
            assert_abs_diff_eq!(f.c, c, epsilon = 1e-6);
            let t = fit_fidelity_curve(&synthetic(a, b, c), FitModel::Time).unwrap();
            assert_abs_diff_eq!(t.a, a, epsilon = 1e-6);
            assert_abs_diff_eq!(t.delta, 2500f64.log10(), epsilon = 1e-12);
        }
    }

    #[test]
    fn flat_curve_fits_constant() {
        let mut curve = synthetic(0.0, 0.0, 0.5f64.ln());
        curve.points.iter_mut().for_each(|p| p.mean = 0.5);
        let f = fit_fidelity_curve(&curve, FitModel::Sweeps).unwrap();
        assert_abs_diff_eq!(f.a, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.b, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.c, 0.5f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn fit_needs_four_usable_points() {
        let mut curve = synthetic(-0.31, 1.78, -3.47);
        for p in curve.points.iter_mut().skip(3) {
            p.mean = 1.0;
        }
        assert!(matches!(fit_fidelity_curve(&curve, FitModel::Sweeps), Err(StudyError::DegenerateFit(_))));
    }

    #[test]
    fn time_to_fidelity_branches() {
        let f = FitParams::new(-0.31, 1.78, -3.47, 2500f64.log10(), FitModel::Time);
        assert_abs_diff_eq!(time_to_fidelity(&f, 0.0).unwrap(), 2500.0, epsilon = 1e-9);
        let t = time_to_fidelity(&f, 0.95).unwrap();
        assert_abs_diff_eq!(f.fidelity_at(t.log10()), 0.95, epsilon = 1e-9);
        assert_abs_diff_eq!(speedup(&f, &f, 0.95).unwrap(), 1.0, epsilon = 1e-15);

        let rising = FitParams::new(0.0, -1.0, 0.0, 0.0, FitModel::Sweeps);
        assert_abs_diff_eq!(time_to_fidelity(&rising, 0.9).unwrap(), 10f64.powf(0.1f64.ln().abs()), epsilon = 1e-9);
        let convex = FitParams::new(0.1, -1.0, 0.0, 0.0, FitModel::Sweeps);
        assert_eq!(time_to_fidelity(&convex, 0.9), Err(StudyError::TargetUnreachable(0.9)));
        let flat = FitParams::new(0.0, 0.0, 0.0, 0.0, FitModel::Sweeps);
        assert!(time_to_fidelity(&flat, 0.5).is_err());
        assert!(time_to_fidelity(&flat, 1.0).is_err());
    }

    #[test]
    fn quadratic_fit_is_exact_on_parabola() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x * x - 3.0 * x + 1.0).collect();
        let p = quadratic_fit(&xs, &ys).unwrap();
        assert_abs_diff_eq!(p.as_slice(), [2.0, -3.0, 1.0].as_slice(), epsilon = 1e-10);
    }

    #[test]
    fn mixing_peaks_between_far_fields() {
        let p = SpinSystemParams::default();
        let near = eslac_rate_for_field(&p, 500.0, 0.08).unwrap();
        assert!(near > eslac_rate_for_field(&p, 400.0, 0.08).unwrap());
        assert!(near > eslac_rate_for_field(&p, 600.0, 0.08).unwrap());
        assert!(near <= 0.08);
    }

    fn small_study(method: Method, noise: NoiseModel) -> SweepStudyConfig {
        SweepStudyConfig {
            test_sweeps: vec![1e3, 1e5, 1e7],
            trials: 20,
            noise,
            method,
            seed: 42,
            ..Default::default()
        }
    }

    fn basis() -> BasisSet {
        simulate_basis_traces(&RateModelConfig::default()).unwrap()
    }

    #[test]
    fn noiseless_study_is_perfect() {
        let b = basis();
        for m in [Method::Direct, Method::Traditional] {
            let curve = run_sweep_study(&small_study(m, NoiseModel::None), &b).unwrap();
            for p in &curve.points {
                assert!((1.0 - p.mean).abs() < 1e-8, "{m:?}: {}", p.mean);
            }
        }
    }

    #[test]
    fn study_is_deterministic_and_improves_with_sweeps() {
        let b = basis();
        let cfg = small_study(Method::Direct, NoiseModel::Poisson);
        let a = run_sweep_study(&cfg, &b).unwrap();
        assert_eq!(a, run_sweep_study(&cfg, &b).unwrap());
        assert!(a.points[2].mean > a.points[0].mean);
        assert_eq!(a.points[1].time_ns, 1e5 * 2500.0);
    }

    #[test]
    fn study_config_is_validated() {
        let b = basis();
        let mut cfg = small_study(Method::Direct, NoiseModel::Poisson);
        cfg.calibration_sweeps = 1e4;
        assert!(matches!(run_sweep_study(&cfg, &b), Err(StudyError::InvalidConfig(_))));
        cfg = small_study(Method::Direct, NoiseModel::Poisson);
        cfg.trials = 0;
        assert!(run_sweep_study(&cfg, &b).is_err());
        cfg = small_study(Method::Direct, NoiseModel::Poisson);
        cfg.test_sweeps = vec![1e5, 1e4];
        assert!(run_sweep_study(&cfg, &b).is_err());
    }

    #[test]
    fn interpolated_crossing() {
        let curve = synthetic(-0.31, 1.78, -3.47);
        let s = curve.sweeps_to_fidelity(0.9).unwrap();
        assert!(s > curve.points[0].sweeps && s < curve.points[7].sweeps);
        assert_eq!(curve.sweeps_to_fidelity(0.0), Some(curve.points[0].sweeps));
    }
}
