mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nvtrace_core::estimator::EstimatorError;
use nvtrace_core::io::{
    load_config, read_basis, read_records, read_trace, read_xy_csv, write_basis, write_curves_csv,
    write_field_table_csv, write_json, write_records, write_trace, EstimationReport, ModelConfig, SpeedupRow,
    StudyReport, TomographyReport,
};
use nvtrace_core::photodynamics::{add_shot_noise_with, PhotoError};
use nvtrace_core::studies::{fit_log_quadratic, log_grid, StudyError};
use nvtrace_core::tomography::{simulate_records, TomographyError, C64};
use nvtrace_core::{
    estimate_populations, field_dependence_study, fit_fidelity_curve, full_tomography, noise_magnification,
    population_fidelity, run_sweep_study, simulate_basis_traces, speedup, superpose_trace, time_to_fidelity, BasisSet,
    Constraint, DensityMatrix, FitModel, FitParams, Method, NoiseModel, PopulationVector, ReadoutState,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "nvtrace", version, about = "Photon time-trace readout of NV electron-nuclear spin populations")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize)]
struct GlobalArgs {
    /// Model configuration (TOML, or JSON by extension). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override of the excited-state exchange rate per pump cycle.
    #[arg(long, global = true, allow_negative_numbers = true)]
    eslac_rate: Option<f64>,
    /// Shot-noise model.
    #[arg(long, global = true, value_enum)]
    noise: Option<NoiseArg>,
    /// Suppress the summary on stdout.
    #[arg(long, short, global = true)]
    #[serde(skip)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the four basis traces and optional superposition traces.
    Simulate(SimulateArgs),
    /// Estimate populations of a trace against a basis.
    Estimate(EstimateArgs),
    /// Reconstruct a two-qubit density matrix from tomography records.
    Tomo(TomoArgs),
    /// Monte-Carlo fidelity versus sweeps for the direct and traditional methods.
    SweepStudy(SweepStudyArgs),
    /// Noise magnification and sweeps-to-target across magnetic fields.
    FieldScan(FieldScanArgs),
    /// Fit F = 1 - exp(a x^2 + b x + c) and solve for the time to a target fidelity.
    Fit(FitArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum NoiseArg {
    None,
    Poisson,
    Gauss,
}

impl From<NoiseArg> for NoiseModel {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::None => NoiseModel::None,
            NoiseArg::Poisson => NoiseModel::Poisson,
            NoiseArg::Gauss => NoiseModel::TruncatedGaussian,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ConstraintArg {
    Simplex,
    UnitNorm,
}

impl From<ConstraintArg> for Constraint {
    fn from(c: ConstraintArg) -> Self {
        match c {
            ConstraintArg::Simplex => Constraint::Simplex,
            ConstraintArg::UnitNorm => Constraint::UnitNorm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MethodArg {
    Direct,
    Traditional,
    Both,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelArg {
    Sweeps,
    Time,
}

fn parse_population(s: &str) -> Result<PopulationVector, String> {
    s.parse().map_err(|e: nvtrace_core::types::TypeError| e.to_string())
}

fn parse_state(s: &str) -> Result<ReadoutState, String> {
    s.parse().map_err(|e: nvtrace_core::types::TypeError| e.to_string())
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    /// Also write a trace of this population mixture (c0up,c0down,c1up,c1down); repeatable.
    #[arg(long, value_parser = parse_population)]
    superpose: Vec<PopulationVector>,
    /// Sweeps behind each superposition trace.
    #[arg(long, default_value_t = 1e6)]
    sweeps: f64,
}

#[derive(Args, Serialize)]
struct EstimateArgs {
    /// Basis CSV (with its .meta.json sibling).
    #[arg(long)]
    basis: PathBuf,
    /// Trace to analyse (trace CSV, raw t_ns,counts CSV, or JSON).
    #[arg(long)]
    trace: PathBuf,
    /// Sweeps behind the trace. Defaults to the basis calibration sweeps.
    #[arg(long)]
    sweeps: Option<f64>,
    #[arg(long, value_enum)]
    constraint: Option<ConstraintArg>,
    /// Expected populations; adds the population fidelity to the report.
    #[arg(long, value_parser = parse_population)]
    expected: Option<PopulationVector>,
}

#[derive(Args, Serialize)]
struct TomoArgs {
    /// Records JSON to reconstruct.
    #[arg(long, required_unless_present = "state")]
    records: Option<PathBuf>,
    /// Basis state to forward-simulate (0up, 0down, 1up, 1down); with --records, the reference for the fidelity.
    #[arg(long, value_parser = parse_state)]
    state: Option<ReadoutState>,
    /// Basis file supplying the fluorescence levels; simulated from the config when omitted.
    #[arg(long)]
    basis: Option<PathBuf>,
    /// Sweeps per sequence for forward simulation.
    #[arg(long, default_value_t = 1e7)]
    sweeps: f64,
    /// Report the linear-inversion matrix without PSD projection.
    #[arg(long)]
    no_project: bool,
}

#[derive(Args, Serialize)]
struct SweepStudyArgs {
    #[arg(long, value_enum, default_value = "both")]
    method: MethodArg,
    /// Test sweep counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    sweeps_grid: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    constraint: Option<ConstraintArg>,
    /// Fidelity targets for the time and speedup table.
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.95")]
    targets: Vec<f64>,
    /// Basis CSV; simulated from the config when omitted.
    #[arg(long)]
    basis: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct FieldScanArgs {
    /// Fields in G, comma separated.
    #[arg(long, value_delimiter = ',')]
    fields: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    sweeps_grid: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    target: Option<f64>,
}

#[derive(Args, Serialize)]
struct FitArgs {
    /// CSV of (sweeps or time in ns, fidelity) pairs.
    #[arg(long, required_unless_present = "coeffs", conflicts_with = "coeffs")]
    input: Option<PathBuf>,
    /// Known coefficients a,b,c instead of fitting.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    coeffs: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "time")]
    model: ModelArg,
    /// Method whose per-shot duration sets δ for the time model.
    #[arg(long, value_enum, default_value = "direct")]
    method: MethodArg,
    /// Explicit δ, overriding the per-shot value.
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    target: f64,
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        message: message.into(),
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: message.into(),
    }
}

impl From<nvtrace_core::Error> for Failure {
    fn from(e: nvtrace_core::Error) -> Self {
        let code = if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

macro_rules! via_core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                nvtrace_core::Error::from(e).into()
            }
        }
    )*};
}

via_core_error!(PhotoError, EstimatorError, TomographyError, StudyError);

type Outcome<T> = Result<T, Failure>;

/// Shared state of one command run.
struct Run {
    cfg: ModelConfig,
    out: PathBuf,
    rng: ChaCha8Rng,
    quiet: bool,
    written: Vec<PathBuf>,
}

impl Run {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn prepare_out(&self) -> Outcome<()> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| runtime(format!("cannot create output directory {}: {e}", self.out.display())))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn wrote(&mut self, p: PathBuf) {
        self.written.push(p);
    }
}

fn require_file(p: &Path) -> Outcome<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{}: no such file", p.display())))
    }
}

fn base_config(g: &GlobalArgs) -> Outcome<ModelConfig> {
    let mut cfg = match &g.config {
        Some(p) => {
            require_file(p)?;
            load_config(p)?
        }
        None => ModelConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.study.seed = s;
    }
    if let Some(r) = g.eslac_rate {
        cfg.rates.eslac_rate = r;
    }
    if let Some(n) = g.noise {
        cfg.study.noise = n.into();
    }
    Ok(cfg)
}

/// Reads a basis file, or simulates the per-sweep basis from the configured rates.
fn load_or_simulate_basis(cfg: &ModelConfig, path: Option<&Path>) -> Outcome<BasisSet> {
    match path {
        Some(p) => {
            require_file(p)?;
            Ok(read_basis(p)?)
        }
        None => Ok(simulate_basis_traces(&cfg.rates)?),
    }
}

fn per_sweep(basis: &BasisSet) -> Outcome<BasisSet> {
    let s = basis.sweeps_calibration;
    if !(s.is_finite() && s > 0.0) {
        return Err(invalid(format!("basis calibration sweeps must be positive, got {s}")));
    }
    let mut b = basis.scaled(1.0 / s);
    b.sweeps_calibration = 1.0;
    Ok(b)
}

fn simulate(run: &mut Run, args: &SimulateArgs) -> Outcome<()> {
    run.cfg.validate()?;
    if !(args.sweeps.is_finite() && args.sweeps >= 1.0) {
        return Err(invalid(format!("--sweeps must be >= 1, got {}", args.sweeps)));
    }
    for c in &args.superpose {
        if !c.is_on_simplex(PopulationVector::SIMPLEX_TOL) {
            return Err(invalid(format!("--superpose {:?} is not a probability vector", c.0)));
        }
    }
    let s1 = run.cfg.study.calibration_sweeps;
    let expected = simulate_basis_traces(&run.cfg.rates)?;
    let noise = run.cfg.study.noise;
    let mut basis = expected.scaled(s1);
    basis.sweeps_calibration = s1;
    if run.cfg.study.calibration_noise {
        let traces = ReadoutState::ALL.map(|s| add_shot_noise_with(&basis.trace(s), noise, &mut run.rng));
        basis = BasisSet::from_traces(&traces, s1).map_err(nvtrace_core::Error::from)?;
    }

    let mixtures: Vec<_> = args
        .superpose
        .iter()
        .map(|c| {
            superpose_trace(&expected, c).map(|t| add_shot_noise_with(&t.scaled(args.sweeps), noise, &mut run.rng))
        })
        .collect::<Result<_, _>>()?;

    run.prepare_out()?;
    for s in ReadoutState::ALL {
        let p = run.path(&format!("basis_{}.csv", s.slug()));
        write_trace(&p, &basis.trace(s))?;
        run.wrote(p);
    }
    for p in write_basis(&run.path("basis.csv"), &basis)? {
        run.wrote(p);
    }
    for (k, t) in mixtures.iter().enumerate() {
        let p = run.path(&format!("trace_{}.csv", k + 1));
        write_trace(&p, t)?;
        run.wrote(p);
    }
    let t = expected.totals();
    run.say(format!(
        "basis: {} bins of {} ns, counts per sweep {:.4} {:.4} {:.4} {:.4}, contrast {:.4}",
        basis.n_bins(),
        basis.bin_width_ns,
        t[0],
        t[1],
        t[2],
        t[3],
        t[1] / t[3]
    ));
    Ok(())
}

fn estimate(run: &mut Run, args: &EstimateArgs) -> Outcome<()> {
    require_file(&args.basis)?;
    require_file(&args.trace)?;
    let basis = read_basis(&args.basis)?;
    let trace = read_trace(&args.trace)?;
    if (basis.bin_width_ns - trace.bin_width_ns).abs() > 1e-9 * basis.bin_width_ns {
        return Err(invalid(format!(
            "bin width mismatch: basis {} ns, trace {} ns",
            basis.bin_width_ns, trace.bin_width_ns
        )));
    }
    if basis.n_bins() != trace.len() {
        return Err(invalid(format!(
            "bin count mismatch: basis {}, trace {}",
            basis.n_bins(),
            trace.len()
        )));
    }
    let sweeps = args.sweeps.unwrap_or(basis.sweeps_calibration);
    if !(sweeps.is_finite() && sweeps > 0.0) {
        return Err(invalid(format!("--sweeps must be positive, got {sweeps}")));
    }
    let constraint = args.constraint.map(Constraint::from).unwrap_or(run.cfg.study.constraint);
    let unit = per_sweep(&basis)?;
    let est = estimate_populations(&unit, &trace.scaled(1.0 / sweeps), constraint)?;
    let kappa = noise_magnification(&basis)?;
    let fidelity = args
        .expected
        .map(|e| population_fidelity(&e, &est.c))
        .transpose()?;
    let report = EstimationReport {
        c: est.c,
        residual: est.residual,
        constraint_mode: constraint,
        kappa,
        expected: args.expected,
        fidelity,
    };
    run.prepare_out()?;
    let p = run.path("estimate.json");
    write_json(&p, &report)?;
    run.wrote(p);
    let c = est.c.0;
    run.say(format!(
        "c = ({:.6}, {:.6}, {:.6}, {:.6}), kappa {:.2}{}",
        c[0],
        c[1],
        c[2],
        c[3],
        kappa,
        fidelity.map(|f| format!(", fidelity {f:.6}")).unwrap_or_default()
    ));
    Ok(())
}

fn tomo(run: &mut Run, args: &TomoArgs) -> Outcome<()> {
    let records = match &args.records {
        Some(p) => {
            require_file(p)?;
            Some(read_records(p)?)
        }
        None => None,
    };
    let simulated = match (&records, args.state) {
        (None, Some(s)) => {
            run.cfg.rates.validate()?;
            if !(args.sweeps.is_finite() && args.sweeps >= 1.0) {
                return Err(invalid(format!("--sweeps must be >= 1, got {}", args.sweeps)));
            }
            let levels = per_sweep(&load_or_simulate_basis(&run.cfg, args.basis.as_deref())?)?.totals();
            let rho = DensityMatrix::basis(s);
            Some(simulate_records(&rho, &levels, args.sweeps, run.cfg.study.noise, &mut run.rng))
        }
        _ => None,
    };
    let records = records
        .or(simulated.clone())
        .ok_or_else(|| invalid("either --records or --state is required"))?;
    let rec = full_tomography(&records, !args.no_project)?;
    let fidelity = args.state.map(|s| {
        let mut psi = [C64::new(0.0, 0.0); 4];
        psi[s.index()] = C64::new(1.0, 0.0);
        rec.best().fidelity_with_pure(psi)
    });
    let report = TomographyReport::from_reconstruction(&rec, fidelity);

    run.prepare_out()?;
    if let Some(sim) = &simulated {
        let p = run.path("records.json");
        write_records(&p, sim)?;
        run.wrote(p);
    }
    let p = run.path("tomo.json");
    write_json(&p, &report)?;
    run.wrote(p);
    let pops = rec.best().populations().0;
    run.say(format!(
        "diagonal ({:.5}, {:.5}, {:.5}, {:.5}){}",
        pops[0],
        pops[1],
        pops[2],
        pops[3],
        fidelity.map(|f| format!(", fidelity {f:.5}")).unwrap_or_default()
    ));
    Ok(())
}

fn sweep_study(run: &mut Run, args: &SweepStudyArgs) -> Outcome<()> {
    if let Some(g) = &args.sweeps_grid {
        run.cfg.study.test_sweeps = g.clone();
    }
    if let Some(t) = args.trials {
        run.cfg.study.trials = t;
    }
    if let Some(c) = args.constraint {
        run.cfg.study.constraint = c.into();
    }
    run.cfg.validate()?;
    if args.targets.iter().any(|t| !(0.0..1.0).contains(t)) {
        return Err(invalid("--targets must lie in [0, 1)"));
    }
    let basis = load_or_simulate_basis(&run.cfg, args.basis.as_deref())?;
    let methods: &[Method] = match args.method {
        MethodArg::Direct => &[Method::Direct],
        MethodArg::Traditional => &[Method::Traditional],
        MethodArg::Both => &[Method::Direct, Method::Traditional],
    };
    let curves = methods
        .iter()
        .map(|&method| {
            let cfg = nvtrace_core::SweepStudyConfig {
                method,
                ..run.cfg.study.clone()
            };
            run_sweep_study(&cfg, &basis)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fits: Vec<Option<FitParams>> = curves
        .iter()
        .map(|c| fit_fidelity_curve(c, FitModel::Time).ok())
        .collect();
    let time_for = |m: Method, target: f64| {
        let i = methods.iter().position(|&x| x == m)?;
        fits[i].and_then(|f| time_to_fidelity(&f, target).ok())
    };
    let speedups = args
        .targets
        .iter()
        .map(|&target| {
            let direct_ns = time_for(Method::Direct, target);
            let traditional_ns = time_for(Method::Traditional, target);
            let speedup = match (methods.len(), fits.first(), fits.get(1)) {
                (2, Some(Some(d)), Some(Some(t))) => speedup(d, t, target).ok(),
                _ => None,
            };
            SpeedupRow {
                target,
                direct_ns,
                traditional_ns,
                speedup,
            }
        })
        .collect();
    let report = StudyReport {
        config: run.cfg.study.clone(),
        curves,
        fits,
        speedup: speedups,
    };

    run.prepare_out()?;
    let p = run.path("curves.csv");
    write_curves_csv(&p, &report.curves)?;
    run.wrote(p);
    let p = run.path("study.json");
    write_json(&p, &report)?;
    run.wrote(p);
    for c in &report.curves {
        let means: Vec<String> = c.points.iter().map(|p| format!("{:.4}", p.mean)).collect();
        run.say(format!("{:?}: F = [{}]", c.method, means.join(", ")));
    }
    for s in &report.speedup {
        if let Some(x) = s.speedup {
            run.say(format!("speedup at F = {}: {x:.1}", s.target));
        }
    }
    Ok(())
}

fn field_scan(run: &mut Run, args: &FieldScanArgs) -> Outcome<()> {
    let scan = &mut run.cfg.field_scan;
    if let Some(f) = &args.fields {
        scan.fields = f.clone();
    }
    if let Some(t) = args.target {
        scan.target_fidelity = t;
    }
    scan.study = nvtrace_core::SweepStudyConfig {
        test_sweeps: args.sweeps_grid.clone().unwrap_or_else(|| log_grid(1e3, 1e7, 1)),
        trials: args.trials.unwrap_or(run.cfg.study.trials),
        ..run.cfg.study.clone()
    };
    if !(0.0..1.0).contains(&scan.target_fidelity) {
        return Err(invalid("--target must lie in [0, 1)"));
    }
    if scan.fields.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(invalid("fields must be finite and non-negative"));
    }
    run.cfg.rates.validate()?;
    let rows = field_dependence_study(&run.cfg.field_scan, &run.cfg.spin, &run.cfg.rates)?;

    run.prepare_out()?;
    let p = run.path("field_scan.csv");
    write_field_table_csv(&p, &rows)?;
    run.wrote(p);
    let p = run.path("field_scan.json");
    write_json(&p, &rows)?;
    run.wrote(p);
    for r in &rows {
        run.say(format!(
            "{:>6.1} G: mixing {:.4}, kappa {:.2}, sweeps to target {}",
            r.field_g,
            r.mixing,
            r.kappa,
            r.sweeps_to_target.map(|s| format!("{s:.3e}")).unwrap_or_else(|| "-".into())
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    fit: FitParams,
    target: f64,
    /// Abscissa (ns or sweeps) at which the fitted fidelity reaches the target.
    to_target: Option<f64>,
}

fn fit(run: &mut Run, args: &FitArgs) -> Outcome<()> {
    let model = match args.model {
        ModelArg::Sweeps => FitModel::Sweeps,
        ModelArg::Time => FitModel::Time,
    };
    let method = match args.method {
        MethodArg::Direct => Method::Direct,
        MethodArg::Traditional => Method::Traditional,
        MethodArg::Both => return Err(invalid("fit takes a single --method")),
    };
    if !(0.0..1.0).contains(&args.target) {
        return Err(invalid("--target must lie in [0, 1)"));
    }
    run.cfg.study.timing.validate()?;
    let delta = args.delta.unwrap_or(match model {
        FitModel::Sweeps => 0.0,
        FitModel::Time => run.cfg.study.timing.delta(method),
    });
    let params = match (&args.coeffs, &args.input) {
        (Some(k), _) => match k.as_slice() {
            &[a, b, c] => FitParams::new(a, b, c, delta, model),
            _ => return Err(invalid("--coeffs takes exactly three values a,b,c")),
        },
        (None, Some(p)) => {
            require_file(p)?;
            let pts = read_xy_csv(p)?;
            if pts.iter().any(|&(x, _)| !(x > 0.0)) {
                return Err(invalid(format!("{}: abscissae must be positive", p.display())));
            }
            let xs: Vec<f64> = pts.iter().map(|&(x, _)| x.log10() - delta).collect();
            let fs: Vec<f64> = pts.iter().map(|&(_, f)| f).collect();
            let (a, b, c, residual, n_points) = fit_log_quadratic(&xs, &fs)?;
            FitParams {
                a,
                b,
                c,
                delta,
                model,
                residual,
                n_points,
            }
        }
        (None, None) => return Err(invalid("either --input or --coeffs is required")),
    };
    let report = FitReport {
        fit: params,
        target: args.target,
        to_target: time_to_fidelity(&params, args.target).ok(),
    };
    run.prepare_out()?;
    let p = run.path("fit.json");
    write_json(&p, &report)?;
    run.wrote(p);
    run.say(format!(
        "a {:.4}, b {:.4}, c {:.4}, delta {:.3}; F = {} reached at {}",
        params.a,
        params.b,
        params.c,
        params.delta,
        args.target,
        report.to_target.map(|t| format!("{t:.4e}")).unwrap_or_else(|| "never".into())
    ));
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Estimate(_) => "estimate",
        Command::Tomo(_) => "tomo",
        Command::SweepStudy(_) => "sweep-study",
        Command::FieldScan(_) => "field-scan",
        Command::Fit(_) => "fit",
    }
}

fn command_args(c: &Command) -> serde_json::Value {
    let v = match c {
        Command::Simulate(a) => serde_json::to_value(a),
        Command::Estimate(a) => serde_json::to_value(a),
        Command::Tomo(a) => serde_json::to_value(a),
        Command::SweepStudy(a) => serde_json::to_value(a),
        Command::FieldScan(a) => serde_json::to_value(a),
        Command::Fit(a) => serde_json::to_value(a),
    };
    v.expect("arguments serialize")
}

fn execute(cli: &Cli) -> Outcome<()> {
    let started = manifest::now();
    let name = command_name(&cli.command);
    let cfg = base_config(&cli.global)?;
    let seed = cfg.study.seed;
    let mut run = Run {
        rng: ChaCha8Rng::seed_from_u64(seed),
        cfg,
        out: cli.global.out.clone(),
        quiet: cli.global.quiet,
        written: Vec::new(),
    };
    match &cli.command {
        Command::Simulate(a) => simulate(&mut run, a),
        Command::Estimate(a) => estimate(&mut run, a),
        Command::Tomo(a) => tomo(&mut run, a),
        Command::SweepStudy(a) => sweep_study(&mut run, a),
        Command::FieldScan(a) => field_scan(&mut run, a),
        Command::Fit(a) => fit(&mut run, a),
    }?;

    let inputs = serde_json::json!({
        "command": name,
        "config": run.cfg,
        "global": cli.global,
        "arguments": command_args(&cli.command),
    });
    let mut m = RunManifest::new(name, seed, started, inputs);
    for p in &run.written {
        m.add_output(p)
            .map_err(|e| runtime(format!("cannot re-read {}: {e}", p.display())))?;
    }
    m.finished_at = manifest::now();
    let path = RunManifest::path_in(&run.out, name);
    write_json(&path, &m)?;
    run.say(format!("wrote {} files, manifest {}", run.written.len(), path.display()));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
