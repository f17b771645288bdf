use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use bumpy_core::fixtures;
use bumpy_core::flow::geodesic::integrate_geodesic;
use bumpy_core::flow::monodromy::monodromy;
use bumpy_core::flow::poincare::linearized_poincare;
use bumpy_core::geometry::{TorusMetric, ValidationGrid};
use bumpy_core::harness::{
    bumpy_experiment, classify_la, classify_mab, ExperimentConfig, ExperimentKind, Tolerances,
    WindingSpec,
};
use bumpy_core::loopspace::{index_form, initial_state, Loop, KERNEL_TOL_FACTOR};
use bumpy_core::perturbation::{
    break_degeneracy, causal_perturbation, sample_random_perturbation, Sign,
};
use bumpy_core::solver::{build_record, find_closed_geodesic, GeodesicRecord, SolverOptions};

#[derive(Parser)]
#[command(
    name = "bumpy",
    version,
    about = "Closed geodesics and bumpy metrics on flat tori"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for a closed geodesic from a loop file or a line in a winding class.
    Find(FindArgs),
    /// Monodromy and linearized Poincaré map of a closed geodesic.
    Monodromy(LoopArgs),
    /// Galerkin index form and its kernel.
    IndexForm(IndexFormArgs),
    /// Budget-relative membership in M(a, b).
    ClassifyMab(ClassifyArgs),
    /// Budget-relative membership in L(a).
    ClassifyLa(ClassifyArgs),
    /// Perturb a metric: random trigonometric noise, a causal push or degeneracy breaking.
    Perturb(PerturbArgs),
    /// Classify random perturbations of a metric.
    BumpyExperiment(ClassifyArgs),
    /// Write a reference metric as JSON.
    Fixture(FixtureArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Metric JSON file.
    #[arg(long)]
    metric: Option<PathBuf>,
    /// Built-in metric: flat:<dim>, flat-lorentz, hill:<eps>, hill-lorentz:<eps>.
    #[arg(long, conflicts_with = "metric")]
    fixture: Option<String>,
    /// Experiment configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol_newton: Option<f64>,
    #[arg(long)]
    tol_eigen: Option<f64>,
    #[arg(long)]
    tol_kernel: Option<f64>,
    #[arg(long)]
    tol_causal: Option<f64>,
}

#[derive(Args)]
struct FindArgs {
    #[command(flatten)]
    common: Common,
    /// Starting loop (loop or record JSON).
    #[arg(long = "loop", conflicts_with = "winding")]
    loop_file: Option<PathBuf>,
    /// Winding vector, e.g. `1,0`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    winding: Option<Vec<i64>>,
    /// Base point of the starting line.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    base: Option<Vec<f64>>,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Amplitude of the random wobble added to the starting line.
    #[arg(long, default_value_t = 0.02)]
    wobble: f64,
    /// CSV of the converged loop samples.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct LoopArgs {
    #[command(flatten)]
    common: Common,
    /// Closed geodesic (loop or record JSON).
    #[arg(long = "loop")]
    loop_file: PathBuf,
    /// CSV of the geodesic integrated over one period.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct IndexFormArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "loop")]
    loop_file: PathBuf,
    /// Fourier modes per component.
    #[arg(long, default_value_t = 32)]
    modes: usize,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Search all windings with |w_i| ≤ this (ignored with --config).
    #[arg(long, default_value_t = 1)]
    max_winding: i64,
    #[arg(long, default_value_t = 4)]
    seeds_per_class: usize,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    magnitude: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PerturbMode {
    Random,
    Causal,
    Break,
}

#[derive(Args)]
struct PerturbArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    mode: PerturbMode,
    /// Record or loop JSON of the geodesic to act on (causal, break).
    #[arg(long = "loop")]
    loop_file: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-2)]
    magnitude: f64,
    #[arg(long, default_value_t = 2)]
    freq_cap: i32,
    #[arg(long, value_enum, default_value = "plus")]
    sign: SignArg,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 50)]
    budget: usize,
    /// Where to write the perturbed metric.
    #[arg(long)]
    metric_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Plus,
    Minus,
}

#[derive(Args)]
struct FixtureArgs {
    /// flat:<dim>, flat-lorentz, hill:<eps>, hill-lorentz:<eps>.
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

type CliResult<T> = Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn fixture(name: &str) -> CliResult<TorusMetric> {
    let (head, arg) = name
        .split_once(':')
        .map_or((name, None), |(h, a)| (h, Some(a)));
    let num = |default: f64| -> CliResult<f64> {
        arg.map_or(Ok(default), |a| a.parse::<f64>().map_err(err))
    };
    match head {
        "flat" => Ok(fixtures::flat(num(2.0)? as usize)),
        "flat-lorentz" => Ok(fixtures::flat_lorentz()),
        "hill" => Ok(fixtures::hill(num(0.1)?)),
        "hill-lorentz" => Ok(fixtures::hill_lorentz(num(0.1)?)),
        _ => Err(format!("unknown fixture {name}")),
    }
}

impl Common {
    fn config(&self) -> CliResult<Option<ExperimentConfig>> {
        self.config
            .as_deref()
            .map(|p| ExperimentConfig::load(p).map_err(|e| format!("{}: {e}", p.display())))
            .transpose()
    }

    fn metric(&self, cfg: Option<&ExperimentConfig>) -> CliResult<TorusMetric> {
        let g = if let Some(p) = &self.metric {
            TorusMetric::load(p).map_err(|e| format!("{}: {e}", p.display()))?
        } else if let Some(name) = &self.fixture {
            fixture(name)?
        } else if let Some(p) = cfg.and_then(|c| c.metric.as_ref()) {
            // Relative metric paths are resolved against the config file.
            let base = self
                .config
                .as_deref()
                .and_then(Path::parent)
                .unwrap_or(Path::new("."));
            let p = base.join(p);
            TorusMetric::load(&p).map_err(|e| format!("{}: {e}", p.display()))?
        } else {
            return Err(
                "no metric: pass --metric, --fixture or a config with a metric path".into(),
            );
        };
        g.validate(&ValidationGrid::default()).map_err(err)?;
        Ok(g)
    }

    fn tolerances(&self, base: Tolerances) -> Tolerances {
        Tolerances {
            newton_tol: self.tol_newton.unwrap_or(base.newton_tol),
            eigen_tol: self.tol_eigen.unwrap_or(base.eigen_tol),
            kernel_tol: self.tol_kernel.unwrap_or(base.kernel_tol),
            causal_tol: self.tol_causal.unwrap_or(base.causal_tol),
        }
    }

    fn options(&self) -> SolverOptions {
        self.tolerances(Tolerances::default()).solver_options()
    }

    fn emit(&self, body: &str) -> CliResult<()> {
        match &self.out {
            Some(p) => std::fs::write(p, body).map_err(|e| format!("{}: {e}", p.display())),
            None => {
                let mut out = std::io::stdout().lock();
                match writeln!(out, "{body}") {
                    Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.to_string()),
                    _ => Ok(()),
                }
            }
        }
    }
}

/// Accepts either a bare loop file or a geodesic record.
fn read_loop(path: &Path) -> CliResult<Loop> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let inner = value.get("loop").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_csv(path: &Path, header: Vec<String>, rows: Vec<Vec<f64>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(&header).map_err(err)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:e}")))
            .map_err(err)?;
    }
    w.flush().map_err(err)
}

fn pretty(v: &impl serde::Serialize) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(err)
}

fn find(args: FindArgs) -> CliResult<()> {
    let g = args.common.metric(None)?;
    let opts = args.common.options();
    let seed = match (&args.loop_file, &args.winding) {
        (Some(p), _) => read_loop(p)?,
        (None, Some(w)) => {
            if w.len() != g.dim {
                return Err(format!(
                    "winding has {} entries, metric dimension is {}",
                    w.len(),
                    g.dim
                ));
            }
            let base = args.base.clone().unwrap_or_else(|| vec![0.0; g.dim]);
            if base.len() != g.dim {
                return Err("base point has the wrong dimension".into());
            }
            wobbly_line(
                &base,
                w,
                args.samples,
                args.wobble,
                args.common.seed.unwrap_or(0),
            )?
        }
        (None, None) => return Err("pass --loop or --winding".into()),
    };
    let rec = find_closed_geodesic(&g, &seed, &opts).map_err(err)?;
    if let Some(p) = &args.csv {
        write_csv(p, rec.geodesic.csv_header(), rec.geodesic.csv_rows())?;
    }
    args.common.emit(&pretty(&rec)?)
}

/// Straight line plus a small smooth periodic wobble drawn from `seed`.
fn wobbly_line(base: &[f64], w: &[i64], n: usize, amp: f64, seed: u64) -> CliResult<Loop> {
    let dim = base.len();
    // A fixed low-discrepancy phase per component keeps the CLI free of an RNG dependency.
    let phase: Vec<f64> = (0..dim)
        .map(|c| ((seed.wrapping_add(c as u64 + 1)) as f64 * 0.618_033_988_749_895).fract())
        .collect();
    Loop::from_fn(n, w.to_vec(), |t| {
        (0..dim)
            .map(|c| {
                base[c] + w[c] as f64 * t + amp * (std::f64::consts::TAU * (t + phase[c])).sin()
            })
            .collect()
    })
    .map_err(err)
}

fn record_for(g: &TorusMetric, l: Loop, opts: &SolverOptions) -> CliResult<GeodesicRecord> {
    build_record(g, l, Vec::new(), opts).map_err(err)
}

fn monodromy_cmd(args: LoopArgs) -> CliResult<()> {
    let g = args.common.metric(None)?;
    let opts = args.common.options();
    let l = read_loop(&args.loop_file)?;
    let mono = monodromy(&g, &l, opts.rtol).map_err(err)?;
    let g_r = opts.reference(g.dim);
    let poincare = linearized_poincare(&g, &g_r, &mono, opts.causal_tol).ok();
    let rec = record_for(&g, l.clone(), &opts)?;
    if let Some(p) = &args.trajectory {
        let (x0, v0) = initial_state(&l);
        let traj =
            integrate_geodesic(&g, &x0[..g.dim], &v0[..g.dim], 1.0, opts.rtol).map_err(err)?;
        write_csv(p, traj.csv_header(), traj.csv_rows())?;
    }
    let eig: Vec<[f64; 2]> = mono.eigenvalues().iter().map(|z| [z.re, z.im]).collect();
    let body = json!({
        "metric_id": g.id,
        "monodromy": mono,
        "eigenvalues": eig,
        "fixed_dim": mono.fixed_dim(opts.eigen_tol),
        "fixed_singular_values": mono.fixed_space_singular_values(),
        "poincare": poincare.as_ref().map(|p| json!({
            "matrix": (0..p.matrix.nrows()).map(|i| p.matrix.row(i).iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
            "symplectic_defect": p.symplectic_defect,
            "unit_eigenvalue": p.has_unit_eigenvalue(opts.eigen_tol),
        })),
        "verdict": rec.degeneracy,
        "kernel_dim": rec.kernel_dim,
        "residual": rec.residual,
    });
    args.common.emit(&pretty(&body)?)
}

fn index_form_cmd(args: IndexFormArgs) -> CliResult<()> {
    let g = args.common.metric(None)?;
    let opts = args.common.options();
    let mut l = read_loop(&args.loop_file)?;
    if l.n_samples() <= 2 * args.modes {
        l = l
            .resampled((4 * args.modes).next_power_of_two())
            .map_err(err)?;
    }
    let mut form = index_form(&g, &l, args.modes).map_err(err)?;
    if let Some(f) = args.common.tol_kernel {
        form.kernel_tol *= f / KERNEL_TOL_FACTOR;
    }
    let mono = monodromy(&g, &l, opts.rtol).map_err(err)?;
    let eig = form.matrix.clone().symmetric_eigen().eigenvalues;
    let mut eig: Vec<f64> = eig.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let negative = eig.iter().filter(|v| **v < -form.kernel_tol).count();
    let body = json!({
        "metric_id": g.id,
        "modes": form.modes,
        "basis": form.basis_description(),
        "size": form.matrix.nrows(),
        "kernel_tol": form.kernel_tol,
        "kernel_dim": form.kernel_dim(),
        "negative_eigenvalues": negative,
        "smallest_singular_values": form.singular_values.iter().take(8).collect::<Vec<_>>(),
        "lowest_eigenvalues": eig.iter().take(8).collect::<Vec<_>>(),
        "monodromy_fixed_dim": mono.fixed_dim(opts.eigen_tol),
    });
    args.common.emit(&pretty(&body)?)
}

fn classify(args: ClassifyArgs, kind: ExperimentKind) -> CliResult<()> {
    let c = &args.common;
    let loaded = c.config()?;
    let mut cfg = match loaded.clone() {
        Some(cfg) => cfg,
        None => {
            let a = args.a.ok_or("pass --a or --config")?;
            let mut cfg = ExperimentConfig::new(
                kind,
                a,
                args.b.unwrap_or(a),
                WindingSpec::Cube {
                    max_abs: args.max_winding,
                },
            );
            cfg.seeds_per_class = args.seeds_per_class;
            cfg
        }
    };
    cfg.kind = kind;
    if let Some(a) = args.a {
        cfg.a = a;
    }
    if args.b.is_some() {
        cfg.b = args.b;
    }
    if let Some(s) = c.seed {
        cfg.rng_seed = s;
    }
    if args.trials.is_some() {
        cfg.n_trials = args.trials;
    }
    if args.magnitude.is_some() {
        cfg.magnitude = args.magnitude;
    }
    cfg.tolerances = c.tolerances(cfg.tolerances.clone());
    let g = c.metric(loaded.as_ref())?;
    let body = match kind {
        ExperimentKind::Mab => classify_mab(&g, &cfg).and_then(|r| r.to_json()),
        ExperimentKind::La => classify_la(&g, &cfg).and_then(|r| r.to_json()),
        ExperimentKind::BumpyExperiment => bumpy_experiment(&g, &cfg).and_then(|r| r.to_json()),
    }
    .map_err(err)?;
    let out = c.out.clone().or(cfg.output.clone());
    match out {
        Some(p) => std::fs::write(&p, body).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn perturb(args: PerturbArgs) -> CliResult<()> {
    let c = &args.common;
    let g = c.metric(None)?;
    let opts = c.options();
    let seed = c.seed.unwrap_or(0);
    let need_loop = || -> CliResult<GeodesicRecord> {
        let p = args.loop_file.as_ref().ok_or("this mode needs --loop")?;
        let l = read_loop(p)?;
        let rec = find_closed_geodesic(&g, &l, &opts).map_err(err)?;
        Ok(rec)
    };
    let (metric, body) = match args.mode {
        PerturbMode::Random => {
            let m =
                sample_random_perturbation(&g, args.magnitude, args.freq_cap, seed).map_err(err)?;
            let body = json!({ "metric_id": m.id, "base_id": g.id, "seed": seed, "magnitude": args.magnitude });
            (m, body)
        }
        PerturbMode::Causal => {
            let rec = need_loop()?;
            let sign = match args.sign {
                SignArg::Plus => Sign::Plus,
                SignArg::Minus => Sign::Minus,
            };
            let out = causal_perturbation(&g, &rec, sign, args.magnitude, args.radius, &opts)
                .map_err(err)?;
            let body = json!({
                "metric_id": out.metric.id,
                "base_id": g.id,
                "predicted_causal_value": out.predicted,
                "tensor": out.tensor,
                "record": out.record,
            });
            (out.metric, body)
        }
        PerturbMode::Break => {
            let rec = need_loop()?;
            let out = break_degeneracy(&g, &rec, seed, args.budget, args.magnitude, &opts)
                .map_err(err)?;
            let body = json!({
                "metric_id": out.metric.id,
                "base_id": g.id,
                "seed": seed,
                "attempts": out.attempts,
                "perturbations": out.perturbations,
                "iterate_verdict": out.iterate_verdict,
                "record": out.record,
            });
            (out.metric, body)
        }
    };
    if let Some(p) = &args.metric_out {
        metric
            .save(p)
            .map_err(|e| format!("{}: {e}", p.display()))?;
    }
    c.emit(&pretty(&body)?)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Find(a) => find(a),
        Command::Monodromy(a) => monodromy_cmd(a),
        Command::IndexForm(a) => index_form_cmd(a),
        Command::ClassifyMab(a) => classify(a, ExperimentKind::Mab),
        Command::ClassifyLa(a) => classify(a, ExperimentKind::La),
        Command::BumpyExperiment(a) => classify(a, ExperimentKind::BumpyExperiment),
        Command::Perturb(a) => perturb(a),
        Command::Fixture(a) => {
            let body = fixture(&a.name)?.to_json().map_err(err)?;
            match a.out {
                Some(p) => std::fs::write(&p, body).map_err(|e| format!("{}: {e}", p.display())),
                None => {
                    println!("{body}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
