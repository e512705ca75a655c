use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use p1stab::assembly::{MassKind, System};
use p1stab::bounds::{analyze_system, AnalyzeOptions, EigChoice, StabilityReport};
use p1stab::experiments::{load_experiments, run_all, ExperimentSpec, Family};
use p1stab::field::{parse_field, TensorField};
use p1stab::integrate::{integrate, stability_poly_eval, ChebyshevScheme};
use p1stab::mesh::{
    gen_aligned_strips_2d, gen_equidistributed_1d, gen_groundwater_like, gen_structured_2d, gen_uniform_1d, load_mesh,
    save_mesh, AlignedStripParams, Diagonal, Grading, GroundwaterParams, SimplicialMesh,
};
use p1stab::quality::mesh_quality_summary;
use p1stab::spectral::dominant_eigenpair;
use p1stab::sparse::MassSolver;
use p1stab::Error;

#[derive(Parser, Debug)]
#[command(name = "p1stab", version, about = "Explicit time-step stability analysis for P1 finite elements")]
struct Cli {
    /// Worker threads for experiment runs.
    #[arg(long, global = true, env = "P1STAB_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a mesh file.
    Gen(GenArgs),
    /// Compute the exact eigenvalue, all bounds and time steps for a mesh.
    Analyze(AnalyzeArgs),
    /// Run the Chebyshev scheme and monitor both norms.
    Integrate(IntegrateArgs),
    /// Reproduce the bound tables for one or more mesh families.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
#[group(id = "generator", required = true, multiple = false)]
struct GenSource {
    /// Uniform mesh of (0, 1) with N elements.
    #[arg(long, value_name = "N")]
    uniform1d: Option<usize>,
    /// Mesh of (0, 1) with N elements, uniform in the metric given by the inverse of `--field`.
    #[arg(long, value_name = "N")]
    equi1d: Option<usize>,
    /// Structured grid of the unit square, e.g. `32x32`.
    #[arg(long, value_name = "NXxNY")]
    grid: Option<String>,
    /// Aquifer-like domain with the given number of coarse cells per interval.
    #[arg(long, value_name = "CELLS")]
    groundwater: Option<usize>,
    /// Streamline-aligned strip mesh of the anisotropic 2D field.
    #[arg(long)]
    aligned: bool,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    source: GenSource,
    /// Diffusion field (used by `--equi1d`).
    #[arg(long, default_value = "identity")]
    field: String,
    /// Diagonal pattern of `--grid`.
    #[arg(long, default_value = "right")]
    diag: String,
    /// Geometric spacing ratios `RX,RY` of `--grid`.
    #[arg(long, value_name = "RX,RY")]
    grading: Option<String>,
    /// Anisotropy used to stretch `--aligned` elements.
    #[arg(long, default_value_t = 1000.0)]
    kappa: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
#[group(id = "mesh_source", required = true, multiple = false)]
struct MeshSource {
    /// Mesh file.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Generator spec: `uniform1d:N`, `equi1d:N`, `grid:NXxNY[:diag]`, `groundwater:CELLS` or `aligned`.
    #[arg(long, value_name = "SPEC")]
    generate: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mass {
    Full,
    Lumped,
}

impl From<Mass> for MassKind {
    fn from(m: Mass) -> Self {
        match m {
            Mass::Full => MassKind::Full,
            Mass::Lumped => MassKind::Lumped,
        }
    }
}

#[derive(Args, Debug)]
struct ProblemArgs {
    #[command(flatten)]
    source: MeshSource,
    /// Diffusion field, `name:key=value,...`.
    #[arg(long, default_value = "identity")]
    field: String,
    #[arg(long, value_enum, default_value = "full")]
    mass: Mass,
    /// Shorthand for `--mass lumped`.
    #[arg(long, conflicts_with = "mass")]
    lumped: bool,
    /// Quadrature order for element averages of the field.
    #[arg(long, default_value_t = 4)]
    quad: usize,
    /// Summation is always performed in a fixed order, so assembly is
    /// bit-stable with or without this flag.
    #[arg(long)]
    reproducible: bool,
}

impl ProblemArgs {
    fn mass_kind(&self) -> MassKind {
        if self.lumped {
            MassKind::Lumped
        } else {
            self.mass.into()
        }
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Replace the exact eigenvalue by a Lanczos estimate with this many steps.
    #[arg(long, value_name = "STEPS", conflicts_with = "power")]
    lanczos: Option<usize>,
    /// Factor applied to the Lanczos estimate.
    #[arg(long, default_value_t = 1.0, requires = "lanczos")]
    security: f64,
    /// Use power iteration with this relative tolerance.
    #[arg(long, value_name = "TOL")]
    power: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use vertex instead of face adjacency in the neighbour volume ratio.
    #[arg(long)]
    vertex_adjacency: bool,
    /// Metric for the M-uniform bound, e.g. `inv:aniso2d:kappa=1000`.
    #[arg(long)]
    metric: Option<String>,
    /// Fail with exit code 3 if the certified lower bound exceeds this eigenvalue estimate.
    #[arg(long, value_name = "LAMBDA")]
    check_estimate: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Include per-element quality measures in JSON output.
    #[arg(long)]
    elements: bool,
    /// Write the output here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Export mass, lumped mass and stiffness matrices (MatrixMarket) into this directory.
    #[arg(long, value_name = "DIR")]
    export: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(id = "step_size", multiple = false)]
struct StepSize {
    /// Step as a fraction of the exact largest stable step.
    #[arg(long, value_name = "F")]
    tau_frac: Option<f64>,
    /// Explicit step size.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args, Debug)]
struct IntegrateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    step: StepSize,
    /// Number of Chebyshev stages.
    #[arg(long, default_value_t = 1)]
    stages: usize,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    steps: u64,
    /// Start from the dominant generalized eigenvector (plus 1e-8 noise).
    #[arg(long)]
    seed_eigvec: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Damping of the stability polynomial.
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    /// Relative tolerance of the monotonicity check.
    #[arg(long, default_value_t = 1e-12)]
    rel_tol: f64,
    /// Write the norm trace CSV here. The L² column uses the stepping mass matrix.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(id = "experiment_source", required = true, multiple = false)]
struct ExperimentSource {
    /// Experiment file with `[[experiment]]` tables.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Run one family with its default parameters.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[command(flatten)]
    source: ExperimentSource,
    /// Output directory for the CSV files and `summary.json`.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

enum Failure {
    Validation(String),
    Certificate(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Certificate(m) => Failure::Certificate(m),
            e => Failure::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    let res = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Integrate(a) => cmd_integrate(a),
        Cmd::Experiment(a) => cmd_experiment(a, threads),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Certificate(m)) => {
            if !m.is_empty() {
                eprintln!("{m}");
            }
            ExitCode::from(3)
        }
    }
}

fn bad(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), Failure> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| bad(format!("grid `{s}` is not of the form NXxNY")))?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|_| bad(format!("bad grid size in `{s}`")));
    Ok((p(a)?, p(b)?))
}

fn equidistributed(n: usize, field: &str) -> std::result::Result<SimplicialMesh, Failure> {
    let f = parse_field(field, 1)?;
    let probe = p1stab::field::ElementRef { id: 0, region: None };
    // the metric D⁻¹ has density D^{-1/2}; evaluation errors surface as NaN and are caught below
    let mesh = gen_equidistributed_1d(n, |x| match f.eval(&[x], probe) {
        Ok(d) => 1.0 / d[(0, 0)].sqrt(),
        Err(_) => f64::NAN,
    })?;
    Ok(mesh)
}

fn generate(spec: &str, field: &str) -> std::result::Result<SimplicialMesh, Failure> {
    let mut parts = spec.split(':');
    let kind = parts.next().unwrap_or("");
    let arg = parts.next();
    let extra = parts.next();
    let num = |a: Option<&str>| -> std::result::Result<usize, Failure> {
        a.ok_or_else(|| bad(format!("generator `{kind}` needs a size")))?
            .parse()
            .map_err(|_| bad(format!("bad size in `{spec}`")))
    };
    let mesh = match kind {
        "uniform1d" => gen_uniform_1d(num(arg)?)?,
        "equi1d" => equidistributed(num(arg)?, field)?,
        "grid" => {
            let (nx, ny) = parse_grid(arg.ok_or_else(|| bad("grid generator needs NXxNY"))?)?;
            let diag: Diagonal = extra.unwrap_or("right").parse()?;
            gen_structured_2d(nx, ny, Grading::Uniform, diag)?
        }
        "groundwater" => gen_groundwater_like(&GroundwaterParams { cells: num(arg)?, ..Default::default() })?,
        "aligned" => gen_aligned_strips_2d(&AlignedStripParams::default(), p1stab::field::aniso2d_angle)?,
        _ => return Err(bad(format!("unknown generator `{spec}`"))),
    };
    Ok(mesh)
}

fn cmd_gen(a: GenArgs) -> CmdResult {
    let s = &a.source;
    let mesh = if let Some(n) = s.uniform1d {
        gen_uniform_1d(n)?
    } else if let Some(n) = s.equi1d {
        equidistributed(n, &a.field)?
    } else if let Some(g) = &s.grid {
        let (nx, ny) = parse_grid(g)?;
        let grading = match &a.grading {
            None => Grading::Uniform,
            Some(r) => {
                let v: Vec<f64> = r
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(format!("bad grading `{r}`")))?;
                match v[..] {
                    [rx, ry] => Grading::Geometric(rx, ry),
                    _ => return Err(bad("grading needs RX,RY")),
                }
            }
        };
        gen_structured_2d(nx, ny, grading, a.diag.parse()?)?
    } else if let Some(c) = s.groundwater {
        gen_groundwater_like(&GroundwaterParams { cells: c, ..Default::default() })?
    } else {
        let p = AlignedStripParams { stretch: a.kappa.sqrt(), ..Default::default() };
        gen_aligned_strips_2d(&p, p1stab::field::aniso2d_angle)?
    };
    save_mesh(&mesh, &a.output)?;
    let vols: Vec<f64> = (0..mesh.n_elements()).map(|k| mesh.volume(k)).collect();
    let min = vols.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vols.iter().copied().fold(0.0, f64::max);
    println!(
        "wrote {}: dim {}, {} nodes, {} elements, {} free nodes, |K| in [{min:e}, {max:e}]",
        a.output.display(),
        mesh.dim(),
        mesh.n_nodes(),
        mesh.n_elements(),
        mesh.n_free()
    );
    Ok(())
}

fn load_problem(p: &ProblemArgs) -> std::result::Result<(SimplicialMesh, TensorField, System), Failure> {
    let mesh = match (&p.source.mesh, &p.source.generate) {
        (Some(path), _) => load_mesh(path)?,
        (None, Some(spec)) => generate(spec, &p.field)?,
        (None, None) => return Err(bad("no mesh given")),
    };
    let field = parse_field(&p.field, mesh.dim())?;
    let sys = System::assemble(&mesh, &field, p.quad)?;
    Ok((mesh, field, sys))
}

#[derive(Serialize)]
struct QualityOut {
    metric: String,
    h_global: f64,
    vol_domain: f64,
    max_q_eq: f64,
    max_q_ali: f64,
    max_q_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    elements: Option<Vec<p1stab::quality::ElementQuality>>,
}

#[derive(Serialize)]
struct AnalyzeOut {
    n_nodes: usize,
    field: String,
    reproducible: bool,
    #[serde(flatten)]
    report: StabilityReport,
    ratio_diag: f64,
    ratio_geometric: f64,
    ratio_zhudu: Option<f64>,
    ratio_shewchuk: Option<f64>,
    quality: QualityOut,
}

fn cmd_analyze(a: AnalyzeArgs) -> CmdResult {
    let (mesh, field, sys) = load_problem(&a.problem)?;
    if let Some(dir) = &a.export {
        std::fs::create_dir_all(dir)?;
        sys.mass.write_matrix_market(dir.join("mass.mtx"))?;
        sys.lumped.write_matrix_market(dir.join("lumped.mtx"))?;
        sys.stiffness.write_matrix_market(dir.join("stiffness.mtx"))?;
    }
    let eig = match (a.lanczos, a.power) {
        (Some(steps), _) => EigChoice::Lanczos { steps, seed: a.seed, security: a.security },
        (None, Some(tol)) => EigChoice::Power { tol },
        (None, None) => EigChoice::Exact,
    };
    let metric = a.metric.as_deref().map(|m| parse_field(m, mesh.dim())).transpose()?;
    let opts = AnalyzeOptions {
        mass: a.problem.mass_kind(),
        quad_order: a.problem.quad,
        eig,
        vertex_adjacency: a.vertex_adjacency,
        metric,
    };
    let report = analyze_system(&mesh, &sys, &opts)?;
    let out = match a.format {
        Format::Csv => format!("{}\n{}", StabilityReport::CSV_HEADER, report.to_csv_rows()),
        Format::Json => {
            let qmetric = field.clone().inverse();
            let q = mesh_quality_summary(&mesh, &qmetric, a.problem.quad)?;
            let o = AnalyzeOut {
                n_nodes: mesh.n_nodes(),
                field: a.problem.field.clone(),
                reproducible: a.problem.reproducible,
                ratio_diag: report.ratio_diag(),
                ratio_geometric: report.ratio_geo(),
                ratio_zhudu: report.ratio_zhudu(),
                ratio_shewchuk: report.ratio_shewchuk(),
                quality: QualityOut {
                    metric: format!("inv:{}", a.problem.field),
                    h_global: q.h_global,
                    vol_domain: q.vol_domain,
                    max_q_eq: q.max_q_eq,
                    max_q_ali: q.max_q_ali,
                    max_q_m: q.max_q_m,
                    elements: a.elements.then_some(q.elements),
                },
                report: report.clone(),
            };
            serde_json::to_string_pretty(&o).map_err(|e| bad(e.to_string()))? + "\n"
        }
    };
    match &a.output {
        Some(p) => std::fs::write(p, out)?,
        None => print!("{out}"),
    }
    if let Some(est) = a.check_estimate {
        if report.lambda_diag_lower > est {
            return Err(Failure::Certificate(format!(
                "estimate {est:e} is below the certified lower bound {:e}; a step based on it is unstable",
                report.lambda_diag_lower
            )));
        }
    }
    Ok(())
}

fn cmd_integrate(a: IntegrateArgs) -> CmdResult {
    let (_mesh, _field, sys) = load_problem(&a.problem)?;
    let kind = a.problem.mass_kind();
    let scheme = ChebyshevScheme::new(a.stages, a.damping, kind)?;
    let mt = sys.mass_of(kind);
    let (lambda, eigvec) = dominant_eigenpair(mt, &sys.stiffness)?;
    let tau_max = scheme.tau_max(lambda);
    let tau = match (a.step.tau, a.step.tau_frac) {
        (Some(t), _) => t,
        (None, Some(f)) => f * tau_max,
        (None, None) => tau_max,
    };
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(bad("step size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let u0: Vec<f64> = if a.seed_eigvec {
        eigvec.iter().map(|v| v + 1e-8 * rng.gen_range(-1.0..1.0)).collect()
    } else {
        (0..sys.dofs.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let solver = MassSolver::new(mt)?;
    // the scheme is contractive in the norm of the mass matrix it steps with
    let trace = integrate(&scheme, &solver, mt, &sys.stiffness, &u0, tau, a.steps as usize)?;
    if let Some(p) = &a.trace {
        std::fs::write(p, trace.to_csv())?;
    }
    let amp = stability_poly_eval(&scheme, -tau * lambda).abs();
    println!(
        "s = {}, mass = {}, lambda = {lambda:e}, tau = {tau:e} ({:.6} tau_max), |R(-tau lambda_max)| = {amp:.6}",
        a.stages,
        kind.name(),
        tau / tau_max
    );
    match (trace.overflow_step, trace.first_increase(a.rel_tol)) {
        (None, None) => {
            let n = trace.l2.len() - 1;
            println!(
                "PASS: L2 {:e} -> {:e}, energy {:e} -> {:e} over {n} steps",
                trace.l2[0], trace.l2[n], trace.energy[0], trace.energy[n]
            );
            Ok(())
        }
        (overflow, first) => {
            let n = trace.energy.len() - 1;
            let growth = trace.energy[n] / trace.energy[0];
            let mut msg = format!(
                "FAIL: norms increase first at step {}; energy grew by {growth:e} over {n} steps",
                first.or(overflow).unwrap_or(0)
            );
            if let Some(o) = overflow {
                msg += &format!("; overflow at step {o}");
            }
            println!("{msg}");
            Err(Failure::Certificate(String::new()))
        }
    }
}

fn cmd_experiment(a: ExperimentArgs, threads: usize) -> CmdResult {
    let specs = match (&a.source.spec, &a.source.name) {
        (Some(p), _) => load_experiments(p)?,
        (None, Some(n)) => vec![ExperimentSpec::default_for(n.parse::<Family>()?)],
        (None, None) => return Err(bad("no experiment given")),
    };
    let results = run_all(&specs, &a.out, threads)?;
    for r in &results {
        let worst = r
            .rows
            .iter()
            .filter_map(|row| row.ratio("diag"))
            .fold(f64::NEG_INFINITY, f64::max);
        print!("{}: {} rows, max diag ratio {worst:.4}", r.name, r.rows.len());
        if let Some(l) = &r.lumping {
            print!(", lumped/full tau_max in [{:.3}, {:.3}]", l.min, l.max);
        }
        println!();
    }
    println!("wrote {}", a.out.join("summary.json").display());
    Ok(())
}
