//! Reproduction harness: mesh families, field choices and the bound tables.
//!
//! An experiment file is TOML with one `[[experiment]]` table per run:
//!
//! ```toml
//! [[experiment]]
//! name = "per1d"
//! sizes = [64, 128, 256]
//! meshes = ["uniform", "dinv"]
//! eps = 0.0625
//! lumping = "both"
//! bounds = ["diag", "geometric"]
//! output = "per1d.csv"
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::assembly::{MassKind, System};
use crate::bounds::{analyze_system, AnalyzeOptions, EigChoice};
use crate::field::{aniso2d_angle, nonper1d_value, per1d_value, TensorField};
use crate::mesh::{
    gen_aligned_strips_2d, gen_equidistributed_1d, gen_groundwater_like, gen_structured_2d, gen_uniform_1d,
    load_mesh, AlignedStripParams, Diagonal, Grading, GroundwaterParams, SimplicialMesh,
};
use crate::spectral::lambda_max_lanczos;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Per1d,
    Nonper1d,
    Zd2d,
    GroundwaterLike,
    Aniso2d,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Per1d => "per1d",
            Family::Nonper1d => "nonper1d",
            Family::Zd2d => "zd2d",
            Family::GroundwaterLike => "groundwater_like",
            Family::Aniso2d => "aniso2d",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Family::Per1d | Family::Nonper1d => 1,
            _ => 2,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per1d" => Ok(Family::Per1d),
            "nonper1d" => Ok(Family::Nonper1d),
            "zd2d" => Ok(Family::Zd2d),
            "groundwater_like" => Ok(Family::GroundwaterLike),
            "aniso2d" => Ok(Family::Aniso2d),
            _ => Err(Error::InvalidArgument(format!("unknown experiment `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lumping {
    Both,
    Full,
    Lumped,
}

impl Lumping {
    pub fn kinds(self) -> &'static [MassKind] {
        match self {
            Lumping::Both => &[MassKind::Full, MassKind::Lumped],
            Lumping::Full => &[MassKind::Full],
            Lumping::Lumped => &[MassKind::Lumped],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Diag,
    Geometric,
    Zhudu,
    Shewchuk,
    Muniform,
    Lanczos,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Diag => "diag",
            BoundKind::Geometric => "geometric",
            BoundKind::Zhudu => "zhudu",
            BoundKind::Shewchuk => "shewchuk",
            BoundKind::Muniform => "muniform",
            BoundKind::Lanczos => "lanczos",
        }
    }
}

fn default_lumping() -> Lumping {
    Lumping::Both
}

fn default_bounds() -> Vec<BoundKind> {
    vec![BoundKind::Diag, BoundKind::Geometric, BoundKind::Zhudu, BoundKind::Shewchuk]
}

fn default_quad() -> usize {
    4
}

/// One experiment. Fields that do not apply to the chosen family are ignored
/// after validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: Family,
    /// Element counts of the 1D families.
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Mesh kinds: `uniform`, `dinv` (1D), `grid`, `aligned` (aniso2d). Empty
    /// selects every kind of the family.
    #[serde(default)]
    pub meshes: Vec<String>,
    /// Grid shapes `NXxNY` of the 2D structured families.
    #[serde(default)]
    pub grids: Vec<String>,
    /// Diagonal patterns for structured grids.
    #[serde(default)]
    pub diagonals: Vec<String>,
    /// Coarse cell counts of the groundwater-like builder.
    #[serde(default)]
    pub cells: Vec<usize>,
    /// Externally generated meshes; missing files produce a warning row.
    #[serde(default)]
    pub mesh_files: Vec<PathBuf>,
    pub eps: Option<f64>,
    pub kappa: Option<f64>,
    /// Diffusion ratio of the low-permeability strips.
    pub low: Option<f64>,
    #[serde(default = "default_lumping")]
    pub lumping: Lumping,
    /// Bound methods per row. `muniform` uses the metric `D⁻¹` and is an upper
    /// bound only on (nearly) `D⁻¹`-uniform meshes.
    #[serde(default = "default_bounds")]
    pub bounds: Vec<BoundKind>,
    #[serde(default = "default_quad")]
    pub quad_order: usize,
    pub lanczos_steps: Option<usize>,
    pub lanczos_security: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    experiment: Vec<ExperimentSpec>,
}

/// Parses an experiment file; every spec is validated.
pub fn parse_experiments(text: &str) -> Result<Vec<ExperimentSpec>> {
    let f: ExperimentFile =
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("experiment file: {e}")))?;
    for s in &f.experiment {
        s.validate()?;
    }
    Ok(f.experiment)
}

pub fn load_experiments(path: impl AsRef<Path>) -> Result<Vec<ExperimentSpec>> {
    parse_experiments(&std::fs::read_to_string(path)?)
}

/// `NXxNY` or `NXxNY:RX,RY` with geometric spacing ratios toward `x = 0`
/// and `y = 0`.
fn parse_grid(s: &str) -> Result<GridShape> {
    let (shape, grading) = match s.split_once(':') {
        Some((a, g)) => (a, Some(g)),
        None => (s, None),
    };
    let (a, b) = shape
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::InvalidArgument(format!("grid `{s}` is not of the form NXxNY[:RX,RY]")))?;
    let p = |t: &str| {
        t.trim().parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad grid size in `{s}`")))
    };
    let grading = match grading {
        None => Grading::Uniform,
        Some(g) => {
            let r: Vec<f64> = g
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidArgument(format!("bad grading in `{s}`")))?;
            match r[..] {
                [rx, ry] if rx > 0.0 && ry > 0.0 => Grading::Geometric(rx, ry),
                _ => return Err(Error::InvalidArgument(format!("grading in `{s}` needs two positive ratios"))),
            }
        }
    };
    Ok(GridShape { nx: p(a)?, ny: p(b)?, grading })
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct GridShape {
    nx: usize,
    ny: usize,
    grading: Grading,
}

impl GridShape {
    fn id(&self) -> String {
        match self.grading {
            Grading::Uniform => format!("{}x{}", self.nx, self.ny),
            Grading::Geometric(rx, ry) => format!("{}x{}:{rx},{ry}", self.nx, self.ny),
        }
    }
}

impl ExperimentSpec {
    /// Desk-scale defaults of each family.
    pub fn default_for(name: Family) -> Self {
        let mut s = ExperimentSpec {
            name,
            sizes: vec![],
            meshes: vec![],
            grids: vec![],
            diagonals: vec![],
            cells: vec![],
            mesh_files: vec![],
            eps: None,
            kappa: None,
            low: None,
            lumping: Lumping::Both,
            bounds: default_bounds(),
            quad_order: 4,
            lanczos_steps: None,
            lanczos_security: None,
            seed: 0,
            output: None,
        };
        match name {
            Family::Per1d | Family::Nonper1d => {
                s.sizes = vec![64, 128, 256, 512, 1024];
                s.meshes = vec!["uniform".into(), "dinv".into()];
                s.eps = Some(1.0 / 16.0);
                s.bounds = vec![BoundKind::Diag, BoundKind::Geometric];
            }
            Family::Zd2d => {
                // the boundary-layer mesh is graded toward y = 0
                s.grids = vec!["32x32".into(), "4x256".into(), "4x16:1,1.88".into()];
                s.diagonals = vec!["right".into()];
                s.bounds.push(BoundKind::Lanczos);
            }
            Family::GroundwaterLike => {
                s.cells = vec![4, 8];
                s.low = Some(1e-6);
                s.bounds.push(BoundKind::Lanczos);
            }
            Family::Aniso2d => {
                s.meshes = vec!["grid".into(), "aligned".into()];
                s.grids = vec!["16x16".into()];
                s.diagonals = vec!["alternating".into()];
                s.kappa = Some(1000.0);
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("{}: {m}", self.name.name())));
        if let Some(n) = self.sizes.iter().find(|&&n| n < 4) {
            return bad(format!("mesh size {n} below 4"));
        }
        for g in &self.grids {
            let GridShape { nx: a, ny: b, .. } = parse_grid(g)?;
            if a * b * 2 < 4 || a == 0 || b == 0 {
                return bad(format!("grid {g} has fewer than 4 elements"));
            }
        }
        for d in &self.diagonals {
            d.parse::<Diagonal>()?;
        }
        if let Some(c) = self.cells.iter().find(|&&c| c < 2) {
            return bad(format!("cell count {c} below 2"));
        }
        let allowed: &[&str] = match self.name {
            Family::Per1d | Family::Nonper1d => &["uniform", "dinv"],
            Family::Aniso2d => &["grid", "aligned"],
            _ => &[],
        };
        if let Some(m) = self.meshes.iter().find(|m| !allowed.contains(&m.as_str())) {
            return bad(format!("mesh kind `{m}` not available"));
        }
        for (v, what) in [(self.eps, "eps"), (self.kappa, "kappa"), (self.low, "low")] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{what} must be positive"));
                }
            }
        }
        if let Some(e) = self.eps {
            if self.name == Family::Nonper1d && e >= 1.0 {
                return bad("eps must be below 1".into());
            }
        }
        if self.kappa.is_some_and(|k| k < 1.0) {
            return bad("kappa must be at least 1".into());
        }
        if self.lanczos_steps == Some(0) || self.lanczos_security.is_some_and(|s| !(s > 0.0)) {
            return bad("Lanczos steps and security must be positive".into());
        }
        if self.quad_order != 1 && self.quad_order != 2 && self.quad_order != 4 {
            return bad(format!("quadrature order {} unsupported", self.quad_order));
        }
        if self.sizes.is_empty()
            && self.grids.is_empty()
            && self.cells.is_empty()
            && self.mesh_files.is_empty()
            && !self.mesh_kinds().contains(&"aligned")
        {
            return bad("no meshes selected".into());
        }
        Ok(())
    }

    pub fn field(&self) -> TensorField {
        let eps = self.eps.unwrap_or(1.0 / 16.0);
        match self.name {
            Family::Per1d => TensorField::Per1d { eps },
            Family::Nonper1d => TensorField::NonPer1d { eps },
            Family::Zd2d => TensorField::identity(2),
            Family::GroundwaterLike => {
                let mut table = BTreeMap::new();
                table.insert(0, crate::small::Mat::identity(2, 2));
                table.insert(1, crate::small::Mat::identity(2, 2) * self.low.unwrap_or(1e-6));
                TensorField::PiecewiseRegion { dim: 2, table }
            }
            Family::Aniso2d => TensorField::Aniso2d { kappa: self.kappa.unwrap_or(1000.0) },
        }
    }

    /// Mesh kinds, falling back to every kind of the family when none are listed.
    fn mesh_kinds(&self) -> Vec<&str> {
        if !self.meshes.is_empty() {
            return self.meshes.iter().map(String::as_str).collect();
        }
        match self.name {
            Family::Per1d | Family::Nonper1d => vec!["uniform", "dinv"],
            Family::Aniso2d => vec!["grid", "aligned"],
            _ => vec![],
        }
    }

    fn mesh_sources(&self) -> Result<Vec<MeshSource>> {
        let mut out = Vec::new();
        match self.name {
            Family::Per1d | Family::Nonper1d => {
                for &n in &self.sizes {
                    for m in self.mesh_kinds() {
                        out.push(if m == "dinv" { MeshSource::Dinv1d(n) } else { MeshSource::Uniform1d(n) });
                    }
                }
            }
            Family::Zd2d => {
                for g in &self.grids {
                    for d in self.diagonal_list()? {
                        out.push(MeshSource::Grid(parse_grid(g)?, d));
                    }
                }
            }
            Family::GroundwaterLike => {
                out.extend(self.cells.iter().map(|&c| MeshSource::Groundwater(c)));
            }
            Family::Aniso2d => {
                for m in self.mesh_kinds() {
                    if m == "aligned" {
                        out.push(MeshSource::Aligned);
                    } else {
                        for g in &self.grids {
                            for d in self.diagonal_list()? {
                                out.push(MeshSource::Grid(parse_grid(g)?, d));
                            }
                        }
                    }
                }
            }
        }
        out.extend(self.mesh_files.iter().cloned().map(MeshSource::File));
        Ok(out)
    }

    fn diagonal_list(&self) -> Result<Vec<Diagonal>> {
        if self.diagonals.is_empty() {
            return Ok(vec![Diagonal::Right]);
        }
        self.diagonals.iter().map(|d| d.parse()).collect()
    }
}

#[derive(Clone, Debug)]
enum MeshSource {
    Uniform1d(usize),
    Dinv1d(usize),
    Grid(GridShape, Diagonal),
    Groundwater(usize),
    Aligned,
    File(PathBuf),
}

impl MeshSource {
    fn id(&self) -> String {
        match self {
            MeshSource::Uniform1d(n) => format!("uniform-{n}"),
            MeshSource::Dinv1d(n) => format!("dinv-{n}"),
            MeshSource::Grid(g, d) => format!("grid-{}-{}", g.id(), diag_name(*d)),
            MeshSource::Groundwater(c) => format!("groundwater-{c}"),
            MeshSource::Aligned => "aligned".into(),
            MeshSource::File(p) => format!("file:{}", p.display()),
        }
    }

    fn build(&self, spec: &ExperimentSpec) -> Result<SimplicialMesh> {
        let eps = spec.eps.unwrap_or(1.0 / 16.0);
        match self {
            MeshSource::Uniform1d(n) => gen_uniform_1d(*n),
            MeshSource::Dinv1d(n) => match spec.name {
                // uniform in the metric D⁻¹: equal ∫ D^{-1/2} per element
                Family::Nonper1d => gen_equidistributed_1d(*n, |x| nonper1d_value(eps, x).recip().sqrt()),
                _ => gen_equidistributed_1d(*n, |x| per1d_value(eps, x).recip().sqrt()),
            },
            MeshSource::Grid(g, d) => gen_structured_2d(g.nx, g.ny, g.grading, *d),
            MeshSource::Groundwater(c) => {
                gen_groundwater_like(&GroundwaterParams { cells: *c, ..GroundwaterParams::default() })
            }
            MeshSource::Aligned => {
                let kappa = spec.kappa.unwrap_or(1000.0);
                let p = AlignedStripParams { stretch: kappa.sqrt(), ..AlignedStripParams::default() };
                gen_aligned_strips_2d(&p, aniso2d_angle)
            }
            MeshSource::File(p) => load_mesh(p),
        }
    }
}

fn diag_name(d: Diagonal) -> &'static str {
    match d {
        Diagonal::Right => "right",
        Diagonal::Left => "left",
        Diagonal::Alternating => "alternating",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundEntry {
    pub method: String,
    pub tau_h_over_s2: f64,
    /// `τ_max / τ_h`
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub experiment: String,
    pub mesh: String,
    /// Number of elements.
    pub n: usize,
    pub n_free: usize,
    pub mass: MassKind,
    pub nonobtuse: bool,
    pub c_star: f64,
    pub lambda_exact: f64,
    pub tau_max_over_s2: f64,
    pub bounds: Vec<BoundEntry>,
    /// Set on rows that could not be computed; all numbers are then NaN.
    pub warning: Option<String>,
}

impl TableRow {
    pub fn bound(&self, method: &str) -> Option<&BoundEntry> {
        self.bounds.iter().find(|b| b.method == method)
    }

    pub fn ratio(&self, method: &str) -> Option<f64> {
        self.bound(method).map(|b| b.ratio)
    }

    fn skipped(spec: &ExperimentSpec, mesh: String, msg: String) -> Self {
        TableRow {
            experiment: spec.name.name().into(),
            mesh,
            n: 0,
            n_free: 0,
            mass: MassKind::Full,
            nonobtuse: false,
            c_star: f64::NAN,
            lambda_exact: f64::NAN,
            tau_max_over_s2: f64::NAN,
            bounds: vec![],
            warning: Some(msg),
        }
    }
}

pub const CSV_HEADER: &str = "experiment,mesh,N,n_free,mass,method,tau_max_over_s2,tau_h_over_s2,ratio,warning";

/// Long-format CSV, one line per row and bound method. Numbers use the
/// shortest round-trip representation.
pub fn rows_to_csv(rows: &[TableRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        if let Some(w) = &r.warning {
            let _ = writeln!(s, "{},{},,,,,,,,\"{}\"", r.experiment, r.mesh, w.replace('"', "'"));
            continue;
        }
        for b in &r.bounds {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:e},{:e},{:e},",
                r.experiment,
                r.mesh,
                r.n,
                r.n_free,
                r.mass.name(),
                b.method,
                r.tau_max_over_s2,
                b.tau_h_over_s2,
                b.ratio
            );
        }
    }
    s
}

fn rows_for_mesh(spec: &ExperimentSpec, src: &MeshSource) -> Result<Vec<TableRow>> {
    let id = src.id();
    let mesh = match src.build(spec) {
        Ok(m) => m,
        Err(Error::Io(e)) if matches!(src, MeshSource::File(_)) => {
            return Ok(vec![TableRow::skipped(spec, id, format!("mesh file unavailable: {e}"))]);
        }
        Err(e) => return Err(e),
    };
    if mesh.dim() != spec.name.dim() {
        return Err(Error::DimensionMismatch(format!("{id} is {}D", mesh.dim())));
    }
    let field = spec.field();
    let sys = System::assemble(&mesh, &field, spec.quad_order)?;
    let metric = spec.bounds.contains(&BoundKind::Muniform).then(|| field.clone().inverse());
    let mut rows = Vec::new();
    for &mass in spec.lumping.kinds() {
        let opts = AnalyzeOptions {
            mass,
            quad_order: spec.quad_order,
            eig: EigChoice::Exact,
            vertex_adjacency: false,
            metric: metric.clone(),
        };
        let rep = analyze_system(&mesh, &sys, &opts)?;
        let ratio = rep.ratio_diag();
        if !(ratio >= 1.0 - 1e-9 && ratio <= rep.c_star * (1.0 + 1e-9)) {
            return Err(Error::Certificate(format!(
                "{id} ({}): τ_max/τ_h = {ratio} outside [1, {}]",
                mass.name(),
                rep.c_star
            )));
        }
        let tau_max = rep.tau_max_over_s2;
        let mut bounds = Vec::new();
        let mut push = |method: BoundKind, tau_h: Option<f64>| {
            if let Some(t) = tau_h {
                bounds.push(BoundEntry { method: method.name().into(), tau_h_over_s2: t, ratio: tau_max / t });
            }
        };
        for &b in &spec.bounds {
            match b {
                BoundKind::Diag => push(b, Some(rep.tau_h_over_s2)),
                BoundKind::Geometric => push(b, Some(rep.tau_geo_over_s2)),
                BoundKind::Zhudu if !mass.is_lumped() => push(b, rep.tau_zhudu_over_s2),
                BoundKind::Shewchuk if mass.is_lumped() => push(b, rep.tau_shewchuk_over_s2),
                BoundKind::Muniform => push(b, rep.lambda_muniform.map(|l| 2.0 / l)),
                BoundKind::Lanczos => {
                    let est = lambda_max_lanczos(
                        sys.mass_of(mass),
                        &sys.stiffness,
                        spec.lanczos_steps.unwrap_or(5),
                        spec.seed,
                        spec.lanczos_security.unwrap_or(1.1),
                    )?;
                    push(b, Some(2.0 / est.value));
                }
                _ => {}
            }
        }
        rows.push(TableRow {
            experiment: spec.name.name().into(),
            mesh: id.clone(),
            n: rep.n_elements,
            n_free: rep.n_free,
            mass,
            nonobtuse: rep.nonobtuse,
            c_star: rep.c_star,
            lambda_exact: rep.lambda_exact,
            tau_max_over_s2: tau_max,
            bounds,
            warning: None,
        });
    }
    Ok(rows)
}

/// Runs one experiment on a single thread.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<TableRow>> {
    run_experiment_with_threads(spec, 1)
}

/// Runs the meshes of one experiment on up to `threads` worker threads. Rows
/// are returned in spec order regardless of scheduling, and every row is
/// computed by deterministic sequential code, so the output does not depend
/// on `threads`.
pub fn run_experiment_with_threads(spec: &ExperimentSpec, threads: usize) -> Result<Vec<TableRow>> {
    spec.validate()?;
    let sources = spec.mesh_sources()?;
    let threads = threads.clamp(1, sources.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Vec<TableRow>>>>> = Mutex::new((0..sources.len()).map(|_| None).collect());
    std::thread::scope(|sc| {
        for _ in 0..threads {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= sources.len() {
                    break;
                }
                let r = rows_for_mesh(spec, &sources[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut rows = Vec::new();
    for r in slots.into_inner().unwrap() {
        rows.extend(r.expect("every slot is filled")?);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LumpingSummary {
    /// `(mesh, τ_max(lumped)/τ_max(full))` in row order.
    pub per_mesh: Vec<(String, f64)>,
    pub min: f64,
    pub max: f64,
}

/// Pairs full and lumped rows by mesh and reports `τ_max(lumped)/τ_max(full)`.
pub fn compare_lumping(rows: &[TableRow]) -> Result<LumpingSummary> {
    let mut full: Vec<(&str, f64)> = Vec::new();
    let mut lumped: BTreeMap<&str, f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.warning.is_none()) {
        let key = r.mesh.as_str();
        let slot = match r.mass {
            MassKind::Full => {
                if full.iter().any(|(m, _)| *m == key) {
                    return Err(Error::InvalidArgument(format!("duplicate full row for {key}")));
                }
                full.push((key, r.tau_max_over_s2));
                continue;
            }
            MassKind::Lumped => lumped.insert(key, r.tau_max_over_s2),
        };
        if slot.is_some() {
            return Err(Error::InvalidArgument(format!("duplicate lumped row for {key}")));
        }
    }
    if full.len() != lumped.len() {
        return Err(Error::InvalidArgument("full and lumped rows do not pair up".into()));
    }
    let mut per_mesh = Vec::with_capacity(full.len());
    for (m, tf) in full {
        let tl = lumped
            .get(m)
            .ok_or_else(|| Error::InvalidArgument(format!("no lumped row for {m}")))?;
        per_mesh.push((m.to_string(), tl / tf));
    }
    if per_mesh.is_empty() {
        return Err(Error::InvalidArgument("no rows to compare".into()));
    }
    let min = per_mesh.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max = per_mesh.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(LumpingSummary { per_mesh, min, max })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub rows: Vec<TableRow>,
    pub lumping: Option<LumpingSummary>,
}

/// Runs every spec, writes one CSV per experiment into `out_dir` (named by
/// `output` or `<name>.csv`) and a combined `summary.json`.
pub fn run_all(specs: &[ExperimentSpec], out_dir: &Path, threads: usize) -> Result<Vec<ExperimentResult>> {
    std::fs::create_dir_all(out_dir)?;
    let mut results = Vec::with_capacity(specs.len());
    for spec in specs {
        let rows = run_experiment_with_threads(spec, threads)?;
        let csv_path = match &spec.output {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => out_dir.join(p),
            None => out_dir.join(format!("{}.csv", spec.name.name())),
        };
        std::fs::write(&csv_path, rows_to_csv(&rows))?;
        let comparable = spec.lumping == Lumping::Both && rows.iter().any(|r| r.warning.is_none());
        let lumping = comparable.then(|| compare_lumping(&rows)).transpose()?;
        results.push(ExperimentResult { name: spec.name.name().into(), rows, lumping });
    }
    let json = serde_json::to_string_pretty(&results).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(out_dir.join("summary.json"), json)?;
    Ok(results)
}
