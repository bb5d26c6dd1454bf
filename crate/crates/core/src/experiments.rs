//! Declarative experiment runs: sweeps of generated measures through the
//! energy, selection, operator, oscillation and reflectionless machinery,
//! written out as CSV, plus the Wolff-versus-CZO equivalence experiment.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{wolff_dyadic, wolff_report};
use crate::error::{Error, Result};
use crate::lattice::{Cube, LatticeView};
use crate::measure::{cantor_ratio, generate, Family, Measure, MeasureSpec};
use crate::operators::{operator_norm, sup_norm, Bump, Kernel, KernelSpec, TestFamily, DEFAULT_ITERS};
use crate::oscillation::{goal_a_test, Pairing, ThetaResult};
use crate::reflectionless::{interior_window, reflectionless_defect_along, verify_structure, StructureHypothesis, Violation};
use crate::selection::{doubling_check, select_downward, select_upward, BunchOptions, SelectionResult};
use crate::stats::linear_fit;

pub const CONFIG_VERSION: u32 = 1;

/// Top-level run description, read from JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub measures: Vec<MeasureEntry>,
    #[serde(default)]
    pub tasks: Vec<Task>,
    /// Seeds for the randomized tasks; `[0]` when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub equivalence: Option<EquivalenceConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureEntry {
    pub id: String,
    pub spec: MeasureSpec,
    #[serde(default)]
    pub sweep: Sweep,
}

/// Values substituted into a measure spec; every combination is a point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Cantor generation, or grid resolution for the other generated families.
    #[serde(default)]
    pub n: Vec<u32>,
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub eps: Vec<f64>,
    /// Dilation `A` for the oscillation task.
    #[serde(default)]
    pub a: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    Wolff {},
    CzoNorm {
        /// `riesz`, `smooth:<M>` or `random:<M>,<n0>`.
        kernel: String,
        #[serde(default = "default_iters")]
        iters: usize,
    },
    Select {
        #[serde(default = "default_dilation")]
        doubling_m: f64,
    },
    Theta {
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "default_family")]
        family: String,
        #[serde(default)]
        pairing: Pairing,
        #[serde(default)]
        delta: f64,
    },
    Reflect {
        /// Support radii of the bumps used for the defect.
        radii: Vec<f64>,
        #[serde(default)]
        hypothesis: Option<StructureHypothesis>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Wolff {} => "wolff",
            Task::CzoNorm { .. } => "czo_norm",
            Task::Select { .. } => "select",
            Task::Theta { .. } => "theta",
            Task::Reflect { .. } => "reflect",
        }
    }

    /// Position in the pipeline measure → energy → selection → operators →
    /// oscillation → reflectionless.
    fn stage(&self) -> u8 {
        match self {
            Task::Wolff {} => 0,
            Task::Select { .. } => 1,
            Task::CzoNorm { .. } => 2,
            Task::Theta { .. } => 3,
            Task::Reflect { .. } => 4,
        }
    }
}

fn default_iters() -> usize {
    DEFAULT_ITERS
}
fn default_dilation() -> f64 {
    3.0
}
fn default_a() -> f64 {
    2.0
}
fn default_family() -> String {
    "1,2/0.25,0.75".into()
}
fn default_tol() -> f64 {
    1e-6
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let mut ids = std::collections::BTreeSet::new();
        for m in &self.measures {
            if !ids.insert(&m.id) {
                return Err(Error::Config(format!("duplicate measure id {:?}", m.id)));
            }
            if !m.sweep.n.is_empty() && sweep_slot(&m.spec.family).is_none() {
                return Err(Error::Config(format!("measure {:?}: family has no generation or resolution to sweep", m.id)));
            }
        }
        for t in &self.tasks {
            match t {
                Task::CzoNorm { kernel, .. } => {
                    kernel.parse::<KernelSpec>()?;
                }
                Task::Theta { family, a, .. } => {
                    family.parse::<TestFamily>()?;
                    if !(*a > 1.0) {
                        return Err(Error::Config(format!("theta: A must exceed 1, got {a}")));
                    }
                }
                Task::Reflect { radii, .. } if radii.is_empty() => {
                    return Err(Error::Config("reflect: needs at least one bump radius".into()));
                }
                _ => {}
            }
        }
        if let Some(eq) = &self.equivalence {
            eq.validate()?;
        }
        Ok(())
    }

    fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![0]
        } else {
            self.seeds.clone()
        }
    }
}

/// The generation or resolution field of a family, if it has one.
fn sweep_slot(f: &Family) -> Option<u32> {
    match f {
        Family::Cantor { generation, .. } => Some(*generation),
        Family::LebesgueCube { resolution, .. }
        | Family::LebesgueBall { resolution, .. }
        | Family::PlaneLattice { resolution, .. } => Some(*resolution),
        Family::CustomPoints { .. } => None,
    }
}

fn with_n(f: &Family, n: u32) -> Family {
    let mut f = f.clone();
    match &mut f {
        Family::Cantor { generation, .. } => *generation = n,
        Family::LebesgueCube { resolution, .. }
        | Family::LebesgueBall { resolution, .. }
        | Family::PlaneLattice { resolution, .. } => *resolution = n,
        Family::CustomPoints { .. } => {}
    }
    f
}

/// One measure of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    /// Measure id plus any swept `s`, `eps` or `A`.
    pub id: String,
    pub n: u32,
    pub spec: MeasureSpec,
    pub a: Option<f64>,
}

impl MeasureEntry {
    pub fn points(&self) -> Vec<SweepPoint> {
        let ns: Vec<Option<u32>> = if self.sweep.n.is_empty() { vec![None] } else { self.sweep.n.iter().map(|&n| Some(n)).collect() };
        let ss: Vec<Option<f64>> = if self.sweep.s.is_empty() { vec![None] } else { self.sweep.s.iter().map(|&v| Some(v)).collect() };
        let es: Vec<Option<f64>> = if self.sweep.eps.is_empty() { vec![None] } else { self.sweep.eps.iter().map(|&v| Some(v)).collect() };
        let as_: Vec<Option<f64>> = if self.sweep.a.is_empty() { vec![None] } else { self.sweep.a.iter().map(|&v| Some(v)).collect() };
        let mut out = Vec::new();
        for &s in &ss {
            for &e in &es {
                for &a in &as_ {
                    for &n in &ns {
                        let mut spec = self.spec.clone();
                        let mut id = self.id.clone();
                        let mut tags = Vec::new();
                        if let Some(s) = s {
                            spec.s = s;
                            tags.push(format!("s={s}"));
                        }
                        if let Some(e) = e {
                            spec.eps = e;
                            tags.push(format!("eps={e}"));
                        }
                        if let Some(a) = a {
                            tags.push(format!("A={a}"));
                        }
                        if !tags.is_empty() {
                            id = format!("{id}[{}]", tags.join(";"));
                        }
                        if let Some(n) = n {
                            spec.family = with_n(&spec.family, n);
                        }
                        let n = sweep_slot(&spec.family).unwrap_or(0);
                        out.push(SweepPoint { id, n, spec, a });
                    }
                }
            }
        }
        out
    }
}

/// Locale-independent float text that round-trips: plain decimals in the
/// usual range, exponent notation for very small or very large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    let m = x.abs();
    if x != 0.0 && m.is_finite() && !(1e-4..1e15).contains(&m) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// A CSV table held in memory until written.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes to `path` through a temporary file in the same directory.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Per-cube selection table: `cube, mass, density, in_Dsel, in_Dhat, certificate`.
pub fn selection_table(up: &SelectionResult, down: &SelectionResult) -> Table {
    let mut t = Table::new(&["cube", "mass", "density", "in_Dsel", "in_Dhat", "certificate"]);
    for (i, c) in up.cubes.iter().enumerate() {
        let in_up = up.selected[i];
        let in_down = in_up && down.is_selected(&c.cube);
        let cert = if in_up {
            down.certificate(&c.cube).map(|c| c.to_string()).unwrap_or_default()
        } else {
            up.certificates[i].as_ref().map(|c| c.to_string()).unwrap_or_default()
        };
        t.push(vec![
            c.cube.to_string(),
            fmt_f64(c.mass),
            fmt_f64(c.density),
            in_up.to_string(),
            in_down.to_string(),
            cert,
        ]);
    }
    t
}

/// Per-(cube, φ) oscillation table: `cube, phi_index, theta, ratio, lp_residual, n_nodes`.
pub fn theta_table(mu: &Measure, results: &[ThetaResult]) -> Table {
    let mut t = Table::new(&["cube", "phi_index", "theta", "ratio", "lp_residual", "n_nodes"]);
    let mut last: Option<&Cube> = None;
    let mut j = 0;
    for r in results {
        if last != Some(&r.cube) {
            j = 0;
            last = Some(&r.cube);
        }
        let scale = r.cube.density(mu) * mu.mass_cube(&r.cube);
        t.push(vec![
            r.cube.to_string(),
            j.to_string(),
            fmt_f64(r.value),
            fmt_f64(if scale > 0.0 { r.value / scale } else { f64::INFINITY }),
            fmt_f64(r.lp_residual),
            r.n_nodes.to_string(),
        ]);
        j += 1;
    }
    t
}

/// Structure violations: `check, location, magnitude`.
pub fn violation_table(violations: &[Violation]) -> Table {
    let mut t = Table::new(&["check", "location", "magnitude"]);
    for v in violations {
        let loc: Vec<String> = v.location.iter().map(|x| fmt_f64(*x)).collect();
        t.push(vec![v.check.clone(), loc.join(" "), fmt_f64(v.magnitude)]);
    }
    t
}

/// Upward and downward selection on the resolved lattice of `mu`.
pub fn select_both(mu: &Measure, view: &LatticeView) -> Result<(SelectionResult, SelectionResult)> {
    let eps = mu.ambient().eps;
    let up = select_upward(mu, view, eps)?;
    let down = select_downward(&up, eps, &BunchOptions::default())?;
    Ok((up, down))
}

/// A failed (point, task) pair; the rest of the sweep still runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub point: String,
    pub n: u32,
    pub task: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    /// Written files, relative to the output directory.
    pub files: Vec<PathBuf>,
    pub errors: Vec<PointError>,
    pub equivalence: Option<EquivalenceReport>,
}

impl RunReport {
    /// Every sweep point ran and every equivalence verdict matches its
    /// expectation.
    pub fn all_pass(&self) -> bool {
        self.errors.is_empty() && self.equivalence.as_ref().map_or(true, |e| e.all_pass())
    }
}

/// Outputs of one (point, task) pair.
enum Output {
    /// Rows for the task's merged CSV.
    Rows(Vec<Vec<String>>),
    /// Merged rows plus a per-point table written to its own file.
    Detailed(Vec<Vec<String>>, Table),
}

/// Runs every task on every sweep point and the equivalence experiment,
/// writing one CSV per task and `summary.json` into `out`.
pub fn run(config: &ExperimentConfig, out: &Path, jobs: usize) -> Result<RunReport> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(|| run_inner(config, out))
}

fn run_inner(config: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let mut report = RunReport {
        name: config.name.clone(),
        ..RunReport::default()
    };
    let points: Vec<SweepPoint> = config.measures.iter().flat_map(MeasureEntry::points).collect();
    let mut tasks: Vec<&Task> = config.tasks.iter().collect();
    tasks.sort_by_key(|t| t.stage());
    let seeds = config.seeds();

    // Measures are built once per point and shared by its tasks.
    let measures: Vec<Result<Measure>> = points.par_iter().map(|p| generate(&p.spec)).collect();
    for (p, m) in points.iter().zip(&measures) {
        if let Err(e) = m {
            log::error!("{} (n = {}): {e}", p.id, p.n);
            report.errors.push(PointError {
                point: p.id.clone(),
                n: p.n,
                task: "measure".into(),
                message: e.to_string(),
            });
        }
    }

    for (ti, task) in tasks.iter().enumerate() {
        let outputs: Vec<Result<Output>> = points
            .par_iter()
            .zip(&measures)
            .map(|(p, m)| match m {
                Ok(mu) => run_task(task, p, mu, &seeds),
                Err(_) => Err(Error::Domain("measure unavailable".into())),
            })
            .collect();
        let name = task.name();
        let stem = if tasks.iter().filter(|t| t.name() == name).count() > 1 { format!("{name}_{ti}") } else { name.to_string() };
        let mut merged = Table::new(header_for(task));
        for ((p, m), o) in points.iter().zip(&measures).zip(outputs) {
            match o {
                Ok(Output::Rows(rows)) => merged.rows.extend(rows),
                Ok(Output::Detailed(rows, table)) => {
                    merged.rows.extend(rows);
                    let dir = out.join(&stem);
                    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    let path = dir.join(format!("{}_n{}.csv", file_safe(&p.id), p.n));
                    table.write(&path)?;
                    report.files.push(relative(out, &path));
                }
                Err(e) if m.is_ok() => {
                    log::error!("{name} on {} (n = {}): {e}", p.id, p.n);
                    report.errors.push(PointError {
                        point: p.id.clone(),
                        n: p.n,
                        task: name.into(),
                        message: e.to_string(),
                    });
                }
                Err(_) => {}
            }
        }
        let path = out.join(format!("{stem}.csv"));
        merged.write(&path)?;
        report.files.push(relative(out, &path));
    }

    if let Some(eq) = &config.equivalence {
        match equivalence_experiment(eq) {
            Ok(r) => {
                let path = out.join("equivalence.csv");
                r.table().write(&path)?;
                report.files.push(relative(out, &path));
                let path = out.join("equivalence_slopes.csv");
                r.slope_table().write(&path)?;
                report.files.push(relative(out, &path));
                report.equivalence = Some(r);
            }
            Err(e) => {
                log::error!("equivalence: {e}");
                report.errors.push(PointError {
                    point: "equivalence".into(),
                    n: 0,
                    task: "equivalence".into(),
                    message: e.to_string(),
                });
            }
        }
    }
    let path = out.join("summary.json");
    report.files.push(relative(out, &path));
    write_atomic(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(report)
}

fn relative(out: &Path, path: &Path) -> PathBuf {
    path.strip_prefix(out).unwrap_or(path).to_path_buf()
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn header_for(task: &Task) -> &'static [&'static str] {
    match task {
        Task::Wolff {} => &[
            "measure_id",
            "n",
            "atoms",
            "total_mass",
            "wolff_integral",
            "wolff_dyadic",
            "dyadic_per_mass",
            "growth_constant",
        ],
        Task::CzoNorm { .. } => &["measure_id", "kernel", "n", "norm", "residual"],
        Task::Select { .. } => &[
            "measure_id",
            "n",
            "cubes",
            "retention_up",
            "retention_down",
            "doubling_max",
            "incomplete",
            "heuristic",
        ],
        Task::Theta { .. } => &["measure_id", "n", "a", "cubes", "min_ratio", "max_lp_residual", "passes"],
        Task::Reflect { .. } => &["measure_id", "n", "defect", "structure", "violations"],
    }
}

fn run_task(task: &Task, p: &SweepPoint, mu: &Measure, seeds: &[u64]) -> Result<Output> {
    let id = p.id.clone();
    let n = p.n.to_string();
    match task {
        Task::Wolff {} => {
            let view = LatticeView::resolved(mu)?;
            let w = wolff_report(mu, &view)?;
            let total = mu.total_mass();
            Ok(Output::Rows(vec![vec![
                id,
                n,
                mu.len().to_string(),
                fmt_f64(total),
                fmt_f64(w.integral_value),
                fmt_f64(w.dyadic_value),
                fmt_f64(w.dyadic_value / total),
                fmt_f64(w.growth_constant),
            ]]))
        }
        Task::CzoNorm { kernel, iters } => {
            let spec: KernelSpec = kernel.parse()?;
            let seeds: &[u64] = if matches!(spec, KernelSpec::Random { .. }) { seeds } else { &seeds[..1] };
            let mut rows = Vec::new();
            for &seed in seeds {
                let k = spec.build(mu.ambient().s, seed)?;
                let (est, _) = sup_norm(&k, mu, *iters, seed)?;
                let label = if matches!(spec, KernelSpec::Random { .. }) { format!("{spec}@{seed}") } else { spec.to_string() };
                rows.push(vec![id.clone(), label, n.clone(), fmt_f64(est.norm), fmt_f64(est.residual)]);
            }
            Ok(Output::Rows(rows))
        }
        Task::Select { doubling_m } => {
            let view = LatticeView::resolved(mu)?;
            let (up, down) = select_both(mu, &view)?;
            let mut dmax: f64 = 0.0;
            for c in up.selected_stats() {
                dmax = dmax.max(doubling_check(mu, &c.cube, *doubling_m)?);
            }
            let row = vec![
                id,
                n,
                up.cubes.len().to_string(),
                fmt_f64(up.retention()),
                fmt_f64(down.retention()),
                fmt_f64(dmax),
                up.incomplete.len().to_string(),
                down.heuristic.len().to_string(),
            ];
            Ok(Output::Detailed(vec![row], selection_table(&up, &down)))
        }
        Task::Theta { a, family, pairing, delta } => {
            let a = p.a.unwrap_or(*a);
            let fam: TestFamily = family.parse()?;
            let view = LatticeView::resolved(mu)?;
            let (_, down) = select_both(mu, &view)?;
            let cubes = down.selected_cubes();
            let rep = goal_a_test(mu, &cubes, &fam, a, *delta, *pairing)?;
            let all: Vec<ThetaResult> = rep.rows.iter().flat_map(|r| r.thetas.iter().cloned()).collect();
            let resid = all.iter().map(|t| t.lp_residual).fold(0.0, f64::max);
            let row = vec![
                id,
                n,
                fmt_f64(a),
                rep.rows.len().to_string(),
                fmt_f64(rep.min_ratio),
                fmt_f64(resid),
                rep.passes().to_string(),
            ];
            Ok(Output::Detailed(vec![row], theta_table(mu, &all)))
        }
        Task::Reflect { radii, hypothesis, tol } => {
            let mut defect: f64 = 0.0;
            for &r in radii {
                let bump = Bump::standard(r)?;
                let window = interior_window(mu, r).ok_or_else(|| Error::Domain(format!("no interior window at margin {r}")))?;
                for axis in 0..mu.dim() {
                    defect = defect.max(reflectionless_defect_along(mu, &bump, &window, axis)?);
                }
            }
            let (status, violations) = match hypothesis {
                Some(h) => {
                    let rep = verify_structure(mu, h, *tol)?;
                    (if rep.passed() { "pass" } else { "fail" }, rep.violations)
                }
                None => ("skipped", Vec::new()),
            };
            let row = vec![id, n, fmt_f64(defect), status.into(), violations.len().to_string()];
            Ok(Output::Detailed(vec![row], violation_table(&violations)))
        }
    }
}

/// How a family in the equivalence experiment is generated from the sweep
/// index `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilyTemplate {
    /// Product Cantor set of the given similarity dimension, generation `n`.
    Cantor { d: usize, dimension: f64 },
    /// Unit cube with `2^n` cells per axis.
    LebesgueCube { d: usize },
}

impl FamilyTemplate {
    pub fn family(&self, n: u32) -> Family {
        match *self {
            FamilyTemplate::Cantor { d, dimension } => Family::Cantor {
                d,
                lambda: cantor_ratio(d, dimension),
                generation: n,
                origin: None,
                scale: 1.0,
            },
            FamilyTemplate::LebesgueCube { d } => Family::LebesgueCube {
                d,
                side: 1.0,
                resolution: 1 << n,
                origin: None,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ViolatesBoth,
    SatisfiesBoth,
    /// One quantity grows while the other stays bounded.
    Cross,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::ViolatesBoth => "violates both",
            Verdict::SatisfiesBoth => "satisfies both",
            Verdict::Cross => "cross",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Growth {
    Growing,
    Bounded,
    Inconclusive,
}

/// Thresholds relative to the reference family's slope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeRule {
    /// Growing when `slope > growing * reference`.
    pub growing: f64,
    /// Bounded when `|slope| < bounded * reference`.
    pub bounded: f64,
}

impl Default for SlopeRule {
    fn default() -> Self {
        SlopeRule {
            growing: 0.5,
            bounded: 0.1,
        }
    }
}

impl SlopeRule {
    pub fn classify(&self, slope: f64, reference: f64) -> Growth {
        if slope > self.growing * reference {
            Growth::Growing
        } else if slope.abs() < self.bounded * reference {
            Growth::Bounded
        } else {
            Growth::Inconclusive
        }
    }
}

pub fn verdict(wolff: Growth, norm: Growth) -> Verdict {
    match (wolff, norm) {
        (Growth::Growing, Growth::Growing) => Verdict::ViolatesBoth,
        (Growth::Bounded, Growth::Bounded) => Verdict::SatisfiesBoth,
        (Growth::Growing, Growth::Bounded) | (Growth::Bounded, Growth::Growing) => Verdict::Cross,
        _ => Verdict::Inconclusive,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceFamily {
    pub id: String,
    pub template: FamilyTemplate,
    pub expected: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceConfig {
    pub s: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Sweep indices; at least four.
    pub n: Vec<u32>,
    /// The first family is the divergent reference.
    pub families: Vec<EquivalenceFamily>,
    #[serde(default)]
    pub rule: SlopeRule,
    #[serde(default = "default_power_iters")]
    pub iters: usize,
    #[serde(default)]
    pub seed: u64,
    /// Smooth kernels whose largest norm is reported alongside the Riesz one.
    #[serde(default)]
    pub smooth_family: Option<String>,
    /// Also run the large-oscillation test on the selected cubes.
    #[serde(default)]
    pub goal_a: bool,
}

fn default_eps() -> f64 {
    0.1
}
fn default_power_iters() -> usize {
    20_000
}

impl EquivalenceConfig {
    /// Dimension-`s` Cantor set (reference), dimension-`(s + 0.3)` Cantor set
    /// and the Lebesgue cube, all in dimension `d`.
    pub fn standard(s: f64, d: usize, n: Vec<u32>) -> Self {
        EquivalenceConfig {
            s,
            eps: default_eps(),
            n,
            families: vec![
                EquivalenceFamily {
                    id: "cantor-dim-s".into(),
                    template: FamilyTemplate::Cantor { d, dimension: s },
                    expected: Verdict::ViolatesBoth,
                },
                EquivalenceFamily {
                    id: "cantor-dim-s+0.3".into(),
                    template: FamilyTemplate::Cantor { d, dimension: s + 0.3 },
                    expected: Verdict::SatisfiesBoth,
                },
                EquivalenceFamily {
                    id: "lebesgue-cube".into(),
                    template: FamilyTemplate::LebesgueCube { d },
                    expected: Verdict::SatisfiesBoth,
                },
            ],
            rule: SlopeRule::default(),
            iters: default_power_iters(),
            seed: 0,
            smooth_family: None,
            goal_a: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0) || self.s.fract() == 0.0 {
            return Err(Error::Config(format!("equivalence needs a positive non-integer s, got {}", self.s)));
        }
        if self.n.len() < 4 {
            return Err(Error::Config("equivalence needs at least four sweep points".into()));
        }
        if self.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sweep indices must increase".into()));
        }
        if self.families.is_empty() {
            return Err(Error::Config("equivalence needs a reference family".into()));
        }
        if let Some(f) = &self.smooth_family {
            f.parse::<TestFamily>()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub n: u32,
    pub atoms: usize,
    pub wolff_per_mass: f64,
    pub riesz_norm: f64,
    pub riesz_norm2: f64,
    pub riesz_residual: f64,
    pub smooth_norm_max: Option<f64>,
    pub retention_up: f64,
    pub retention_down: f64,
    pub goal_a_min_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub id: String,
    pub rows: Vec<EquivalenceRow>,
    pub wolff_slope: f64,
    pub norm2_slope: f64,
    pub wolff_growth: Growth,
    pub norm_growth: Growth,
    pub verdict: Verdict,
    pub expected: Verdict,
}

impl FamilyReport {
    pub fn passes(&self) -> bool {
        self.verdict == self.expected && self.verdict != Verdict::Cross
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub s: f64,
    pub eps: f64,
    pub rule: SlopeRule,
    pub reference: String,
    pub families: Vec<FamilyReport>,
}

impl EquivalenceReport {
    pub fn all_pass(&self) -> bool {
        self.families.iter().all(FamilyReport::passes)
    }

    pub fn family(&self, id: &str) -> Option<&FamilyReport> {
        self.families.iter().find(|f| f.id == id)
    }

    /// One row per (family, n).
    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "family",
            "n",
            "atoms",
            "wolff_per_mass",
            "riesz_norm",
            "riesz_norm2",
            "riesz_residual",
            "smooth_norm_max",
            "retention_up",
            "retention_down",
            "goal_a_min_ratio",
        ]);
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for f in &self.families {
            for r in &f.rows {
                t.push(vec![
                    f.id.clone(),
                    r.n.to_string(),
                    r.atoms.to_string(),
                    fmt_f64(r.wolff_per_mass),
                    fmt_f64(r.riesz_norm),
                    fmt_f64(r.riesz_norm2),
                    fmt_f64(r.riesz_residual),
                    opt(r.smooth_norm_max),
                    fmt_f64(r.retention_up),
                    fmt_f64(r.retention_down),
                    opt(r.goal_a_min_ratio),
                ]);
            }
        }
        t
    }

    /// One row per family with fitted slopes and the verdict.
    pub fn slope_table(&self) -> Table {
        let mut t = Table::new(&[
            "family",
            "wolff_slope",
            "norm2_slope",
            "wolff_growth",
            "norm_growth",
            "verdict",
            "expected",
            "pass",
        ]);
        let g = |g: Growth| format!("{g:?}").to_lowercase();
        for f in &self.families {
            t.push(vec![
                f.id.clone(),
                fmt_f64(f.wolff_slope),
                fmt_f64(f.norm2_slope),
                g(f.wolff_growth),
                g(f.norm_growth),
                f.verdict.to_string(),
                f.expected.to_string(),
                f.passes().to_string(),
            ]);
        }
        t
    }
}

fn equivalence_row(cfg: &EquivalenceConfig, family: Family, n: u32) -> Result<EquivalenceRow> {
    let spec = MeasureSpec {
        s: cfg.s,
        eps: cfg.eps,
        family,
    };
    let mu = generate(&spec)?;
    let view = LatticeView::resolved(&mu)?;
    let total = mu.total_mass();
    let wolff = wolff_dyadic(&mu, &view) / total;
    let (est, _) = sup_norm(&Kernel::Riesz { s: cfg.s }, &mu, cfg.iters, cfg.seed)?;
    if !est.converged {
        log::warn!("power iteration stopped at residual {:e} (n = {n})", est.residual);
    }
    let smooth_norm_max = match &cfg.smooth_family {
        Some(f) => {
            let fam: TestFamily = f.parse()?;
            // The bumps are bounded kernels, so no truncation is needed.
            let eps = 0.5 * mu.min_separation().min(1.0);
            let mut best: f64 = 0.0;
            for b in fam.bumps {
                let k = Kernel::Smooth { s: cfg.s, bump: b };
                best = best.max(operator_norm(&k, &mu, eps, cfg.iters, cfg.seed)?.norm);
            }
            Some(best)
        }
        None => None,
    };
    let (up, down) = select_both(&mu, &view)?;
    let goal_a_min_ratio = if cfg.goal_a {
        let fam: TestFamily = cfg.smooth_family.as_deref().unwrap_or("1,2/0.25,0.75").parse()?;
        let cubes = down.selected_cubes();
        Some(goal_a_test(&mu, &cubes, &fam, 2.0, 0.0, Pairing::Scaled)?.min_ratio)
    } else {
        None
    };
    Ok(EquivalenceRow {
        n,
        atoms: mu.len(),
        wolff_per_mass: wolff,
        riesz_norm: est.norm,
        riesz_norm2: est.norm * est.norm,
        riesz_residual: est.residual,
        smooth_norm_max,
        retention_up: up.retention(),
        retention_down: down.retention(),
        goal_a_min_ratio,
    })
}

/// Sweeps every family over `n`, fits Wolff energy per unit mass and squared
/// Riesz norm against `n`, and classifies each slope relative to the first
/// (reference) family.
pub fn equivalence_experiment(cfg: &EquivalenceConfig) -> Result<EquivalenceReport> {
    cfg.validate()?;
    let jobs: Vec<(usize, u32)> = (0..cfg.families.len()).flat_map(|f| cfg.n.iter().map(move |&n| (f, n))).collect();
    let rows: Vec<Result<EquivalenceRow>> = jobs
        .par_iter()
        .map(|&(f, n)| equivalence_row(cfg, cfg.families[f].template.family(n), n))
        .collect();
    let mut rows = rows.into_iter();
    let xs: Vec<f64> = cfg.n.iter().map(|&n| n as f64).collect();
    let mut fits = Vec::new();
    for fam in &cfg.families {
        let rs: Vec<EquivalenceRow> = rows.by_ref().take(cfg.n.len()).collect::<Result<_>>()?;
        let w: Vec<f64> = rs.iter().map(|r| r.wolff_per_mass).collect();
        let q: Vec<f64> = rs.iter().map(|r| r.riesz_norm2).collect();
        let sw = linear_fit(&xs, &w).ok_or_else(|| Error::Domain("degenerate Wolff fit".into()))?.0;
        let sq = linear_fit(&xs, &q).ok_or_else(|| Error::Domain("degenerate norm fit".into()))?.0;
        fits.push((fam, rs, sw, sq));
    }
    let (ref_w, ref_q) = (fits[0].2, fits[0].3);
    if !(ref_w > 0.0 && ref_q > 0.0) {
        return Err(Error::Domain(format!(
            "reference family {:?} does not grow (slopes {ref_w}, {ref_q})",
            fits[0].0.id
        )));
    }
    let families = fits
        .into_iter()
        .map(|(fam, rows, sw, sq)| {
            let wg = cfg.rule.classify(sw, ref_w);
            let ng = cfg.rule.classify(sq, ref_q);
            FamilyReport {
                id: fam.id.clone(),
                rows,
                wolff_slope: sw,
                norm2_slope: sq,
                wolff_growth: wg,
                norm_growth: ng,
                verdict: verdict(wg, ng),
                expected: fam.expected,
            }
        })
        .collect();
    Ok(EquivalenceReport {
        s: cfg.s,
        eps: cfg.eps,
        rule: cfg.rule,
        reference: cfg.families[0].id.clone(),
        families,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_rule() {
        let r = SlopeRule::default();
        assert_eq!(r.classify(0.6, 1.0), Growth::Growing);
        assert_eq!(r.classify(0.05, 1.0), Growth::Bounded);
        assert_eq!(r.classify(-0.05, 1.0), Growth::Bounded);
        assert_eq!(r.classify(0.3, 1.0), Growth::Inconclusive);
        assert_eq!(verdict(Growth::Growing, Growth::Bounded), Verdict::Cross);
    }

    #[test]
    fn sweep_expansion() {
        let e = MeasureEntry {
            id: "c".into(),
            spec: MeasureSpec {
                s: 0.5,
                eps: 0.1,
                family: Family::Cantor {
                    d: 1,
                    lambda: 0.25,
                    generation: 1,
                    origin: None,
                    scale: 1.0,
                },
            },
            sweep: Sweep {
                n: vec![2, 3],
                s: vec![0.3, 0.4],
                ..Sweep::default()
            },
        };
        let pts = e.points();
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0].id, "c[s=0.3]");
        assert_eq!(pts[1].n, 3);
        assert_eq!(pts[3].spec.s, 0.4);
    }

    #[test]
    fn float_text_round_trips() {
        for x in [0.0, 1.5, -2.25e-7, 3e20, 1e-300, 0.1 + 0.2] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1e-5), "1e-5");
    }

    #[test]
    fn config_version_is_checked() {
        assert!(ExperimentConfig::from_json(r#"{"version": 2}"#).is_err());
        let c = ExperimentConfig::from_json(r#"{"version": 1}"#).unwrap();
        assert!(c.tasks.is_empty());
    }
}
