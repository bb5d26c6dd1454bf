use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use czo_wolff::experiments::{fmt_f64, run, selection_table, theta_table, violation_table, ExperimentConfig, Table};
use czo_wolff::measure::{generate, read_cloud_file, write_cloud_file};
use czo_wolff::operators::{operator_norm, sup_norm, KernelSpec, TestFamily};
use czo_wolff::oscillation::{theta, Pairing};
use czo_wolff::reflectionless::{verify_structure, StructureHypothesis};
use czo_wolff::selection::{select_downward, select_upward, BunchOptions};
use czo_wolff::{Cube, LatticeView, Measure, MeasureSpec};

#[derive(Parser)]
#[command(name = "czw", version, about = "Wolff energies, CZ operators and reflectionless tests on point-cloud measures")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Point-cloud measures.
    Measure {
        #[command(subcommand)]
        cmd: MeasureCmd,
    },
    /// Upward and downward domination selection, one row per cube.
    Select {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// `m_min:m_max`; defaults to the range resolved from the cloud.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Truncated Calderón–Zygmund operators.
    Czo {
        #[command(subcommand)]
        cmd: CzoCmd,
    },
    /// Lipschitz oscillation coefficients of one cube over a bump family.
    Theta {
        #[arg(long)]
        measure: PathBuf,
        /// Cube code `m:k1,...,kd`.
        #[arg(long)]
        cube: String,
        #[arg(long = "A", default_value_t = 2.0)]
        a: f64,
        /// `r1,r2,...` or `r1,r2,.../a1,a2,...` (support radii / plateau fractions).
        #[arg(long, default_value = "1,2/0.25,0.75")]
        family: String,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        /// Pair against the unscaled `T_φ(μ)` instead of `T_{φ,ℓ(Q)}(μ)`.
        #[arg(long)]
        unscaled: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reflectionless structure checks.
    Reflect {
        #[command(subcommand)]
        cmd: ReflectCmd,
    },
    /// Runs an experiment config; exits non-zero unless every verdict passes.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Subcommand)]
enum MeasureCmd {
    /// Generates a cloud from a JSON measure spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum CzoCmd {
    /// Operator norm in `L²(μ)`, maximized over truncation radii unless `--eps` is given.
    Norm {
        #[arg(long)]
        measure: PathBuf,
        /// `riesz`, `smooth:<M>` or `random:<M>,<n0>`.
        #[arg(long, default_value = "riesz")]
        kernel: String,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = czo_wolff::operators::DEFAULT_ITERS)]
        iters: usize,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReflectCmd {
    /// Checks a cloud against a structure hypothesis (JSON); exits 1 on violations.
    Verify {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, s: f64, eps: f64) -> Result<Measure> {
    let cloud = read_cloud_file(path)?;
    Ok(cloud.into_measure(s, eps)?)
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => table.write(p)?,
        None => std::io::stdout().write_all(table.to_csv()?.as_bytes())?,
    }
    Ok(())
}

fn parse_levels(text: &str) -> Result<LatticeView> {
    let (a, b) = text.split_once(':').context("levels must look like m_min:m_max")?;
    Ok(LatticeView::new(a.trim().parse()?, b.trim().parse()?)?)
}

fn measure_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Measure {
            cmd: MeasureCmd::Gen { spec, out },
        } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let spec: MeasureSpec = serde_json::from_str(&text).context("parsing measure spec")?;
            let mu = generate(&spec)?;
            write_cloud_file(&mu, &out)?;
            eprintln!("wrote {} atoms to {}", mu.len(), out.display());
        }
        Cmd::Select {
            measure,
            eps,
            levels,
            s,
            out,
        } => {
            let mu = load(&measure, s, eps)?;
            let view = match levels {
                Some(l) => parse_levels(&l)?,
                None => LatticeView::resolved(&mu)?,
            };
            let up = select_upward(&mu, &view, eps)?;
            let down = select_downward(&up, eps, &BunchOptions::default())?;
            emit(&selection_table(&up, &down), out.as_deref())?;
            eprintln!(
                "{} cubes, retention upward {:.4}, downward {:.4}",
                up.cubes.len(),
                up.retention(),
                down.retention()
            );
        }
        Cmd::Czo {
            cmd:
                CzoCmd::Norm {
                    measure,
                    kernel,
                    s,
                    seed,
                    iters,
                    eps,
                    out,
                },
        } => {
            let mu = load(&measure, s, 0.1)?;
            let spec: KernelSpec = kernel.parse()?;
            let k = spec.build(s, seed)?;
            let est = match eps {
                Some(e) => operator_norm(&k, &mu, e, iters, seed)?,
                None => sup_norm(&k, &mu, iters, seed)?.0,
            };
            let mut t = Table::new(&["measure_id", "kernel", "n", "norm", "residual"]);
            t.push(vec![
                measure_id(&measure),
                spec.to_string(),
                mu.len().to_string(),
                fmt_f64(est.norm),
                fmt_f64(est.residual),
            ]);
            emit(&t, out.as_deref())?;
        }
        Cmd::Theta {
            measure,
            cube,
            a,
            family,
            s,
            unscaled,
            out,
        } => {
            let mu = load(&measure, s, 0.1)?;
            let q: Cube = cube.parse()?;
            let fam: TestFamily = family.parse()?;
            let pairing = if unscaled { Pairing::Unscaled } else { Pairing::Scaled };
            let results = fam
                .bumps
                .iter()
                .map(|b| theta(&mu, &q, b, a, pairing))
                .collect::<czo_wolff::Result<Vec<_>>>()?;
            emit(&theta_table(&mu, &results), out.as_deref())?;
        }
        Cmd::Reflect {
            cmd:
                ReflectCmd::Verify {
                    measure,
                    hyp,
                    tol,
                    s,
                    out,
                },
        } => {
            let mu = load(&measure, s, 0.1)?;
            let text = std::fs::read_to_string(&hyp).with_context(|| format!("reading {}", hyp.display()))?;
            let h: StructureHypothesis = serde_json::from_str(&text).context("parsing structure hypothesis")?;
            let rep = verify_structure(&mu, &h, tol)?;
            eprintln!(
                "{}: {} atoms and {} planes checked, {} violations",
                if rep.passed() { "pass" } else { "fail" },
                rep.atoms_checked,
                rep.planes_checked,
                rep.violations.len()
            );
            emit(&violation_table(&rep.violations), out.as_deref())?;
            if !rep.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Cmd::Run { config, out, jobs } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            if jobs == 0 {
                bail!("--jobs must be at least 1");
            }
            let rep = run(&cfg, &out, jobs)?;
            if let Some(eq) = &rep.equivalence {
                for f in &eq.families {
                    eprintln!(
                        "{}: {} (expected {}), slopes wolff {:.4} norm² {:.4}",
                        f.id, f.verdict, f.expected, f.wolff_slope, f.norm2_slope
                    );
                }
            }
            for e in &rep.errors {
                eprintln!("failed: {} n={} {}: {}", e.point, e.n, e.task, e.message);
            }
            if !rep.all_pass() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
