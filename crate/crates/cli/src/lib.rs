//! Configuration, experiment runs and file output for the `hyfem` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hyfem::driver::{run, Level, Method, Refinement, RunError, RunOptions, RunRecord};
use hyfem::{BoxLoadProblem, BubbleVariant, ManufacturedProblem, Mesh, Problem};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{method}: {source}")]
    Run { method: Method, source: RunError },
}

impl CliError {
    /// 1 for configuration and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run { source, .. } if source.is_numerical() => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Manufactured,
    BoxLoad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodChoice {
    One(Method),
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefinementKind {
    Uniform,
    Adaptive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub problem: ProblemKind,
    pub method: MethodChoice,
    pub eps: f64,
    pub bubble_variant: BubbleVariant,
    pub refinement: RefinementKind,
    pub theta: f64,
    pub max_dof: usize,
    /// Number of uniform levels; an upper bound for adaptive runs.
    pub levels: usize,
    pub output: PathBuf,
    pub seed: u64,
    /// Write patch files and mesh dumps for every level.
    pub patches: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            problem: ProblemKind::Manufactured,
            method: MethodChoice::One(Method::Phfem),
            eps: 1e-4,
            bubble_variant: BubbleVariant::Exponential,
            refinement: RefinementKind::Uniform,
            theta: 0.25,
            max_dof: 20_000,
            levels: 6,
            output: PathBuf::from("out"),
            seed: 0,
            patches: true,
        }
    }
}

/// Keys accepted in config files and by `Config::set`.
pub const KEYS: [&str; 11] = [
    "problem",
    "method",
    "eps",
    "bubble_variant",
    "refinement",
    "theta",
    "max_dof",
    "levels",
    "output",
    "seed",
    "patches",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse `{value}`")))
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "problem" => {
                self.problem = match value {
                    "manufactured" => ProblemKind::Manufactured,
                    "boxload" => ProblemKind::BoxLoad,
                    _ => return Err(CliError::Config(format!("problem: expected manufactured or boxload, got `{value}`"))),
                }
            }
            "method" => {
                self.method = match value {
                    "all" => MethodChoice::All,
                    m => MethodChoice::One(m.parse().map_err(CliError::Config)?),
                }
            }
            "eps" => self.eps = parse(key, value)?,
            "bubble_variant" => self.bubble_variant = value.parse().map_err(CliError::Config)?,
            "refinement" => {
                self.refinement = match value {
                    "uniform" => RefinementKind::Uniform,
                    "adaptive" => RefinementKind::Adaptive,
                    _ => return Err(CliError::Config(format!("refinement: expected uniform or adaptive, got `{value}`"))),
                }
            }
            "theta" => self.theta = parse(key, value)?,
            "max_dof" => self.max_dof = parse(key, value)?,
            "levels" => self.levels = parse(key, value)?,
            "output" => self.output = PathBuf::from(value),
            "seed" => self.seed = parse(key, value)?,
            "patches" => self.patches = parse(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key `{key}` (known: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_file_contents(&mut self, text: &str) -> Result<(), CliError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(CliError::Config(format!("eps must lie in (0, 1], got {}", self.eps)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(CliError::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.levels == 0 {
            return Err(CliError::Config("levels must be positive".into()));
        }
        if self.refinement == RefinementKind::Adaptive && self.method == MethodChoice::One(Method::Cg) {
            return Err(CliError::Config("adaptive refinement needs an estimator; the cg method has none".into()));
        }
        Ok(())
    }

    /// Methods to run; `all` with adaptive refinement runs the two hybrid
    /// methods only.
    pub fn methods(&self) -> Vec<Method> {
        match (self.method, self.refinement) {
            (MethodChoice::One(m), _) => vec![m],
            (MethodChoice::All, RefinementKind::Uniform) => Method::ALL.to_vec(),
            (MethodChoice::All, RefinementKind::Adaptive) => vec![Method::Phfem, Method::Dhfem],
        }
    }

    pub fn problem(&self) -> Box<dyn Problem> {
        match self.problem {
            ProblemKind::Manufactured => Box::new(ManufacturedProblem::new(self.eps)),
            ProblemKind::BoxLoad => Box::new(BoxLoadProblem::new(self.eps)),
        }
    }

    pub fn run_options(&self, method: Method) -> RunOptions {
        let refinement = match self.refinement {
            RefinementKind::Uniform => Refinement::Uniform { bisections: 2 },
            RefinementKind::Adaptive => Refinement::Adaptive { theta: self.theta },
        };
        let max_dof = match self.refinement {
            RefinementKind::Uniform => usize::MAX,
            RefinementKind::Adaptive => self.max_dof,
        };
        RunOptions { method, refinement, variant: self.bubble_variant, max_levels: self.levels, max_dof }
    }

    /// Output directory of one method.
    pub fn method_dir(&self, method: Method) -> PathBuf {
        match self.method {
            MethodChoice::All => self.output.join(method.name()),
            MethodChoice::One(_) => self.output.clone(),
        }
    }
}

pub const CSV_HEADER: &str = "dof,errUP0L2,errUP1L2,errUS1L2,est";

/// 17 significant digits.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.dof,
            float(r.err_p0),
            float(r.err_p1),
            float(r.err_cg),
            float(r.estimator)
        );
    }
    out
}

/// One `x y z` line per triangle vertex, a blank line after each triangle.
pub fn write_patches<W: Write>(mut w: W, mesh: &Mesh, value: impl Fn(usize, usize) -> f64) -> io::Result<()> {
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for (j, &v) in tri.vertices.iter().enumerate() {
            let p = mesh.vertices[v];
            writeln!(w, "{} {} {}", float(p[0]), float(p[1]), float(value(t, j)))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn write_level(dir: &Path, method: Method, level: &Level<'_>) -> Result<(), CliError> {
    let n = level.mesh.n_elements();
    let p0 = level.p0;
    write_file(&dir.join(format!("{method}_solP0_{n:05}.dat")), |w| write_patches(w, level.mesh, |t, _| p0[t]))?;
    if let Some(cg) = level.cg {
        let mesh = level.mesh;
        write_file(&dir.join(format!("cg_solS1_{n:05}.dat")), |w| {
            write_patches(w, mesh, |t, j| cg.values[mesh.triangles[t].vertices[j]])
        })?;
    }
    write_file(&dir.join(format!("mesh_{n:05}.txt")), |w| level.mesh.write_dump(w))
}

/// One formatted line of the progress table.
pub fn summary_line(method: Method, r: &RunRecord) -> String {
    format!(
        "{:<6} {:>3} {:>7} {:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.2}s",
        method.name(),
        r.level,
        r.n_elements,
        r.dof,
        r.err_p0,
        r.err_p1,
        r.err_cg,
        r.estimator,
        r.seconds
    )
}

/// Runs every configured method and writes its files. Returns the records
/// per method.
pub fn cmd_run(config: &Config, mut log: impl Write) -> Result<BTreeMap<&'static str, Vec<RunRecord>>, CliError> {
    config.validate()?;
    let problem = config.problem();
    if !problem.convex_domain() {
        let _ = writeln!(log, "note: the domain is not convex; the primal estimator is not proven reliable there");
    }
    let mut all = BTreeMap::new();
    let _ = writeln!(log, "method lvl    #T    #dof      errUP0L2     errUP1L2     errUS1L2          est");
    for method in config.methods() {
        let dir = config.method_dir(method);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut failure = None;
        let records = run(problem.as_ref(), &config.run_options(method), &mut |level| {
            let _ = writeln!(log, "{}", summary_line(method, level.record));
            if config.patches && failure.is_none() {
                failure = write_level(&dir, method, level).err();
            }
        })
        .map_err(|source| CliError::Run { method, source })?;
        if let Some(e) = failure {
            return Err(e);
        }
        let path = dir.join("errors.csv");
        fs::write(&path, csv(&records)).map_err(io_err(&path))?;
        all.insert(method.name(), records);
    }
    Ok(all)
}
