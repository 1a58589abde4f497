//! Pipeline commands behind the `algsample` binary: sample, persist, infer,
//! subsample and verify.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use algsample::geometry::BBox;
use algsample::mindist::{Backend, ExternalSolver};
use algsample::polysys::PolynomialSystem;
use algsample::sampler::{
    load_cloud, resume, sample, save_cloud, subsample, verify_sample, DenseCloudOracle, Heuristics, SampleCloud,
    SamplerConfig, SamplerError, VerifyReport,
};
use algsample::tda::{
    compute_persistence, diagram_svg, infer_betti, read_diagram_csv, rips_filtration_capped, rips_filtration_collapsed,
    write_diagram_csv, InferenceVerdict, PersistenceDiagram, TdaError, DEFAULT_SIMPLEX_CAP,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Solver(String),
    #[error("{message}")]
    Interrupted { message: String, checkpoint: Option<PathBuf> },
    #[error("{0}")]
    SimplexCap(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Interrupted { .. } => 4,
            CliError::SimplexCap(_) => 5,
            CliError::Verification(_) => 6,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Everything a pipeline run needs. Unset values fall back to the defaults
/// of the individual commands.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub system: Option<PathBuf>,
    /// Either one `(lo, hi)` for every variable or one per variable.
    pub region: Option<Vec<(f64, f64)>>,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub dynamic_split: Option<bool>,
    pub dynamic_sample: Option<f64>,
    pub priority_search: Option<bool>,
    pub tmax: Option<f64>,
    pub pmax: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub backend: Option<String>,
    pub out: Option<PathBuf>,
    pub max_calls: Option<usize>,
    pub simplex_cap: Option<usize>,
}

pub fn parse_box(text: &str) -> Result<Vec<(f64, f64)>, CliError> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Parse(format!("bad box bound `{s}`"))))
        .collect::<Result<_, _>>()?;
    if vals.is_empty() || vals.len() % 2 != 0 {
        return Err(CliError::Parse(format!("box needs lo,hi pairs, got {} numbers", vals.len())));
    }
    Ok(vals.chunks(2).map(|c| (c[0], c[1])).collect())
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Parse(format!("{key}: expected a boolean, got `{v}`"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Parse(format!("{key}: cannot parse `{v}`")))
}

impl PipelineConfig {
    /// Reads a `key = value` file. Relative paths resolve against the file's
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Parse(format!("config line {}: expected key = value", k + 1)))?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "system" => cfg.system = Some(base.join(v)),
                "box" => cfg.region = Some(parse_box(v)?),
                "epsilon" => cfg.epsilon = Some(parse_num(key, v)?),
                "delta" => cfg.delta = Some(parse_num(key, v)?),
                "dynamic_split" => cfg.dynamic_split = Some(parse_bool(key, v)?),
                "dynamic_sample" => cfg.dynamic_sample = Some(parse_num(key, v)?),
                "priority_search" => cfg.priority_search = Some(parse_bool(key, v)?),
                "tmax" => cfg.tmax = Some(parse_num(key, v)?),
                "pmax" => cfg.pmax = Some(parse_num(key, v)?),
                "seed" => cfg.seed = Some(parse_num(key, v)?),
                "workers" => cfg.workers = Some(parse_num(key, v)?),
                "backend" => cfg.backend = Some(v.to_string()),
                "out" => cfg.out = Some(base.join(v)),
                "max_calls" => cfg.max_calls = Some(parse_num(key, v)?),
                "simplex_cap" => cfg.simplex_cap = Some(parse_num(key, v)?),
                _ => return Err(CliError::Parse(format!("config line {}: unknown key `{key}`", k + 1))),
            }
        }
        Ok(cfg)
    }

    /// Values set in `over` replace those in `self`.
    pub fn overlay(self, over: PipelineConfig) -> Self {
        Self {
            system: over.system.or(self.system),
            region: over.region.or(self.region),
            epsilon: over.epsilon.or(self.epsilon),
            delta: over.delta.or(self.delta),
            dynamic_split: over.dynamic_split.or(self.dynamic_split),
            dynamic_sample: over.dynamic_sample.or(self.dynamic_sample),
            priority_search: over.priority_search.or(self.priority_search),
            tmax: over.tmax.or(self.tmax),
            pmax: over.pmax.or(self.pmax),
            seed: over.seed.or(self.seed),
            workers: over.workers.or(self.workers),
            backend: over.backend.or(self.backend),
            out: over.out.or(self.out),
            max_calls: over.max_calls.or(self.max_calls),
            simplex_cap: over.simplex_cap.or(self.simplex_cap),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn load_system(&self) -> Result<PolynomialSystem, CliError> {
        let path = self.system.as_ref().ok_or_else(|| CliError::Parse("no system file given".into()))?;
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        PolynomialSystem::parse(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn sampler_config(&self, sys: &PolynomialSystem) -> Result<SamplerConfig, CliError> {
        let n = sys.num_vars();
        let bounds = self.region.clone().ok_or_else(|| CliError::Parse("no box given".into()))?;
        let bounds = match bounds.len() {
            1 => vec![bounds[0]; n],
            k if k == n => bounds,
            k => return Err(CliError::Parse(format!("box has {k} intervals but the system has {n} variables"))),
        };
        let (lo, hi): (Vec<f64>, Vec<f64>) = bounds.into_iter().unzip();
        let region = BBox::new(lo, hi).map_err(|e| CliError::Parse(format!("box: {e}")))?;
        let epsilon = self.epsilon.ok_or_else(|| CliError::Parse("no epsilon given".into()))?;
        let mut cfg = SamplerConfig::new(region, epsilon, self.delta.unwrap_or(1e-6));
        cfg.heuristics = Heuristics {
            dynamic_split: self.dynamic_split.unwrap_or(false),
            dynamic_sample: self.dynamic_sample,
            priority_search: self.priority_search.unwrap_or(false),
        };
        cfg.seed = self.seed.unwrap_or(0);
        cfg.workers = self.workers.unwrap_or(1);
        cfg.max_calls = self.max_calls;
        cfg.checkpoint = Some(self.out_dir().join("checkpoint.json"));
        cfg.mindist.backend = match self.backend.as_deref() {
            None | Some("internal") => Backend::Internal,
            Some(program) => Backend::External(ExternalSolver {
                program: PathBuf::from(program.strip_prefix("external:").unwrap_or(program)),
                args: Vec::new(),
            }),
        };
        cfg.validate(sys).map_err(|e| CliError::Parse(e.to_string()))?;
        Ok(cfg)
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn sampler_error(e: SamplerError) -> CliError {
    match e {
        SamplerError::Interrupted { calls, checkpoint } => CliError::Interrupted {
            message: format!(
                "interrupted after {calls} solver calls; resume with --resume{}",
                checkpoint.as_ref().map_or(String::new(), |p| format!(" (checkpoint {})", p.display()))
            ),
            checkpoint,
        },
        SamplerError::Solver { .. } => CliError::Solver(e.to_string()),
        SamplerError::InvalidConfig(_) => CliError::Parse(e.to_string()),
        SamplerError::Io(_) | SamplerError::Checkpoint(_) => CliError::Io(e.to_string()),
        SamplerError::DepthExceeded(_) => CliError::Solver(e.to_string()),
    }
}

#[derive(Debug)]
pub struct SampleOutcome {
    pub cloud: SampleCloud,
    pub csv: PathBuf,
    pub log: PathBuf,
}

/// Runs the sampler and writes `sample.csv` and `sample.log` to the output
/// directory.
pub fn cmd_sample(cfg: &PipelineConfig, resume_run: bool) -> Result<SampleOutcome, CliError> {
    let sys = cfg.load_system()?;
    let scfg = cfg.sampler_config(&sys)?;
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    let start = std::time::Instant::now();
    let cloud = if resume_run { resume(&sys, &scfg) } else { sample(&sys, &scfg) }.map_err(sampler_error)?;
    let csv = dir.join("sample.csv");
    save_cloud(&cloud, &csv).map_err(|e| io_err(&csv, e))?;
    let c = &cloud.certificate;
    let mut log = String::new();
    writeln!(log, "seed = {}", cloud.seed).unwrap();
    writeln!(log, "certificate = ({:e}, {:e})", c.delta, c.epsilon).unwrap();
    writeln!(log, "points = {}", cloud.len()).unwrap();
    writeln!(log, "calls = {}", c.calls).unwrap();
    writeln!(log, "depth = {}", c.depth).unwrap();
    writeln!(log, "nodes = {}", c.nodes).unwrap();
    writeln!(log, "perturbed_calls = {}", c.perturbed_calls).unwrap();
    writeln!(log, "lemma_violations = {}", c.lemma_violations).unwrap();
    writeln!(log, "seconds = {:.3}", start.elapsed().as_secs_f64()).unwrap();
    if cloud.is_empty() {
        writeln!(log, "note = V_ℝ empty in the region: no real points found").unwrap();
    }
    let log_path = dir.join("sample.log");
    std::fs::write(&log_path, log).map_err(|e| io_err(&log_path, e))?;
    Ok(SampleOutcome { cloud, csv, log: log_path })
}

pub fn read_sample(path: &Path) -> Result<SampleCloud, CliError> {
    load_cloud(path).map_err(|e| match e {
        algsample::sampler::CloudFormatError::Io(_) => io_err(path, e),
        _ => CliError::Parse(format!("{}: {e}", path.display())),
    })
}

/// Persistence diagram of the Rips filtration of a sample, with the cloud's
/// dimension, certificate and seed as metadata.
pub fn cmd_persist(
    sample_path: &Path,
    tmax: f64,
    pmax: usize,
    cap: Option<usize>,
    collapse: bool,
    out: &Path,
) -> Result<PersistenceDiagram, CliError> {
    let cloud = read_sample(sample_path)?;
    let cap = cap.unwrap_or(DEFAULT_SIMPLEX_CAP);
    let fc = if collapse {
        rips_filtration_collapsed(&cloud.points, tmax, pmax, cap)
    } else {
        rips_filtration_capped(&cloud.points, tmax, pmax, cap)
    }
    .map_err(|e| match e {
        TdaError::TooManySimplices { .. } | TdaError::EncodingOverflow { .. } => CliError::SimplexCap(e.to_string()),
        _ => CliError::Parse(e.to_string()),
    })?;
    let mut diag = compute_persistence(&fc);
    // A cloud without a certificate header reads back with zero epsilon.
    let certified = cloud.certificate.epsilon > 0.0;
    diag.n = (!cloud.is_empty()).then(|| cloud.dim());
    diag.epsilon = certified.then_some(cloud.certificate.epsilon);
    diag.delta = certified.then_some(cloud.certificate.delta);
    diag.seed = Some(cloud.seed);
    if let Some(parent) = out.parent() {
        ensure_dir(parent)?;
    }
    let file = std::fs::File::create(out).map_err(|e| io_err(out, e))?;
    write_diagram_csv(&diag, std::io::BufWriter::new(file)).map_err(|e| io_err(out, e))?;
    Ok(diag)
}

pub fn read_diagram(path: &Path) -> Result<PersistenceDiagram, CliError> {
    let f = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_diagram_csv(std::io::BufReader::new(f)).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Corner test on a diagram; writes `verdict.txt` and `diagram.svg` to `out`.
/// `n`, `epsilon` and `delta` default to the diagram's metadata.
pub fn cmd_infer(
    diagram_path: &Path,
    n: Option<usize>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    out: &Path,
) -> Result<InferenceVerdict, CliError> {
    let diag = read_diagram(diagram_path)?;
    let missing = |what: &str| CliError::Parse(format!("{what} not given and not recorded in the diagram"));
    let n = n.or(diag.n).ok_or_else(|| missing("ambient dimension"))?;
    let epsilon = epsilon.or(diag.epsilon).ok_or_else(|| missing("epsilon"))?;
    let delta = delta.or(diag.delta).ok_or_else(|| missing("delta"))?;
    let verdict = infer_betti(&diag, n, epsilon, delta).map_err(|e| CliError::Parse(e.to_string()))?;
    ensure_dir(out)?;
    let mut text = String::new();
    writeln!(text, "n = {n}").unwrap();
    writeln!(text, "epsilon = {epsilon}").unwrap();
    writeln!(text, "delta = {delta}").unwrap();
    if let Some(s) = diag.seed {
        writeln!(text, "seed = {s}").unwrap();
    }
    writeln!(text, "threshold = {}", diag.threshold).unwrap();
    writeln!(text, "corner_a = {}", verdict.corner.0).unwrap();
    writeln!(text, "corner_b = {}", verdict.corner.1).unwrap();
    for (d, c) in verdict.counts.iter().enumerate() {
        writeln!(text, "betti{d}_lower_bound = {c}").unwrap();
    }
    writeln!(text, "censored = {}", verdict.censored).unwrap();
    for w in &verdict.warnings {
        writeln!(text, "warning = {w}").unwrap();
    }
    writeln!(text, "assumption = {}", verdict.assumption).unwrap();
    let vpath = out.join("verdict.txt");
    std::fs::write(&vpath, text).map_err(|e| io_err(&vpath, e))?;
    let spath = out.join("diagram.svg");
    std::fs::write(&spath, diagram_svg(&diag, Some(&verdict))).map_err(|e| io_err(&spath, e))?;
    Ok(verdict)
}

/// Greedy subsample at radius `r`; the certificate epsilon grows by `r`.
pub fn cmd_subsample(sample_path: &Path, r: f64, seed: u64, out: &Path) -> Result<SampleCloud, CliError> {
    if !(r > 0.0) {
        return Err(CliError::Parse(format!("subsample radius must be positive, got {r}")));
    }
    let cloud = read_sample(sample_path)?;
    let thin = subsample(&cloud, r, seed);
    if let Some(parent) = out.parent() {
        ensure_dir(parent)?;
    }
    save_cloud(&thin, out).map_err(|e| io_err(out, e))?;
    Ok(thin)
}

/// Checks a sample against its system. Coverage is checked against the
/// points of `reference` (a sample CSV) when given; otherwise only the
/// certified distances of the cloud points are checked.
pub fn cmd_verify(cfg: &PipelineConfig, sample_path: &Path, reference: Option<&Path>) -> Result<VerifyReport, CliError> {
    let sys = cfg.load_system()?;
    let cloud = read_sample(sample_path)?;
    if cloud.dim() != sys.num_vars() && !cloud.is_empty() {
        return Err(CliError::Parse(format!(
            "sample has dimension {} but the system has {} variables",
            cloud.dim(),
            sys.num_vars()
        )));
    }
    let refs = match reference {
        Some(p) => read_sample(p)?.points,
        None => Vec::new(),
    };
    let mut report = verify_sample(&cloud, &sys, &DenseCloudOracle(refs));
    if cloud.is_empty() && reference.is_none() {
        report.passed = true;
        report.message = "empty sample; nothing to check".into();
    }
    Ok(report)
}
