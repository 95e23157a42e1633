//! End-to-end runs: configuration, execution, artifacts and plot data.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_transitions, detect_gap, embed, kmeans, ClusterModel, GapReport};
use crate::density::{kde_density, Bandwidth, Boundary, DensityEstimate};
use crate::dictionary::{DictionaryKind, DictionarySpec};
use crate::error::{Error, Result};
use crate::graphon::{degree_profile, transition_density, Graphon, DEFAULT_DEGREE_GRID};
use crate::io::{
    ingest_signal, read_grid_graphon, read_json, read_matrix_csv, read_trajectory_csv, write_json, write_matrix_csv,
    write_trajectory_csv, Column, SignalSeries,
};
use crate::operators::{
    eigendecompose, empirical_covariances, galerkin_matrices, singular_decompose, Operator, OperatorMatrices,
    Regularization, SpectralMode, SpectralModel,
};
use crate::reconstruction::{
    reconstruct_p_asymmetric, reconstruct_p_symmetric, reconstruct_w, row_normalization_report, Negativity, RankRModel,
    Reconstruction, ReconstructionMode, RowReport,
};
use crate::sampling::{pairs, sde_walk, symmetrized_pairs, walk, PairedData, SamplingMethod, SdeConfig, Trajectory, WalkOptions};
use crate::scalar::midpoint_grid;

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "GRAPHON_OUTPUT_DIR";

const PLOT_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Symmetric,
    Asymmetric,
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(Pipeline::Symmetric),
            "asymmetric" => Ok(Pipeline::Asymmetric),
            _ => Err(Error::config(format!("unknown pipeline '{s}'"))),
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Symmetric => "symmetric",
            Pipeline::Asymmetric => "asymmetric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    TriplePeak,
    QuadruplePeak,
    TwoBlock(f64, f64),
    Constant(f64),
    Bipartite,
    LemonSlice,
}

impl Builtin {
    /// The graphon to simulate; `None` for the SDE.
    pub fn graphon(&self) -> Result<Option<Graphon<f64>>> {
        Ok(Some(match *self {
            Builtin::TriplePeak => Graphon::triple_peak(),
            Builtin::QuadruplePeak => Graphon::quadruple_peak(),
            Builtin::TwoBlock(a, b) => Graphon::two_block(a, b)?,
            Builtin::Constant(c) => Graphon::constant(c)?,
            Builtin::Bipartite => Graphon::bipartite(),
            Builtin::LemonSlice => return Ok(None),
        }))
    }

    fn default_pipeline(&self) -> Pipeline {
        match self {
            Builtin::QuadruplePeak | Builtin::LemonSlice => Pipeline::Asymmetric,
            _ => Pipeline::Symmetric,
        }
    }
}

fn parse_args(s: &str, name: &str, n: usize) -> Result<Vec<f64>> {
    let inner = s
        .strip_prefix(name)
        .and_then(|r| r.trim().strip_prefix('('))
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| Error::config(format!("expected {name}(…), got '{s}'")))?;
    let vals: Vec<f64> = inner
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::config(format!("bad parameters in '{s}'")))?;
    if vals.len() != n {
        return Err(Error::config(format!("{name} takes {n} parameter(s)")));
    }
    Ok(vals)
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "triple-peak" => Builtin::TriplePeak,
            "quadruple-peak" => Builtin::QuadruplePeak,
            "bipartite" => Builtin::Bipartite,
            "lemon-slice" => Builtin::LemonSlice,
            _ if s.starts_with("two-block") => {
                let v = parse_args(s, "two-block", 2)?;
                Builtin::TwoBlock(v[0], v[1])
            }
            _ if s.starts_with("constant") => Builtin::Constant(parse_args(s, "constant", 1)?[0]),
            _ => return Err(Error::config(format!("unknown builtin '{s}'"))),
        })
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::TriplePeak => write!(f, "triple-peak"),
            Builtin::QuadruplePeak => write!(f, "quadruple-peak"),
            Builtin::TwoBlock(a, b) => write!(f, "two-block({a},{b})"),
            Builtin::Constant(c) => write!(f, "constant({c})"),
            Builtin::Bipartite => write!(f, "bipartite"),
            Builtin::LemonSlice => write!(f, "lemon-slice"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Builtin(Builtin),
    GraphonCsv(PathBuf),
    Signal { path: PathBuf, column: Column },
    /// A trajectory already scaled to `[0, 1]`.
    Trajectory(PathBuf),
}

impl Source {
    fn is_observed(&self) -> bool {
        matches!(self, Source::Signal { .. } | Source::Trajectory(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankChoice {
    Auto,
    Fixed(usize),
}

/// Everything needed to reproduce a run. Unset optional fields are resolved
/// from the source when the run executes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: Option<Pipeline>,
    pub source: Source,
    pub dictionary: DictionaryKind,
    pub n: usize,
    pub sigma: f64,
    pub periodic: Option<bool>,
    pub m: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub symmetrize: Option<bool>,
    pub r: RankChoice,
    pub r_max: usize,
    pub epsilon: Option<f64>,
    pub sampling: SamplingMethod,
    pub restarts: usize,
    pub grid: usize,
    pub output: PathBuf,
}

const KEYS: &[&str] = &[
    "pipeline", "graphon", "graphon_csv", "signal", "column", "trajectory", "dictionary", "n", "sigma", "periodic", "m",
    "seed", "burn_in", "symmetrize", "r", "r_max", "epsilon", "sampling", "restarts", "grid", "output",
];

fn parse_value<V: FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse::<V>().map_err(|_| Error::config(format!("invalid value '{v}' for '{key}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(format!("invalid boolean '{v}' for '{key}'"))),
    }
}

impl RunConfig {
    pub fn builtin(b: Builtin) -> Self {
        Self {
            pipeline: None,
            source: Source::Builtin(b),
            dictionary: DictionaryKind::Gaussian,
            n: 20,
            sigma: 0.05,
            periodic: None,
            m: 20000,
            seed: 1,
            burn_in: crate::sampling::DEFAULT_BURN_IN,
            symmetrize: None,
            r: RankChoice::Auto,
            r_max: 10,
            epsilon: None,
            sampling: SamplingMethod::InverseTransform,
            restarts: crate::clustering::DEFAULT_RESTARTS,
            grid: crate::reconstruction::DEFAULT_RECONSTRUCTION_GRID,
            output: PathBuf::from("run"),
        }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got '{line}'"),
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(map)
    }

    pub fn from_file(path: &Path, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let mut map = Self::parse_kv(&fs::read_to_string(path)?)?;
        map.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_pairs(&map)
    }

    pub fn from_pairs(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(bad) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::config(format!("unknown configuration key '{bad}'")));
        }
        let sources: Vec<&str> = ["graphon", "graphon_csv", "signal", "trajectory"]
            .into_iter()
            .filter(|k| map.contains_key(*k))
            .collect();
        if sources.len() != 1 {
            return Err(Error::config(format!(
                "exactly one of graphon, graphon_csv, signal, trajectory must be set (found {})",
                if sources.is_empty() { "none".to_string() } else { sources.join(", ") }
            )));
        }
        let source = match sources[0] {
            "graphon" => Source::Builtin(map["graphon"].parse()?),
            "graphon_csv" => Source::GraphonCsv(PathBuf::from(&map["graphon_csv"])),
            "signal" => Source::Signal {
                path: PathBuf::from(&map["signal"]),
                column: map.get("column").map(|c| c.parse().unwrap()).unwrap_or(Column::Index(1)),
            },
            _ => Source::Trajectory(PathBuf::from(&map["trajectory"])),
        };
        if map.contains_key("column") && !matches!(source, Source::Signal { .. }) {
            return Err(Error::config("'column' only applies to signal sources"));
        }
        let mut cfg = match &source {
            Source::Builtin(b) => Self::builtin(*b),
            _ => Self::builtin(Builtin::TriplePeak),
        };
        cfg.source = source;
        for (k, v) in map {
            let v = v.as_str();
            match k.as_str() {
                "pipeline" => cfg.pipeline = Some(v.parse()?),
                "dictionary" => {
                    cfg.dictionary = match v {
                        "gaussian" => DictionaryKind::Gaussian,
                        "indicator" => DictionaryKind::Indicator,
                        _ => return Err(Error::config(format!("unknown dictionary '{v}'"))),
                    }
                }
                "n" => cfg.n = parse_value(k, v)?,
                "sigma" => cfg.sigma = parse_value(k, v)?,
                "periodic" => cfg.periodic = Some(parse_bool(k, v)?),
                "m" => cfg.m = parse_value(k, v)?,
                "seed" => cfg.seed = parse_value(k, v)?,
                "burn_in" => cfg.burn_in = parse_value(k, v)?,
                "symmetrize" => cfg.symmetrize = Some(parse_bool(k, v)?),
                "r" => {
                    cfg.r = if v == "auto" {
                        RankChoice::Auto
                    } else {
                        RankChoice::Fixed(parse_value(k, v)?)
                    }
                }
                "r_max" => cfg.r_max = parse_value(k, v)?,
                "epsilon" => cfg.epsilon = if v == "auto" { None } else { Some(parse_value(k, v)?) },
                "sampling" => {
                    cfg.sampling = match v {
                        "inverse-transform" => SamplingMethod::InverseTransform,
                        "rejection" => SamplingMethod::Rejection,
                        _ => return Err(Error::config(format!("unknown sampling method '{v}'"))),
                    }
                }
                "restarts" => cfg.restarts = parse_value(k, v)?,
                "grid" => cfg.grid = parse_value(k, v)?,
                "output" => cfg.output = PathBuf::from(v),
                _ => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.symmetrize == Some(true) && self.pipeline == Some(Pipeline::Asymmetric) {
            return Err(Error::config("symmetrize is only valid with the symmetric pipeline"));
        }
        if self.n < 2 {
            return Err(Error::config("dictionary size n must be at least 2"));
        }
        if self.dictionary == DictionaryKind::Gaussian && (self.sigma.is_nan() || self.sigma <= 0.0) {
            return Err(Error::config("sigma must be positive"));
        }
        if self.m < 10 && !self.source.is_observed() {
            return Err(Error::config("m must be at least 10"));
        }
        if self.r_max < 2 {
            return Err(Error::config("r_max must be at least 2"));
        }
        if let RankChoice::Fixed(r) = self.r {
            if r == 0 || r > self.n {
                return Err(Error::config(format!("r must be in 1..={}", self.n)));
            }
        }
        if self.epsilon.is_some_and(|e| e.is_nan() || e < 0.0) {
            return Err(Error::config("epsilon must be non-negative"));
        }
        if self.grid < 2 {
            return Err(Error::config("grid must be at least 2"));
        }
        Ok(())
    }

    /// Canonical `key = value` form, which [`from_pairs`](Self::from_pairs)
    /// accepts back.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        if let Some(p) = self.pipeline {
            put("pipeline", p.to_string());
        }
        match &self.source {
            Source::Builtin(b) => put("graphon", b.to_string()),
            Source::GraphonCsv(p) => put("graphon_csv", p.display().to_string()),
            Source::Signal { path, column } => {
                put("signal", path.display().to_string());
                put(
                    "column",
                    match column {
                        Column::Index(i) => i.to_string(),
                        Column::Name(n) => n.clone(),
                    },
                );
            }
            Source::Trajectory(p) => put("trajectory", p.display().to_string()),
        }
        put(
            "dictionary",
            match self.dictionary {
                DictionaryKind::Gaussian => "gaussian",
                DictionaryKind::Indicator => "indicator",
            }
            .into(),
        );
        put("n", self.n.to_string());
        put("sigma", format!("{:?}", self.sigma));
        if let Some(p) = self.periodic {
            put("periodic", p.to_string());
        }
        put("m", self.m.to_string());
        put("seed", self.seed.to_string());
        put("burn_in", self.burn_in.to_string());
        if let Some(s) = self.symmetrize {
            put("symmetrize", s.to_string());
        }
        put(
            "r",
            match self.r {
                RankChoice::Auto => "auto".into(),
                RankChoice::Fixed(r) => r.to_string(),
            },
        );
        put("r_max", self.r_max.to_string());
        put("epsilon", self.epsilon.map_or("auto".into(), |e| format!("{e:?}")));
        put(
            "sampling",
            match self.sampling {
                SamplingMethod::InverseTransform => "inverse-transform",
                SamplingMethod::Rejection => "rejection",
            }
            .into(),
        );
        put("restarts", self.restarts.to_string());
        put("grid", self.grid.to_string());
        put("output", self.output.display().to_string());
        m
    }

    pub fn from_manifest(path: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(path)?;
        Self::from_pairs(&manifest.config)
    }

    fn is_periodic(&self) -> bool {
        self.periodic
            .unwrap_or(matches!(self.source, Source::Builtin(Builtin::LemonSlice)))
    }
}

/// Which stages to run after the spectral decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub cluster: bool,
    pub reconstruct: bool,
}

impl Stages {
    pub const ALL: Stages = Stages {
        cluster: true,
        reconstruct: true,
    };
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub pipeline: Pipeline,
    pub symmetrized: bool,
    pub trajectory: Trajectory<f64>,
    pub signal: Option<SignalSeries>,
    pub pairs: PairedData<f64>,
    pub operators: OperatorMatrices<f64>,
    pub spectral: SpectralModel<f64>,
    pub gap: GapReport,
    pub r: usize,
    pub clusters: Option<ClusterModel<f64>>,
    pub transitions: Option<DMatrix<f64>>,
    pub p: Option<Reconstruction<f64>>,
    pub w: Option<Reconstruction<f64>>,
    pub row_report: Option<RowReport>,
    pub timings: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

impl RunResult {
    pub fn spectral_values(&self) -> Vec<f64> {
        self.spectral.spectral_values()
    }
}

struct Timer(Vec<(String, f64)>, Instant);

impl Timer {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.0.push((stage.to_string(), (now - self.1).as_secs_f64() * 1e3));
        self.1 = now;
    }
}

/// The trajectory plus whatever produced it.
type Acquired = (Trajectory<f64>, Option<SignalSeries>, Option<Graphon<f64>>);

fn acquire(cfg: &RunConfig) -> Result<Acquired> {
    let simulate = |g: &Graphon<f64>| -> Result<Trajectory<f64>> {
        let profile = degree_profile(g, DEFAULT_DEGREE_GRID)?;
        let td = transition_density(g, &profile)?;
        let opts = WalkOptions {
            method: cfg.sampling,
            burn_in: cfg.burn_in,
            ..WalkOptions::default()
        };
        walk(&td, cfg.m, cfg.seed, &opts)
    };
    match &cfg.source {
        Source::Builtin(Builtin::LemonSlice) => {
            let sde = SdeConfig {
                burn_in: cfg.burn_in,
                ..SdeConfig::lemon_slice()
            };
            Ok((sde_walk(&sde, cfg.m, cfg.seed)?, None, None))
        }
        Source::Builtin(b) => {
            let g = b.graphon()?.expect("graphon builtin");
            Ok((simulate(&g)?, None, Some(g)))
        }
        Source::GraphonCsv(path) => {
            let g = read_grid_graphon(path)?;
            Ok((simulate(&g)?, None, Some(g)))
        }
        Source::Signal { path, column } => {
            let s = ingest_signal(path, column)?;
            let mut t = s.trajectory()?;
            t.periodic = cfg.is_periodic();
            Ok((t, Some(s), None))
        }
        Source::Trajectory(path) => Ok((read_trajectory_csv(path, cfg.is_periodic())?, None, None)),
    }
}

/// Runs the configured pipeline in memory.
pub fn execute(cfg: &RunConfig, stages: Stages) -> Result<RunResult> {
    cfg.validate()?;
    let mut timer = Timer(Vec::new(), Instant::now());
    let mut warnings = Vec::new();

    let (mut trajectory, signal, graphon) = acquire(cfg)?;
    trajectory.periodic = cfg.is_periodic();
    timer.lap("acquire");

    let pipeline = cfg.pipeline.unwrap_or(match (&cfg.source, &graphon) {
        (Source::Builtin(b), _) => b.default_pipeline(),
        (_, Some(g)) if !g.is_symmetric() => Pipeline::Asymmetric,
        _ => Pipeline::Symmetric,
    });
    let symmetrize = cfg.symmetrize.unwrap_or(pipeline == Pipeline::Symmetric && cfg.source.is_observed());
    if symmetrize && pipeline == Pipeline::Asymmetric {
        return Err(Error::config("symmetrize is only valid with the symmetric pipeline"));
    }
    if pipeline == Pipeline::Symmetric && graphon.as_ref().is_some_and(|g| !g.is_symmetric()) {
        let msg = "symmetric pipeline applied to data from an asymmetric graphon".to_string();
        warn!("{msg}");
        warnings.push(msg);
    }
    let pd = if symmetrize {
        symmetrized_pairs(&trajectory)
    } else {
        pairs(&trajectory)
    };

    let dict_spec = DictionarySpec {
        kind: cfg.dictionary,
        n: cfg.n,
        sigma: (cfg.dictionary == DictionaryKind::Gaussian).then_some(cfg.sigma),
        periodic: cfg.is_periodic() && cfg.dictionary == DictionaryKind::Gaussian,
    };
    let dict = dict_spec.build::<f64>()?;
    let cov = empirical_covariances(&dict, &pd)?;
    let reg = cfg.epsilon.map_or(Regularization::Auto, Regularization::Fixed);
    let om = galerkin_matrices(&cov, reg)?;
    timer.lap("operators");

    let boundary = if trajectory.periodic {
        Boundary::Periodic
    } else {
        Boundary::Reflect
    };
    let r_max = cfg.r_max.min(cfg.n);
    let forward = pairs(&trajectory);
    let spectral = match pipeline {
        Pipeline::Symmetric => {
            let sm = eigendecompose(&om, Operator::K, r_max)?;
            let pi = kde_density(&trajectory.states, Bandwidth::Auto, boundary)?;
            sm.with_densities(Some(pi.into()), None)
        }
        Pipeline::Asymmetric => {
            let mut r_try = r_max;
            let sm = loop {
                match singular_decompose(&om, r_try) {
                    Err(Error::Rank { index, .. }) if index > 2 => {
                        let msg = format!("forward-backward rank limits components to {}", index - 1);
                        warn!("{msg}");
                        warnings.push(msg);
                        r_try = index - 1;
                    }
                    other => break other?,
                }
            };
            let mu = kde_density(&forward.x, Bandwidth::Auto, boundary)?;
            let nu = kde_density(&forward.y, Bandwidth::Auto, boundary)?;
            sm.with_densities(Some(mu.into()), Some(nu.into()))
        }
    };
    timer.lap("spectral");

    let values = spectral.spectral_values();
    let gap = detect_gap(&values, spectral.rank().max(2))?;
    if let Some(w) = &gap.warning {
        warnings.push(w.clone());
    }
    let r = match cfg.r {
        RankChoice::Auto => gap.r,
        RankChoice::Fixed(r) => r,
    };
    if r > spectral.rank() {
        return Err(Error::config(format!("r = {r} exceeds the {} computed components", spectral.rank())));
    }
    let leading_im = spectral.values.iter().take(r).fold(0.0f64, |m, v| m.max(v.im.abs()));
    if leading_im > 0.0 {
        let msg = format!("leading Koopman eigenvalues have imaginary parts up to {leading_im:.2e}; real parts are used");
        warn!("{msg}");
        warnings.push(msg);
    }

    let (clusters, transitions) = if stages.cluster {
        let e = embed(&spectral, &trajectory, r)?;
        let cm = kmeans(&e, r, cfg.seed, cfg.restarts)?;
        if cm.boundaries.is_none() && r > 1 {
            warnings.push("clusters are not contiguous; boundaries omitted".into());
        }
        let c = cluster_transitions(&cm, &forward)?;
        timer.lap("clustering");
        (Some(cm), Some(c))
    } else {
        (None, None)
    };

    let (p, w, row_report) = if stages.reconstruct {
        // Z̃ = 1: from data the graphon is determined only up to scale.
        let model = RankRModel::from_spectral(&spectral, r, 1.0)?;
        let (p, w) = match pipeline {
            Pipeline::Symmetric => (reconstruct_p_symmetric(&model, cfg.grid)?, Some(reconstruct_w(&model, cfg.grid)?)),
            Pipeline::Asymmetric => (reconstruct_p_asymmetric(&model, cfg.grid)?, None),
        };
        let report = row_normalization_report(&p.values);
        timer.lap("reconstruction");
        (Some(p), w, Some(report))
    } else {
        (None, None, None)
    };

    Ok(RunResult {
        pipeline,
        symmetrized: symmetrize,
        trajectory,
        signal,
        pairs: pd,
        operators: om,
        spectral,
        gap,
        r,
        clusters,
        transitions,
        p,
        w,
        row_report,
        timings: timer.0,
        warnings,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub pipeline: Option<Pipeline>,
    pub symmetrized: Option<bool>,
    pub status: String,
    pub error: Option<String>,
    pub exit_code: i32,
    pub r: Option<usize>,
    pub gap_ratio: Option<f64>,
    pub spectral_values: Vec<f64>,
    pub warnings: Vec<String>,
    pub timings: Vec<Timing>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.to_pairs(),
            seed: cfg.seed,
            pipeline: cfg.pipeline,
            symmetrized: cfg.symmetrize,
            status: "ok".into(),
            error: None,
            exit_code: 0,
            r: None,
            gap_ratio: None,
            spectral_values: Vec::new(),
            warnings: Vec::new(),
            timings: Vec::new(),
            artifacts: Vec::new(),
        }
    }
}

/// Serialized spectral model: values, coefficient vectors (one per component)
/// and density samples on a midpoint grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralModelFile {
    pub mode: SpectralMode,
    pub operator: Operator,
    pub r: usize,
    pub values_re: Vec<f64>,
    pub values_im: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub right: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_imag: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<Vec<Vec<f64>>>,
    pub dictionary: DictionarySpec,
    pub epsilon: f64,
    pub density_grid: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_density: Option<Vec<f64>>,
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn from_columns(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let n = cols.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

impl SpectralModelFile {
    pub fn new(sm: &SpectralModel<f64>, r: usize) -> Self {
        Self {
            mode: sm.mode,
            operator: sm.operator,
            r,
            values_re: sm.values.iter().map(|v| v.re).collect(),
            values_im: sm.values.iter().map(|v| v.im).collect(),
            singular_values: sm.singular_values.clone(),
            right: columns(&sm.right),
            right_imag: sm.right_imag.as_ref().map(columns),
            left: sm.left.as_ref().map(columns),
            dictionary: sm.dictionary.spec(),
            epsilon: sm.epsilon,
            density_grid: PLOT_GRID,
            density: sm.density.as_ref().map(|d| d.on_grid(PLOT_GRID)),
            target_density: sm.target_density.as_ref().map(|d| d.on_grid(PLOT_GRID)),
        }
    }

    /// Rebuilds the model; densities become tabulated grids.
    pub fn model(&self) -> Result<SpectralModel<f64>> {
        Ok(SpectralModel {
            mode: self.mode,
            operator: self.operator,
            values: self
                .values_re
                .iter()
                .zip(&self.values_im)
                .map(|(&re, &im)| nalgebra::Complex::new(re, im))
                .collect(),
            singular_values: self.singular_values.clone(),
            right: from_columns(&self.right),
            right_imag: self.right_imag.as_deref().map(from_columns),
            left: self.left.as_deref().map(from_columns),
            dictionary: self.dictionary.build()?,
            density: self.density.clone().map(DensityEstimate::Tabulated),
            target_density: self.target_density.clone().map(DensityEstimate::Tabulated),
            epsilon: self.epsilon,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub r: usize,
    pub gap_ratio: f64,
    pub gap_warning: Option<String>,
    pub boundaries: Option<Vec<f64>>,
    pub inertia: f64,
    pub seed: u64,
    pub restarts: usize,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionSidecar {
    pub r: usize,
    pub mode: ReconstructionMode,
    pub values: Vec<f64>,
    pub z: Option<f64>,
    pub grid: usize,
    pub negativity_p: Negativity,
    pub negativity_w: Option<Negativity>,
    pub row_max: f64,
    pub row_mean: f64,
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output.clone())
}

struct Writer {
    dir: PathBuf,
    written: Vec<String>,
}

impl Writer {
    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }
}

fn write_signal(path: &Path, s: &SignalSeries) -> Result<()> {
    #[derive(Serialize)]
    struct Scaling<'a> {
        name: &'a str,
        min: f64,
        max: f64,
        rows: usize,
    }
    write_json(
        path,
        &Scaling {
            name: &s.name,
            min: s.min,
            max: s.max,
            rows: s.raw.len(),
        },
    )
}

fn write_artifacts(res: &RunResult, cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    write_trajectory_csv(&w.path("trajectory.csv"), &res.trajectory)?;
    if let Some(s) = &res.signal {
        write_signal(&w.path("signal.json"), s)?;
    }
    let om = &res.operators;
    fs::create_dir_all(w.dir.join("matrices"))?;
    for (name, m) in [
        ("matrices/C_xx.csv", &om.cov.cxx),
        ("matrices/C_xy.csv", &om.cov.cxy),
        ("matrices/C_yy.csv", &om.cov.cyy),
        ("matrices/C_yx.csv", &om.cov.cyx),
        ("matrices/K.csv", &om.k),
        ("matrices/T.csv", &om.t),
        ("matrices/F.csv", &om.f),
    ] {
        write_matrix_csv(&w.path(name), m)?;
    }

    let sm = &res.spectral;
    let mut spectrum = String::from("index,re,im,value\n");
    let vals = sm.spectral_values();
    for (i, v) in sm.values.iter().enumerate() {
        spectrum.push_str(&format!("{},{:?},{:?},{:?}\n", i + 1, v.re, v.im, vals[i]));
    }
    fs::write(w.path("spectrum.csv"), spectrum)?;
    write_json(&w.path("spectral_model.json"), &SpectralModelFile::new(sm, res.r))?;

    if let (Some(cm), Some(c)) = (&res.clusters, &res.transitions) {
        let mut out = String::from("index,x,label\n");
        for (i, (x, l)) in res.trajectory.states.iter().zip(&cm.assignments).enumerate() {
            out.push_str(&format!("{i},{x:?},{}\n", l + 1));
        }
        fs::write(w.path("clusters.csv"), out)?;
        write_matrix_csv(&w.path("transitions.csv"), c)?;
        write_json(
            &w.path("clusters.json"),
            &ClusterSummary {
                r: res.r,
                gap_ratio: res.gap.ratio,
                gap_warning: res.gap.warning.clone(),
                boundaries: cm.boundaries.clone(),
                inertia: cm.inertia,
                seed: cm.seed,
                restarts: cm.restarts,
                sizes: cm.sizes(),
            },
        )?;
    }

    if let (Some(p), Some(report)) = (&res.p, &res.row_report) {
        write_matrix_csv(&w.path("reconstruction_p.csv"), &p.values)?;
        if let Some(wr) = &res.w {
            write_matrix_csv(&w.path("reconstruction_w.csv"), &wr.values)?;
        }
        let values = match res.pipeline {
            Pipeline::Symmetric => sm.values.iter().take(res.r).map(|v| v.re).collect(),
            Pipeline::Asymmetric => sm.singular_values[..res.r].to_vec(),
        };
        write_json(
            &w.path("reconstruction.json"),
            &ReconstructionSidecar {
                r: res.r,
                mode: match res.pipeline {
                    Pipeline::Symmetric => ReconstructionMode::SymmetricEigen,
                    Pipeline::Asymmetric => ReconstructionMode::AsymmetricSvd,
                },
                values,
                z: res.w.as_ref().map(|_| 1.0),
                grid: cfg.grid,
                negativity_p: p.negativity,
                negativity_w: res.w.as_ref().map(|w| w.negativity),
                row_max: report.max,
                row_mean: report.mean,
            },
        )?;
    }
    Ok(())
}

/// Executes the pipeline and writes all artifacts plus `manifest.json` into
/// the output directory. Failures are recorded in the manifest before the
/// error is returned.
pub fn run(cfg: &RunConfig, stages: Stages) -> Result<(PathBuf, RunResult)> {
    let dir = output_dir(cfg);
    fs::create_dir_all(&dir)?;
    let mut manifest = Manifest::new(cfg);
    let mut writer = Writer {
        dir: dir.clone(),
        written: Vec::new(),
    };
    let outcome = execute(cfg, stages).and_then(|res| {
        write_artifacts(&res, cfg, &mut writer)?;
        Ok(res)
    });
    match &outcome {
        Ok(res) => {
            manifest.pipeline = Some(res.pipeline);
            manifest.symmetrized = Some(res.symmetrized);
            manifest.r = Some(res.r);
            manifest.gap_ratio = Some(res.gap.ratio);
            manifest.spectral_values = res.spectral_values();
            manifest.warnings = res.warnings.clone();
            manifest.timings = res
                .timings
                .iter()
                .map(|(s, ms)| Timing {
                    stage: s.clone(),
                    ms: *ms,
                })
                .collect();
            info!("run finished: r = {}, output in {}", res.r, dir.display());
        }
        Err(e) => {
            manifest.status = "error".into();
            manifest.error = Some(e.to_string());
            manifest.exit_code = e.exit_code();
        }
    }
    manifest.artifacts = std::mem::take(&mut writer.written);
    manifest.artifacts.push("manifest.json".into());
    write_json(&dir.join("manifest.json"), &manifest)?;
    outcome.map(|res| (dir, res))
}

/// Acquires the trajectory only (simulation or ingestion) and writes
/// `trajectory.csv`, the signal scaling if any, and a manifest.
pub fn simulate(cfg: &RunConfig) -> Result<(PathBuf, Trajectory<f64>)> {
    let dir = output_dir(cfg);
    fs::create_dir_all(&dir)?;
    let mut manifest = Manifest::new(cfg);
    let mut writer = Writer {
        dir: dir.clone(),
        written: Vec::new(),
    };
    let start = Instant::now();
    let outcome = cfg.validate().and_then(|_| acquire(cfg)).and_then(|(mut t, signal, _)| {
        t.periodic = cfg.is_periodic();
        write_trajectory_csv(&writer.path("trajectory.csv"), &t)?;
        if let Some(s) = &signal {
            write_signal(&writer.path("signal.json"), s)?;
        }
        Ok(t)
    });
    manifest.timings.push(Timing {
        stage: "acquire".into(),
        ms: start.elapsed().as_secs_f64() * 1e3,
    });
    if let Err(e) = &outcome {
        manifest.status = "error".into();
        manifest.error = Some(e.to_string());
        manifest.exit_code = e.exit_code();
    }
    manifest.artifacts = std::mem::take(&mut writer.written);
    manifest.artifacts.push("manifest.json".into());
    write_json(&dir.join("manifest.json"), &manifest)?;
    outcome.map(|t| (dir, t))
}

fn write_long(path: &Path, table: &DMatrix<f64>) -> Result<()> {
    let pts = midpoint_grid::<f64>(table.nrows());
    let mut out = String::from("x,y,value\n");
    for (i, x) in pts.iter().enumerate() {
        for (j, y) in pts.iter().enumerate() {
            out.push_str(&format!("{x:?},{y:?},{:?}\n", table[(i, j)]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes plotting tables for a completed run into `dir/plot`: spectrum,
/// spectral functions on a 1000-point grid, the labelled trajectory and
/// long-format reconstruction heat maps. Returns the files written.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<PathBuf>> {
    let model_file: SpectralModelFile = read_json(&dir.join("spectral_model.json"))?;
    let sm = model_file.model()?;
    let r = model_file.r.min(sm.rank());
    let plot = dir.join("plot");
    fs::create_dir_all(&plot)?;
    let mut written = Vec::new();

    let mut spectrum = String::from("index,re,im,value,laplacian\n");
    for (i, v) in sm.values.iter().enumerate() {
        let value = match sm.mode {
            SpectralMode::Eigen => v.re,
            SpectralMode::Singular => sm.singular_values[i],
        };
        spectrum.push_str(&format!("{},{:?},{:?},{:?},{:?}\n", i + 1, v.re, v.im, value, 1.0 - v.re));
    }
    let p = plot.join("spectrum.csv");
    fs::write(&p, spectrum)?;
    written.push(p);

    let xs = midpoint_grid::<f64>(PLOT_GRID);
    let right = sm.right_functions(&xs, r)?;
    let left = sm.left.as_ref().map(|_| sm.left_functions(&xs, r)).transpose()?;
    let (rname, lname) = match sm.mode {
        SpectralMode::Eigen => ("phi", "pf"),
        SpectralMode::Singular => ("v", "u"),
    };
    let mut header = vec!["x".to_string()];
    header.extend((1..=r).map(|l| format!("{rname}{l}")));
    if left.is_some() || sm.mode == SpectralMode::Eigen {
        header.extend((1..=r).map(|l| format!("{lname}{l}")));
    }
    header.push("density".into());
    if sm.target_density.is_some() {
        header.push("target_density".into());
    }
    let mut out = header.join(",") + "\n";
    for (i, &x) in xs.iter().enumerate() {
        let mut row = vec![format!("{x:?}")];
        row.extend((0..r).map(|l| format!("{:?}", right[(i, l)])));
        let d = sm.density.as_ref().map_or(1.0, |d| d.eval(x));
        match (&left, sm.mode) {
            (Some(u), _) => row.extend((0..r).map(|l| format!("{:?}", u[(i, l)]))),
            // Perron–Frobenius eigenfunctions φ̂ = π̃ φ.
            (None, SpectralMode::Eigen) => row.extend((0..r).map(|l| format!("{:?}", d * right[(i, l)]))),
            _ => {}
        }
        row.push(format!("{d:?}"));
        if let Some(t) = &sm.target_density {
            row.push(format!("{:?}", t.eval(x)));
        }
        out.push_str(&(row.join(",") + "\n"));
    }
    let p = plot.join("functions.csv");
    fs::write(&p, out)?;
    written.push(p);

    let clusters = dir.join("clusters.csv");
    let src = if clusters.exists() { clusters } else { dir.join("trajectory.csv") };
    if src.exists() {
        let p = plot.join("trajectory.csv");
        let text = fs::read_to_string(&src)?;
        let mut out = String::from("step,x,label\n");
        for (i, line) in text.lines().skip(1).enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            match cells.as_slice() {
                [_, x, label] => out.push_str(&format!("{i},{x},{label}\n")),
                [x] => out.push_str(&format!("{i},{x},\n")),
                _ => {
                    return Err(Error::Parse {
                        line: i + 2,
                        message: format!("unexpected row in {}", src.display()),
                    })
                }
            }
        }
        fs::write(&p, out)?;
        written.push(p);
    }

    for name in ["reconstruction_p", "reconstruction_w"] {
        let src = dir.join(format!("{name}.csv"));
        if src.exists() {
            let p = plot.join(format!("heatmap_{}.csv", &name["reconstruction_".len()..]));
            write_long(&p, &read_matrix_csv::<f64>(&src)?)?;
            written.push(p);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names_roundtrip() {
        for s in ["triple-peak", "quadruple-peak", "two-block(0.8,0.2)", "constant(0.5)", "bipartite", "lemon-slice"] {
            assert_eq!(s.parse::<Builtin>().unwrap().to_string(), s);
        }
        assert!("two-block(0.8)".parse::<Builtin>().is_err());
        assert!("nope".parse::<Builtin>().is_err());
    }

    #[test]
    fn config_file_and_overrides() {
        let text = "# demo\ngraphon = triple-peak\nn = 30   # basis size\nsigma = 0.04\nm = 5000\n";
        let mut map = RunConfig::parse_kv(text).unwrap();
        map.insert("seed".into(), "9".into());
        let cfg = RunConfig::from_pairs(&map).unwrap();
        assert_eq!(cfg.n, 30);
        assert_eq!(cfg.m, 5000);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.source, Source::Builtin(Builtin::TriplePeak));
        assert_eq!(RunConfig::from_pairs(&cfg.to_pairs()).unwrap(), cfg);
    }

    #[test]
    fn config_errors() {
        let parse = |t: &str| RunConfig::from_pairs(&RunConfig::parse_kv(t).unwrap());
        assert!(matches!(parse("n = 20"), Err(Error::Config(_))));
        assert!(matches!(parse("graphon = bipartite\nsignal = a.csv"), Err(Error::Config(_))));
        assert!(matches!(
            parse("graphon = quadruple-peak\npipeline = asymmetric\nsymmetrize = true"),
            Err(Error::Config(_))
        ));
        assert!(matches!(parse("graphon = bipartite\ncolour = red"), Err(Error::Config(_))));
        assert!(matches!(parse("graphon = bipartite\nsigma = -1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse_kv("just words"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn small_run_writes_manifest_and_plot_data() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::builtin(Builtin::TwoBlock(0.8, 0.2));
        cfg.m = 3000;
        cfg.n = 10;
        cfg.sigma = 0.1;
        cfg.output = dir.path().to_path_buf();
        let (out, res) = run(&cfg, Stages::ALL).unwrap();
        assert_eq!(res.r, 2);
        let manifest: Manifest = read_json(&out.join("manifest.json")).unwrap();
        assert_eq!(manifest.status, "ok");
        assert_eq!(manifest.spectral_values, res.spectral_values());
        for a in &manifest.artifacts {
            assert!(out.join(a).exists(), "{a}");
        }
        let again = RunConfig::from_manifest(&out.join("manifest.json")).unwrap();
        assert_eq!(again, cfg);
        let files = emit_plot_data(&out).unwrap();
        assert_eq!(files.len(), 5);
    }

    #[test]
    fn failures_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::builtin(Builtin::TriplePeak);
        cfg.source = Source::Trajectory(dir.path().join("missing.csv"));
        cfg.output = dir.path().join("out");
        let err = run(&cfg, Stages::ALL).unwrap_err();
        let manifest: Manifest = read_json(&cfg.output.join("manifest.json")).unwrap();
        assert_eq!(manifest.status, "error");
        assert_eq!(manifest.exit_code, err.exit_code());
    }
}
