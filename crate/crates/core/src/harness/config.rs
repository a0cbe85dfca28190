//! Flat `section.key = value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment. Lists are comma separated.
//! Every key is validated against the selected task; unknown and duplicate
//! keys are errors, and every error carries the line it refers to.

// negated comparisons below also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use crate::disorder::{DisorderKind, DisorderSpec};
use crate::geometry::{ConfigPoint, Cube, Rectangle};
use crate::msa::{scale_sequence, MsaMode};
use crate::observables::{DEFAULT_SHELL_FLOOR, DEFAULT_VERTEX_LIMIT};
use crate::operator::{InteractionKind, InteractionSpec};
use crate::spectral::DEFAULT_DENSE_LIMIT;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Msa,
    Decay,
    Moment,
    Spectrum,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Msa => "msa",
            TaskKind::Decay => "decay",
            TaskKind::Moment => "moment",
            TaskKind::Spectrum => "spectrum",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "msa" => Some(TaskKind::Msa),
            "decay" => Some(TaskKind::Decay),
            "moment" => Some(TaskKind::Moment),
            "spectrum" => Some(TaskKind::Spectrum),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub total_particles: usize,
    pub n: usize,
    pub d: usize,
    pub coupling: f64,
    pub dense_limit: usize,
}

/// Finite volume for the decay, moment and spectrum tasks.
#[derive(Clone, Debug, PartialEq)]
pub enum RegionConfig {
    /// Cube of the given radius centered at the origin.
    Cube(u32),
    /// Box `0 <= x_k < extent_k`, one extent per coordinate (or one for all).
    Box(Vec<u32>),
}

impl RegionConfig {
    pub fn rectangle(&self, n: usize, d: usize) -> Rectangle {
        match self {
            RegionConfig::Cube(r) => Cube::new(ConfigPoint::origin(n, d), *r).rectangle(),
            RegionConfig::Box(ext) => {
                let dim = n * d;
                let hi: Vec<i64> = (0..dim)
                    .map(|k| i64::from(if ext.len() == 1 { ext[0] } else { ext[k] }) - 1)
                    .collect();
                Rectangle::from_corners(n, d, vec![0; dim], hi).expect("validated extents")
            }
        }
    }

    pub fn cardinality(&self, n: usize, d: usize) -> f64 {
        match self {
            RegionConfig::Cube(r) => f64::from(2 * r + 1).powi((n * d) as i32),
            RegionConfig::Box(ext) => {
                if ext.len() == 1 {
                    f64::from(ext[0]).powi((n * d) as i32)
                } else {
                    ext.iter().map(|e| f64::from(*e)).product()
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScaleConfig {
    List(Vec<u32>),
    Sequence { l0: u32, count: usize, alpha: f64 },
}

impl ScaleConfig {
    pub fn radii(&self) -> Vec<u32> {
        match self {
            ScaleConfig::List(v) => v.clone(),
            ScaleConfig::Sequence { l0, count, alpha } => scale_sequence(*l0, *count, *alpha).expect("validated"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsaTaskConfig {
    pub mass: f64,
    pub p: f64,
    pub energy_lo: f64,
    pub energy_hi: f64,
    pub grid_step: f64,
    pub scales: ScaleConfig,
    pub mode: MsaMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayTaskConfig {
    pub region: RegionConfig,
    /// Only eigenvectors with energies in this window; all when absent.
    pub window: Option<(f64, f64)>,
    pub r_min: u32,
    pub r_max: Option<u32>,
    pub floor: f64,
    /// Eigenvector of realization 0 written to the plot files.
    pub plot_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentTaskConfig {
    pub region: RegionConfig,
    pub energy_lo: f64,
    pub energy_hi: f64,
    pub s: f64,
    /// `K` is the set of region sites within this sup distance of `origin`.
    pub k_radius: u32,
    pub origin: Vec<i64>,
    pub vertex_limit: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTaskConfig {
    pub region: RegionConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskConfig {
    Msa(MsaTaskConfig),
    Decay(DecayTaskConfig),
    Moment(MomentTaskConfig),
    Spectrum(SpectrumTaskConfig),
}

impl TaskConfig {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskConfig::Msa(_) => TaskKind::Msa,
            TaskConfig::Decay(_) => TaskKind::Decay,
            TaskConfig::Moment(_) => TaskKind::Moment,
            TaskConfig::Spectrum(_) => TaskKind::Spectrum,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub master_seed: u64,
    pub realizations: usize,
    /// 0 selects one worker per core.
    pub workers: usize,
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub disorder: DisorderSpec,
    pub interaction: InteractionSpec,
    pub task: TaskConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    /// Applies `ANDERSON_WORKERS` when it is set to an integer.
    pub fn apply_env_overrides(&mut self) -> Result<(), ConfigErrors> {
        if let Ok(raw) = std::env::var("ANDERSON_WORKERS") {
            self.run.workers = raw.trim().parse().map_err(|_| {
                ConfigErrors(vec![ConfigError {
                    line: 0,
                    key: Some("ANDERSON_WORKERS".into()),
                    message: format!("expected a non-negative integer, got {raw:?}"),
                }])
            })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line, 0 when the problem is not tied to a line.
    pub line: usize,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: ", self.line)?;
        }
        if let Some(k) = &self.key {
            write!(f, "{k}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const MODEL_KEYS: &[&str] = &["model.N", "model.n", "model.d", "model.h", "model.dense_limit"];
const DISORDER_KEYS: &[&str] = &[
    "disorder.kind",
    "disorder.low",
    "disorder.high",
    "disorder.q",
    "disorder.values",
    "disorder.probs",
    "disorder.amplitude",
];
const INTERACTION_KEYS: &[&str] = &[
    "interaction.kind",
    "interaction.C",
    "interaction.c",
    "interaction.tau",
    "interaction.range",
];
const RUN_KEYS: &[&str] = &["run.seed", "run.realizations", "run.workers", "run.output"];

fn task_keys(kind: TaskKind) -> &'static [&'static str] {
    match kind {
        TaskKind::Msa => &[
            "task.kind",
            "task.m",
            "task.p",
            "task.E_lo",
            "task.E_hi",
            "task.grid_step",
            "task.L_values",
            "task.L0",
            "task.scales",
            "task.alpha",
            "task.mode",
        ],
        TaskKind::Decay => &[
            "task.kind",
            "task.L",
            "task.box",
            "task.E_lo",
            "task.E_hi",
            "task.r_min",
            "task.r_max",
            "task.floor",
            "task.plot_index",
        ],
        TaskKind::Moment => &[
            "task.kind",
            "task.L",
            "task.box",
            "task.E_lo",
            "task.E_hi",
            "task.s",
            "task.K_radius",
            "task.origin",
            "task.vertex_limit",
        ],
        TaskKind::Spectrum => &["task.kind", "task.L", "task.box"],
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
    errors: Vec<ConfigError>,
}

impl Entries {
    fn err(&mut self, key: &str, message: impl Into<String>) {
        let line = self.map.get(key).map_or(0, |e| e.0);
        self.errors.push(ConfigError { line, key: Some(key.to_string()), message: message.into() });
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|e| e.1.as_str())
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        self.opt(key).unwrap_or(default)
    }

    fn opt<T: std::str::FromStr>(&mut self, key: &str) -> Option<T> {
        let raw = self.raw(key)?.to_string();
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.err(key, format!("cannot parse {raw:?} as {}", std::any::type_name::<T>()));
                None
            }
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Option<Vec<T>> {
        let raw = self.raw(key)?.to_string();
        let parsed: Result<Vec<T>, _> = raw.split(',').map(|s| s.trim().parse()).collect();
        match parsed {
            Ok(v) if !v.is_empty() => Some(v),
            _ => {
                self.err(key, format!("cannot parse {raw:?} as a comma-separated list"));
                None
            }
        }
    }
}

/// Parses a configuration whose `task.kind` key selects the task.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config_for(text, None)
}

/// Parses a configuration for the task named by `expected`, e.g. a CLI
/// subcommand; `task.kind` may then be omitted but must agree when present.
pub fn parse_config_for(text: &str, expected: Option<TaskKind>) -> Result<ExperimentConfig, ConfigErrors> {
    let mut entries = Entries { map: BTreeMap::new(), errors: Vec::new() };
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            entries.errors.push(ConfigError {
                line: line_no,
                key: None,
                message: format!("expected `section.key = value`, got {line:?}"),
            });
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || !k.contains('.') {
            entries.errors.push(ConfigError {
                line: line_no,
                key: Some(k.to_string()),
                message: "keys have the form section.key".into(),
            });
            continue;
        }
        if let Some((first, _)) = entries.map.get(k) {
            entries.errors.push(ConfigError {
                line: line_no,
                key: Some(k.to_string()),
                message: format!("duplicate key, first set on line {first} and again on line {line_no}"),
            });
            continue;
        }
        entries.map.insert(k.to_string(), (line_no, v.to_string()));
    }

    let kind = match (entries.raw("task.kind").map(str::to_string), expected) {
        (Some(name), exp) => match TaskKind::parse(&name) {
            Some(k) if exp.is_none_or(|e| e == k) => Some(k),
            Some(k) => {
                let e = exp.expect("mismatch implies expected");
                entries.err("task.kind", format!("config is a {} task but {} was requested", k.name(), e.name()));
                None
            }
            None => {
                entries.err("task.kind", format!("unsupported task {name:?}; use msa, decay, moment or spectrum"));
                None
            }
        },
        (None, Some(k)) => Some(k),
        (None, None) => {
            entries.errors.push(ConfigError {
                line: 0,
                key: Some("task.kind".into()),
                message: "missing; set task.kind or run through a task subcommand".into(),
            });
            None
        }
    };

    if let Some(kind) = kind {
        let allowed: Vec<&str> = [MODEL_KEYS, DISORDER_KEYS, INTERACTION_KEYS, RUN_KEYS, task_keys(kind)].concat();
        let unknown: Vec<String> = entries.map.keys().filter(|k| !allowed.contains(&k.as_str())).cloned().collect();
        for k in unknown {
            entries.err(&k, format!("unknown key for a {} task", kind.name()));
        }
    }

    let model = parse_model(&mut entries);
    let disorder = parse_disorder(&mut entries);
    let interaction = parse_interaction(&mut entries);
    let run = parse_run(&mut entries);
    let task = kind.map(|k| parse_task(&mut entries, k, &model));

    if entries.errors.is_empty() {
        if let Some(task) = task {
            let cfg = ExperimentConfig { model, disorder, interaction, task, run };
            validate(&cfg, &mut entries);
            if entries.errors.is_empty() {
                return Ok(cfg);
            }
        }
    }
    entries.errors.sort_by_key(|e| e.line);
    Err(ConfigErrors(entries.errors))
}

fn parse_model(e: &mut Entries) -> ModelConfig {
    let total_particles = e.get("model.N", 1usize);
    ModelConfig {
        total_particles,
        n: e.get("model.n", total_particles),
        d: e.get("model.d", 1usize),
        coupling: e.get("model.h", 0.0),
        dense_limit: e.get("model.dense_limit", DEFAULT_DENSE_LIMIT),
    }
}

fn parse_disorder(e: &mut Entries) -> DisorderSpec {
    let kind_name = e.raw("disorder.kind").unwrap_or("bernoulli").to_string();
    let amplitude = e.get("disorder.amplitude", 1.0);
    let forbid = |e: &mut Entries, keys: &[&str], kind: &str| {
        for k in keys {
            if e.raw(k).is_some() {
                e.err(k, format!("not used by {kind} disorder"));
            }
        }
    };
    let kind = match kind_name.as_str() {
        "bernoulli" => {
            forbid(e, &["disorder.values", "disorder.probs"], "bernoulli");
            DisorderKind::Bernoulli {
                low: e.get("disorder.low", 0.0),
                high: e.get("disorder.high", 1.0),
                q: e.get("disorder.q", 0.5),
            }
        }
        "discrete" => {
            forbid(e, &["disorder.low", "disorder.high", "disorder.q"], "discrete");
            let values = e.list("disorder.values").unwrap_or_default();
            let probs = e.list("disorder.probs").unwrap_or_default();
            if e.raw("disorder.values").is_none() {
                e.err("disorder.values", "required for discrete disorder");
            }
            if e.raw("disorder.probs").is_none() {
                e.err("disorder.probs", "required for discrete disorder");
            }
            DisorderKind::FiniteDiscrete { values, probs }
        }
        "uniform" => {
            forbid(e, &["disorder.values", "disorder.probs", "disorder.q"], "uniform");
            DisorderKind::Uniform { low: e.get("disorder.low", -0.5), high: e.get("disorder.high", 0.5) }
        }
        other => {
            e.err("disorder.kind", format!("unsupported kind {other:?}; use bernoulli, discrete or uniform"));
            DisorderKind::Bernoulli { low: 0.0, high: 1.0, q: 0.5 }
        }
    };
    DisorderSpec { kind, amplitude }
}

fn parse_interaction(e: &mut Entries) -> InteractionSpec {
    let kind = match e.raw("interaction.kind").unwrap_or("subexponential").to_string().as_str() {
        "subexponential" => {
            if e.raw("interaction.range").is_some() {
                e.err("interaction.range", "only used by finite_range interaction");
            }
            InteractionKind::SubExponential
        }
        "finite_range" => match e.opt::<u32>("interaction.range") {
            Some(r) => InteractionKind::FiniteRange(r),
            None => {
                if e.raw("interaction.range").is_none() {
                    e.err("interaction.range", "required for finite_range interaction");
                }
                InteractionKind::FiniteRange(0)
            }
        },
        other => {
            e.err("interaction.kind", format!("unsupported kind {other:?}; use subexponential or finite_range"));
            InteractionKind::SubExponential
        }
    };
    InteractionSpec {
        strength: e.get("interaction.C", 1.0),
        decay: e.get("interaction.c", 1.0),
        tau: e.get("interaction.tau", 0.5),
        kind,
    }
}

fn parse_run(e: &mut Entries) -> RunConfig {
    RunConfig {
        master_seed: e.get("run.seed", 0u64),
        realizations: e.get("run.realizations", 100usize),
        workers: e.get("run.workers", 0usize),
        output: PathBuf::from(e.raw("run.output").unwrap_or("out")),
    }
}

fn parse_region(e: &mut Entries) -> RegionConfig {
    match (e.raw("task.L").is_some(), e.raw("task.box").is_some()) {
        (true, true) => {
            e.err("task.box", "give either task.L or task.box, not both");
            RegionConfig::Cube(0)
        }
        (false, true) => RegionConfig::Box(e.list("task.box").unwrap_or_else(|| vec![1])),
        (true, false) => RegionConfig::Cube(e.get("task.L", 0)),
        (false, false) => {
            e.errors.push(ConfigError { line: 0, key: Some("task.L".into()), message: "missing; set task.L or task.box".into() });
            RegionConfig::Cube(0)
        }
    }
}

fn parse_task(e: &mut Entries, kind: TaskKind, model: &ModelConfig) -> TaskConfig {
    match kind {
        TaskKind::Msa => {
            let scales = if e.raw("task.L_values").is_some() {
                for k in ["task.L0", "task.scales", "task.alpha"] {
                    if e.raw(k).is_some() {
                        e.err(k, "conflicts with task.L_values");
                    }
                }
                ScaleConfig::List(e.list("task.L_values").unwrap_or_default())
            } else if e.raw("task.L0").is_some() {
                ScaleConfig::Sequence {
                    l0: e.get("task.L0", 2),
                    count: e.get("task.scales", 3),
                    alpha: e.get("task.alpha", 1.5),
                }
            } else {
                e.errors.push(ConfigError {
                    line: 0,
                    key: Some("task.L_values".into()),
                    message: "missing; set task.L_values or task.L0".into(),
                });
                ScaleConfig::List(Vec::new())
            };
            let mode = match e.raw("task.mode").unwrap_or("monte_carlo") {
                "monte_carlo" => MsaMode::MonteCarlo,
                "exact_bernoulli" => MsaMode::ExactBernoulli,
                other => {
                    let msg = format!("unsupported mode {other:?}; use monte_carlo or exact_bernoulli");
                    e.err("task.mode", msg);
                    MsaMode::MonteCarlo
                }
            };
            let default_p = (6 * model.total_particles * model.d + 1) as f64;
            TaskConfig::Msa(MsaTaskConfig {
                mass: e.get("task.m", 0.5),
                p: e.get("task.p", default_p),
                energy_lo: e.get("task.E_lo", 0.0),
                energy_hi: e.get("task.E_hi", 1.0),
                grid_step: e.get("task.grid_step", 1e-3),
                scales,
                mode,
            })
        }
        TaskKind::Decay => {
            let region = parse_region(e);
            let window = match (e.opt::<f64>("task.E_lo"), e.opt::<f64>("task.E_hi")) {
                (Some(lo), Some(hi)) => Some((lo, hi)),
                (None, None) => None,
                (Some(_), None) => {
                    e.err("task.E_lo", "the energy window needs both task.E_lo and task.E_hi");
                    None
                }
                (None, Some(_)) => {
                    e.err("task.E_hi", "the energy window needs both task.E_lo and task.E_hi");
                    None
                }
            };
            TaskConfig::Decay(DecayTaskConfig {
                region,
                window,
                r_min: e.get("task.r_min", 0),
                r_max: e.opt("task.r_max"),
                floor: e.get("task.floor", DEFAULT_SHELL_FLOOR),
                plot_index: e.get("task.plot_index", 0),
            })
        }
        TaskKind::Moment => {
            let region = parse_region(e);
            let default_k = match &region {
                RegionConfig::Cube(r) => *r,
                RegionConfig::Box(ext) => ext.iter().copied().max().unwrap_or(1),
            };
            let origin = e.list("task.origin").unwrap_or_else(|| vec![0; model.n * model.d]);
            TaskConfig::Moment(MomentTaskConfig {
                region,
                energy_lo: e.get("task.E_lo", 0.0),
                energy_hi: e.get("task.E_hi", 1.0),
                s: e.get("task.s", 1.0),
                k_radius: e.get("task.K_radius", default_k),
                origin,
                vertex_limit: e.get("task.vertex_limit", DEFAULT_VERTEX_LIMIT),
            })
        }
        TaskKind::Spectrum => TaskConfig::Spectrum(SpectrumTaskConfig { region: parse_region(e) }),
    }
}

fn validate(cfg: &ExperimentConfig, e: &mut Entries) {
    let m = &cfg.model;
    if m.total_particles < 1 {
        e.err("model.N", "must be >= 1");
    }
    if m.n < 1 || m.n > m.total_particles {
        e.err("model.n", format!("need 1 <= n <= N = {}", m.total_particles));
    }
    if m.d < 1 {
        e.err("model.d", "must be >= 1");
    }
    if m.total_particles > 16 {
        e.err("model.N", "at most 16 particles are supported");
    }
    if !m.coupling.is_finite() {
        e.err("model.h", "must be finite");
    }
    if let Err(err) = cfg.disorder.check() {
        let key = match &cfg.disorder.kind {
            _ if cfg.disorder.amplitude < 0.0 || !cfg.disorder.amplitude.is_finite() => "disorder.amplitude",
            DisorderKind::Bernoulli { q, .. } if !(*q > 0.0 && *q < 1.0) => "disorder.q",
            DisorderKind::FiniteDiscrete { .. } => "disorder.probs",
            _ => "disorder.kind",
        };
        e.err(key, err.to_string());
    }
    if let Err(err) = cfg.interaction.check() {
        let key = if !(cfg.interaction.strength > 0.0) {
            "interaction.C"
        } else if !(cfg.interaction.decay > 0.0) {
            "interaction.c"
        } else {
            "interaction.tau"
        };
        e.err(key, err.to_string());
    }
    if cfg.run.realizations < 1 {
        e.err("run.realizations", "must be >= 1");
    }
    let size_check = |e: &mut Entries, region: &RegionConfig, key: &str| {
        if let RegionConfig::Box(ext) = region {
            if ext.contains(&0) || (ext.len() != 1 && ext.len() != m.n * m.d) {
                e.err(key, format!("need 1 or n*d = {} positive extents", m.n * m.d));
                return;
            }
        }
        let size = region.cardinality(m.n, m.d);
        if size > m.dense_limit as f64 {
            e.err(key, format!("region has {size} sites, above model.dense_limit = {}", m.dense_limit));
        }
    };
    match &cfg.task {
        TaskConfig::Msa(t) => {
            if !(t.mass > 0.0) {
                e.err("task.m", "must be > 0");
            }
            if !(t.energy_lo <= t.energy_hi) {
                e.err("task.E_hi", "need task.E_lo <= task.E_hi");
            }
            if !(t.grid_step > 0.0) {
                e.err("task.grid_step", "must be > 0");
            }
            match &t.scales {
                ScaleConfig::List(v) => {
                    if v.contains(&0) {
                        e.err("task.L_values", "every scale must be >= 1");
                    }
                }
                ScaleConfig::Sequence { l0, count, alpha } => {
                    if let Err(err) = scale_sequence(*l0, *count, *alpha) {
                        e.err("task.L0", err.to_string());
                    }
                }
            }
            if e.errors.is_empty() {
                let radii = t.scales.radii();
                let max_l = radii.iter().copied().max().unwrap_or(0);
                let size = f64::from(2 * max_l + 1).powi((m.n * m.d) as i32);
                if size > m.dense_limit as f64 {
                    e.err("task.L_values", format!("cube of radius {max_l} has {size} sites, above the dense limit"));
                }
                if t.mode == MsaMode::ExactBernoulli {
                    if cfg.disorder.bernoulli_parts().is_none() {
                        e.err("task.mode", "exact_bernoulli needs disorder.kind = bernoulli");
                    }
                    for &l in &radii {
                        let (u, v) = crate::msa::canonical_pair(m.n, m.d, l, m.total_particles);
                        let sites = crate::msa::pair_region(&u, &v, l).len();
                        if sites > crate::msa::EXACT_SITE_LIMIT {
                            e.err("task.mode", format!("L = {l} needs {sites} sites, above the exact limit of {}", crate::msa::EXACT_SITE_LIMIT));
                        }
                    }
                }
            }
        }
        TaskConfig::Decay(t) => {
            size_check(e, &t.region, if matches!(t.region, RegionConfig::Box(_)) { "task.box" } else { "task.L" });
            if let Some((lo, hi)) = t.window {
                if !(lo <= hi) {
                    e.err("task.E_hi", "need task.E_lo <= task.E_hi");
                }
            }
            if !(t.floor > 0.0 && t.floor < 1.0) {
                e.err("task.floor", "must lie in (0, 1)");
            }
        }
        TaskConfig::Moment(t) => {
            size_check(e, &t.region, if matches!(t.region, RegionConfig::Box(_)) { "task.box" } else { "task.L" });
            if !(t.energy_lo <= t.energy_hi) {
                e.err("task.E_hi", "need task.E_lo <= task.E_hi");
            }
            if !(t.s >= 0.0 && t.s.is_finite()) {
                e.err("task.s", "only s >= 0 is supported");
            }
            if t.origin.len() != m.n * m.d {
                e.err("task.origin", format!("need n*d = {} coordinates", m.n * m.d));
            }
        }
        TaskConfig::Spectrum(t) => {
            size_check(e, &t.region, if matches!(t.region, RegionConfig::Box(_)) { "task.box" } else { "task.L" });
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl fmt::Display for ExperimentConfig {
    /// Canonical text form; parses back to an equal configuration.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let m = &self.model;
        let _ = writeln!(s, "model.N = {}", m.total_particles);
        let _ = writeln!(s, "model.n = {}", m.n);
        let _ = writeln!(s, "model.d = {}", m.d);
        let _ = writeln!(s, "model.h = {}", m.coupling);
        let _ = writeln!(s, "model.dense_limit = {}", m.dense_limit);
        match &self.disorder.kind {
            DisorderKind::Bernoulli { low, high, q } => {
                let _ = writeln!(s, "disorder.kind = bernoulli");
                let _ = writeln!(s, "disorder.low = {low}");
                let _ = writeln!(s, "disorder.high = {high}");
                let _ = writeln!(s, "disorder.q = {q}");
            }
            DisorderKind::FiniteDiscrete { values, probs } => {
                let _ = writeln!(s, "disorder.kind = discrete");
                let _ = writeln!(s, "disorder.values = {}", join(values));
                let _ = writeln!(s, "disorder.probs = {}", join(probs));
            }
            DisorderKind::Uniform { low, high } => {
                let _ = writeln!(s, "disorder.kind = uniform");
                let _ = writeln!(s, "disorder.low = {low}");
                let _ = writeln!(s, "disorder.high = {high}");
            }
        }
        let _ = writeln!(s, "disorder.amplitude = {}", self.disorder.amplitude);
        let i = &self.interaction;
        match i.kind {
            InteractionKind::SubExponential => {
                let _ = writeln!(s, "interaction.kind = subexponential");
            }
            InteractionKind::FiniteRange(r) => {
                let _ = writeln!(s, "interaction.kind = finite_range");
                let _ = writeln!(s, "interaction.range = {r}");
            }
        }
        let _ = writeln!(s, "interaction.C = {}", i.strength);
        let _ = writeln!(s, "interaction.c = {}", i.decay);
        let _ = writeln!(s, "interaction.tau = {}", i.tau);
        let _ = writeln!(s, "task.kind = {}", self.task.kind().name());
        let region = |s: &mut String, r: &RegionConfig| {
            let _ = match r {
                RegionConfig::Cube(l) => writeln!(s, "task.L = {l}"),
                RegionConfig::Box(ext) => writeln!(s, "task.box = {}", join(ext)),
            };
        };
        match &self.task {
            TaskConfig::Msa(t) => {
                let _ = writeln!(s, "task.m = {}", t.mass);
                let _ = writeln!(s, "task.p = {}", t.p);
                let _ = writeln!(s, "task.E_lo = {}", t.energy_lo);
                let _ = writeln!(s, "task.E_hi = {}", t.energy_hi);
                let _ = writeln!(s, "task.grid_step = {}", t.grid_step);
                match &t.scales {
                    ScaleConfig::List(v) => {
                        let _ = writeln!(s, "task.L_values = {}", join(v));
                    }
                    ScaleConfig::Sequence { l0, count, alpha } => {
                        let _ = writeln!(s, "task.L0 = {l0}");
                        let _ = writeln!(s, "task.scales = {count}");
                        let _ = writeln!(s, "task.alpha = {alpha}");
                    }
                }
                let mode = match t.mode {
                    MsaMode::MonteCarlo => "monte_carlo",
                    MsaMode::ExactBernoulli => "exact_bernoulli",
                };
                let _ = writeln!(s, "task.mode = {mode}");
            }
            TaskConfig::Decay(t) => {
                region(&mut s, &t.region);
                if let Some((lo, hi)) = t.window {
                    let _ = writeln!(s, "task.E_lo = {lo}");
                    let _ = writeln!(s, "task.E_hi = {hi}");
                }
                let _ = writeln!(s, "task.r_min = {}", t.r_min);
                if let Some(r) = t.r_max {
                    let _ = writeln!(s, "task.r_max = {r}");
                }
                let _ = writeln!(s, "task.floor = {}", t.floor);
                let _ = writeln!(s, "task.plot_index = {}", t.plot_index);
            }
            TaskConfig::Moment(t) => {
                region(&mut s, &t.region);
                let _ = writeln!(s, "task.E_lo = {}", t.energy_lo);
                let _ = writeln!(s, "task.E_hi = {}", t.energy_hi);
                let _ = writeln!(s, "task.s = {}", t.s);
                let _ = writeln!(s, "task.K_radius = {}", t.k_radius);
                let _ = writeln!(s, "task.origin = {}", join(&t.origin));
                let _ = writeln!(s, "task.vertex_limit = {}", t.vertex_limit);
            }
            TaskConfig::Spectrum(t) => region(&mut s, &t.region),
        }
        let r = &self.run;
        let _ = writeln!(s, "run.seed = {}", r.master_seed);
        let _ = writeln!(s, "run.realizations = {}", r.realizations);
        let _ = writeln!(s, "run.workers = {}", r.workers);
        let _ = writeln!(s, "run.output = {}", r.output.display());
        f.write_str(&s)
    }
}
