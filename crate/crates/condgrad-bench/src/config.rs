//! Experiment configuration: defaults, `key = value` file parsing, and CLI
//! overrides.

use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    FwCompletion,
    Svrf,
    Ssvrf,
    LmoBench,
    VerifyBounds,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::FwCompletion => "fw-completion",
            ExperimentKind::Svrf => "svrf",
            ExperimentKind::Ssvrf => "ssvrf",
            ExperimentKind::LmoBench => "lmo-bench",
            ExperimentKind::VerifyBounds => "verify-bounds",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "fw-completion" => Ok(ExperimentKind::FwCompletion),
            "svrf" => Ok(ExperimentKind::Svrf),
            "ssvrf" => Ok(ExperimentKind::Ssvrf),
            "lmo-bench" => Ok(ExperimentKind::LmoBench),
            "verify-bounds" => Ok(ExperimentKind::VerifyBounds),
            other => Err(ConfigError(format!("unknown experiment kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPolicy {
    /// Radius set to the nuclear norm of the instance's ground truth.
    NuclearOfTruth,
    /// Explicit radius.
    Explicit(f64),
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Flat experiment configuration shared by all subcommands; fields not
/// relevant to a given kind are ignored by its runner.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Column dimension of completion instances (desk-scale default 200).
    pub n: usize,
    /// Row dimension for rectangular instances.
    pub m: usize,
    /// Rank grid for the completion replication.
    pub rank_grid: Vec<usize>,
    /// Single rank for instance-based runs.
    pub rank: usize,
    pub sample_rate: f64,
    pub noise_scale: f64,
    pub alpha_policy: AlphaPolicy,
    /// Residual tolerance grid for the completion replication.
    pub xi_grid: Vec<f64>,
    pub delta: f64,
    pub seeds: Vec<u64>,
    pub max_iter: usize,
    pub time_budget_s: Option<f64>,
    /// Epoch count for the stochastic variants.
    pub epochs: usize,
    /// Sketch target rank.
    pub target_rank: usize,
    pub batch_multiplier: f64,
    /// Stochastic variant selector: "restart" or "stable".
    pub stable_variant: bool,
    pub shadow: bool,
    /// Term count of the quadratic finite-sum testbed.
    pub terms: usize,
    /// Dimension of the quadratic finite-sum testbed.
    pub dim: usize,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut cfg = Self {
            kind,
            n: 200,
            m: 20,
            rank_grid: vec![10, 50, 100],
            rank: 2,
            sample_rate: 0.8,
            noise_scale: 0.1,
            alpha_policy: AlphaPolicy::NuclearOfTruth,
            xi_grid: vec![1e-15, 1e-5, 1.0],
            delta: 0.1,
            seeds: vec![1],
            max_iter: 1200,
            time_budget_s: Some(30.0),
            epochs: 4,
            target_rank: 2,
            batch_multiplier: 1.0,
            stable_variant: false,
            shadow: false,
            terms: 500,
            dim: 50,
        };
        match kind {
            ExperimentKind::Ssvrf => {
                // Desk-scale rectangular recovery instance.
                cfg.n = 15;
                cfg.m = 20;
                cfg.sample_rate = 1.0;
                cfg.noise_scale = 0.0;
                cfg.epochs = 6;
                cfg.time_budget_s = None;
            }
            ExperimentKind::Svrf => {
                cfg.seeds = (1..=20).collect();
                cfg.time_budget_s = None;
            }
            ExperimentKind::LmoBench => {
                cfg.rank = 10;
                cfg.time_budget_s = None;
            }
            _ => {}
        }
        cfg
    }

    /// Applies one `key = value` assignment. Unknown keys are errors.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |what: &str| ConfigError(format!("bad value `{value}` for `{what}`"));
        match key {
            "kind" => {
                let parsed = ExperimentKind::parse(value)?;
                if parsed != self.kind {
                    return Err(ConfigError(format!(
                        "config kind `{value}` does not match the subcommand `{}`",
                        self.kind.as_str()
                    )));
                }
            }
            "n" => self.n = value.parse().map_err(|_| bad("n"))?,
            "m" => self.m = value.parse().map_err(|_| bad("m"))?,
            "rank" => self.rank = value.parse().map_err(|_| bad("rank"))?,
            "ranks" => {
                self.rank_grid = parse_list(value).map_err(|_| bad("ranks"))?;
            }
            "p" => self.sample_rate = value.parse().map_err(|_| bad("p"))?,
            "noise_scale" => self.noise_scale = value.parse().map_err(|_| bad("noise_scale"))?,
            "alpha" => {
                self.alpha_policy = AlphaPolicy::Explicit(value.parse().map_err(|_| bad("alpha"))?)
            }
            "alpha_policy" => {
                self.alpha_policy = match value {
                    "nuclear-of-truth" => AlphaPolicy::NuclearOfTruth,
                    other => {
                        let rest = other
                            .strip_prefix("explicit(")
                            .and_then(|s| s.strip_suffix(')'))
                            .ok_or_else(|| bad("alpha_policy"))?;
                        AlphaPolicy::Explicit(rest.parse().map_err(|_| bad("alpha_policy"))?)
                    }
                }
            }
            "xi" => self.xi_grid = vec![value.parse().map_err(|_| bad("xi"))?],
            "xis" => self.xi_grid = parse_list(value).map_err(|_| bad("xis"))?,
            "delta" => self.delta = value.parse().map_err(|_| bad("delta"))?,
            "seeds" => self.seeds = parse_list(value).map_err(|_| bad("seeds"))?,
            "seed" => self.seeds = vec![value.parse().map_err(|_| bad("seed"))?],
            "max_iters" => self.max_iter = value.parse().map_err(|_| bad("max_iters"))?,
            "time_budget_s" => {
                self.time_budget_s = if value == "none" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("time_budget_s"))?)
                }
            }
            "epochs" => self.epochs = value.parse().map_err(|_| bad("epochs"))?,
            "target_rank" => self.target_rank = value.parse().map_err(|_| bad("target_rank"))?,
            "batch_multiplier" => {
                self.batch_multiplier = value.parse().map_err(|_| bad("batch_multiplier"))?
            }
            "variant" => {
                self.stable_variant = match value {
                    "restart" => false,
                    "stable" => true,
                    _ => return Err(bad("variant")),
                }
            }
            "shadow" => self.shadow = value.parse().map_err(|_| bad("shadow"))?,
            "terms" => self.terms = value.parse().map_err(|_| bad("terms"))?,
            "dim" => self.dim = value.parse().map_err(|_| bad("dim"))?,
            other => return Err(ConfigError(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Loads assignments from a line-oriented `key = value` UTF-8 file.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.apply(key.trim(), value.trim())
                .map_err(|e| ConfigError(format!("line {}: {}", lineno + 1, e.0)))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError(format!("`{name}` must be positive, got {v}")))
            }
        };
        positive(self.sample_rate, "p")?;
        if self.sample_rate > 1.0 {
            return Err(ConfigError(format!("`p` must be at most 1, got {}", self.sample_rate)));
        }
        if self.noise_scale < 0.0 {
            return Err(ConfigError("`noise_scale` must be nonnegative".into()));
        }
        if self.delta < 0.0 {
            return Err(ConfigError("`delta` must be nonnegative".into()));
        }
        if let AlphaPolicy::Explicit(a) = self.alpha_policy {
            positive(a, "alpha")?;
        }
        for &xi in &self.xi_grid {
            positive(xi, "xi")?;
        }
        if self.seeds.is_empty() {
            return Err(ConfigError("`seeds` must be nonempty".into()));
        }
        if let Some(t) = self.time_budget_s {
            positive(t, "time_budget_s")?;
        }
        Ok(())
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, ()> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse().map_err(|_| ())?);
    }
    if out.is_empty() {
        Err(())
    } else {
        Ok(out)
    }
}
