use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CommonArgs;
use crate::dataset::{generate_synthetic, load_csv, Dataset, Trigger, TriggerKind};
use crate::error::{Error, Result};
use crate::risk::ModelWeights;
use crate::seed;

pub const DEFAULT_GAMMA: f64 = 0.1;
pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_DELTA: f64 = 1e-3;
pub const DEFAULT_TRIALS: usize = 20_000;
pub const DEFAULT_ALPHAS: [f64; 5] = [0.01, 0.05, 0.1, 0.2, 0.5];
pub const DEFAULT_SCALE: f64 = 1.0;
pub const DEFAULT_BOUND: f64 = 1.0;
pub const DEFAULT_ORACLE_BUDGET: usize = 256;
pub const DEFAULT_STEPS: usize = 100;

/// Settings file accepted by `--config`; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub data: Option<PathBuf>,
    pub header: Option<bool>,
    pub synthetic: Option<String>,
    pub weights: Option<Vec<f64>>,
    pub weights_seed: Option<u64>,
    pub kind: Option<TriggerKind>,
    pub xv: Option<Vec<f64>>,
    pub yv: Option<f64>,
    pub trigger_file: Option<PathBuf>,
    pub scale: Option<f64>,
    pub bound: Option<f64>,
    pub x_norm_max: Option<f64>,
    pub gamma: Option<f64>,
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub trials: Option<usize>,
    pub alphas: Option<Vec<f64>>,
    pub oracle_budget: Option<usize>,
    pub steps: Option<usize>,
    pub noisy: Option<bool>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::invalid("config", format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Csv { path: PathBuf, header: bool },
    Synthetic { n: usize, d: usize, seed: u64 },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Csv { path, header } => load_csv(path, *header),
            DataSource::Synthetic { n, d, seed } => generate_synthetic(*n, *d, *seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsSource {
    Explicit(Vec<f64>),
    Seed(u64),
}

impl WeightsSource {
    /// Explicit weights, or `N(0, I)` draws from the seed's weight stream.
    pub fn resolve(&self, dim: usize) -> Result<ModelWeights> {
        match self {
            WeightsSource::Explicit(w) => {
                if w.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: w.len(),
                    });
                }
                ModelWeights::new(w.clone())
            }
            WeightsSource::Seed(s) => {
                use rand::Rng;
                let mut rng = seed::substream(*s, 0, seed::TAG_WEIGHTS);
                let w: Vec<f64> = (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                ModelWeights::new(w)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "lowercase")]
pub enum TriggerSpec {
    Construct { kind: TriggerKind },
    Manual { x_v: Vec<f64>, y_v: f64 },
    File { path: PathBuf },
}

impl TriggerSpec {
    pub fn load_file(path: &Path) -> Result<Trigger> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let t: Trigger = serde_json::from_str(&text)?;
        t.validate()?;
        Ok(t)
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub weights: WeightsSource,
    pub trigger: TriggerSpec,
    pub scale: f64,
    pub bound: f64,
    pub x_norm_max: Option<f64>,
    pub gamma: f64,
    pub sigma: f64,
    pub delta: f64,
    pub trials: usize,
    pub alphas: Vec<f64>,
    pub oracle_budget: usize,
    pub steps: usize,
    pub noisy: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub json: bool,
}

pub(crate) fn parse_list(s: &str, name: &'static str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|f| {
            let f = f.trim();
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::invalid(name, format!("not a finite number: {f:?}")))
        })
        .collect()
}

/// Parses `n=..,d=..,seed=..`; `seed` defaults to `default_seed`.
pub(crate) fn parse_synthetic(s: &str, default_seed: u64) -> Result<DataSource> {
    let (mut n, mut d, mut seed) = (None, None, default_seed);
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::invalid("synthetic", format!("expected key=value, got {part:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u64>()
                .map_err(|_| Error::invalid("synthetic", format!("{key} must be a nonnegative integer, got {v:?}")))
        };
        match key.trim() {
            "n" => n = Some(parse(value)? as usize),
            "d" => d = Some(parse(value)? as usize),
            "seed" => seed = parse(value)?,
            other => return Err(Error::invalid("synthetic", format!("unknown key {other:?}"))),
        }
    }
    match (n, d) {
        (Some(n), Some(d)) => Ok(DataSource::Synthetic { n, d, seed }),
        _ => Err(Error::invalid("synthetic", "needs both n= and d=")),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("BADGD_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid("BADGD_SEED", format!("not an integer: {v:?}"))),
        Err(_) => Ok(None),
    }
}

impl RunConfig {
    /// Resolves flags over the `--config` file over defaults. The seed
    /// falls back to `$BADGD_SEED` before the default of 0.
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let seed = match args.seed.or(file.seed) {
            Some(s) => s,
            None => env_seed()?.unwrap_or(0),
        };

        let data = if let Some(path) = &args.data {
            DataSource::Csv {
                path: path.clone(),
                header: args.header,
            }
        } else if let Some(spec) = &args.synthetic {
            parse_synthetic(spec, seed)?
        } else if let Some(path) = &file.data {
            DataSource::Csv {
                path: path.clone(),
                header: args.header || file.header.unwrap_or(false),
            }
        } else if let Some(spec) = &file.synthetic {
            parse_synthetic(spec, seed)?
        } else {
            return Err(Error::invalid("data", "one of --data or --synthetic is required"));
        };

        let weights = if let Some(list) = &args.weights {
            WeightsSource::Explicit(parse_list(list, "weights")?)
        } else if let Some(s) = args.weights_seed {
            WeightsSource::Seed(s)
        } else if let Some(w) = &file.weights {
            WeightsSource::Explicit(w.clone())
        } else {
            WeightsSource::Seed(file.weights_seed.unwrap_or(seed))
        };

        let kind = args.kind.or(file.kind).unwrap_or(TriggerKind::GradDistWarp);
        let trigger = if let Some(path) = args.trigger_file.clone().or(file.trigger_file.clone()) {
            TriggerSpec::File { path }
        } else if kind == TriggerKind::Manual {
            let x_v = match &args.xv {
                Some(s) => Some(parse_list(s, "xv")?),
                None => file.xv.clone(),
            };
            match (x_v, args.yv.or(file.yv)) {
                (Some(x_v), Some(y_v)) => TriggerSpec::Manual { x_v, y_v },
                _ => return Err(Error::invalid("kind", "manual triggers need both --xv and --yv")),
            }
        } else {
            TriggerSpec::Construct { kind }
        };

        let alphas = match &args.alphas {
            Some(s) => parse_list(s, "alphas")?,
            None => file.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec()),
        };

        Ok(Self {
            data,
            weights,
            trigger,
            scale: args.scale.or(file.scale).unwrap_or(DEFAULT_SCALE),
            bound: args.bound.or(file.bound).unwrap_or(DEFAULT_BOUND),
            x_norm_max: args.x_norm_max.or(file.x_norm_max),
            gamma: args.gamma.or(file.gamma).unwrap_or(DEFAULT_GAMMA),
            sigma: args.sigma.or(file.sigma).unwrap_or(DEFAULT_SIGMA),
            delta: args.delta.or(file.delta).unwrap_or(DEFAULT_DELTA),
            trials: args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
            alphas,
            oracle_budget: args.oracle_budget.or(file.oracle_budget).unwrap_or(DEFAULT_ORACLE_BUDGET),
            steps: args.steps.or(file.steps).unwrap_or(DEFAULT_STEPS),
            noisy: args.noisy || file.noisy.unwrap_or(false),
            seed,
            out: args.out.clone().or(file.out),
            json: args.json,
        })
    }
}
