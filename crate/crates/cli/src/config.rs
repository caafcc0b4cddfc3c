//! Run configuration: a JSON document whose relative paths resolve against
//! the directory of the config file.

use fairtest::nn::Optimizer;
use fairtest::synthetic::LFC_HIDDEN;
use fairtest::GenerationConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::Failure;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: PathBuf,
    pub data: PathBuf,
    /// Existing model to analyse. Defaults to `<output_dir>/model.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub interpret: InterpretOptions,
    /// Search settings. Its own `rng_seed` is ignored in favour of the
    /// top-level one.
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub rng_seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self { hidden: LFC_HIDDEN.to_vec(), learning_rate: 0.001, optimizer: Optimizer::Adam, epochs: 30, batch_size: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretOptions {
    pub step_interval: f64,
    /// Cap on training instances used to build flip pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_instances: Option<usize>,
}

impl Default for InterpretOptions {
    fn default() -> Self {
        Self { step_interval: fairtest::interpret::DEFAULT_STEP_INTERVAL, max_instances: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub rho_cons: Vec<f64>,
    pub n_samples: usize,
    pub repeats: usize,
    pub retrain_fraction: f64,
    pub retrain_epochs: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { rho_cons: vec![0.01, 0.02, 0.05], n_samples: 10_000, repeats: 5, retrain_fraction: 0.10, retrain_epochs: 5 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Output directory (relative to the working directory).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub num_seeds: Option<usize>,
    #[arg(long)]
    pub max_iter_g: Option<usize>,
    #[arg(long)]
    pub max_iter_l: Option<usize>,
    #[arg(long)]
    pub step_size_g: Option<f64>,
    #[arg(long)]
    pub step_size_l: Option<f64>,
    #[arg(long)]
    pub mu_g: Option<f64>,
    #[arg(long)]
    pub mu_l: Option<f64>,
    #[arg(long)]
    pub r_step_g: Option<usize>,
    #[arg(long)]
    pub r_step_l: Option<usize>,
    #[arg(long)]
    pub p_r: Option<f64>,
    /// Wall-clock budget for each search phase, in seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

impl RunConfig {
    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::Config(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.schema = base.join(&cfg.schema);
        cfg.data = base.join(&cfg.data);
        cfg.model = cfg.model.map(|m| base.join(m));
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.rng_seed = s;
        }
        let g = &mut self.generation;
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(o.clusters => g.clusters);
        set!(o.num_seeds => g.num_seeds);
        set!(o.max_iter_g => g.max_iter_global);
        set!(o.max_iter_l => g.max_iter_local);
        set!(o.step_size_g => g.step_size_global);
        set!(o.step_size_l => g.step_size_local);
        set!(o.mu_g => g.momentum_global);
        set!(o.mu_l => g.momentum_local);
        set!(o.r_step_g => g.refresh_global);
        set!(o.r_step_l => g.refresh_local);
        set!(o.p_r => g.random_fraction);
        if o.time_budget.is_some() {
            g.time_budget_secs = o.time_budget;
        }
        g.rng_seed = self.rng_seed;
        set!(o.epochs => self.train.epochs);
        set!(o.n_samples => self.metrics.n_samples);
        set!(o.repeats => self.metrics.repeats);
    }

    fn validate(&self) -> Result<(), Failure> {
        for (what, p) in [("schema", Some(&self.schema)), ("data", Some(&self.data)), ("model", self.model.as_ref())] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(Failure::Config(format!("{what} file not found: {}", p.display())));
                }
            }
        }
        self.generation.validate().map_err(|e| Failure::Config(e.to_string()))?;
        let t = &self.train;
        if t.hidden.iter().any(|&w| w == 0) {
            return Err(Failure::Config("train.hidden widths must be positive".into()));
        }
        if !(t.learning_rate > 0.0) || t.epochs == 0 || t.batch_size == 0 {
            return Err(Failure::Config("train needs learning_rate > 0, epochs >= 1, batch_size >= 1".into()));
        }
        if !(self.interpret.step_interval > 0.0) {
            return Err(Failure::Config("interpret.step_interval must be positive".into()));
        }
        let m = &self.metrics;
        if m.rho_cons.iter().any(|&r| !(r > 0.0)) {
            return Err(Failure::Config("metrics.rho_cons values must be positive".into()));
        }
        if m.n_samples == 0 || m.repeats == 0 || m.retrain_epochs == 0 {
            return Err(Failure::Config("metrics.n_samples, repeats and retrain_epochs must be at least 1".into()));
        }
        if !(m.retrain_fraction > 0.0 && m.retrain_fraction <= 1.0) {
            return Err(Failure::Config("metrics.retrain_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// The model the analysis commands read.
    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.output_dir.join("model.json"))
    }
}
