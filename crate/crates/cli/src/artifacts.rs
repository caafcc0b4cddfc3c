//! On-disk formats written and read by the commands.

use anyhow::{bail, Context};
use fairtest::data::format_value;
use fairtest::generate::{IdiRecord, Phase, Provenance};
use fairtest::metrics::{MetricsReport, RetrainOutcome};
use fairtest::{AttributeSchema, GenerationConfig, IdiSet, Instance, InstancePair};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MODEL: &str = "model.json";
pub const TRAIN: &str = "train.json";
pub const INTERPRET: &str = "interpret.json";
pub const CURVES: &str = "curves";
pub const IDIS: &str = "idis.csv";
pub const PROVENANCE: &str = "provenance.json";
pub const SUMMARY: &str = "summary.json";
pub const METRICS: &str = "metrics.json";
pub const RETRAIN: &str = "retrain.json";
pub const REPAIRED_MODEL: &str = "repaired_model.json";
pub const REPORT: &str = "report.txt";

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model_hash: String,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub final_loss: f64,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PhaseStats {
    pub seeds_processed: usize,
    pub seeds_skipped: usize,
    pub iterations: usize,
    pub generated: usize,
    pub idis: usize,
    pub timed_out: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProvenanceFile {
    pub rng_seed: u64,
    pub model_hash: String,
    pub config: GenerationConfig,
    pub seeds: usize,
    pub most_biased_layer: usize,
    pub biased_neurons: usize,
    pub global: PhaseStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local: Option<PhaseStats>,
    pub records: Vec<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

/// Counts behind GSR: `total` distinct discriminatory instances out of
/// `generated` distinct instances evaluated by either phase.
#[derive(Debug, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub global: usize,
    pub local: usize,
    pub total: usize,
    pub generated: usize,
    pub gsr: Option<f64>,
    pub input_space: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Experiment {
    pub rng_seed: u64,
    pub model_hash: String,
    pub seeds: usize,
    pub generation: GenerationConfig,
    pub n_samples: usize,
    pub rho_cons: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    #[serde(flatten)]
    pub report: MetricsReport,
    pub experiment: Experiment,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RetrainFile {
    pub model_hash: String,
    pub layer: usize,
    pub fraction: f64,
    pub repeats: usize,
    pub tested: RetrainOutcome,
    pub baseline: Option<RetrainOutcome>,
    /// Column order of the rows below.
    pub methods: Vec<String>,
    pub auc_row: Vec<f64>,
    pub dm_rs_row: Vec<f64>,
    pub rho_s: Option<f64>,
    pub sigma_auc: Option<f64>,
    pub sigma_dm_rs: Option<f64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Global => "global",
        Phase::Local => "local",
        Phase::Baseline => "baseline",
        Phase::Image => "image",
    }
}

fn parse_phase(s: &str) -> Option<Phase> {
    Some(match s {
        "global" => Phase::Global,
        "local" => Phase::Local,
        "baseline" => Phase::Baseline,
        "image" => Phase::Image,
        _ => return None,
    })
}

/// One row per discriminatory instance `a.*` with its witness `b.*`.
pub fn write_idis(path: &Path, schema: &AttributeSchema, set: &IdiSet) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let names: Vec<&str> = schema.attributes().iter().map(|a| a.name.as_str()).collect();
    let mut header = vec!["phase".to_string(), "seed".into(), "iteration".into()];
    header.extend(names.iter().map(|n| format!("a.{n}")));
    header.extend(names.iter().map(|n| format!("b.{n}")));
    w.write_record(&header)?;
    for r in set.iter() {
        let p = &r.provenance;
        let mut row = vec![phase_name(p.phase).to_string(), p.seed.to_string(), p.iteration.to_string()];
        row.extend(r.pair.a.values.iter().map(|&v| format_value(v)));
        row.extend(r.pair.b.values.iter().map(|&v| format_value(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_idis(path: &Path, schema: &AttributeSchema) -> anyhow::Result<IdiSet> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let d = schema.len();
    if rdr.headers()?.len() != 3 + 2 * d {
        bail!("{} does not match the schema ({} attributes)", path.display(), d);
    }
    let mut set = IdiSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let phase = parse_phase(&rec[0]).with_context(|| format!("{} row {row}: unknown phase", path.display()))?;
        let seed: usize = rec[1].parse().with_context(|| format!("{} row {row}: bad seed", path.display()))?;
        let iteration: usize = rec[2].parse().with_context(|| format!("{} row {row}: bad iteration", path.display()))?;
        let nums: Vec<f64> = (3..3 + 2 * d)
            .map(|c| rec[c].parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{} row {row}: bad value", path.display()))?;
        let pair = InstancePair::new(Instance::new(nums[..d].to_vec()), Instance::new(nums[d..].to_vec()), schema)?;
        set.insert(IdiRecord { pair, provenance: Provenance { phase, seed, iteration } });
    }
    Ok(set)
}
