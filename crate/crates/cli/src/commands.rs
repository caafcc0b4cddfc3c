use anyhow::anyhow;
use fairtest::data::{kmeans_seeds, load_csv, DatasetSplit};
use fairtest::generate::{global_generate, local_generate};
use fairtest::interpret::{bias_profile, flip_pairs, write_curve_csv, InterpretError, InterpretReport};
use fairtest::metrics::{
    average_ranks, biased_neuron_coverage, dm_rs, gd, gsr, input_space, random_baseline, retrain_fairness,
    significance, spearman, GdEntry, MethodSummary, MetricsError, MetricsReport, RetrainConfig, RetrainEval,
};
use fairtest::nn::{accuracy, train as fit, Activation, LayerSpec, TrainConfig};
use fairtest::synthetic::{census_dataset, census_schema};
use fairtest::{AttributeSchema, BiasProfile, GenerationRun, Instance, InstancePair, Network};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::artifacts::*;
use crate::config::{Overrides, RunConfig};
use crate::report::render;
use crate::Failure;

pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, Failure> {
    RunConfig::load(path, overrides)
}

struct Inputs {
    schema: AttributeSchema,
    split: DatasetSplit,
}

fn inputs(cfg: &RunConfig) -> Result<Inputs, Failure> {
    let schema = AttributeSchema::load(&cfg.schema)
        .map_err(|e| Failure::Config(format!("schema {}: {e}", cfg.schema.display())))?;
    let data =
        load_csv(&cfg.data, &schema).map_err(|e| Failure::Config(format!("data {}: {e}", cfg.data.display())))?;
    if data.is_empty() {
        return Err(Failure::Config(format!("data {} has no rows", cfg.data.display())));
    }
    let split = data.split(cfg.rng_seed);
    Ok(Inputs { schema, split })
}

fn model(cfg: &RunConfig, schema: &AttributeSchema) -> Result<Network, Failure> {
    let path = cfg.model_path();
    if !path.is_file() {
        return Err(Failure::Config(format!("model file not found: {} (run `fairtest train` first)", path.display())));
    }
    let net = Network::load(&path).map_err(|e| Failure::Config(format!("model {}: {e}", path.display())))?;
    if net.input_dim() != schema.len() {
        return Err(Failure::Config(format!(
            "model {} expects {} inputs but the schema has {} attributes",
            path.display(),
            net.input_dim(),
            schema.len()
        )));
    }
    Ok(net)
}

fn output_dir(cfg: &RunConfig) -> anyhow::Result<&Path> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(&cfg.output_dir)
}

fn require(path: PathBuf, hint: &str) -> Result<PathBuf, Failure> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Failure::Config(format!("{} not found (run `fairtest {hint}` first)", path.display())))
    }
}

/// Flip pairs over the (capped) training instances.
fn interpret_pairs(cfg: &RunConfig, inp: &Inputs) -> Vec<InstancePair> {
    let cap = cfg.interpret.max_instances.unwrap_or(usize::MAX);
    let instances: Vec<Instance> =
        inp.split.train.instances.iter().take(cap).map(|i| Instance::new(i.values.clone())).collect();
    flip_pairs(&instances, &inp.schema)
}

fn profile(cfg: &RunConfig, net: &Network, pairs: &[InstancePair]) -> Result<BiasProfile, Failure> {
    bias_profile(net, pairs, cfg.interpret.step_interval).map_err(|e| match e {
        InterpretError::NoDiscrimination => Failure::Advisory(
            "no discrimination found: every hidden layer has zero AUC, so there are no biased neurons".into(),
        ),
        other => other.into(),
    })
}

fn seeds(cfg: &RunConfig, inp: &Inputs) -> anyhow::Result<Vec<Vec<f64>>> {
    let points = inp.split.train.inputs();
    let g = &cfg.generation;
    let idx = kmeans_seeds(&points, g.clusters.min(points.len()), g.num_seeds, cfg.rng_seed)?;
    Ok(idx.into_iter().map(|i| points[i].clone()).collect())
}

fn train_config(cfg: &RunConfig, epochs: usize) -> TrainConfig {
    let t = &cfg.train;
    TrainConfig {
        learning_rate: t.learning_rate,
        optimizer: t.optimizer,
        epochs,
        batch_size: t.batch_size,
        rng_seed: cfg.rng_seed,
    }
}

pub fn train(cfg: &RunConfig) -> Result<(), Failure> {
    let inp = inputs(cfg)?;
    let classes = inp
        .schema
        .label()
        .ok_or_else(|| Failure::Config(format!("schema {} declares no label", cfg.schema.display())))?
        .classes;
    let labels = inp
        .split
        .train
        .labels()
        .map_err(|e| Failure::Config(format!("data {}: {e}", cfg.data.display())))?;
    let mut specs: Vec<LayerSpec> = cfg.train.hidden.iter().map(|&w| LayerSpec::relu(w)).collect();
    specs.push(LayerSpec::new(classes, Activation::Softmax));
    let init = Network::new(inp.schema.len(), &specs, cfg.rng_seed)?;
    log::info!("training {:?} on {} rows for {} epochs", cfg.train.hidden, labels.len(), cfg.train.epochs);
    let report = fit(&init, &inp.split.train.inputs(), &labels, &train_config(cfg, cfg.train.epochs))?;
    let net = report.network;
    let score = |d: &fairtest::TabularDataset| -> Result<Option<f64>, Failure> {
        if d.is_empty() {
            return Ok(None);
        }
        let y = d.labels().map_err(|e| Failure::Config(e.to_string()))?;
        Ok(Some(accuracy(&net, &d.inputs(), &y)?))
    };
    let summary = TrainSummary {
        model_hash: net.weight_hash(),
        hidden: cfg.train.hidden.clone(),
        epochs: cfg.train.epochs,
        final_loss: report.final_loss,
        train_size: inp.split.train.len(),
        validation_size: inp.split.validation.len(),
        test_size: inp.split.test.len(),
        train_accuracy: report.train_accuracy,
        validation_accuracy: score(&inp.split.validation)?,
        test_accuracy: score(&inp.split.test)?,
    };
    let out = output_dir(cfg)?;
    net.save(&out.join(MODEL))?;
    write_json(&out.join(TRAIN), &summary)?;
    println!(
        "trained model: train accuracy {:.4}, test accuracy {}",
        summary.train_accuracy,
        summary.test_accuracy.map_or("n/a".into(), |a| format!("{a:.4}"))
    );
    Ok(())
}

pub fn interpret(cfg: &RunConfig) -> Result<(), Failure> {
    let inp = inputs(cfg)?;
    let net = model(cfg, &inp.schema)?;
    let pairs = interpret_pairs(cfg, &inp);
    let prof = profile(cfg, &net, &pairs)?;
    let report = InterpretReport::new(&prof, pairs.len());
    let out = output_dir(cfg)?;
    write_json(&out.join(INTERPRET), &report)?;
    let curves = out.join(CURVES);
    fs::create_dir_all(&curves)?;
    for (i, layer) in prof.per_layer.iter().enumerate() {
        let file = fs::File::create(curves.join(format!("layer_{i}.csv")))?;
        write_curve_csv(&layer.curve, std::io::BufWriter::new(file))?;
    }
    println!(
        "most biased layer: {} (AUC {:.4}), T_d = {:.4}, {} biased neurons of {}",
        prof.most_biased_layer,
        prof.per_layer[prof.most_biased_layer].curve.auc,
        prof.threshold,
        prof.biased_count(),
        prof.layer_width()
    );
    Ok(())
}

fn stats(run: &GenerationRun) -> PhaseStats {
    PhaseStats {
        seeds_processed: run.seeds_processed,
        seeds_skipped: run.seeds_skipped,
        iterations: run.iterations,
        generated: run.generated(),
        idis: run.idis.len(),
        timed_out: run.timed_out,
    }
}

pub fn generate(cfg: &RunConfig, timing: bool) -> Result<(), Failure> {
    let started = Instant::now();
    let inp = inputs(cfg)?;
    let net = model(cfg, &inp.schema)?;
    let prof = profile(cfg, &net, &interpret_pairs(cfg, &inp))?;
    let seeds = seeds(cfg, &inp)?;
    let g = &cfg.generation;
    log::info!("global phase over {} seeds", seeds.len());
    let global = global_generate(&net, &inp.schema, &seeds, &prof, g)?;
    let local = if global.idis.is_empty() {
        log::info!("no global IDIs; skipping the local phase");
        None
    } else {
        log::info!("local phase around {} global IDIs", global.idis.len());
        Some(local_generate(&net, &inp.schema, &global.idis, &prof, g)?)
    };
    let global_stats = stats(&global);
    let local_stats = local.as_ref().map(stats);
    let all = match local {
        Some(l) => global.merge(l),
        None => global,
    };
    let total = all.idis.len();
    let generated = all.generated();
    let rate = gsr(total, generated).ok();
    let summary = GenerationSummary {
        global: global_stats.idis,
        local: local_stats.as_ref().map_or(0, |s| s.idis),
        total,
        generated,
        gsr: rate,
        input_space: rate.and_then(|r| input_space(total, r)),
    };
    let provenance = ProvenanceFile {
        rng_seed: cfg.rng_seed,
        model_hash: net.weight_hash(),
        config: g.clone(),
        seeds: seeds.len(),
        most_biased_layer: prof.most_biased_layer,
        biased_neurons: prof.biased_count(),
        global: global_stats,
        local: local_stats,
        records: all.idis.iter().map(|r| r.provenance.clone()).collect(),
        wall_time_secs: timing.then(|| started.elapsed().as_secs_f64()),
    };
    let out = output_dir(cfg)?;
    write_idis(&out.join(IDIS), &inp.schema, &all.idis)?;
    write_json(&out.join(PROVENANCE), &provenance)?;
    write_json(&out.join(SUMMARY), &summary)?;
    println!(
        "IDIs: {} global, {} local, {} total of {} generated (GSR {})",
        summary.global,
        summary.local,
        summary.total,
        summary.generated,
        summary.gsr.map_or("n/a".into(), |r| format!("{:.2}%", 100.0 * r))
    );
    Ok(())
}

fn method_summary(
    net: &Network,
    prof: &BiasProfile,
    idis: usize,
    generated: usize,
    instances: &[Vec<f64>],
) -> Result<MethodSummary, Failure> {
    let rate = gsr(idis, generated).unwrap_or(0.0);
    Ok(MethodSummary {
        idis,
        generated,
        gsr: rate,
        input_space: input_space(idis, rate),
        coverage: biased_neuron_coverage(net, instances, prof)?,
    })
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), Failure> {
    let inp = inputs(cfg)?;
    let net = model(cfg, &inp.schema)?;
    let out = output_dir(cfg)?;
    let summary: GenerationSummary = read_json(&require(out.join(SUMMARY), "generate")?)?;
    let tested = read_idis(&require(out.join(IDIS), "generate")?, &inp.schema)?;
    let prof = profile(cfg, &net, &interpret_pairs(cfg, &inp))?;
    let seeds = seeds(cfg, &inp)?;
    log::info!("random-walk baseline over {} seeds", seeds.len());
    let baseline = random_baseline(&net, &inp.schema, &seeds, &cfg.generation)?;

    let tested_x = tested.first_members();
    let baseline_x = baseline.idis.first_members();
    let bounds = inp.schema.bounds();
    let mut gd_entries = Vec::new();
    for &rho in &cfg.metrics.rho_cons {
        let value = match gd(&tested_x, &baseline_x, rho, &bounds) {
            Ok(v) => Some(v),
            Err(MetricsError::UndefinedGd | MetricsError::Invalid(_)) => None,
            Err(e) => return Err(e.into()),
        };
        gd_entries.push(GdEntry { rho_cons: rho, value });
    }
    let tested_summary = method_summary(&net, &prof, summary.total, summary.generated, &tested_x)?;
    let baseline_summary = method_summary(&net, &prof, baseline.idis.len(), baseline.generated(), &baseline_x)?;
    let dm_rs_before = dm_rs(&net, &inp.schema, cfg.metrics.n_samples, cfg.rng_seed)?;
    let retrained: Option<RetrainFile> = {
        let p = out.join(RETRAIN);
        if p.is_file() {
            Some(read_json(&p)?)
        } else {
            None
        }
    };
    let report = MetricsReport {
        gsr: tested_summary.gsr,
        input_space: tested_summary.input_space,
        gd: gd_entries,
        dm_rs_before,
        dm_rs_after: retrained.as_ref().map(|r| r.tested.dm_rs_after),
        rho_s: retrained.as_ref().and_then(|r| r.rho_s),
        sigma_auc: retrained.as_ref().and_then(|r| r.sigma_auc),
        sigma_dm_rs: retrained.as_ref().and_then(|r| r.sigma_dm_rs),
        coverage: tested_summary.coverage,
        tested: tested_summary,
        baseline: baseline_summary,
    };
    let file = MetricsFile {
        experiment: Experiment {
            rng_seed: cfg.rng_seed,
            model_hash: net.weight_hash(),
            seeds: seeds.len(),
            generation: cfg.generation.clone(),
            n_samples: cfg.metrics.n_samples,
            rho_cons: cfg.metrics.rho_cons.clone(),
        },
        report,
    };
    write_json(&out.join(METRICS), &file)?;
    let r = &file.report;
    println!(
        "GSR {:.2}% (baseline {:.2}%), DM-RS {:.4}, coverage {:.2}",
        100.0 * r.gsr,
        100.0 * r.baseline.gsr,
        r.dm_rs_before,
        r.coverage
    );
    Ok(())
}

pub fn retrain(cfg: &RunConfig) -> Result<(), Failure> {
    let inp = inputs(cfg)?;
    let net = model(cfg, &inp.schema)?;
    let out = output_dir(cfg)?;
    let tested = read_idis(&require(out.join(IDIS), "generate")?, &inp.schema)?;
    if tested.is_empty() {
        return Err(Failure::Advisory(format!("{} holds no IDIs to retrain with", out.join(IDIS).display())));
    }
    if inp.split.test.is_empty() {
        return Err(Failure::Config("the test split is empty; provide more rows".into()));
    }
    let pairs = interpret_pairs(cfg, &inp);
    let prof = profile(cfg, &net, &pairs)?;
    let m = &cfg.metrics;
    let rc = RetrainConfig {
        fraction: m.retrain_fraction,
        repeats: m.repeats,
        train: train_config(cfg, m.retrain_epochs),
        dm_rs_samples: m.n_samples,
        step_interval: cfg.interpret.step_interval,
        rng_seed: cfg.rng_seed,
    };
    let eval = RetrainEval { test: &inp.split.test, pairs: &pairs, layer: prof.most_biased_layer };
    let tested_pairs: Vec<InstancePair> = tested.pairs().cloned().collect();
    log::info!("retraining with {} of {} IDIs, {} runs", (m.retrain_fraction * tested_pairs.len() as f64) as usize, tested_pairs.len(), m.repeats);
    let nf = retrain_fairness(&net, &inp.schema, &tested_pairs, &inp.split.train, &eval, &rc)?;

    let baseline_run = random_baseline(&net, &inp.schema, &seeds(cfg, &inp)?, &cfg.generation)?;
    let baseline_pairs: Vec<InstancePair> = baseline_run.idis.pairs().cloned().collect();
    let baseline = if baseline_pairs.is_empty() {
        log::warn!("the random-walk baseline found no IDIs; comparing against the original model only");
        None
    } else {
        Some(retrain_fairness(&net, &inp.schema, &baseline_pairs, &inp.split.train, &eval, &rc)?)
    };

    let mut methods = vec!["original".to_string(), "tested".to_string()];
    let mut auc_row = vec![nf.auc_before, nf.auc_after];
    let mut dm_rs_row = vec![nf.dm_rs_before, nf.dm_rs_after];
    if let Some(b) = &baseline {
        methods.push("random".into());
        auc_row.push(b.auc_after);
        dm_rs_row.push(b.dm_rs_after);
    }
    let rho_s = spearman(&average_ranks(&auc_row), &average_ranks(&dm_rs_row)).ok().filter(|v| v.is_finite());
    let repaired = nf.networks.first().ok_or_else(|| Failure::Runtime(anyhow!("retraining produced no model")))?;
    repaired.save(&out.join(REPAIRED_MODEL))?;
    let file = RetrainFile {
        model_hash: net.weight_hash(),
        layer: prof.most_biased_layer,
        fraction: m.retrain_fraction,
        repeats: m.repeats,
        sigma_auc: significance(&auc_row).ok(),
        sigma_dm_rs: significance(&dm_rs_row).ok(),
        tested: nf,
        baseline,
        methods,
        auc_row,
        dm_rs_row,
        rho_s,
    };
    write_json(&out.join(RETRAIN), &file)?;
    let nf = &file.tested;
    println!(
        "DM-RS {:.4} -> {:.4}, layer {} AUC {:.4} -> {:.4}, test accuracy {:.4} -> {:.4}",
        nf.dm_rs_before, nf.dm_rs_after, file.layer, nf.auc_before, nf.auc_after, nf.test_accuracy_before, nf.test_accuracy_after
    );
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<(), Failure> {
    let out = &cfg.output_dir;
    let text = render(out)?;
    if text.is_empty() {
        return Err(Failure::Config(format!("no artifacts to report in {}", out.display())));
    }
    fs::write(out.join(REPORT), &text)?;
    print!("{text}");
    Ok(())
}

pub fn synth(dir: &Path, rows: usize, bias: f64, seed: u64) -> Result<(), Failure> {
    if rows < 10 {
        return Err(Failure::Config("--rows must be at least 10".into()));
    }
    fs::create_dir_all(dir)?;
    let schema = census_schema();
    write_json(&dir.join("schema.json"), &schema)?;
    census_dataset(rows, bias, seed).write_csv(&dir.join("data.csv"))?;
    let run = serde_json::json!({
        "schema": "schema.json",
        "data": "data.csv",
        "output_dir": "out",
        "rng_seed": seed,
    });
    write_json(&dir.join("run.json"), &run)?;
    println!("wrote schema.json, data.csv ({rows} rows) and run.json to {}", dir.display());
    Ok(())
}
