//! Plain-text rendering of the JSON artifacts in an output directory.

use crate::artifacts::*;
use fairtest::interpret::InterpretReport;
use std::fmt::Write;
use std::path::Path;

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

fn opt(v: Option<f64>, f: impl Fn(f64) -> String) -> String {
    v.map_or_else(|| "n/a".to_string(), f)
}

/// Sections for every artifact present; empty when there are none.
pub fn render(dir: &Path) -> anyhow::Result<String> {
    let mut s = String::new();
    let p = dir.join(TRAIN);
    if p.is_file() {
        let t: TrainSummary = read_json(&p)?;
        writeln!(s, "== Model")?;
        writeln!(s, "hidden layers     {:?}", t.hidden)?;
        writeln!(s, "weights sha-256   {}", t.model_hash)?;
        writeln!(s, "rows              {} train / {} validation / {} test", t.train_size, t.validation_size, t.test_size)?;
        writeln!(s, "train accuracy    {}", pct(t.train_accuracy))?;
        writeln!(s, "test accuracy     {}", opt(t.test_accuracy, pct))?;
        writeln!(s)?;
    }
    let p = dir.join(INTERPRET);
    if p.is_file() {
        let r: InterpretReport = read_json(&p)?;
        writeln!(s, "== Interpretation ({} flip pairs)", r.pair_count)?;
        for l in &r.layers {
            let mark = if l.layer == r.most_biased_layer { "  <- most biased" } else { "" };
            writeln!(s, "layer {:<3} width {:<4} AUC {:.4}{mark}", l.layer, l.width, l.auc)?;
        }
        writeln!(s, "threshold T_d     {:.4}", r.threshold)?;
        writeln!(s, "biased neurons    {}", r.biased_count)?;
        writeln!(s)?;
    }
    let p = dir.join(SUMMARY);
    if p.is_file() {
        let g: GenerationSummary = read_json(&p)?;
        writeln!(s, "== Generation")?;
        writeln!(s, "global IDIs       {}", g.global)?;
        writeln!(s, "local IDIs        {}", g.local)?;
        writeln!(s, "total IDIs        {}", g.total)?;
        writeln!(s, "generated         {}", g.generated)?;
        writeln!(s, "GSR               {}", opt(g.gsr, pct))?;
        writeln!(s)?;
    }
    let p = dir.join(METRICS);
    if p.is_file() {
        let m: MetricsFile = read_json(&p)?;
        let r = &m.report;
        writeln!(s, "== Evaluation (random-walk baseline on the same seeds)")?;
        writeln!(s, "                  tested      baseline")?;
        writeln!(s, "IDIs              {:<11} {}", r.tested.idis, r.baseline.idis)?;
        writeln!(s, "GSR               {:<11} {}", pct(r.tested.gsr), pct(r.baseline.gsr))?;
        writeln!(s, "coverage          {:<11} {}", pct(r.tested.coverage), pct(r.baseline.coverage))?;
        for e in &r.gd {
            writeln!(s, "GD (rho {:<5})    {}", e.rho_cons, opt(e.value, |v| format!("{v:.4}")))?;
        }
        writeln!(s, "DM-RS             {}", pct(r.dm_rs_before))?;
        writeln!(s)?;
    }
    let p = dir.join(RETRAIN);
    if p.is_file() {
        let r: RetrainFile = read_json(&p)?;
        let nf = &r.tested;
        writeln!(s, "== Retraining ({} runs, {} of the IDIs)", r.repeats, pct(r.fraction))?;
        writeln!(s, "DM-RS             {} -> {}", pct(nf.dm_rs_before), pct(nf.dm_rs_after))?;
        writeln!(s, "layer {} AUC       {:.4} -> {:.4}", r.layer, nf.auc_before, nf.auc_after)?;
        writeln!(s, "test accuracy     {} -> {}", pct(nf.test_accuracy_before), pct(nf.test_accuracy_after))?;
        if let Some(b) = &r.baseline {
            writeln!(s, "baseline DM-RS    {} -> {}", pct(b.dm_rs_before), pct(b.dm_rs_after))?;
        }
        writeln!(s, "rho_s             {}", opt(r.rho_s, |v| format!("{v:.4}")))?;
        writeln!(s, "sigma AUC / DM-RS {} / {}", opt(r.sigma_auc, |v| format!("{v:.4}")), opt(r.sigma_dm_rs, |v| format!("{v:.4}")))?;
    }
    Ok(s)
}
