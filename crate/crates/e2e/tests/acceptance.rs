//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use fairtest::data::kmeans_seeds;
use fairtest::generalize::{fgsm_flip, image_global_generate, ImageGenConfig};
use fairtest::generate::{global_generate, local_generate, DynamicLoss};
use fairtest::interpret::{as_curve, layer_auc, DEFAULT_STEP_INTERVAL};
use fairtest::metrics::{dm_rs, gd, random_baseline, retrain_fairness, significance, spearman, RetrainConfig, RetrainEval};
use fairtest::nn::{Activation, LayerSpec, Network};
use fairtest::synthetic::{biased_census_model, census_schema, toy_image_task, BiasedCensusModel};
use fairtest::{AttributeSchema, GenerationConfig, InstancePair};
use fairtest_e2e as oracle;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

const FIXTURE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Pairs emitted by some run, with the model and schema they refer to.
struct Emitted {
    source: String,
    net: Network,
    schema: AttributeSchema,
    pairs: Vec<InstancePair>,
}

fn c1_soundness(emitted: &[Emitted]) -> Verdict {
    let mut total = 0;
    let mut bad = Vec::new();
    for e in emitted {
        for p in &e.pairs {
            total += 1;
            if let Err(why) = oracle::check_pair(&e.net, &e.schema, &p.a.values, &p.b.values) {
                bad.push(format!("{}: {why}", e.source));
            }
        }
    }
    if total == 0 {
        return verdict(false, "no pairs were emitted");
    }
    let mut detail = format!("{}/{} emitted pairs confirmed by the reference check over {} runs", total - bad.len(), total, emitted.len());
    if let Some(first) = bad.first() {
        detail.push_str(&format!("; first failure: {first}"));
    }
    verdict(bad.is_empty(), detail)
}

fn c2_as_curve() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut monotone = true;
    for case in 0..100 {
        let n = rng.gen_range(4..=256);
        let scale = [0.05, 0.5, 1.0, 3.0][case % 4];
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..scale)).collect();
        let curve = match as_curve(&z, DEFAULT_STEP_INTERVAL) {
            Ok(c) => c,
            Err(e) => return verdict(false, format!("case {case}: {e}")),
        };
        let (area, fractions) = oracle::as_curve_area(&z, DEFAULT_STEP_INTERVAL);
        worst = worst.max((curve.auc - area).abs());
        if curve.sen_neu_r.len() != fractions.len() {
            return verdict(false, format!("case {case}: {} curve points vs {}", curve.sen_neu_r.len(), fractions.len()));
        }
        for (i, (&got, &want)) in curve.sen_neu_r.iter().zip(&fractions).enumerate() {
            worst = worst.max((got - want).abs());
            if i > 0 && got > curve.sen_neu_r[i - 1] {
                monotone = false;
            }
        }
    }
    verdict(worst <= 1e-9 && monotone, format!("100 random vectors, max |Δ| {worst:.2e}, non-increasing: {monotone}"))
}

/// Random net with random biases, input dimension of the census schema.
fn gradient_case(rng: &mut ChaCha8Rng, seed: u64) -> Network {
    let depth = rng.gen_range(1..=3);
    let mut specs: Vec<LayerSpec> = (0..depth).map(|_| LayerSpec::relu(rng.gen_range(4..=16))).collect();
    specs.push(LayerSpec::new(2, Activation::Softmax));
    let mut net = Network::new(13, &specs, seed).expect("valid architecture");
    for l in net.layers_mut() {
        for b in l.biases.iter_mut() {
            *b = rng.gen_range(0.0..0.5);
        }
    }
    net
}

fn c3_gradient() -> Verdict {
    let start = Instant::now();
    let schema = census_schema();
    let sex = schema.index_of("sex").expect("census schema has sex");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-5;
    let mut valid = 0;
    let mut attempts = 0;
    let mut worst = 0.0f64;
    while valid < 100 && attempts < 10_000 {
        attempts += 1;
        let net = gradient_case(&mut rng, attempts);
        let x: Vec<f64> = schema
            .attributes()
            .iter()
            .enumerate()
            .map(|(i, a)| if i == sex { rng.gen_range(0..=1) as f64 } else { rng.gen_range(a.min..=a.max) })
            .collect();
        let mut xf = x.clone();
        xf[sex] = 1.0 - xf[sex];
        // Finite differences are meaningless across a ReLU kink.
        let (pre_x, post_x) = oracle::forward(&net, &x);
        let (pre_f, post_f) = oracle::forward(&net, &xf);
        let hidden = net.hidden_count();
        let clear = |pre: &[Vec<f64>]| pre[..hidden].iter().flatten().all(|z| z.abs() > 1e-3);
        if !clear(&pre_x) || !clear(&pre_f) {
            continue;
        }
        let layer = rng.gen_range(0..hidden);
        let width = net.layers()[layer].width;
        let mut mask: Vec<bool> = (0..width).map(|_| rng.gen_bool(0.5)).collect();
        mask[rng.gen_range(0..width)] = true;
        // Gradient at x against x' and, with roles swapped, at x' against x.
        for (point, target) in [(&x, &post_f[layer]), (&xf, &post_x[layer])] {
            let loss = DynamicLoss { layer, mask: &mask, target };
            let analytic = match net.input_gradient(point, &loss) {
                Ok(g) => g,
                Err(e) => return verdict(false, format!("gradient failed: {e}")),
            };
            for i in 0..point.len() {
                let mut up = point.clone();
                let mut down = point.clone();
                up[i] += h;
                down[i] -= h;
                let fd = (oracle::dynamic_loss(&net, &up, layer, &mask, target)
                    - oracle::dynamic_loss(&net, &down, layer, &mask, target))
                    / (2.0 * h);
                let rel = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        valid += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        valid == 100 && worst < 1e-4 && secs < 30.0,
        format!("{valid} networks ({attempts} drawn), both gradients, max relative error {worst:.2e}, {secs:.1}s"),
    )
}

fn c4_masking(fixtures: &[BiasedCensusModel]) -> Verdict {
    let start = Instant::now();
    let mut lowered = 0;
    let mut parts = Vec::new();
    for (f, seed) in fixtures.iter().zip(FIXTURE_SEEDS) {
        let layer = f.profile.most_biased_layer;
        let masked = f.net.mask_neurons(layer, &f.profile.positions).expect("profile fits");
        let auc = layer_auc(&f.net, &f.pairs, layer, DEFAULT_STEP_INTERVAL).expect("auc");
        let auc_m = layer_auc(&masked, &f.pairs, layer, DEFAULT_STEP_INTERVAL).expect("auc");
        let dm = dm_rs(&f.net, &f.schema, 10_000, seed).expect("dm_rs");
        let dm_m = dm_rs(&masked, &f.schema, 10_000, seed).expect("dm_rs");
        if auc_m < auc && dm_m < dm {
            lowered += 1;
        }
        parts.push(format!("AUC {auc:.3}→{auc_m:.3} DM-RS {dm:.3}→{dm_m:.3}"));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(lowered >= 4 && secs < 300.0, format!("{lowered}/5 fixtures lowered both, {secs:.1}s; {}", parts.join(", ")))
}

struct SearchRuns {
    global: Vec<fairtest::GenerationRun>,
    baseline: Vec<fairtest::GenerationRun>,
    full: Vec<fairtest::GenerationRun>,
    /// Wall time of the global searches and baselines.
    compare_secs: f64,
}

fn search(fixtures: &[BiasedCensusModel]) -> SearchRuns {
    let mut runs = SearchRuns { global: Vec::new(), baseline: Vec::new(), full: Vec::new(), compare_secs: 0.0 };
    for (f, seed) in fixtures.iter().zip(FIXTURE_SEEDS) {
        let points = f.train.inputs();
        let seeds: Vec<Vec<f64>> = kmeans_seeds(&points, 4, 1000, seed)
            .expect("seeding")
            .into_iter()
            .map(|i| points[i].clone())
            .collect();
        let cfg = GenerationConfig { rng_seed: seed, ..GenerationConfig::default() };
        let start = Instant::now();
        let global = global_generate(&f.net, &f.schema, &seeds, &f.profile, &cfg).expect("global search");
        let baseline = random_baseline(&f.net, &f.schema, &seeds, &cfg).expect("baseline");
        runs.compare_secs += start.elapsed().as_secs_f64();
        let local = local_generate(&f.net, &f.schema, &global.idis, &f.profile, &cfg).expect("local search");
        runs.full.push(global.clone().merge(local));
        runs.global.push(global);
        runs.baseline.push(baseline);
    }
    runs
}

fn gsr_of(run: &fairtest::GenerationRun) -> f64 {
    run.idis.len() as f64 / run.generated().max(1) as f64
}

fn c5_effectiveness(runs: &SearchRuns) -> Verdict {
    let mut ratios = Vec::new();
    let mut gsr_ahead = true;
    let mut parts = Vec::new();
    for (g, b) in runs.global.iter().zip(&runs.baseline) {
        ratios.push(g.idis.len() as f64 / b.idis.len().max(1) as f64);
        gsr_ahead &= gsr_of(g) > gsr_of(b);
        parts.push(format!("{}/{} (GSR {:.3}/{:.3})", g.idis.len(), b.idis.len(), gsr_of(g), gsr_of(b)));
    }
    let m = oracle::median(&ratios);
    let secs = runs.compare_secs;
    verdict(
        m >= 1.5 && gsr_ahead && secs < 600.0,
        format!(
            "median #IDI ratio {m:.2} (need ≥ 1.5), GSR ahead on every fixture: {gsr_ahead}, {secs:.1}s; search/baseline {}",
            parts.join(", ")
        ),
    )
}

fn c6_diversity(fixtures: &[BiasedCensusModel], runs: &SearchRuns) -> Verdict {
    let mut values = Vec::new();
    let mut self_one = true;
    for ((f, full), base) in fixtures.iter().zip(&runs.full).zip(&runs.baseline) {
        let bounds = f.schema.bounds();
        let tested = full.idis.first_members();
        let reference = base.idis.first_members();
        if tested.is_empty() || reference.is_empty() {
            values.push(f64::NAN);
            continue;
        }
        match gd(&tested, &reference, 0.02, &bounds) {
            Ok(v) => values.push(v),
            Err(_) => values.push(f64::NAN),
        }
        self_one &= gd(&tested, &tested, 0.02, &bounds).map(|v| v == 1.0).unwrap_or(false);
    }
    if values.iter().any(|v| v.is_nan()) {
        return verdict(false, format!("GD undefined on some fixture: {values:?}"));
    }
    let m = oracle::median(&values);
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.2}")).collect();
    verdict(m > 1.0 && self_one, format!("median GD(ρ=0.02) {m:.2} over [{}], GD(A, A) = 1: {self_one}", shown.join(", ")))
}

fn c7_repair(fixtures: &[BiasedCensusModel], runs: &SearchRuns) -> Verdict {
    let mut reductions = Vec::new();
    let mut drops = Vec::new();
    for ((f, full), seed) in fixtures.iter().zip(&runs.full).zip(FIXTURE_SEEDS) {
        let pairs: Vec<InstancePair> = full.idis.pairs().cloned().collect();
        let eval = RetrainEval { test: &f.test, pairs: &f.pairs, layer: f.profile.most_biased_layer };
        let cfg = RetrainConfig { repeats: 1, fraction: 0.10, dm_rs_samples: 10_000, rng_seed: seed, ..RetrainConfig::default() };
        let out = match retrain_fairness(&f.net, &f.schema, &pairs, &f.train, &eval, &cfg) {
            Ok(o) => o,
            Err(e) => return verdict(false, format!("retraining failed: {e}")),
        };
        reductions.push((out.dm_rs_before - out.dm_rs_after) / out.dm_rs_before);
        drops.push(out.test_accuracy_before - out.test_accuracy_after);
    }
    let r = oracle::mean(&reductions);
    let d = oracle::mean(&drops);
    verdict(
        r >= 0.30 && d <= 0.03,
        format!("mean DM-RS reduction {:.1}% (need ≥ 30%), mean accuracy drop {:.2} pts (need ≤ 3)", 100.0 * r, 100.0 * d),
    )
}

fn c8_ranks() -> Verdict {
    let mut ok = true;
    for n in 2..=10 {
        let r: Vec<f64> = (1..=n).map(|v| v as f64).collect();
        let rev: Vec<f64> = r.iter().rev().cloned().collect();
        ok &= spearman(&r, &r).ok() == Some(1.0) && spearman(&r, &rev).ok() == Some(-1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..=20);
        let mut a: Vec<f64> = (1..=n).map(|v| v as f64).collect();
        let mut b = a.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        worst = worst.max((spearman(&a, &b).unwrap_or(f64::NAN) - oracle::spearman(&a, &b)).abs());
    }
    let sigma = significance(&[0.7513, 0.1492, 0.1482, 0.1331, 0.1098, 0.0897]).unwrap_or(f64::NAN);
    verdict(
        ok && worst <= 1e-12 && (sigma - 0.2563).abs() <= 1e-4,
        format!("extremes exact: {ok}, max |Δρ| vs reference {worst:.1e}, σ {sigma:.4}"),
    )
}

fn c9_images() -> Verdict {
    let start = Instant::now();
    let task = match toy_image_task(1) {
        Ok(t) => t,
        Err(e) => return verdict(false, format!("task setup failed: {e}")),
    };
    let images = &task.test.images[..200];
    let cfg = ImageGenConfig { rng_seed: 1, ..ImageGenConfig::default() };
    let mut flipped = 0;
    for x in images {
        if fgsm_flip(&task.classifier.network, x, cfg.epsilon, cfg.flip_steps).map(|f| f.flipped).unwrap_or(false) {
            flipped += 1;
        }
    }
    let run = match image_global_generate(&task.detector, &task.classifier, images, &task.profile, &cfg) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("image search failed: {e}")),
    };
    let mut in_range = true;
    let mut worst = 0.0f64;
    let mut differ = true;
    for i in &run.idis {
        in_range &= i.a.iter().chain(&i.b).all(|v| (0.0..=1.0).contains(v));
        for k in 0..i.a.len() {
            worst = worst.max((i.b[k] - i.a[k] - i.delta_senatt[k]).abs());
        }
        differ &= oracle::predict(&task.detector, &i.a) != oracle::predict(&task.detector, &i.b);
    }
    let secs = start.elapsed().as_secs_f64();
    let rate = flipped as f64 / images.len() as f64;
    verdict(
        rate >= 0.8 && !run.idis.is_empty() && in_range && worst <= 1e-9 && differ && secs < 300.0,
        format!(
            "FGSM flips {flipped}/200, {} image IDIs, pixels in [0, 1]: {in_range}, max |b−a−Δ| {worst:.1e}, detector disagrees on every pair: {differ}, {secs:.1}s",
            run.idis.len()
        ),
    )
}

/// Runs the whole CLI pipeline in `dir` and returns every file it wrote.
fn pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let d = dir.to_str().ok_or("non-UTF-8 temp path")?;
    fairtest_cli::run_args(["fairtest", "synth", d, "--seed", "7", "--quiet"]).map_err(|e| e.to_string())?;
    let cfg = dir.join("run.json");
    let cfg = cfg.to_str().ok_or("non-UTF-8 temp path")?;
    for cmd in ["train", "interpret", "generate", "evaluate", "retrain", "report"] {
        fairtest_cli::run_args(["fairtest", cmd, cfg, "--quiet"]).map_err(|e| format!("{cmd}: {e}"))?;
    }
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for entry in std::fs::read_dir(&p).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).map_err(|e| e.to_string())?.display().to_string();
                files.insert(rel, std::fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn c10_reproducible(first: &Result<BTreeMap<String, Vec<u8>>, String>, second: &Result<BTreeMap<String, Vec<u8>>, String>) -> Verdict {
    match (first, second) {
        (Ok(a), Ok(b)) => {
            let differing: Vec<&String> = a
                .keys()
                .chain(b.keys())
                .filter(|k| a.get(*k) != b.get(*k))
                .collect();
            verdict(
                differing.is_empty() && !a.is_empty(),
                format!("{} files from two full pipeline runs; differing: {differing:?}", a.len()),
            )
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("pipeline failed: {e}")),
    }
}

fn cli_pairs(dir: &Path) -> Option<Emitted> {
    let out = dir.join("out");
    let schema = AttributeSchema::load(&dir.join("schema.json")).ok()?;
    let net = Network::load(&out.join("model.json")).ok()?;
    let mut rdr = csv::Reader::from_path(out.join("idis.csv")).ok()?;
    let d = schema.len();
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.ok()?;
        let v: Vec<f64> = (3..3 + 2 * d).map(|c| rec[c].parse().unwrap_or(f64::NAN)).collect();
        pairs.push(InstancePair {
            a: fairtest::Instance::new(v[..d].to_vec()),
            b: fairtest::Instance::new(v[d..].to_vec()),
        });
    }
    Some(Emitted { source: "cli idis.csv".into(), net, schema, pairs })
}

fn main() {
    let mut verdicts: BTreeMap<usize, Verdict> = BTreeMap::new();
    verdicts.insert(2, c2_as_curve());
    verdicts.insert(3, c3_gradient());
    verdicts.insert(8, c8_ranks());

    let fixtures: Vec<BiasedCensusModel> = FIXTURE_SEEDS
        .iter()
        .map(|&s| biased_census_model(s).expect("reference fixture trains"))
        .collect();
    verdicts.insert(4, c4_masking(&fixtures));
    let runs = search(&fixtures);
    verdicts.insert(5, c5_effectiveness(&runs));
    verdicts.insert(6, c6_diversity(&fixtures, &runs));
    verdicts.insert(7, c7_repair(&fixtures, &runs));
    verdicts.insert(9, c9_images());

    let dirs = [tempfile::tempdir().expect("temp dir"), tempfile::tempdir().expect("temp dir")];
    let first = pipeline(dirs[0].path());
    let second = pipeline(dirs[1].path());
    verdicts.insert(10, c10_reproducible(&first, &second));

    let mut emitted = Vec::new();
    for (i, (f, seed)) in fixtures.iter().zip(FIXTURE_SEEDS).enumerate() {
        for (name, run) in [("global", &runs.global[i]), ("global+local", &runs.full[i]), ("baseline", &runs.baseline[i])] {
            emitted.push(Emitted {
                source: format!("fixture {seed} {name}"),
                net: f.net.clone(),
                schema: f.schema.clone(),
                pairs: run.idis.pairs().cloned().collect(),
            });
        }
    }
    match cli_pairs(dirs[0].path()) {
        Some(e) => emitted.push(e),
        None => emitted.push(Emitted {
            source: "cli idis.csv unreadable".into(),
            net: fixtures[0].net.clone(),
            schema: fixtures[0].schema.clone(),
            pairs: vec![InstancePair {
                a: fairtest::Instance::new(vec![f64::NAN; 13]),
                b: fairtest::Instance::new(vec![f64::NAN; 13]),
            }],
        }),
    }
    verdicts.insert(1, c1_soundness(&emitted));

    let mut failed = 0;
    for (n, v) in &verdicts {
        if !v.pass {
            failed += 1;
        }
        println!("criterion {n}: {} — {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {}/{} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
