//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vectn::alignment::{project_normalize, score_descriptions, select_description};
use vectn::dataset::{load_split_with, split_stats, DatasetFormat, Label, LabelScheme, SplitStats};
use vectn::face::{render_description, Attribute, AttributeValues, FaceAttributes, Gender, Race};
use vectn::fusion::{
    batch_loss, build_phrase, classify, gate_fuse, Dropout, FeatureBatch, GateMode, GateParams, Head, CLS_TOKEN,
    SEP_TOKEN,
};
use vectn::metrics::{macro_f1, ConfusionMatrix, Metrics};
use vectn::toy::FixtureSpec;
use vectn::training::{
    run_ablation, run_experiment, AlignmentMode, Auxiliary, HeadKind, RunReport, TrainConfig, Variant,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn template_fidelity() -> Outcome {
    let start = Instant::now();
    let attrs = FaceAttributes::from_parts(
        AttributeValues {
            age: Some(43),
            gender: Some(Gender::Man),
            race: Some(Race::Black),
            sentiment: Some(Label::Negative),
        },
        BTreeMap::from([
            (Attribute::Age, 1.0),
            (Attribute::Gender, 0.99),
            (Attribute::Race, 0.97),
            (Attribute::Sentiment, 0.91),
        ]),
    );
    let text = render_description(&attrs, 0).ok_or("no description rendered")?.text;
    let expected = "A Black man with 43 years of age exhibits a negative expression";
    ensure(text == expected, || format!("got {text:?}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{text:?}"))
}

fn head_loss(head: &Head, batch: &FeatureBatch, labels: &[usize]) -> f64 {
    head.loss_and_grads(batch, labels, &mut Dropout::Inactive).expect("loss").0
}

/// Norm-wise relative error between analytic and central-difference
/// gradients over every head parameter.
fn gradient_error(head: &Head, batch: &FeatureBatch, labels: &[usize], step: f64) -> f64 {
    let (_, grads) = head.loss_and_grads(batch, labels, &mut Dropout::Inactive).expect("grads");
    let analytic: Vec<f64> = grads.tensors().iter().flat_map(|(t, _)| t.to_vec()).collect();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut probe = head.clone();
    let counts: Vec<usize> = head.tensors().iter().map(|(t, _)| t.len()).collect();
    for (k, &n) in counts.iter().enumerate() {
        for j in 0..n {
            let orig = probe.tensors()[k].0[j];
            probe.tensors_mut()[k].0[j] = orig + step;
            let up = head_loss(&probe, batch, labels);
            probe.tensors_mut()[k].0[j] = orig - step;
            let down = head_loss(&probe, batch, labels);
            probe.tensors_mut()[k].0[j] = orig;
            numeric.push((up - down) / (2.0 * step));
        }
    }
    let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(f64::MIN_POSITIVE)
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let (d, n) = (8, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for instance in 0..100 {
        let mut params = GateParams::zeros(d);
        for (t, _) in params.tensors_mut() {
            for x in t {
                *x = rng.random_range(-0.5..0.5);
            }
        }
        let batch = FeatureBatch {
            inputs: vec![uniform_matrix(&mut rng, n, d), uniform_matrix(&mut rng, n, d)],
        };
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let head = Head::Gated {
            params,
            mode: GateMode::Shared,
        };
        let err = gradient_error(&head, &batch, &labels, 1e-5);
        worst = worst.max(err);
        ensure(err <= 1e-4, || format!("instance {instance}: relative error {err:.3e}"))?;
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("100 instances at d=8, batch=4; worst relative error {worst:.2e}"))
}

fn cosine_oracle(a: &[f64], b: &[f64], w_a: &Array2<f64>, w_b: &Array2<f64>) -> f64 {
    let project = |v: &[f64], w: &Array2<f64>| -> Vec<f64> {
        (0..w.ncols())
            .map(|j| (0..w.nrows()).map(|i| v[i] * w[[i, j]]).sum())
            .collect()
    };
    let (pa, pb) = (project(a, w_a), project(b, w_b));
    let dot: f64 = pa.iter().zip(&pb).map(|(x, y)| x * y).sum();
    let na = pa.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = pb.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn alignment_math() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let err = |e: vectn::Error| e.to_string();
    for draw in 0..1000 {
        let (de, da) = (rng.random_range(2..10), rng.random_range(2..10));
        let w_i = uniform_matrix(&mut rng, de, da);
        let w_d = uniform_matrix(&mut rng, de, da);
        let v: Vec<f64> = (0..de).map(|_| rng.random_range(-2.0..2.0)).collect();
        let unit = project_normalize(&v, &w_i).map_err(err)?;
        let norm = unit.dot(&unit).sqrt();
        ensure((norm - 1.0).abs() <= 1e-6, || format!("draw {draw}: norm {norm}"))?;

        let pow2 = 2f64.powi(rng.random_range(-20..20));
        let scaled: Vec<f64> = v.iter().map(|x| x * pow2).collect();
        ensure(project_normalize(&scaled, &w_i).map_err(err)? == unit, || {
            format!("draw {draw}: not invariant to scaling by {pow2}")
        })?;
        let lambda = rng.random_range(1e-3..1e3);
        let scaled: Vec<f64> = v.iter().map(|x| x * lambda).collect();
        let moved = (&project_normalize(&scaled, &w_i).map_err(err)? - &unit)
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        ensure(moved <= 1e-12, || format!("draw {draw}: scaling by {lambda} moved output by {moved:e}"))?;

        let k = rng.random_range(1..5);
        let descs: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..de).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let units = descs
            .iter()
            .map(|d| project_normalize(d, &w_d))
            .collect::<Result<Vec<Array1<f64>>, _>>()
            .map_err(err)?;
        let scores = score_descriptions(unit.view(), &units, 0.0).map_err(err)?;
        for (s, d) in scores.iter().zip(&descs) {
            let oracle = cosine_oracle(&v, d, &w_i, &w_d);
            ensure((s - oracle).abs() <= 1e-12, || format!("draw {draw}: score {s} vs cosine {oracle}"))?;
        }
    }
    for (scores, expected) in [(vec![0.3, 0.9, 0.9, 0.1], 1), (vec![0.5, 0.5, 0.5], 0), (vec![-1.0], 0)] {
        let got = select_description(&scores).map_err(err)?;
        ensure(got == expected, || format!("select_description({scores:?}) = {got}, expected {expected}"))?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok("1000 draws: unit norm, scale invariance, cosine oracle at t=0; ties go to the lowest index".into())
}

fn gate_identities() -> Outcome {
    let d = 6;
    let zero = GateParams::zeros(d);
    let u = Array1::from(vec![1.0, -2.0, 0.5, 3.0, -0.25, 7.0]);
    let (_, fused) = gate_fuse(u.view(), u.view(), &zero).map_err(|e| e.to_string())?;
    ensure(fused.iter().all(|x| *x == 0.0), || format!("zero gate fused {fused}"))?;
    let p = classify(fused.view(), &zero.v, &zero.b, &mut Dropout::Inactive).map_err(|e| e.to_string())?;
    ensure(p.probabilities == [1.0 / 3.0; 3], || format!("zero gate prediction {:?}", p.probabilities))?;

    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut worst: f64 = 0.0;
    for instance in 0..1000 {
        let d = rng.random_range(1..12);
        let params = GateParams::random(d, &mut rng);
        let o_dt: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let o_ic: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (_, fused) =
            gate_fuse(Array1::from(o_dt.clone()).view(), Array1::from(o_ic.clone()).view(), &params).map_err(|e| e.to_string())?;
        for i in 0..d {
            let pre: f64 = (0..d)
                .map(|j| params.v_dt[[i, j]] * o_dt[j] + params.v_ic[[i, j]] * o_ic[j])
                .sum::<f64>()
                + params.b_j[i];
            let expected = pre.tanh() * (o_dt[i] + o_ic[i]);
            let dev = (fused[i] - expected).abs();
            worst = worst.max(dev);
            ensure(dev <= 1e-12, || format!("instance {instance}, coordinate {i}: deviation {dev:e}"))?;
        }
    }
    Ok(format!("zero gate gives zero fusion and [1/3; 3]; 1000 random instances, worst deviation {worst:.1e}"))
}

fn loss_closed_forms() -> Outcome {
    let err = |e: vectn::Error| e.to_string();
    let u = [1.0 / 3.0; 3];
    let uniform = batch_loss(&[u, u, u, u], &[0, 1, 2, 1]).map_err(err)?;
    ensure((uniform - 3f64.ln()).abs() <= 1e-9, || format!("uniform loss {uniform}"))?;
    let perfect = batch_loss(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], &[0, 1, 2]).map_err(err)?;
    ensure(perfect == 0.0, || format!("perfect loss {perfect}"))?;
    let single = batch_loss(&[[0.7, 0.2, 0.1]], &[0]).map_err(err)?;
    ensure((single + 0.7f64.ln()).abs() <= 1e-9, || format!("single loss {single}"))?;
    Ok(format!("ln 3 = {uniform:.12}, perfect = {perfect}, -ln 0.7 = {single:.12}"))
}

/// Per-class loops over raw label vectors, independent of ConfusionMatrix.
fn brute_force_metrics(truth: &[usize], predicted: &[usize]) -> (f64, f64) {
    let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    let mut f1_sum = 0.0;
    for c in 0..3 {
        let tp = truth.iter().zip(predicted).filter(|(t, p)| **t == c && **p == c).count() as f64;
        let pred_c = predicted.iter().filter(|p| **p == c).count() as f64;
        let true_c = truth.iter().filter(|t| **t == c).count() as f64;
        let precision = if pred_c > 0.0 { tp / pred_c } else { 0.0 };
        let recall = if true_c > 0.0 { tp / true_c } else { 0.0 };
        f1_sum += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    (correct as f64 / truth.len() as f64, f1_sum / 3.0)
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let labels = |v: &[usize]| v.iter().map(|&i| Label::ALL[i]).collect::<Vec<_>>();
    for case in 0..10_000 {
        let n = rng.random_range(1..40);
        let skew = rng.random_range(0..4);
        let draw = |rng: &mut ChaCha8Rng| if skew == 0 { rng.random_range(0..2) } else { rng.random_range(0..3) };
        let truth: Vec<usize> = (0..n).map(|_| draw(&mut rng)).collect();
        let predicted: Vec<usize> = (0..n).map(|_| draw(&mut rng)).collect();
        let m = Metrics::from_pairs(&labels(&truth), &labels(&predicted)).map_err(|e| e.to_string())?;
        let (acc, f1) = brute_force_metrics(&truth, &predicted);
        ensure((m.accuracy - acc).abs() <= 1e-12 && (m.macro_f1 - f1).abs() <= 1e-12, || {
            format!("case {case}: ({}, {}) vs oracle ({acc}, {f1})", m.accuracy, m.macro_f1)
        })?;
    }
    let hand = ConfusionMatrix::from_pairs(&labels(&[0, 1, 2]), &labels(&[0, 0, 0])).map_err(|e| e.to_string())?;
    let (acc, f1) = (hand.accuracy().map_err(|e| e.to_string())?, macro_f1(&hand).map_err(|e| e.to_string())?);
    ensure((acc - 1.0 / 3.0).abs() <= 1e-12, || format!("hand accuracy {acc}"))?;
    ensure((f1 - 0.5 / 3.0).abs() <= 1e-12 && (f1 - 0.1667).abs() < 1e-4, || format!("hand macro-F1 {f1}"))?;
    Ok(format!("10000 random cases match the oracle; hand case accuracy {acc:.4}, macro-F1 {f1:.4}"))
}

fn toy_learning(world: &common::ToyWorld, config: &TrainConfig) -> Result<(RunReport, String), String> {
    let start = Instant::now();
    let report = run_experiment(config, &world.splits, &world.bundle).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let held_out = report.test.as_ref().ok_or("no held-out split")?.accuracy;
    ensure(config.epochs <= 50, || format!("{} epochs exceeds 50", config.epochs))?;
    ensure(report.train.accuracy >= 0.95, || format!("train accuracy {:.4}", report.train.accuracy))?;
    ensure(held_out >= 0.90, || format!("held-out accuracy {held_out:.4}"))?;
    within(elapsed, Duration::from_secs(120))?;
    let detail = format!(
        "train {:.4}, held-out {:.4} after {} epochs (best epoch {}), {:.1?}",
        report.train.accuracy, held_out, config.epochs, report.best_epoch, elapsed
    );
    Ok((report, detail))
}

fn ablation(world: &common::ToyWorld, config: &TrainConfig) -> Outcome {
    let rows = run_ablation(config, &world.splits, &world.bundle).map_err(|e| e.to_string())?;
    let variants: Vec<Variant> = rows.iter().map(|r| r.variant).collect();
    ensure(variants == Variant::ALL, || format!("variants {variants:?}"))?;
    let plan = |v: Variant| &rows.iter().find(|r| r.variant == v).expect("variant").report.plan;
    let full = plan(Variant::Full);
    ensure(
        full.head == HeadKind::Gated
            && full.alignment == AlignmentMode::Scored
            && full.phrases[1].auxiliary == Auxiliary::SceneCaption,
        || format!("full plan {full:?}"),
    )?;
    let p = plan(Variant::NoGating);
    ensure(p.head == HeadKind::Linear && p.phrases == full.phrases && p.alignment == full.alignment, || {
        format!("no_gating plan {p:?}")
    })?;
    let p = plan(Variant::NoAlignment);
    ensure(p.alignment == AlignmentMode::FirstFace && p.head == full.head && p.phrases == full.phrases, || {
        format!("no_alignment plan {p:?}")
    })?;
    let p = plan(Variant::NoSceneCaption);
    ensure(
        p.phrases[1].auxiliary == Auxiliary::Empty && p.phrases[0] == full.phrases[0] && p.head == full.head,
        || format!("no_scene_caption plan {p:?}"),
    )?;
    let acc = |r: &RunReport| r.reported().accuracy;
    let full_acc = acc(&rows[0].report);
    for row in &rows[1..] {
        ensure(full_acc >= acc(&row.report), || {
            format!("{} accuracy {:.4} beats full {:.4}", row.variant, acc(&row.report), full_acc)
        })?;
    }
    Ok(rows
        .iter()
        .map(|r| format!("{} {:.4}", r.variant, acc(&r.report)))
        .collect::<Vec<_>>()
        .join(", "))
}

fn phrase_invariants() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let word = prop_oneof![
        "[A-Za-z0-9:@#!.,']{1,8}",
        Just("[SEP]".to_string()),
        Just("[CLS]".to_string()),
        Just("$T$".to_string())
    ];
    let text = |max| proptest::collection::vec(word.clone(), 0..max).prop_map(|w| w.join(" "));
    let strategy = (text(60), proptest::collection::vec(word.clone(), 1..6), text(40), 10usize..64);
    runner
        .run(&strategy, |(caption, target, aux, max_len)| {
            let caption = format!("{} {caption}", target.join(" "));
            let target = target.join(" ");
            let phrase = build_phrase(&caption, &target, &aux, max_len).expect("target fits");
            let tokens = phrase.tokens();
            prop_assert_eq!(tokens.iter().filter(|t| **t == CLS_TOKEN).count(), 1);
            prop_assert_eq!(tokens.iter().filter(|t| **t == SEP_TOKEN).count(), 3);
            prop_assert_eq!(tokens[0], CLS_TOKEN);
            prop_assert!(tokens.len() <= max_len);
            let seps: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i] == SEP_TOKEN).collect();
            let segment: Vec<&str> = tokens[seps[0] + 1..seps[1]].to_vec();
            let expected: Vec<String> = target
                .split_whitespace()
                .map(|t| if t == SEP_TOKEN || t == CLS_TOKEN { t.to_lowercase() } else { t.to_string() })
                .collect();
            prop_assert_eq!(segment, expected.iter().map(String::as_str).collect::<Vec<_>>());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 fuzzed phrases: one [CLS], three [SEP], intact target, within max_len".into())
}

/// `(split, (positive, negative, neutral, average targets))`
type SplitTable = [(&'static str, (usize, usize, usize, f64))];

/// Published split statistics.
const TWITTER15: &SplitTable = &[
    ("train", (928, 368, 1883, 1.34)),
    ("dev", (303, 149, 679, 1.33)),
    ("test", (317, 113, 607, 1.35)),
];
const TWITTER17: &SplitTable = &[
    ("train", (1508, 1638, 416, 1.41)),
    ("dev", (515, 517, 144, 1.43)),
    ("test", (493, 573, 168, 1.45)),
];

fn label_scheme() -> LabelScheme {
    match std::env::var("VECTN_LABEL_SCHEME").as_deref() {
        Ok("polarity") => LabelScheme::Polarity,
        _ => LabelScheme::Index,
    }
}

fn check_canonical(dir: &Path, table: &SplitTable) -> Result<String, String> {
    let mut out = Vec::new();
    for (split, (pos, neg, neu, avg)) in table {
        let path = dir.join(format!("{split}.txt"));
        let examples = load_split_with(&path, DatasetFormat::Fourline, label_scheme()).map_err(|e| e.to_string())?;
        let s = split_stats(&examples);
        ensure(
            (s.positive_count, s.negative_count, s.neutral_count) == (*pos, *neg, *neu)
                && format!("{:.2}", s.avg_targets_per_caption) == format!("{avg:.2}"),
            || format!("{}: {s:?}", path.display()),
        )?;
        out.push(format!("{split} {pos}/{neg}/{neu}/{avg:.2}"));
    }
    Ok(out.join(", "))
}

/// Counts straight from the raw four-line records.
fn brute_force_stats(raw: &str) -> SplitStats {
    let lines: Vec<&str> = raw.lines().collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut posts = HashSet::new();
    for rec in lines.chunks(4) {
        *counts.entry(rec[2].trim()).or_default() += 1;
        posts.insert((rec[3].trim().to_string(), rec[0].replace("$T$", rec[1].trim())));
    }
    SplitStats {
        negative_count: counts.get("0").copied().unwrap_or(0),
        neutral_count: counts.get("1").copied().unwrap_or(0),
        positive_count: counts.get("2").copied().unwrap_or(0),
        avg_targets_per_caption: (lines.len() / 4) as f64 / posts.len() as f64,
    }
}

fn dataset_statistics() -> Outcome {
    let dirs: Vec<(&str, PathBuf, &SplitTable)> = [
        ("VECTN_TWITTER15_DIR", TWITTER15),
        ("VECTN_TWITTER17_DIR", TWITTER17),
    ]
    .into_iter()
    .filter_map(|(var, table)| std::env::var_os(var).map(|d| (var, PathBuf::from(d), table)))
    .collect();
    if !dirs.is_empty() {
        let mut out = Vec::new();
        for (var, dir, table) in dirs {
            out.push(format!("{var}: {}", check_canonical(&dir, table)?));
        }
        return Ok(out.join("; "));
    }
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/stats_fourline.txt");
    let raw = fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let examples = load_split_with(&path, DatasetFormat::Fourline, LabelScheme::Index).map_err(|e| e.to_string())?;
    let got = split_stats(&examples);
    let expected = brute_force_stats(&raw);
    ensure(got == expected, || format!("{got:?} vs brute force {expected:?}"))?;
    Ok(format!(
        "canonical files not supplied; bundled fixture {}/{}/{} avg {:.4} matches brute force",
        got.positive_count, got.negative_count, got.neutral_count, got.avg_targets_per_caption
    ))
}

fn determinism(world: &common::ToyWorld, config: &TrainConfig, first: &RunReport) -> Outcome {
    let second = run_experiment(config, &world.splits, &world.bundle).map_err(|e| e.to_string())?;
    let trace = |r: &RunReport| r.epochs.iter().map(|e| e.loss.to_bits()).collect::<Vec<_>>();
    ensure(trace(first) == trace(&second), || "per-epoch loss traces differ".into())?;
    let a = serde_json::to_vec(&first.record()).map_err(|e| e.to_string())?;
    let b = serde_json::to_vec(&second.record()).map_err(|e| e.to_string())?;
    ensure(a == b, || "metrics.json differs between runs".into())?;
    ensure(first.head == second.head, || "trained parameters differ".into())?;
    Ok(format!("{} epoch losses and {} bytes of metrics.json identical", first.epochs.len(), a.len()))
}

fn run(results: &mut Vec<(usize, &'static str, Outcome)>, id: usize, name: &'static str, f: impl FnOnce() -> Outcome) {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let status = if outcome.is_ok() { "PASS" } else { "FAIL" };
    let detail = match &outcome {
        Ok(d) | Err(d) => d,
    };
    println!("criterion {id:>2} {status} {name}: {detail}");
    results.push((id, name, outcome));
}

fn main() {
    let mut results = Vec::new();
    run(&mut results, 1, "template fidelity", template_fidelity);
    run(&mut results, 2, "gradient correctness", gradient_correctness);
    run(&mut results, 3, "alignment math", alignment_math);
    run(&mut results, 4, "gate identities", gate_identities);
    run(&mut results, 5, "loss closed forms", loss_closed_forms);
    run(&mut results, 6, "metrics oracle", metrics_oracle);

    let config = TrainConfig::default();
    let world = common::toy_world(&FixtureSpec::default(), &config);
    let mut first = None;
    run(&mut results, 7, "toy end-to-end learning", || {
        let (report, detail) = toy_learning(&world, &config)?;
        first = Some(report);
        Ok(detail)
    });
    run(&mut results, 8, "ablation structure and direction", || ablation(&world, &config));
    run(&mut results, 9, "phrase invariants", phrase_invariants);
    run(&mut results, 10, "dataset statistics", dataset_statistics);
    run(&mut results, 11, "determinism", || match &first {
        Some(report) => determinism(&world, &config, report),
        None => {
            let (report, _) = toy_learning(&world, &config)?;
            determinism(&world, &config, &report)
        }
    });

    let failed = results.iter().filter(|(_, _, o)| o.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
