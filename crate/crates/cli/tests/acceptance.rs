//! End-to-end acceptance checks, one pass/fail line per criterion.
//!
//! Criteria 5 to 7 train two full-size models on the default synthetic
//! corpus, so a complete run takes roughly twenty minutes on one core.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gkw_core::eval::{
    average_precision, bow_metrics, bow_predict, equal_error_rate, keyword_spot, precision_at, EvalReference,
    ScoreTable, TieBreak,
};
use gkw_core::features::FeatureMatrix;
use gkw_core::layers::logsumexp_pool;
use gkw_core::models::{binary_entropy, bow_loss, bow_loss_grad, ArchitectureSpec, Batch, Model};
use gkw_core::targets::Vocabulary;
use gkw_core::tensor::Tensor;
use gkw_core::util::rng_for;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gkw(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = gkw_cli::run(std::iter::once("gkw").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8_lossy(&out).into_owned())
}

fn gkw_ok(args: &[&str]) -> Result<String, String> {
    let (code, out) = gkw(args);
    ensure(code == 0, || format!("`gkw {}` exited with {code}", args.join(" ")))?;
    Ok(out)
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn num(v: &Value, key: &str) -> Result<f64, String> {
    v["results"][key].as_f64().ok_or_else(|| format!("report lacks results.{key}"))
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

fn max_rel_err(output: &str) -> Option<f64> {
    let rest = output.split("max relative error ").nth(1)?;
    rest.split_whitespace().next()?.parse().ok()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    for arch in ["cnn", "psc"] {
        let out = gkw_ok(&["gradcheck", "--arch", arch, "--toy"])?;
        let err = max_rel_err(&out).ok_or_else(|| format!("no error figure in {out:?}"))?;
        ensure(err <= 1e-6, || format!("{arch} max relative error {err:e}"))?;
        details.push(format!("{arch} {err:.1e}"));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    let (code, _) = gkw(&["gradcheck", "--arch", "cnn", "--toy", "--corrupt"]);
    ensure(code == 3, || format!("corrupted backward exited with {code}, expected 3"))?;
    Ok(format!(
        "{}; {:.2}s; corrupted backward rejected",
        details.join(", "),
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 2. Pooling properties

fn random_matrix(rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let t = rng.random_range(1..=40);
    let c = rng.random_range(1..=6);
    let data = (0..t * c).map(|_| rng.random_range(-3.0..3.0)).collect();
    Tensor::from_vec(&[t, c], data).expect("shape matches data")
}

fn column_stats(h: &Tensor<f64>) -> (Vec<f64>, Vec<f64>) {
    let (t, c) = (h.shape()[0], h.shape()[1]);
    let mut mean = vec![0.0; c];
    let mut max = vec![f64::NEG_INFINITY; c];
    for row in h.data().chunks_exact(c) {
        for j in 0..c {
            mean[j] += row[j] / t as f64;
            max[j] = max[j].max(row[j]);
        }
    }
    (mean, max)
}

fn pooling_properties() -> Outcome {
    let rs = [0.01, 0.1, 1.0, 10.0, 100.0];
    let mut rng = rng_for(2, "pooling");
    let (mut worst_small, mut worst_large) = (0.0f64, 0.0f64);
    for m in 0..100 {
        let h = random_matrix(&mut rng);
        let (mean, max) = column_stats(&h);
        let pooled: Vec<Vec<f64>> = rs
            .iter()
            .map(|&r| logsumexp_pool(&h, r).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        for j in 0..mean.len() {
            for (k, p) in pooled.iter().enumerate() {
                ensure(mean[j] <= p[j] && p[j] <= max[j], || {
                    format!("matrix {m} column {j}: r={} gives {} outside [{}, {}]", rs[k], p[j], mean[j], max[j])
                })?;
                if k > 0 {
                    ensure(pooled[k - 1][j] <= p[j], || {
                        format!("matrix {m} column {j}: not monotone between r={} and r={}", rs[k - 1], rs[k])
                    })?;
                }
            }
        }
        let small = logsumexp_pool(&h, 1e-6).map_err(|e| e.to_string())?;
        let large = logsumexp_pool(&h, 1e3).map_err(|e| e.to_string())?;
        for j in 0..mean.len() {
            worst_small = worst_small.max((small[j] - mean[j]).abs());
            worst_large = worst_large.max((large[j] - max[j]).abs());
        }
    }
    ensure(worst_small <= 1e-5, || format!("|pool(1e-6) - mean| reached {worst_small:e}"))?;
    ensure(worst_large <= 0.01, || format!("|pool(1e3) - max| reached {worst_large:e}"))?;
    Ok(format!(
        "100 matrices; max |pool(1e-6) - mean| {worst_small:.1e}, max |pool(1e3) - max| {worst_large:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 3. Loss properties

fn loss_properties() -> Outcome {
    let mut rng = rng_for(3, "loss");
    let (mut worst_gap, mut worst_grad) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let w = rng.random_range(1..=40);
        let y: Vec<f64> = (0..w).map(|_| rng.random_range(0.0..1.0)).filter(|&v| v > 0.0).collect();
        if y.is_empty() {
            continue;
        }
        let loss = bow_loss(&y, &y).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max((loss - binary_entropy(&y)).abs());
        let grad = bow_loss_grad(&y, &y).map_err(|e| e.to_string())?;
        worst_grad = grad.iter().fold(worst_grad, |m, g| m.max(g.abs()));

        let binary: Vec<f64> = (0..w).map(|_| f64::from(u8::from(rng.random_bool(0.3)))).collect();
        let f: Vec<f64> = (0..w).map(|_| rng.random_range(0.0..=1.0)).collect();
        let l = bow_loss(&f, &binary).map_err(|e| e.to_string())?;
        ensure(l >= 0.0, || format!("case {i}: negative loss {l} on a binary target"))?;
    }
    ensure(worst_gap <= 1e-6, || format!("|loss(y, y) - H(y)| reached {worst_gap:e}"))?;
    ensure(worst_grad <= 1e-6, || format!("gradient at f = y reached {worst_grad:e}"))?;
    Ok(format!(
        "100 soft targets; max |loss - H| {worst_gap:.1e}, max |grad| {worst_grad:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 4. Metric oracles

const WORDS: [&str; 5] = ["a", "b", "c", "d", "e"];

struct Case {
    table: ScoreTable,
    reference: EvalReference,
}

/// `levels` = 0 draws continuous scores; otherwise scores sit on a grid so
/// ties are common.
fn random_case(rng: &mut ChaCha8Rng, levels: u32) -> Case {
    let n = rng.random_range(2..40);
    let w = rng.random_range(1..=WORDS.len());
    let vocab = Vocabulary::from_words(WORDS[..w].iter().copied()).expect("distinct words");
    let ids: Vec<String> = (0..n).map(|i| format!("u{:03}", (i * 53) % 997)).collect();
    let rows = (0..n)
        .map(|_| {
            (0..w)
                .map(|_| {
                    if levels == 0 {
                        rng.random_range(0.0f32..1.0)
                    } else {
                        rng.random_range(0..=levels) as f32 / levels as f32
                    }
                })
                .collect()
        })
        .collect();
    let sets = ids
        .iter()
        .map(|id| {
            let set: BTreeSet<String> = WORDS
                .iter()
                .filter(|_| rng.random_bool(0.4))
                .map(|w| w.to_string())
                .collect();
            (id.clone(), set)
        })
        .collect();
    Case {
        table: ScoreTable::new(ids, vocab, rows).expect("well-formed table"),
        reference: EvalReference::from_sets(sets),
    }
}

fn relevant(case: &Case, i: usize, w: usize) -> bool {
    let t = &case.table;
    case.reference.get(&t.ids()[i]).expect("id present").contains(t.vocab().word(w))
}

/// Σ (R_n - R_{n-1}) P_n over distinct thresholds, highest first.
fn ap_sweep(case: &Case) -> Option<f64> {
    let t = &case.table;
    let mut scored = Vec::new();
    for i in 0..t.len() {
        for w in 0..t.width() {
            scored.push((t.score(i, w), relevant(case, i, w)));
        }
    }
    let pos = scored.iter().filter(|s| s.1).count() as f64;
    if pos == 0.0 {
        return None;
    }
    let mut ths: Vec<f32> = scored.iter().map(|s| s.0).collect();
    ths.sort_by(|a, b| b.total_cmp(a));
    ths.dedup();
    let (mut ap, mut prev) = (0.0, 0.0);
    for th in ths {
        let accepted = scored.iter().filter(|s| s.0 >= th).count() as f64;
        let tp = scored.iter().filter(|s| s.1 && s.0 >= th).count() as f64;
        ap += (tp / pos - prev) * (tp / accepted);
        prev = tp / pos;
    }
    Some(ap)
}

/// A keyword's hits in rank order, each rank found by counting the
/// utterances ahead of it (higher score, or equal score and smaller id).
fn ranked_hits(case: &Case, w: usize) -> Vec<bool> {
    let t = &case.table;
    let mut hits = vec![false; t.len()];
    for i in 0..t.len() {
        let rank = (0..t.len())
            .filter(|&j| t.score(j, w) > t.score(i, w) || (t.score(j, w) == t.score(i, w) && t.ids()[j] < t.ids()[i]))
            .count();
        hits[rank] = relevant(case, i, w);
    }
    hits
}

/// FA and FR at every distinct threshold, linearly interpolated at the
/// first point where FA reaches FR.
fn eer_sweep(scores: &[(f32, bool)]) -> Option<f64> {
    let pos = scores.iter().filter(|s| s.1).count() as f64;
    let neg = scores.len() as f64 - pos;
    if pos == 0.0 {
        return None;
    }
    if neg == 0.0 {
        return Some(0.0);
    }
    let mut ths: Vec<f32> = scores.iter().map(|s| s.0).collect();
    ths.sort_by(|a, b| b.total_cmp(a));
    ths.dedup();
    let mut prev = (0.0, 1.0);
    for th in ths {
        let fa = scores.iter().filter(|s| !s.1 && s.0 >= th).count() as f64 / neg;
        let fr = scores.iter().filter(|s| s.1 && s.0 < th).count() as f64 / pos;
        if fa >= fr {
            if fa == fr {
                return Some(fa);
            }
            let t = (prev.1 - prev.0) / ((fa - prev.0) - (fr - prev.1));
            return Some(prev.0 + t * (fa - prev.0));
        }
        prev = (fa, fr);
    }
    None
}

fn metric_oracles() -> Outcome {
    let mut rng = rng_for(4, "metrics");
    let (mut n_bow, mut n_ap, mut n_kw) = (0, 0, 0);
    for trial in 0..200 {
        let levels = if trial % 2 == 0 { 0 } else { 4 };
        let case = random_case(&mut rng, levels);
        let t = &case.table;

        let alpha = rng.random_range(0..=10) as f64 / 10.0;
        let m = bow_metrics(&bow_predict(t, alpha).map_err(|e| e.to_string())?, &case.reference)
            .map_err(|e| e.to_string())?;
        let (mut tp, mut predicted, mut rel) = (0, 0, 0);
        for (i, id) in t.ids().iter().enumerate() {
            rel += case.reference.get(id).expect("id present").len();
            for w in 0..t.width() {
                if f64::from(t.score(i, w)) > alpha {
                    predicted += 1;
                    tp += usize::from(relevant(&case, i, w));
                }
            }
        }
        ensure((m.true_positives, m.predicted, m.relevant) == (tp, predicted, rel), || {
            format!("trial {trial}: bow counts {:?} vs oracle {:?}", (m.true_positives, m.predicted, m.relevant), (tp, predicted, rel))
        })?;
        n_bow += 1;

        if levels == 0 {
            let got = average_precision(t, &case.reference).ok();
            let oracle = ap_sweep(&case);
            match (got, oracle) {
                (Some(a), Some(b)) => ensure((a - b).abs() <= 1e-12, || format!("trial {trial}: AP {a} vs sweep {b}"))?,
                (None, None) => {}
                (a, b) => return Err(format!("trial {trial}: AP {a:?} vs sweep {b:?}")),
            }
            n_ap += 1;
        }

        let keywords: Vec<String> = t.vocab().words().to_vec();
        let Ok(report) = keyword_spot(t, &keywords, &case.reference, None, TieBreak::UtteranceId) else {
            continue;
        };
        for k in &report.per_keyword {
            let w = t.vocab().index_of(&k.keyword).expect("keyword in vocabulary");
            let hits = ranked_hits(&case, w);
            let n = hits.iter().filter(|&&h| h).count();
            let p10 = hits.iter().take(10).filter(|&&h| h).count() as f64 / 10.0;
            let pn = hits.iter().take(n).filter(|&&h| h).count() as f64 / n as f64;
            ensure(k.occurrences == n && k.p_at_10 == p10 && k.p_at_n == pn, || {
                format!("trial {trial} keyword {}: P@10 {} P@N {} vs oracle {p10} {pn}", k.keyword, k.p_at_10, k.p_at_n)
            })?;
            if levels == 0 {
                let scores: Vec<(f32, bool)> = (0..t.len()).map(|i| (t.score(i, w), relevant(&case, i, w))).collect();
                let oracle = eer_sweep(&scores).ok_or("sweep found no crossing")?;
                ensure((k.eer - oracle).abs() <= 1e-9, || {
                    format!("trial {trial} keyword {}: EER {} vs sweep {oracle}", k.keyword, k.eer)
                })?;
            }
            n_kw += 1;
        }
    }

    // Worked examples.
    let vocab = Vocabulary::from_words(["kw"]).expect("one word");
    let mk = |scores: &[(f32, bool)]| {
        let ids: Vec<String> = (0..scores.len()).map(|i| format!("x{i}")).collect();
        let rows = scores.iter().map(|s| vec![s.0]).collect();
        let sets = ids
            .iter()
            .zip(scores)
            .map(|(id, s)| (id.clone(), if s.1 { BTreeSet::from(["kw".to_string()]) } else { BTreeSet::new() }))
            .collect::<BTreeMap<_, _>>();
        (ScoreTable::new(ids, vocab.clone(), rows).expect("table"), EvalReference::from_sets(sets))
    };
    let (table, reference) = mk(&[(0.9, true), (0.8, false), (0.7, true)]);
    let ap = average_precision(&table, &reference).map_err(|e| e.to_string())?;
    ensure(ap == 0.5 * (1.0 + 2.0 / 3.0), || format!("worked AP example gave {ap}"))?;
    let (table, reference) = mk(&[(0.9, true), (0.4, true), (0.6, false), (0.1, false)]);
    let eer = keyword_spot(&table, &["kw".into()], &reference, None, TieBreak::UtteranceId)
        .map_err(|e| e.to_string())?
        .per_keyword[0]
        .eer;
    ensure(eer == 0.5, || format!("worked EER example gave {eer}"))?;
    ensure(equal_error_rate(&[true, false, true, false]) == Some(0.5), || "ranked EER example".into())?;
    ensure(precision_at(&[true, false, true, false], 2) == 0.5, || "P@2 example".into())?;
    Ok(format!(
        "{n_bow} bow, {n_ap} AP, {n_kw} keyword instances agree; AP 0.8333 and EER 50% examples exact"
    ))
}

// ---------------------------------------------------------------------------
// 8. Shape contracts

fn random_features(rng: &mut ChaCha8Rng, rows: usize) -> FeatureMatrix {
    let data = (0..rows * 39).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    FeatureMatrix::new(rows, 39, data).expect("shape matches data")
}

fn shape_contracts() -> Outcome {
    let cnn = ArchitectureSpec::cnn_pool(20);
    let psc = ArchitectureSpec::psc(20);
    let want = vec![792, 264, 255, 85, 75];
    let got = cnn.time_extents(800).map_err(|e| e.to_string())?;
    ensure(got == want, || format!("cnn extents {got:?}"))?;
    let psc_t = *psc.time_extents(800).map_err(|e| e.to_string())?.last().expect("non-empty");
    ensure(psc_t == 747, || format!("psc T' = {psc_t}"))?;

    let mut rng = rng_for(8, "shapes");
    let long = random_features(&mut rng, 800);
    let cnn_model: Model<f32> = Model::init(&cnn, &mut rng_for(8, "cnn")).map_err(|e| e.to_string())?;
    let psc_model: Model<f32> = Model::init(&psc, &mut rng_for(8, "psc")).map_err(|e| e.to_string())?;
    let batch = Batch::from_features(&[&long]).map_err(|e| e.to_string())?;
    let pred = cnn_model.forward(&batch).map_err(|e| e.to_string())?;
    let forward: Vec<usize> = pred.time_extents.iter().map(|layer| layer[0]).collect();
    ensure(forward == want, || format!("cnn forward extents {forward:?}"))?;
    let (_, map) = psc_model.predict_with_localization(&long).map_err(|e| e.to_string())?;
    let map = map.ok_or("psc produced no score map")?;
    ensure(map.shape() == [747, 20], || format!("psc score map shape {:?}", map.shape()))?;

    let mut worst = 0.0f32;
    for model in [&cnn_model, &psc_model] {
        let short = random_features(&mut rng, 180);
        let longer = random_features(&mut rng, 260);
        let padded = model
            .forward(&Batch::from_features(&[&short, &longer]).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let alone = model.predict(&short).map_err(|e| e.to_string())?;
        for (a, b) in padded.probabilities[0].iter().zip(&alone) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("padding changed outputs by {worst:e}"))?;
    Ok(format!("cnn {want:?}, psc T' 747; padding changes outputs by {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Pipeline criteria

/// Training budget per model.
const BUDGET: Duration = Duration::from_secs(15 * 60);
const EPOCHS: &str = "14";

struct Corpus {
    dir: PathBuf,
    manifest: PathBuf,
}

fn default_corpus(root: &Path) -> Result<Corpus, String> {
    let dir = root.join("corpus");
    gkw_ok(&["generate", "--out", s(&dir)])?;
    Ok(Corpus {
        manifest: dir.join("manifest.jsonl"),
        dir,
    })
}

fn eval_report(root: &Path, scores: &Path, manifest: &Path, extra: &[&str], name: &str) -> Result<Value, String> {
    let out = root.join(name);
    let mut args = vec!["eval", "--scores", s(scores), "--manifest", s(manifest), "--out", s(&out)];
    args.extend_from_slice(extra);
    gkw_ok(&args)?;
    read_json(&out)
}

fn baseline_behavior(root: &Path, corpus: &Corpus) -> Outcome {
    let table = root.join("unigram.tsv");
    gkw_ok(&["score", "--manifest", s(&corpus.manifest), "--unigram", "--out", s(&table)])?;
    let report = eval_report(root, &table, &corpus.manifest, &["--mode", "kws", "--tie-trials", "1000"], "unigram_kws.json")?;
    let eer = num(&report, "mean_eer")?;
    ensure((eer - 50.0).abs() <= 2.0, || format!("average EER {eer:.2}%"))?;
    Ok(format!("average EER {eer:.2}% over 1000 tie trials"))
}

struct Trained {
    ap: f64,
    seconds: f64,
    epochs: String,
}

fn train_and_score(root: &Path, corpus: &Corpus, targets: &str) -> Result<Trained, String> {
    let ckpt = root.join(format!("{targets}.gkwm"));
    let start = Instant::now();
    let out = gkw_ok(&[
        "train",
        "--manifest",
        s(&corpus.manifest),
        "--targets",
        targets,
        "--arch",
        "cnn",
        "--epochs",
        EPOCHS,
        "--out",
        s(&ckpt),
    ])?;
    let seconds = start.elapsed().as_secs_f64();
    let epochs = out
        .lines()
        .find(|l| l.starts_with("best epoch"))
        .unwrap_or("")
        .to_string();
    let table = root.join(format!("{targets}.tsv"));
    gkw_ok(&["score", "--manifest", s(&corpus.manifest), "--checkpoint", s(&ckpt), "--out", s(&table)])?;
    let report = eval_report(root, &table, &corpus.manifest, &["--mode", "bow"], &format!("{targets}_bow.json"))?;
    Ok(Trained {
        ap: num(&report, "average_precision")? / 100.0,
        seconds,
        epochs,
    })
}

fn end_to_end_ordering(root: &Path, corpus: &Corpus) -> Outcome {
    let baseline = eval_report(root, &root.join("unigram.tsv"), &corpus.manifest, &["--mode", "bow"], "unigram_bow.json")?;
    let base_ap = num(&baseline, "average_precision")? / 100.0;
    let oracle = train_and_score(root, corpus, "oracle")?;
    eprintln!("  oracle: AP {:.4} in {:.0}s, {}", oracle.ap, oracle.seconds, oracle.epochs);
    let vision = train_and_score(root, corpus, "vision")?;
    eprintln!("  vision: AP {:.4} in {:.0}s, {}", vision.ap, vision.seconds, vision.epochs);
    let summary = format!(
        "AP oracle {:.3} ({:.0}s), vision {:.3} ({:.0}s), unigram {:.3}",
        oracle.ap, oracle.seconds, vision.ap, vision.seconds, base_ap
    );
    ensure(oracle.seconds < BUDGET.as_secs_f64() && vision.seconds < BUDGET.as_secs_f64(), || {
        format!("{summary}: over the 15 minute budget")
    })?;
    ensure(oracle.ap >= 0.85, || format!("{summary}: oracle below 0.85"))?;
    ensure(vision.ap >= base_ap + 0.15, || format!("{summary}: vision not 0.15 above unigram"))?;
    ensure(oracle.ap > vision.ap && vision.ap > base_ap, || format!("{summary}: ordering broken"))?;
    Ok(summary)
}

fn semantic_vs_exact(root: &Path, corpus: &Corpus) -> Outcome {
    let map = corpus.dir.join("semantic_map.tsv");
    let report = eval_report(
        root,
        &root.join("vision.tsv"),
        &corpus.manifest,
        &["--mode", "semantic-kws", "--semantic-map", s(&map)],
        "vision_semantic.json",
    )?;
    let rows = report["results"]["per_keyword"].as_array().ok_or("report lacks per_keyword")?;
    for r in rows {
        let (sem, exact) = (r["p_at_10"].as_f64(), r["exact_p_at_10"].as_f64());
        ensure(sem >= exact, || format!("keyword {}: semantic {sem:?} < exact {exact:?}", r["keyword"]))?;
    }
    let sem = num(&report, "mean_p_at_10")?;
    let exact = num(&report, "exact_mean_p_at_10")?;
    ensure(sem > exact, || format!("semantic P@10 {sem:.1} not above exact {exact:.1}"))?;
    Ok(format!("{} keywords; P@10 semantic {sem:.1}% vs exact {exact:.1}%", rows.len()))
}

// ---------------------------------------------------------------------------
// 9. Reproducibility

const SMALL: &str = "[generate]\ntrain = 64\ndev = 16\ntest = 16\n\n[train]\nepochs = 2\n";

fn pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let config = dir.join("run.toml");
    fs::write(&config, SMALL).map_err(|e| e.to_string())?;
    let corpus = dir.join("corpus");
    let manifest = corpus.join("manifest.jsonl");
    let ckpt = dir.join("model.gkwm");
    let table = dir.join("test.tsv");
    let report = dir.join("report.json");
    let common = ["--config", s(&config), "--seed", "5", "--threads", "1", "--strict-determinism"];
    let with = |args: &[&str]| -> Vec<String> { common.iter().chain(args).map(|a| a.to_string()).collect() };
    for args in [
        with(&["generate", "--out", s(&corpus)]),
        with(&["train", "--manifest", s(&manifest), "--targets", "vision", "--out", s(&ckpt)]),
        with(&["score", "--manifest", s(&manifest), "--checkpoint", s(&ckpt), "--out", s(&table)]),
        with(&["eval", "--scores", s(&table), "--manifest", s(&manifest), "--mode", "kws", "--out", s(&report)]),
    ] {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        gkw_ok(&refs)?;
    }
    [("manifest", &manifest), ("checkpoint", &ckpt), ("score table", &table), ("report", &report)]
        .into_iter()
        .map(|(name, p)| fs::read(p).map(|b| (name.to_string(), b)).map_err(|e| format!("{}: {e}", p.display())))
        .collect()
}

fn reproducibility(root: &Path) -> Outcome {
    let a = pipeline(&root.join("run_a"))?;
    let b = pipeline(&root.join("run_b"))?;
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    let sizes: Vec<String> = a.iter().map(|(n, b)| format!("{n} {}B", b.len())).collect();
    Ok(format!("byte-identical: {}", sizes.join(", ")))
}

// ---------------------------------------------------------------------------

fn report(n: usize, title: &str, outcome: Outcome, failures: &mut usize) {
    match outcome {
        Ok(detail) => println!("criterion {n} [{title}]: PASS ({detail})"),
        Err(detail) => {
            *failures += 1;
            println!("criterion {n} [{title}]: FAIL ({detail})");
        }
    }
}

fn main() {
    if std::env::var_os("GKW_LOG").is_none() {
        std::env::set_var("GKW_LOG", "warn");
    }
    let start = Instant::now();
    let root = tempfile::tempdir().expect("temp dir");
    let mut failures = 0;
    report(1, "gradient correctness", gradient_correctness(), &mut failures);
    report(2, "pooling properties", pooling_properties(), &mut failures);
    report(3, "loss properties", loss_properties(), &mut failures);
    report(4, "metric oracles", metric_oracles(), &mut failures);

    match default_corpus(root.path()) {
        Ok(corpus) => {
            report(5, "unigram baseline", baseline_behavior(root.path(), &corpus), &mut failures);
            report(6, "end-to-end ordering", end_to_end_ordering(root.path(), &corpus), &mut failures);
            report(7, "semantic vs exact", semantic_vs_exact(root.path(), &corpus), &mut failures);
        }
        Err(e) => {
            for (n, title) in [(5, "unigram baseline"), (6, "end-to-end ordering"), (7, "semantic vs exact")] {
                report(n, title, Err(format!("corpus generation failed: {e}")), &mut failures);
            }
        }
    }
    report(8, "shape contracts", shape_contracts(), &mut failures);
    report(9, "reproducibility", reproducibility(root.path()), &mut failures);

    println!(
        "acceptance: {} of 9 criteria passed in {:.0}s",
        9 - failures,
        start.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
