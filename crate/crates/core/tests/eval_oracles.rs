use std::collections::{BTreeMap, BTreeSet};

use gkw_core::eval::{
    average_precision, bow_metrics, bow_predict, equal_error_rate, keyword_spot, precision_at, EvalReference,
    ScoreTable, SemanticMap, TieBreak,
};
use gkw_core::targets::Vocabulary;
use gkw_core::util::rng_for;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

struct Case {
    table: ScoreTable,
    reference: EvalReference,
}

/// `levels` = 0 draws continuous scores; otherwise scores sit on a coarse
/// grid so ties are common.
fn random_case(rng: &mut ChaCha8Rng, utts: usize, levels: u32) -> Case {
    let w = rng.random_range(2..=WORDS.len());
    let vocab = Vocabulary::from_words(WORDS[..w].iter().copied()).unwrap();
    let ids: Vec<String> = (0..utts).map(|i| format!("utt{:03}", (i * 37) % 1000)).collect();
    let score = |rng: &mut ChaCha8Rng| {
        if levels == 0 {
            rng.random_range(0.0f32..1.0)
        } else {
            rng.random_range(0..=levels) as f32 / levels as f32
        }
    };
    let rows = (0..utts).map(|_| (0..w).map(|_| score(rng)).collect()).collect();
    let mut sets = BTreeMap::new();
    for id in &ids {
        let mut s: BTreeSet<String> = WORDS
            .iter()
            .filter(|_| rng.random_bool(0.35))
            .map(|w| w.to_string())
            .collect();
        if rng.random_bool(0.3) {
            s.insert("oov".into());
        }
        sets.insert(id.clone(), s);
    }
    Case {
        table: ScoreTable::new(ids, vocab, rows).unwrap(),
        reference: EvalReference::from_sets(sets),
    }
}

#[test]
fn bow_metrics_match_pair_counting() {
    let mut rng = rng_for(1, "bow");
    for _ in 0..200 {
        let n = rng.random_range(1..50);
        let case = random_case(&mut rng, n, 10);
        let alpha = rng.random_range(0..=10) as f64 / 10.0;
        let pred = bow_predict(&case.table, alpha).unwrap();
        let m = bow_metrics(&pred, &case.reference).unwrap();
        let (mut tp, mut np, mut nr) = (0usize, 0usize, 0usize);
        for (i, id) in case.table.ids().iter().enumerate() {
            let r = case.reference.get(id).unwrap();
            nr += r.len();
            for w in 0..case.table.width() {
                if f64::from(case.table.score(i, w)) > alpha {
                    np += 1;
                    if r.contains(case.table.vocab().word(w)) {
                        tp += 1;
                    }
                }
            }
        }
        assert_eq!((m.true_positives, m.predicted, m.relevant), (tp, np, nr));
        let p = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
        let r = if nr == 0 { 0.0 } else { tp as f64 / nr as f64 };
        assert_eq!(m.precision, p);
        assert_eq!(m.recall, r);
    }
}

#[test]
fn exact_predictions_score_one() {
    let mut rng = rng_for(2, "bow");
    let case = random_case(&mut rng, 30, 0);
    let pred: Vec<(String, BTreeSet<String>)> = case
        .reference
        .iter()
        .map(|(id, s)| (id.to_string(), s.clone()))
        .collect();
    let m = bow_metrics(&pred, &case.reference).unwrap();
    assert_eq!((m.precision, m.recall, m.f_score), (1.0, 1.0, 1.0));
}

/// Precision at each positive, by counting everything ranked at or above it.
fn ap_by_rank_counting(case: &Case) -> Option<f64> {
    let t = &case.table;
    let mut pairs = Vec::new();
    for (i, id) in t.ids().iter().enumerate() {
        let r = case.reference.get(id).unwrap();
        for w in 0..t.width() {
            pairs.push((t.score(i, w), id.clone(), w, r.contains(t.vocab().word(w))));
        }
    }
    let ahead = |q: &(f32, String, usize, bool), p: &(f32, String, usize, bool)| {
        q.0 > p.0 || (q.0 == p.0 && (&q.1, q.2) <= (&p.1, p.2))
    };
    let positives: Vec<_> = pairs.iter().filter(|p| p.3).collect();
    if positives.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for p in &positives {
        let above: Vec<_> = pairs.iter().filter(|q| ahead(q, p)).collect();
        total += above.iter().filter(|q| q.3).count() as f64 / above.len() as f64;
    }
    Some(total / positives.len() as f64)
}

/// Σ (R_n − R_{n−1})·P_n over every distinct threshold.
fn ap_by_threshold_sweep(case: &Case) -> Option<f64> {
    let t = &case.table;
    let mut scores = Vec::new();
    let mut total_pos = 0usize;
    for (i, id) in t.ids().iter().enumerate() {
        let r = case.reference.get(id).unwrap();
        for w in 0..t.width() {
            let pos = r.contains(t.vocab().word(w));
            total_pos += pos as usize;
            scores.push((t.score(i, w), pos));
        }
    }
    if total_pos == 0 {
        return None;
    }
    let mut thresholds: Vec<f32> = scores.iter().map(|s| s.0).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev_r) = (0.0, 0.0);
    for th in thresholds {
        let accepted: Vec<_> = scores.iter().filter(|s| s.0 >= th).collect();
        let tp = accepted.iter().filter(|s| s.1).count() as f64;
        let (p, r) = (tp / accepted.len() as f64, tp / total_pos as f64);
        ap += (r - prev_r) * p;
        prev_r = r;
    }
    Some(ap)
}

#[test]
fn average_precision_matches_oracles() {
    let mut rng = rng_for(3, "ap");
    for trial in 0..200 {
        let levels = if trial % 2 == 0 { 0 } else { 5 };
        let n = rng.random_range(1..25);
        let case = random_case(&mut rng, n, levels);
        let got = average_precision(&case.table, &case.reference).ok();
        let oracle = ap_by_rank_counting(&case);
        assert_eq!(got.is_some(), oracle.is_some());
        if let (Some(a), Some(b)) = (got, oracle) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            assert!((0.0..=1.0).contains(&a));
            if levels == 0 {
                let c = ap_by_threshold_sweep(&case).unwrap();
                assert!((a - c).abs() < 1e-12, "{a} vs sweep {c}");
            }
        }
    }
}

#[test]
fn average_precision_ignores_monotone_transforms() {
    let mut rng = rng_for(4, "ap");
    for _ in 0..50 {
        let case = random_case(&mut rng, 20, 1000);
        let cubed = case.table.map_scores(|s| s * s * s).unwrap();
        assert_eq!(
            average_precision(&case.table, &case.reference).ok(),
            average_precision(&cubed, &case.reference).ok()
        );
    }
}

#[test]
fn perfect_scores_are_perfect() {
    let mut rng = rng_for(5, "ap");
    let case = random_case(&mut rng, 40, 0);
    let t = &case.table;
    let rows = t
        .ids()
        .iter()
        .map(|id| {
            let r = case.reference.get(id).unwrap();
            t.vocab().words().iter().map(|w| if r.contains(w) { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    let perfect = ScoreTable::new(t.ids().to_vec(), t.vocab().clone(), rows).unwrap();
    assert_eq!(average_precision(&perfect, &case.reference).unwrap(), 1.0);
    let kws: Vec<String> = t.vocab().words().to_vec();
    let rep = keyword_spot(&perfect, &kws, &case.reference, None, TieBreak::UtteranceId).unwrap();
    for k in &rep.per_keyword {
        assert_eq!(k.eer, 0.0);
        assert_eq!(k.p_at_n, 1.0);
        if k.occurrences >= 10 {
            assert_eq!(k.p_at_10, 1.0);
        }
    }
}

/// Hits per keyword in rank order, ranks computed by counting predecessors.
fn ranked_hits_oracle(case: &Case, w: usize) -> Vec<bool> {
    let t = &case.table;
    let word = t.vocab().word(w);
    let n = t.len();
    let mut out = vec![false; n];
    for i in 0..n {
        let rank = (0..n)
            .filter(|&j| {
                t.score(j, w) > t.score(i, w) || (t.score(j, w) == t.score(i, w) && t.ids()[j] < t.ids()[i])
            })
            .count();
        out[rank] = case.reference.get(&t.ids()[i]).unwrap().contains(word);
    }
    out
}

/// FA/FR at every distinct threshold, interpolated at the first crossing.
fn eer_by_threshold_sweep(scores: &[(f32, bool)]) -> Option<f64> {
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
    let mut points = vec![(0.0, 1.0)];
    for th in ths {
        let fa = scores.iter().filter(|s| !s.1 && s.0 >= th).count() as f64 / neg;
        let fr = scores.iter().filter(|s| s.1 && s.0 < th).count() as f64 / pos;
        points.push((fa, fr));
    }
    for win in points.windows(2) {
        let ((fa0, fr0), (fa1, fr1)) = (win[0], win[1]);
        if fa1 >= fr1 {
            if fa1 == fr1 {
                return Some(fa1);
            }
            // Solve fa0 + t(fa1−fa0) = fr0 + t(fr1−fr0).
            let t = (fr0 - fa0) / ((fa1 - fa0) - (fr1 - fr0));
            return Some(fa0 + t * (fa1 - fa0));
        }
    }
    unreachable!()
}

#[test]
fn keyword_metrics_match_oracles() {
    let mut rng = rng_for(6, "kws");
    for trial in 0..200 {
        let levels = if trial % 2 == 0 { 0 } else { 4 };
        let n = rng.random_range(2..40);
        let case = random_case(&mut rng, n, levels);
        let kws: Vec<String> = case.table.vocab().words().to_vec();
        let Ok(rep) = keyword_spot(&case.table, &kws, &case.reference, None, TieBreak::UtteranceId) else {
            continue;
        };
        for k in &rep.per_keyword {
            let w = case.table.vocab().index_of(&k.keyword).unwrap();
            let hits = ranked_hits_oracle(&case, w);
            let n = hits.iter().filter(|&&h| h).count();
            assert_eq!(k.occurrences, n);
            assert_eq!(k.p_at_10, hits.iter().take(10).filter(|&&h| h).count() as f64 / 10.0);
            assert_eq!(k.p_at_n, hits.iter().take(n).filter(|&&h| h).count() as f64 / n as f64);
            assert_eq!(Some(k.eer), equal_error_rate(&hits));
            assert!((0.0..=1.0).contains(&k.eer));
            if levels == 0 {
                let scores: Vec<(f32, bool)> = (0..case.table.len())
                    .map(|i| {
                        let id = &case.table.ids()[i];
                        (case.table.score(i, w), case.reference.get(id).unwrap().contains(&k.keyword))
                    })
                    .collect();
                let oracle = eer_by_threshold_sweep(&scores).unwrap();
                assert!((k.eer - oracle).abs() <= 1e-9, "{} vs {oracle}", k.eer);
            }
        }
    }
}

#[test]
fn worked_eer_example() {
    let vocab = Vocabulary::from_words(["kw"]).unwrap();
    let ids: Vec<String> = ["p1", "p2", "n1", "n2"].iter().map(|s| s.to_string()).collect();
    let table = ScoreTable::new(ids.clone(), vocab, vec![vec![0.9], vec![0.4], vec![0.6], vec![0.1]]).unwrap();
    let sets = ids
        .iter()
        .map(|id| {
            let s = if id.starts_with('p') { BTreeSet::from(["kw".to_string()]) } else { BTreeSet::new() };
            (id.clone(), s)
        })
        .collect();
    let rep = keyword_spot(&table, &["kw".into()], &EvalReference::from_sets(sets), None, TieBreak::UtteranceId)
        .unwrap();
    assert_eq!(rep.per_keyword[0].eer, 0.5);
    assert_eq!(precision_at(&[true, false, true, false], 2), 0.5);
}

#[test]
fn ranking_uses_only_the_keyword_column() {
    let mut rng = rng_for(7, "kws");
    for _ in 0..30 {
        let case = random_case(&mut rng, 30, 3);
        let kw = case.table.vocab().word(0).to_string();
        let Ok(a) = keyword_spot(&case.table, &[kw.clone()], &case.reference, None, TieBreak::UtteranceId) else {
            continue;
        };
        let rows = (0..case.table.len())
            .map(|i| {
                let mut r = case.table.row(i).to_vec();
                for v in &mut r[1..] {
                    *v = rng.random_range(0.0..1.0);
                }
                r
            })
            .collect();
        let other = ScoreTable::new(case.table.ids().to_vec(), case.table.vocab().clone(), rows).unwrap();
        let b = keyword_spot(&other, &[kw], &case.reference, None, TieBreak::UtteranceId).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn semantic_hits_contain_exact_hits() {
    let mut rng = rng_for(8, "kws");
    for _ in 0..50 {
        let case = random_case(&mut rng, 30, 0);
        let w = case.table.width();
        let mut map = BTreeMap::new();
        for k in &WORDS[..w] {
            let extra: BTreeSet<String> = WORDS
                .iter()
                .filter(|_| rng.random_bool(0.3))
                .map(|s| s.to_string())
                .collect();
            map.insert(k.to_string(), extra);
        }
        let map = SemanticMap::new(map);
        let kws: Vec<String> = case.table.vocab().words().to_vec();
        let Ok(exact) = keyword_spot(&case.table, &kws, &case.reference, None, TieBreak::UtteranceId) else {
            continue;
        };
        let sem = keyword_spot(&case.table, &kws, &case.reference, Some(&map), TieBreak::UtteranceId).unwrap();
        for e in &exact.per_keyword {
            let s = sem.per_keyword.iter().find(|s| s.keyword == e.keyword).unwrap();
            assert!(s.p_at_10 >= e.p_at_10);
            assert!(s.occurrences >= e.occurrences);
        }
    }
}

#[test]
fn constant_scores_average_half_eer() {
    let mut rng = rng_for(9, "kws");
    let case = random_case(&mut rng, 60, 0);
    let constant = case.table.map_scores(|_| 0.3).unwrap();
    let kws: Vec<String> = constant.vocab().words().to_vec();
    let trials = 1000;
    let mut total = 0.0;
    for seed in 0..trials {
        total += keyword_spot(&constant, &kws, &case.reference, None, TieBreak::Shuffled(seed))
            .unwrap()
            .mean_eer;
    }
    let mean = total / trials as f64;
    assert!((mean - 0.5).abs() <= 0.02, "{mean}");
}
