//! Reports are JSON with every rate as a percentage.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gkw_core::corpus::{Manifest, STOPLIST_FILE};
use gkw_core::eval::{
    average_precision, bow_metrics, bow_predict, confusion_report, confusion_to_csv, keyword_spot, select_keywords,
    EvalReference, KeywordResult, KwsReport, ScoreTable, SemanticMap, TieBreak,
};
use gkw_core::targets::StopList;
use gkw_core::util::derive_seed;
use serde::Serialize;

use super::{create_parent, file_checksum, line, load_manifest, log_resolved};
use crate::error::{CliError, CliResult};
use crate::EvalMode;

#[derive(Debug, Clone)]
pub struct Request {
    pub scores: PathBuf,
    pub manifest: PathBuf,
    pub mode: EvalMode,
    pub alpha: Vec<f64>,
    pub keywords: Option<usize>,
    pub min_occurrences: usize,
    pub semantic_map: Option<PathBuf>,
    pub tie_trials: usize,
    pub seed: u64,
    pub stoplist: Option<PathBuf>,
    pub confusion: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedEval {
    pub mode: &'static str,
    pub alpha: Vec<f64>,
    pub keywords: Vec<String>,
    pub keyword_count: Option<usize>,
    pub min_occurrences: usize,
    pub tie_trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatingPoint {
    pub alpha: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub relevant: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct KeywordRow {
    pub keyword: String,
    pub occurrences: usize,
    pub p_at_10: f64,
    pub p_at_n: f64,
    pub eer: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SemanticRow {
    pub keyword: String,
    pub occurrences: usize,
    pub p_at_10: f64,
    pub exact_p_at_10: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Results {
    Bow {
        average_precision: f64,
        operating_points: Vec<OperatingPoint>,
    },
    Kws {
        per_keyword: Vec<KeywordRow>,
        excluded: Vec<String>,
        mean_p_at_10: f64,
        mean_p_at_n: f64,
        mean_eer: f64,
    },
    SemanticKws {
        per_keyword: Vec<SemanticRow>,
        excluded: Vec<String>,
        mean_p_at_10: f64,
        exact_mean_p_at_10: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: ResolvedEval,
    /// Input role → content checksum.
    pub inputs: BTreeMap<&'static str, String>,
    pub utterances: usize,
    pub results: Results,
}

fn pct(v: f64) -> f64 {
    100.0 * v
}

fn mode_name(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::Bow => "bow",
        EvalMode::Kws => "kws",
        EvalMode::SemanticKws => "semantic-kws",
    }
}

fn stoplist(request: &Request, manifest: &Manifest) -> CliResult<(StopList, Option<PathBuf>)> {
    let path = match &request.stoplist {
        Some(p) => Some(p.clone()),
        None => Some(manifest.dir().join(STOPLIST_FILE)).filter(|p| p.exists()),
    };
    match path {
        Some(p) => Ok((StopList::read(&p)?, Some(p))),
        None => Ok((StopList::english(), None)),
    }
}

/// Reference sets for exactly the table's utterances.
pub fn reference_for(table: &ScoreTable, manifest: &Manifest, stop: &StopList) -> CliResult<EvalReference> {
    let by_id: BTreeMap<&str, &[String]> = manifest
        .records()
        .iter()
        .map(|r| (r.id.as_str(), r.transcription.as_slice()))
        .collect();
    let items = table
        .ids()
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|t| (id.as_str(), *t))
                .ok_or_else(|| CliError::data(format!("utterance {id} of the score table is not in the manifest")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(EvalReference::from_transcriptions(items, stop)?)
}

/// Spotting metrics under by-id tie-breaking, or averaged over `trials`
/// seeded tie shuffles.
pub fn spot(
    table: &ScoreTable,
    keywords: &[String],
    reference: &EvalReference,
    semantic: Option<&SemanticMap>,
    trials: usize,
    seed: u64,
) -> CliResult<KwsReport> {
    if trials == 0 {
        let r = keyword_spot(table, keywords, reference, semantic, TieBreak::UtteranceId)?;
        if !r.excluded.is_empty() {
            log::warn!("keywords without true occurrences excluded: {}", r.excluded.join(", "));
        }
        return Ok(r);
    }
    let mut sum: Option<KwsReport> = None;
    for t in 0..trials {
        let tie = TieBreak::Shuffled(derive_seed(seed, &format!("tie/{t}")));
        let r = keyword_spot(table, keywords, reference, semantic, tie)?;
        match &mut sum {
            None => sum = Some(r),
            Some(s) => {
                for (a, b) in s.per_keyword.iter_mut().zip(&r.per_keyword) {
                    a.p_at_10 += b.p_at_10;
                    a.p_at_n += b.p_at_n;
                    a.eer += b.eer;
                }
                s.mean_p_at_10 += r.mean_p_at_10;
                s.mean_p_at_n += r.mean_p_at_n;
                s.mean_eer += r.mean_eer;
            }
        }
    }
    let mut s = sum.expect("at least one trial");
    if !s.excluded.is_empty() {
        log::warn!("keywords without true occurrences excluded: {}", s.excluded.join(", "));
    }
    let n = trials as f64;
    for k in &mut s.per_keyword {
        k.p_at_10 /= n;
        k.p_at_n /= n;
        k.eer /= n;
    }
    s.mean_p_at_10 /= n;
    s.mean_p_at_n /= n;
    s.mean_eer /= n;
    Ok(s)
}

fn keyword_row(k: &KeywordResult) -> KeywordRow {
    KeywordRow {
        keyword: k.keyword.clone(),
        occurrences: k.occurrences,
        p_at_10: pct(k.p_at_10),
        p_at_n: pct(k.p_at_n),
        eer: pct(k.eer),
    }
}

pub fn evaluate(request: &Request) -> CliResult<Report> {
    let table = ScoreTable::read(&request.scores)?;
    let manifest = load_manifest(&request.manifest)?;
    let (stop, stop_path) = stoplist(request, &manifest)?;
    let reference = reference_for(&table, &manifest, &stop)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("scores", file_checksum(&request.scores)?);
    inputs.insert("manifest", file_checksum(&request.manifest)?);
    if let Some(p) = &stop_path {
        inputs.insert("stoplist", file_checksum(p)?);
    }

    let semantic = match (request.mode, &request.semantic_map) {
        (EvalMode::SemanticKws, None) => {
            return Err(CliError::config("semantic-kws mode needs --semantic-map"));
        }
        (_, Some(p)) => {
            inputs.insert("semantic_map", file_checksum(p)?);
            Some(SemanticMap::read(p)?)
        }
        (_, None) => None,
    };

    let keywords: Vec<String> = match (request.mode, request.keywords) {
        (EvalMode::Bow, _) => Vec::new(),
        (_, Some(n)) => select_keywords(&reference, table.vocab(), n, request.min_occurrences, request.seed)?,
        (_, None) => table.vocab().words().to_vec(),
    };
    if request.mode == EvalMode::Bow && request.alpha.is_empty() {
        return Err(CliError::config("bow mode needs at least one --alpha"));
    }
    if let Some(a) = request.alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(CliError::config(format!("alpha must be in [0, 1], got {a}")));
    }

    let results = match request.mode {
        EvalMode::Bow => {
            let mut operating_points = Vec::new();
            for &alpha in &request.alpha {
                let m = bow_metrics(&bow_predict(&table, alpha)?, &reference)?;
                operating_points.push(OperatingPoint {
                    alpha,
                    precision: pct(m.precision),
                    recall: pct(m.recall),
                    f_score: pct(m.f_score),
                    true_positives: m.true_positives,
                    predicted: m.predicted,
                    relevant: m.relevant,
                });
            }
            if let Some(path) = &request.confusion {
                let rows = confusion_report(&table, &reference, request.alpha[0])?;
                create_parent(path)?;
                fs::write(path, confusion_to_csv(&rows))
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            }
            Results::Bow {
                average_precision: pct(average_precision(&table, &reference)?),
                operating_points,
            }
        }
        EvalMode::Kws => {
            let r = spot(&table, &keywords, &reference, None, request.tie_trials, request.seed)?;
            Results::Kws {
                per_keyword: r.per_keyword.iter().map(keyword_row).collect(),
                excluded: r.excluded,
                mean_p_at_10: pct(r.mean_p_at_10),
                mean_p_at_n: pct(r.mean_p_at_n),
                mean_eer: pct(r.mean_eer),
            }
        }
        EvalMode::SemanticKws => {
            let sem = spot(&table, &keywords, &reference, semantic.as_ref(), request.tie_trials, request.seed)?;
            let exact = spot(&table, &keywords, &reference, None, request.tie_trials, request.seed)?;
            let exact_p10: BTreeMap<&str, f64> = exact
                .per_keyword
                .iter()
                .map(|k| (k.keyword.as_str(), k.p_at_10))
                .collect();
            let per_keyword = sem
                .per_keyword
                .iter()
                .map(|k| SemanticRow {
                    keyword: k.keyword.clone(),
                    occurrences: k.occurrences,
                    p_at_10: pct(k.p_at_10),
                    exact_p_at_10: pct(exact_p10.get(k.keyword.as_str()).copied().unwrap_or(0.0)),
                })
                .collect::<Vec<_>>();
            let exact_mean = per_keyword.iter().map(|r| r.exact_p_at_10).sum::<f64>() / per_keyword.len() as f64;
            Results::SemanticKws {
                per_keyword,
                excluded: sem.excluded,
                mean_p_at_10: pct(sem.mean_p_at_10),
                exact_mean_p_at_10: exact_mean,
            }
        }
    };

    Ok(Report {
        config: ResolvedEval {
            mode: mode_name(request.mode),
            alpha: if request.mode == EvalMode::Bow { request.alpha.clone() } else { Vec::new() },
            keywords,
            keyword_count: request.keywords,
            min_occurrences: request.min_occurrences,
            tie_trials: request.tie_trials,
            seed: request.seed,
        },
        inputs,
        utterances: table.len(),
        results,
    })
}

pub fn run(request: &Request, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let report = evaluate(request)?;
    log_resolved("eval", &report.config);
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))? + "\n";
    match &request.out {
        None => out.write_all(json.as_bytes()).map_err(CliError::from),
        Some(path) => {
            write_report(path, &json)?;
            line(out, format!("report {}", path.display()))?;
            line(out, summary(&report.results))
        }
    }
}

fn write_report(path: &Path, json: &str) -> CliResult<()> {
    create_parent(path)?;
    fs::write(path, json).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn summary(results: &Results) -> String {
    match results {
        Results::Bow {
            average_precision,
            operating_points,
        } => {
            let points: Vec<String> = operating_points
                .iter()
                .map(|p| format!("alpha {}: P {:.1} R {:.1} F {:.1}", p.alpha, p.precision, p.recall, p.f_score))
                .collect();
            format!("AP {average_precision:.1}; {}", points.join("; "))
        }
        Results::Kws {
            mean_p_at_10,
            mean_p_at_n,
            mean_eer,
            ..
        } => format!("P@10 {mean_p_at_10:.1} P@N {mean_p_at_n:.1} EER {mean_eer:.1}"),
        Results::SemanticKws {
            mean_p_at_10,
            exact_mean_p_at_10,
            ..
        } => format!("semantic P@10 {mean_p_at_10:.1} (exact {exact_mean_p_at_10:.1})"),
    }
}

