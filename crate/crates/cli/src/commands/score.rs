use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gkw_core::corpus::{Manifest, Split};
use gkw_core::eval::{unigram_baseline, ScoreTable};
use gkw_core::features::{write_features, FeatureMatrix};
use gkw_core::models::{load_checkpoint, predict_all, Model, Variant};
use gkw_core::tensor::Real;
use gkw_core::targets::Vocabulary;
use serde::Serialize;

use super::train::load_split;
use super::{create_parent, file_checksum, line, load_manifest, load_vocab, log_resolved, with_suffix};
use crate::config::Precision;
use crate::error::{CliError, CliResult};
use crate::Globals;

#[derive(Debug, Clone, Serialize)]
pub enum Source {
    Checkpoint(PathBuf),
    /// Training-split word frequencies for every utterance.
    Unigram,
}

#[derive(Debug, Clone, Serialize)]
pub struct Request {
    pub manifest: PathBuf,
    pub split: String,
    pub source: Source,
    pub out: PathBuf,
    pub vocab: Option<PathBuf>,
    pub emit_localization: bool,
    pub batch_size: usize,
}

/// Directory receiving one `T'×W` score map per utterance.
pub fn localization_dir(out: &Path) -> PathBuf {
    with_suffix(out, ".localization")
}

fn to_f32<F: Real>(v: &[F]) -> Vec<f32> {
    v.iter().map(|x| x.to_f32().unwrap_or(f32::NAN)).collect()
}

fn model_scores<F: Real>(
    model: &Model<F>,
    ids: &[String],
    feats: &[FeatureMatrix],
    request: &Request,
) -> CliResult<Vec<Vec<f32>>> {
    let refs: Vec<&FeatureMatrix> = feats.iter().collect();
    let probs = predict_all(model, &refs, request.batch_size.max(1))?;
    if request.emit_localization {
        let dir = localization_dir(&request.out);
        fs::create_dir_all(&dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
        for (id, f) in ids.iter().zip(feats) {
            let (_, map) = model.predict_with_localization(f)?;
            let map = map.ok_or_else(|| CliError::config("this checkpoint has no frame-level score map"))?;
            let (rows, cols) = (map.shape()[0], map.shape()[1]);
            let m = FeatureMatrix::new(rows, cols, to_f32(map.data()))?;
            write_features(dir.join(format!("{id}.gkwf")), &m)?;
        }
    }
    Ok(probs.iter().map(|p| to_f32(p)).collect())
}

fn checkpoint_scores(
    path: &Path,
    vocab: &Vocabulary,
    ids: &[String],
    feats: &[FeatureMatrix],
    request: &Request,
    precision: Precision,
) -> CliResult<Vec<Vec<f32>>> {
    let ckpt = load_checkpoint(path, Some(vocab.fingerprint()), None)?;
    if request.emit_localization && ckpt.spec.variant != Variant::Psc {
        return Err(CliError::config(format!(
            "--emit-localization needs a psc checkpoint, {} holds {}",
            path.display(),
            ckpt.spec.variant
        )));
    }
    match precision {
        Precision::F32 => model_scores(&ckpt.model::<f32>()?, ids, feats, request),
        Precision::F64 => model_scores(&ckpt.model::<f64>()?, ids, feats, request),
    }
}

fn unigram_scores(manifest: &Manifest, vocab: &Vocabulary, ids: &[String]) -> CliResult<ScoreTable> {
    let training: Vec<&[String]> = manifest
        .split(Split::Train)
        .map(|r| r.transcription.as_slice())
        .collect();
    if training.is_empty() {
        return Err(CliError::data("the manifest has no training utterances"));
    }
    Ok(unigram_baseline(training, vocab, ids)?)
}

pub fn run(request: &Request, globals: &Globals, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let split = Split::parse(&request.split).map_err(|e| CliError::config(e.to_string()))?;
    log_resolved("score", request);
    let manifest = load_manifest(&request.manifest)?;
    let vocab = load_vocab(&manifest, request.vocab.as_deref())?;
    let table = match &request.source {
        Source::Checkpoint(path) => {
            let (records, feats) = load_split(&manifest, split)?;
            let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
            let rows = checkpoint_scores(path, &vocab, &ids, &feats, request, globals.precision)?;
            ScoreTable::new(ids, vocab, rows)?
        }
        Source::Unigram => {
            if request.emit_localization {
                return Err(CliError::config("--emit-localization needs a psc checkpoint"));
            }
            let ids: Vec<String> = manifest.split(split).map(|r| r.id.clone()).collect();
            unigram_scores(&manifest, &vocab, &ids)?
        }
    };
    create_parent(&request.out)?;
    table.write(&request.out)?;
    line(out, format!("scores {}", request.out.display()))?;
    line(out, format!("rows {}", table.len()))?;
    line(out, format!("checksum {}", file_checksum(&request.out)?))?;
    if request.emit_localization {
        line(out, format!("localization {}", localization_dir(&request.out).display()))?;
    }
    Ok(())
}
