use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gkw_core::corpus::{Manifest, ManifestRecord, Split};
use gkw_core::features::FeatureMatrix;
use gkw_core::models::{save_checkpoint, train, ArchitectureSpec, EpochRecord, Example, ModelCheckpoint, TrainConfig};
use gkw_core::targets::{load_vision_targets, oracle_bow, VisionTargetFile, Vocabulary};
use rayon::prelude::*;
use serde::Serialize;

use super::{create_parent, file_checksum, line, load_manifest, load_vocab, log_resolved};
use crate::config::Precision;
use crate::error::{CliError, CliResult};
use crate::{Arch, Globals, TargetSource};

#[derive(Debug, Clone)]
pub struct Request {
    pub manifest: PathBuf,
    pub targets: TargetSource,
    pub target_file: Option<PathBuf>,
    pub arch: Arch,
    pub out: PathBuf,
    pub epoch_log: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub config: TrainConfig,
}

pub fn spec_for(arch: Arch, output_dim: usize) -> ArchitectureSpec {
    match arch {
        Arch::Cnn => ArchitectureSpec::cnn_pool(output_dim),
        Arch::Psc => ArchitectureSpec::psc(output_dim),
    }
}

fn target_label(request: &Request) -> String {
    match (request.targets, &request.target_file) {
        (TargetSource::Oracle, _) => "oracle".into(),
        (TargetSource::Vision, _) => "vision".into(),
        (TargetSource::File, Some(p)) => format!(
            "file:{}",
            p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
        ),
        (TargetSource::File, None) => "file".into(),
    }
}

/// Target vectors for every record, in record order.
pub fn resolve_targets(
    manifest: &Manifest,
    records: &[&ManifestRecord],
    vocab: &Vocabulary,
    source: TargetSource,
    target_file: Option<&Path>,
) -> CliResult<Vec<Vec<f32>>> {
    match source {
        TargetSource::Oracle => Ok(records
            .iter()
            .map(|r| oracle_bow(&r.transcription, vocab).values().to_vec())
            .collect()),
        TargetSource::File => {
            let path = target_file.ok_or_else(|| CliError::config("--targets file needs --target-file"))?;
            let table = load_vision_targets(path, vocab)?;
            records
                .iter()
                .map(|r| lookup(&table, &r.id, path))
                .collect()
        }
        TargetSource::Vision => {
            let mut files: BTreeMap<&str, VisionTargetFile> = BTreeMap::new();
            let mut rows = Vec::with_capacity(records.len());
            for r in records {
                let rel = r.vision_targets.as_deref().ok_or_else(|| {
                    CliError::data(format!("utterance {} has no vision targets in the manifest", r.id))
                })?;
                if !files.contains_key(rel) {
                    files.insert(rel, load_vision_targets(manifest.resolve(rel), vocab)?);
                }
                rows.push(lookup(&files[rel], &r.id, &manifest.resolve(rel))?);
            }
            Ok(rows)
        }
    }
}

fn lookup(table: &VisionTargetFile, id: &str, path: &Path) -> CliResult<Vec<f32>> {
    table
        .get(id)
        .map(|t| t.values().to_vec())
        .ok_or_else(|| CliError::data(format!("{}: no targets for utterance {id}", path.display())))
}

pub(crate) fn load_split(manifest: &Manifest, split: Split) -> CliResult<(Vec<&ManifestRecord>, Vec<FeatureMatrix>)> {
    let records: Vec<&ManifestRecord> = manifest.split(split).collect();
    let feats = records
        .par_iter()
        .map(|r| manifest.load_features(r))
        .collect::<gkw_core::Result<Vec<_>>>()?;
    Ok((records, feats))
}

fn examples<'a>(feats: &'a [FeatureMatrix], targets: &'a [Vec<f32>]) -> Vec<Example<'a>> {
    feats
        .iter()
        .zip(targets)
        .map(|(features, target)| Example { features, target })
        .collect()
}

#[derive(Serialize)]
struct Resolved<'a> {
    targets: String,
    arch: &'a str,
    precision: Precision,
    threads: Option<usize>,
    spec: &'a ArchitectureSpec,
    train: &'a TrainConfig,
}

pub fn run(request: &Request, globals: &Globals, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let manifest = load_manifest(&request.manifest)?;
    let vocab = load_vocab(&manifest, request.vocab.as_deref())?;
    let spec = spec_for(request.arch, vocab.len());
    request.config.validate()?;
    let label = target_label(request);
    log_resolved(
        "train",
        &Resolved {
            targets: label.clone(),
            arch: match request.arch {
                Arch::Cnn => "cnn",
                Arch::Psc => "psc",
            },
            precision: globals.precision,
            threads: globals.threads,
            spec: &spec,
            train: &request.config,
        },
    );

    let (train_recs, train_feats) = load_split(&manifest, Split::Train)?;
    let (dev_recs, dev_feats) = load_split(&manifest, Split::Dev)?;
    let train_targets = resolve_targets(&manifest, &train_recs, &vocab, request.targets, request.target_file.as_deref())?;
    let dev_targets = resolve_targets(&manifest, &dev_recs, &vocab, request.targets, request.target_file.as_deref())?;
    let train_ex = examples(&train_feats, &train_targets);
    let dev_ex = examples(&dev_feats, &dev_targets);

    let log_path = request
        .epoch_log
        .clone()
        .unwrap_or_else(|| request.out.with_extension("csv"));
    create_parent(&log_path)?;
    create_parent(&request.out)?;
    let mut csv = String::from("epoch,train_loss,dev_loss\n");
    let write_log = |csv: &str| fs::write(&log_path, csv).map_err(|e| CliError::data(format!("{}: {e}", log_path.display())));
    write_log(&csv)?;
    let mut log_error = None;
    let on_epoch = |r: &EpochRecord| {
        let dev = r.dev_loss.map(|d| d.to_string()).unwrap_or_default();
        log::info!("epoch {} train {:.6} dev {}", r.epoch, r.train_loss, dev);
        csv.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, dev));
        if let Err(e) = write_log(&csv) {
            log_error.get_or_insert(e);
        }
    };
    let fp = vocab.fingerprint();
    let mut checkpoint: ModelCheckpoint = match globals.precision {
        Precision::F32 => train::<f32>(&spec, &request.config, &train_ex, &dev_ex, fp, on_epoch)?,
        Precision::F64 => train::<f64>(&spec, &request.config, &train_ex, &dev_ex, fp, on_epoch)?,
    };
    if let Some(e) = log_error {
        return Err(e);
    }
    checkpoint.metadata.targets = Some(label);
    save_checkpoint(&request.out, &checkpoint)?;

    let meta = &checkpoint.metadata;
    let best = &meta.loss_curve[meta.best_epoch];
    line(out, format!("checkpoint {}", request.out.display()))?;
    line(out, format!("checksum {}", file_checksum(&request.out)?))?;
    line(out, format!("epoch log {}", log_path.display()))?;
    line(
        out,
        format!(
            "best epoch {} of {} (train loss {:.6}, dev loss {})",
            meta.best_epoch,
            meta.epochs_run,
            best.train_loss,
            best.dev_loss.map(|d| format!("{d:.6}")).unwrap_or_else(|| "n/a".into())
        ),
    )
}
