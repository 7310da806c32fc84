use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gkw_core::corpus::{Manifest, VOCAB_FILE};
use gkw_core::targets::Vocabulary;
use gkw_core::util::fingerprint;
use serde::Serialize;

use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::{Command, Globals};

pub mod eval;
pub mod features;
pub mod generate;
pub mod gradcheck;
pub mod score;
pub mod train;

pub fn dispatch(
    command: Command,
    file: &FileConfig,
    globals: &Globals,
    out: &mut (dyn Write + Send),
) -> CliResult<()> {
    match command {
        Command::Generate { out: dir } => generate::run(&dir, file, globals, out),
        Command::Features { inputs, out: dir } => features::run(&inputs, &dir, file, out),
        Command::Train {
            manifest,
            targets,
            target_file,
            arch,
            out: path,
            epoch_log,
            vocab,
            epochs,
            learning_rate,
            batch_size,
            patience,
        } => {
            let mut config = file.train.clone();
            config.epochs = epochs.unwrap_or(config.epochs);
            config.learning_rate = learning_rate.or(config.learning_rate);
            config.batch_size = batch_size.unwrap_or(config.batch_size);
            config.patience = patience.unwrap_or(config.patience);
            config.seed = globals.seed.unwrap_or(config.seed);
            config.strict_determinism |= globals.strict_determinism;
            let request = train::Request {
                manifest,
                targets,
                target_file,
                arch,
                out: path,
                epoch_log,
                vocab,
                config,
            };
            train::run(&request, globals, out)
        }
        Command::Score {
            manifest,
            split,
            checkpoint,
            unigram,
            out: path,
            vocab,
            emit_localization,
        } => {
            let request = score::Request {
                manifest,
                split,
                source: match checkpoint {
                    Some(c) if !unigram => score::Source::Checkpoint(c),
                    _ => score::Source::Unigram,
                },
                out: path,
                vocab,
                emit_localization,
                batch_size: file.score.batch_size,
            };
            score::run(&request, globals, out)
        }
        Command::Eval {
            scores,
            manifest,
            mode,
            alpha,
            keywords,
            min_occurrences,
            semantic_map,
            tie_trials,
            stoplist,
            confusion,
            out: path,
        } => {
            let defaults = &file.eval;
            let request = eval::Request {
                scores,
                manifest,
                mode,
                alpha: if alpha.is_empty() { defaults.alpha.clone() } else { alpha },
                keywords: keywords.or(defaults.keywords),
                min_occurrences: min_occurrences.unwrap_or(defaults.min_occurrences),
                semantic_map,
                tie_trials: tie_trials.unwrap_or(defaults.tie_trials),
                seed: globals.seed.unwrap_or(0),
                stoplist,
                confusion,
                out: path,
            };
            eval::run(&request, out)
        }
        Command::Gradcheck {
            arch,
            toy,
            tolerance,
            corrupt,
        } => gradcheck::run(arch, toy, tolerance, corrupt, globals, out),
    }
}

/// 16-hex-digit digest of a file's bytes.
pub fn file_checksum(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(format!("{:016x}", fingerprint(&bytes)))
}

pub(crate) fn load_manifest(path: &Path) -> CliResult<Manifest> {
    Ok(Manifest::read(path)?)
}

/// `explicit`, or `vocab.txt` in the manifest's directory.
pub(crate) fn load_vocab(manifest: &Manifest, explicit: Option<&Path>) -> CliResult<Vocabulary> {
    let path = explicit.map(Path::to_path_buf).unwrap_or_else(|| manifest.dir().join(VOCAB_FILE));
    Ok(Vocabulary::read(path)?)
}

pub(crate) fn log_resolved(command: &str, config: &impl Serialize) {
    match serde_json::to_string(config) {
        Ok(json) => log::info!("{command} resolved config: {json}"),
        Err(e) => log::warn!("{command}: cannot serialize resolved config: {e}"),
    }
}

pub(crate) fn line(out: &mut (dyn Write + Send), text: impl AsRef<str>) -> CliResult<()> {
    writeln!(out, "{}", text.as_ref()).map_err(CliError::from)
}

pub(crate) fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
    }
    Ok(())
}

pub(crate) fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
