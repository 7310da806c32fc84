use std::fs;
use std::io::Write;
use std::path::Path;

use gkw_core::corpus::{corpus_stats, generate_corpus};

use super::{file_checksum, line, log_resolved};
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::Globals;

pub const STATS_FILE: &str = "corpus_stats.json";

pub fn run(dir: &Path, file: &FileConfig, globals: &Globals, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let mut config = file.generate.clone();
    if let Some(seed) = globals.seed {
        config.seed = seed;
    }
    config.validate()?;
    log_resolved("generate", &config);
    let corpus = generate_corpus(&config, dir)?;
    let stats = corpus_stats(&corpus.manifest)?;
    let stats_path = dir.join(STATS_FILE);
    let json = serde_json::to_string_pretty(&stats).map_err(|e| CliError::data(e.to_string()))?;
    fs::write(&stats_path, json + "\n").map_err(|e| CliError::data(format!("{}: {e}", stats_path.display())))?;

    line(out, format!("manifest {}", corpus.manifest_path.display()))?;
    line(out, format!("checksum {}", file_checksum(&corpus.manifest_path)?))?;
    let splits: Vec<String> = stats.splits.iter().map(|(s, n)| format!("{s} {n}")).collect();
    line(out, format!("utterances {} ({})", stats.utterances, splits.join(", ")))?;
    line(out, format!("tokens {} over {} types", stats.tokens, stats.type_counts.len()))?;
    if let Some(z) = stats.zipf_exponent {
        line(out, format!("zipf exponent {z:.3}"))?;
    }
    Ok(())
}
