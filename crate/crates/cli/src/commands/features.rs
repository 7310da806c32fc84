use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gkw_core::features::{extract_mfcc, write_features, AudioClip};
use rayon::prelude::*;

use super::{line, log_resolved};
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};

/// Mono samples in `[-1, 1]`; multi-channel audio is averaged.
pub fn read_wav(path: &Path) -> CliResult<AudioClip> {
    let err = |e: hound::Error| CliError::data(format!("{}: {e}", path.display()));
    let mut reader = hound::WavReader::open(path).map_err(err)?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect::<Result<_, _>>().map_err(err)?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 / scale))
                .collect::<Result<_, _>>()
                .map_err(err)?
        }
    };
    let channels = spec.channels.max(1) as usize;
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    AudioClip::new(mono, spec.sample_rate).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn collect_inputs(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| CliError::data(format!("{}: {e}", input.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::data("no WAV files found"));
    }
    Ok(files)
}

pub fn run(inputs: &[PathBuf], dir: &Path, file: &FileConfig, out: &mut (dyn Write + Send)) -> CliResult<()> {
    let config = &file.features;
    log_resolved("features", config);
    let files = collect_inputs(inputs)?;
    fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let written = files
        .par_iter()
        .map(|path| -> CliResult<(PathBuf, usize)> {
            let clip = read_wav(path)?;
            let feats = extract_mfcc(&clip, config)?;
            let stem = path
                .file_stem()
                .ok_or_else(|| CliError::data(format!("{}: no file name", path.display())))?;
            let target = dir.join(stem).with_extension("gkwf");
            write_features(&target, &feats)?;
            Ok((target, feats.rows()))
        })
        .collect::<CliResult<Vec<_>>>()?;
    for (path, rows) in &written {
        line(out, format!("{} {rows} frames", path.display()))?;
    }
    line(out, format!("wrote {} feature files", written.len()))
}
