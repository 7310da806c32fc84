//! MFCC front end: 13 cepstra (C0 replaced by log frame energy) plus their
//! first and second order regression deltas, 39 values per 10 ms frame.
//!
//! ```
//! use gkw_core::features::{extract_mfcc, AudioClip, FeatureConfig};
//!
//! let tone: Vec<f32> = (0..16000)
//!     .map(|n| (2.0 * std::f32::consts::PI * 440.0 * n as f32 / 16000.0).sin() * 0.5)
//!     .collect();
//! let clip = AudioClip::new(tone, 16000).unwrap();
//! let feats = extract_mfcc(&clip, &FeatureConfig::default()).unwrap();
//! assert_eq!(feats.cols(), 39);
//! assert_eq!(feats.rows(), 98);
//! ```

mod io;

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

pub use io::{
    decode_features, encode_features, read_features, read_features_with_width, write_features,
};

use crate::error::{Error, Result};

/// Width of the model input: 13 cepstra, 13 Δ, 13 ΔΔ.
pub const FEATURE_DIM: usize = 39;

/// A `T×D` real matrix of frames, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "feature matrix {rows}x{cols} cannot hold {} values",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite feature at row {}, column {}",
                i / cols,
                i % cols
            )));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn truncate_rows(&mut self, max_rows: usize) {
        if max_rows >= 1 && self.rows > max_rows {
            self.rows = max_rows;
            self.data.truncate(max_rows * self.cols);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("audio clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub frame_length_s: f64,
    pub frame_shift_s: f64,
    pub pre_emphasis: f64,
    pub num_filters: usize,
    pub num_cepstra: usize,
    pub log_floor: f64,
    pub delta_window: usize,
    /// Utterances are cut to this many seconds of frames; `None` keeps all.
    pub max_duration_s: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            frame_length_s: 0.025,
            frame_shift_s: 0.010,
            pre_emphasis: 0.97,
            num_filters: 26,
            num_cepstra: 13,
            log_floor: 1e-10,
            delta_window: 2,
            max_duration_s: Some(8.0),
        }
    }
}

impl FeatureConfig {
    pub fn frame_length(&self, sample_rate: u32) -> usize {
        (self.frame_length_s * sample_rate as f64).round() as usize
    }

    pub fn frame_shift(&self, sample_rate: u32) -> usize {
        (self.frame_shift_s * sample_rate as f64).round() as usize
    }

    pub fn fft_size(&self, sample_rate: u32) -> usize {
        self.frame_length(sample_rate).next_power_of_two()
    }

    /// Number of complete frames in `num_samples` samples.
    pub fn num_frames(&self, num_samples: usize, sample_rate: u32) -> usize {
        let len = self.frame_length(sample_rate);
        if num_samples < len {
            0
        } else {
            1 + (num_samples - len) / self.frame_shift(sample_rate)
        }
    }

    /// Frames produced by a clip of exactly `max_duration_s`.
    pub fn max_frames(&self, sample_rate: u32) -> Option<usize> {
        self.max_duration_s.map(|d| {
            let samples = (d * sample_rate as f64).round() as usize;
            self.num_frames(samples, sample_rate)
        })
    }

    fn validate(&self, sample_rate: u32) -> Result<()> {
        let ok = self.frame_length(sample_rate) >= 2
            && self.frame_shift(sample_rate) >= 1
            && self.num_filters >= 1
            && self.num_cepstra >= 1
            && self.num_cepstra <= self.num_filters
            && self.log_floor > 0.0
            && self.delta_window >= 1
            && self.max_duration_s.is_none_or(|d| d > self.frame_length_s);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid feature configuration {self:?}")))
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters equally spaced on the mel scale between 0 Hz and
/// Nyquist, with unit peak height.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(num_filters: usize, fft_size: usize, sample_rate: u32) -> Self {
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..num_filters + 2)
            .map(|i| top * i as f64 / (num_filters + 1) as f64)
            .collect();
        let bins = fft_size / 2 + 1;
        let weights = (0..num_filters)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..bins)
                    .map(|k| {
                        let mel = hz_to_mel(k as f64 * sample_rate as f64 / fft_size as f64);
                        if mel <= lo || mel >= hi {
                            0.0
                        } else if mel <= mid {
                            (mel - lo) / (mid - lo)
                        } else {
                            (hi - mel) / (hi - mid)
                        }
                    })
                    .collect()
            })
            .collect();
        let centers_hz = edges[1..=num_filters].iter().map(|&m| mel_to_hz(m)).collect();
        MelFilterbank {
            weights,
            centers_hz,
        }
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| w.iter().zip(spectrum).map(|(a, b)| a * b).sum())
            .collect()
    }
}

struct Frontend {
    config: FeatureConfig,
    frame_len: usize,
    shift: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
    filterbank: MelFilterbank,
}

struct FrameSpectra {
    log_energy: Vec<f64>,
    log_mel: Vec<Vec<f64>>,
}

impl Frontend {
    fn new(config: &FeatureConfig, sample_rate: u32) -> Result<Self> {
        config.validate(sample_rate)?;
        let frame_len = config.frame_length(sample_rate);
        let fft_size = config.fft_size(sample_rate);
        let window = (0..frame_len)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos())
            .collect();
        Ok(Frontend {
            config: config.clone(),
            frame_len,
            shift: config.frame_shift(sample_rate),
            window,
            fft: FftPlanner::new().plan_fft_forward(fft_size),
            fft_size,
            filterbank: MelFilterbank::new(config.num_filters, fft_size, sample_rate),
        })
    }

    fn spectra(&self, clip: &AudioClip) -> Result<FrameSpectra> {
        let x = clip.samples();
        let n_frames = self.config.num_frames(x.len(), clip.sample_rate());
        if n_frames == 0 {
            return Err(Error::InvalidInput(format!(
                "clip of {} samples is shorter than one {} sample frame",
                x.len(),
                self.frame_len
            )));
        }
        let a = self.config.pre_emphasis;
        let emphasized: Vec<f64> = (0..x.len())
            .map(|n| {
                let prev = if n == 0 { 0.0 } else { x[n - 1] as f64 };
                x[n] as f64 - a * prev
            })
            .collect();

        let floor = self.config.log_floor;
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut log_energy = Vec::with_capacity(n_frames);
        let mut log_mel = Vec::with_capacity(n_frames);
        for f in 0..n_frames {
            let frame = &emphasized[f * self.shift..f * self.shift + self.frame_len];
            log_energy.push(frame.iter().map(|v| v * v).sum::<f64>().max(floor).ln());
            for (slot, (v, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *slot = Complex::new(v * w, 0.0);
            }
            for slot in &mut buf[self.frame_len..] {
                *slot = Complex::new(0.0, 0.0);
            }
            self.fft.process(&mut buf);
            let magnitude: Vec<f64> = buf[..self.fft_size / 2 + 1].iter().map(|c| c.norm()).collect();
            log_mel.push(
                self.filterbank
                    .apply(&magnitude)
                    .into_iter()
                    .map(|e| e.max(floor).ln())
                    .collect(),
            );
        }
        Ok(FrameSpectra {
            log_energy,
            log_mel,
        })
    }
}

/// Frame-level log mel filterbank energies (before the DCT), `T×num_filters`.
pub fn log_mel_spectrogram(clip: &AudioClip, config: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    Ok(Frontend::new(config, clip.sample_rate())?.spectra(clip)?.log_mel)
}

/// Full MFCC + Δ + ΔΔ extraction, truncated to `max_duration_s`.
pub fn extract_mfcc(clip: &AudioClip, config: &FeatureConfig) -> Result<FeatureMatrix> {
    let frontend = Frontend::new(config, clip.sample_rate())?;
    let spectra = frontend.spectra(clip)?;
    let n_filt = config.num_filters;
    let n_ceps = config.num_cepstra;
    let scale = (2.0 / n_filt as f64).sqrt();

    let cepstra: Vec<Vec<f64>> = spectra
        .log_mel
        .iter()
        .zip(&spectra.log_energy)
        .map(|(mel, &energy)| {
            let mut c: Vec<f64> = (0..n_ceps)
                .map(|n| {
                    scale
                        * mel
                            .iter()
                            .enumerate()
                            .map(|(m, v)| v * (PI * n as f64 * (m as f64 + 0.5) / n_filt as f64).cos())
                            .sum::<f64>()
                })
                .collect();
            c[0] = energy;
            c
        })
        .collect();

    let d1 = delta_rows(&cepstra, config.delta_window);
    let d2 = delta_rows(&d1, config.delta_window);
    let rows = cepstra.len();
    let cols = 3 * n_ceps;
    let mut data = Vec::with_capacity(rows * cols);
    for t in 0..rows {
        for block in [&cepstra, &d1, &d2] {
            data.extend(block[t].iter().map(|&v| v as f32));
        }
    }
    let mut out = FeatureMatrix::new(rows, cols, data)?;
    if let Some(max) = config.max_frames(clip.sample_rate()) {
        out.truncate_rows(max);
    }
    Ok(out)
}

/// Regression deltas `Σ_n n·(x[t+n] − x[t−n]) / (2·Σ_n n²)` for `n = 1..=window`,
/// replicating the first and last frames at the edges.
pub fn delta(features: &FeatureMatrix, window: usize) -> Result<FeatureMatrix> {
    if window == 0 {
        return Err(Error::Config("delta window must be at least 1".into()));
    }
    let rows: Vec<Vec<f64>> = (0..features.rows())
        .map(|t| features.row(t).iter().map(|&v| v as f64).collect())
        .collect();
    let d = delta_rows(&rows, window);
    FeatureMatrix::new(
        features.rows(),
        features.cols(),
        d.into_iter().flatten().map(|v| v as f32).collect(),
    )
}

fn delta_rows(x: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let t_max = x.len() as isize - 1;
    let norm = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let at = |t: isize| &x[t.clamp(0, t_max) as usize];
    (0..x.len() as isize)
        .map(|t| {
            let mut acc = vec![0.0; x[0].len()];
            for n in 1..=window as isize {
                for ((a, p), m) in acc.iter_mut().zip(at(t + n)).zip(at(t - n)) {
                    *a += n as f64 * (p - m);
                }
            }
            acc.into_iter().map(|v| v / norm).collect()
        })
        .collect()
}
