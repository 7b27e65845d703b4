//! Conditioning features at 100 Hz: 18 Bark-frequency cepstral coefficients,
//! a pitch period and a pitch correlation per 10 ms frame.

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::{Domain, SignalBuffer, SAMPLE_RATE};

pub const NB_BANDS: usize = 18;
pub const FRAME_SIZE: usize = 160;
pub const WINDOW_SIZE: usize = 320;
/// Look-ahead of the analysis window past the end of the frame it labels.
pub const LOOKAHEAD: usize = 80;
pub const PREEMPHASIS: f32 = 0.85;
pub const ENERGY_FLOOR: f64 = 1e-9;
pub const PITCH_LEVELS: usize = 256;
/// Values per frame in a feature file.
pub const FEATURE_VALUES: usize = NB_BANDS + 2;

/// Band centres in Hz. Spacing is 200 Hz up to 1.6 kHz and widens towards
/// 8 kHz, approximating a uniform Bark scale; neighbouring bands overlap as
/// triangles.
pub const BAND_CENTERS_HZ: [f64; NB_BANDS] = [
    0.0, 200.0, 400.0, 600.0, 800.0, 1000.0, 1200.0, 1400.0, 1600.0, 2000.0, 2400.0, 2800.0,
    3200.0, 4000.0, 4800.0, 5600.0, 6800.0, 8000.0,
];

/// Number of one-sided bins of the analysis FFT.
pub const SPECTRUM_BINS: usize = WINDOW_SIZE / 2 + 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub sample_rate: u32,
    pub frame_hop: usize,
    pub window: usize,
    pub feature_rate: u32,
    pub preemph: f32,
    pub min_lag: usize,
    pub max_lag: usize,
    pub bands: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            frame_hop: FRAME_SIZE,
            window: WINDOW_SIZE,
            feature_rate: 100,
            preemph: PREEMPHASIS,
            min_lag: 32,
            max_lag: 288,
            bands: NB_BANDS,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate(self.sample_rate));
        }
        if self.frame_hop as u32 * self.feature_rate != self.sample_rate
            || self.window != 2 * self.frame_hop
            || self.bands != NB_BANDS
            || self.min_lag == 0
            || self.min_lag >= self.max_lag
        {
            return Err(Error::InvalidArgument(format!("inconsistent analysis config {self:?}")));
        }
        Ok(())
    }

    /// Samples of history [`pitch_estimate`] needs.
    pub fn pitch_history(&self) -> usize {
        self.max_lag + self.window
    }

    pub fn quantize_period(&self, period: f64) -> u8 {
        let span = (self.max_lag as f64 / self.min_lag as f64).ln();
        let t = (period / self.min_lag as f64).ln() / span;
        (t * (PITCH_LEVELS - 1) as f64).round().clamp(0.0, (PITCH_LEVELS - 1) as f64) as u8
    }

    pub fn dequantize_period(&self, index: u8) -> u16 {
        let span = (self.max_lag as f64 / self.min_lag as f64).ln();
        let t = index as f64 / (PITCH_LEVELS - 1) as f64;
        (self.min_lag as f64 * (t * span).exp()).round() as u16
    }
}

/// One conditioning vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub bfcc: [f32; NB_BANDS],
    pub pitch_period: u16,
    /// Period quantized to the embedding levels; this is what the generator sees.
    pub pitch_index: u8,
    pub pitch_correlation: f32,
    pub frame_index: usize,
}

impl FeatureFrame {
    pub fn new(bfcc: [f32; NB_BANDS], pitch_period: u16, pitch_correlation: f32, frame_index: usize) -> Self {
        let cfg = AnalysisConfig::default();
        Self {
            bfcc,
            pitch_period,
            pitch_index: cfg.quantize_period(pitch_period as f64),
            pitch_correlation: pitch_correlation.clamp(-1.0, 1.0),
            frame_index,
        }
    }

    pub fn to_raw(&self) -> [f32; FEATURE_VALUES] {
        let mut raw = [0.0; FEATURE_VALUES];
        raw[..NB_BANDS].copy_from_slice(&self.bfcc);
        raw[NB_BANDS] = self.pitch_index as f32;
        raw[NB_BANDS + 1] = self.pitch_correlation;
        raw
    }

    pub fn from_raw(raw: &[f32], frame_index: usize) -> Result<Self> {
        if raw.len() != FEATURE_VALUES {
            return Err(Error::Features(format!(
                "frame {frame_index}: expected {FEATURE_VALUES} values, got {}",
                raw.len()
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Features(format!("frame {frame_index}: non-finite value")));
        }
        let idx = raw[NB_BANDS];
        if idx.fract() != 0.0 || !(0.0..PITCH_LEVELS as f32).contains(&idx) {
            return Err(Error::Features(format!(
                "frame {frame_index}: pitch index {idx} outside [0, {PITCH_LEVELS})"
            )));
        }
        let corr = raw[NB_BANDS + 1];
        if !(-1.0..=1.0).contains(&corr) {
            return Err(Error::Features(format!(
                "frame {frame_index}: pitch correlation {corr} outside [-1, 1]"
            )));
        }
        let mut bfcc = [0.0; NB_BANDS];
        bfcc.copy_from_slice(&raw[..NB_BANDS]);
        let pitch_index = idx as u8;
        Ok(Self {
            bfcc,
            pitch_period: AnalysisConfig::default().dequantize_period(pitch_index),
            pitch_index,
            pitch_correlation: corr,
            frame_index,
        })
    }
}

/// Running state of a first-order emphasis filter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EmphasisState {
    pub last: f32,
}

/// `y[n] = x[n] − α·x[n−1]`, continuing from `state`.
pub fn pre_emphasis_in_place(x: &mut [f32], alpha: f32, state: &mut EmphasisState) {
    for v in x {
        let cur = *v;
        *v = cur - alpha * state.last;
        state.last = cur;
    }
}

/// `x[n] = y[n] + α·x[n−1]`, continuing from `state`.
pub fn de_emphasis_in_place(y: &mut [f32], alpha: f32, state: &mut EmphasisState) {
    for v in y {
        let out = *v + alpha * state.last;
        *v = out;
        state.last = out;
    }
}

pub fn pre_emphasis(x: &SignalBuffer, alpha: f32) -> Result<SignalBuffer> {
    x.expect_domain(Domain::Natural)?;
    let mut samples = x.samples.clone();
    pre_emphasis_in_place(&mut samples, alpha, &mut EmphasisState::default());
    Ok(SignalBuffer::new(samples, x.sample_rate, Domain::PreEmphasized))
}

pub fn de_emphasis(y: &SignalBuffer, alpha: f32) -> Result<SignalBuffer> {
    y.expect_domain(Domain::PreEmphasized)?;
    let mut samples = y.samples.clone();
    de_emphasis_in_place(&mut samples, alpha, &mut EmphasisState::default());
    Ok(SignalBuffer::new(samples, y.sample_rate, Domain::Natural))
}

/// Triangular band weights for FFT bin `bin` of a [`WINDOW_SIZE`]-point FFT.
/// Returns up to two `(band, weight)` pairs.
pub fn band_weights(bin: usize) -> [(usize, f64); 2] {
    let hz = bin as f64 * SAMPLE_RATE as f64 / WINDOW_SIZE as f64;
    for b in 0..NB_BANDS - 1 {
        let (lo, hi) = (BAND_CENTERS_HZ[b], BAND_CENTERS_HZ[b + 1]);
        if hz < hi || b == NB_BANDS - 2 {
            let frac = ((hz - lo) / (hi - lo)).clamp(0.0, 1.0);
            return [(b, 1.0 - frac), (b + 1, frac)];
        }
    }
    unreachable!()
}

/// Mean power per band: Σ w·|X|² / Σ w over each triangle.
pub fn band_energies_from_power(power: &[f64]) -> [f64; NB_BANDS] {
    let mut sum = [0.0; NB_BANDS];
    let mut norm = [0.0; NB_BANDS];
    for (bin, &p) in power.iter().enumerate() {
        for (band, w) in band_weights(bin) {
            sum[band] += w * p;
            norm[band] += w;
        }
    }
    let mut out = [0.0; NB_BANDS];
    for b in 0..NB_BANDS {
        out[b] = sum[b] / norm[b];
    }
    out
}

/// Linear interpolation of band values onto the one-sided FFT grid; the
/// inverse direction of [`band_energies_from_power`] for smooth spectra.
pub fn interpolate_bands(bands: &[f64; NB_BANDS]) -> Vec<f64> {
    (0..SPECTRUM_BINS)
        .map(|bin| band_weights(bin).iter().map(|&(b, w)| w * bands[b]).sum())
        .collect()
}

/// Cepstrum of a vector of band energies: floor, log10, orthonormal DCT-II.
pub fn cepstrum_from_energies(energies: &[f64; NB_BANDS]) -> [f32; NB_BANDS] {
    let logs: Vec<f64> = energies.iter().map(|&e| e.max(ENERGY_FLOOR).log10()).collect();
    let c = dsp::dct2(&logs);
    let mut out = [0.0; NB_BANDS];
    for (o, v) in out.iter_mut().zip(c) {
        *o = v as f32;
    }
    out
}

/// Reusable BFCC front end holding the FFT plan.
pub struct BfccAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl Default for BfccAnalyzer {
    fn default() -> Self {
        Self::new()
    }
}

impl BfccAnalyzer {
    pub fn new() -> Self {
        let fft = FftPlanner::new().plan_fft_forward(WINDOW_SIZE);
        Self {
            fft,
            buf: vec![Complex::default(); WINDOW_SIZE],
        }
    }

    pub fn power_spectrum(&mut self, frame: &[f32]) -> Result<Vec<f64>> {
        if frame.len() != WINDOW_SIZE {
            return Err(crate::error::dims_err("bfcc", WINDOW_SIZE, frame.len()));
        }
        for (b, &s) in self.buf.iter_mut().zip(frame) {
            *b = Complex::new(s as f64, 0.0);
        }
        self.fft.process(&mut self.buf);
        Ok(self.buf[..SPECTRUM_BINS].iter().map(|c| c.norm_sqr()).collect())
    }

    pub fn band_energies(&mut self, frame: &[f32]) -> Result<[f64; NB_BANDS]> {
        Ok(band_energies_from_power(&self.power_spectrum(frame)?))
    }

    /// BFCCs of an already windowed 320-sample frame.
    pub fn bfcc(&mut self, frame: &[f32]) -> Result<[f32; NB_BANDS]> {
        Ok(cepstrum_from_energies(&self.band_energies(frame)?))
    }
}

pub fn bfcc(frame: &[f32]) -> Result<[f32; NB_BANDS]> {
    BfccAnalyzer::new().bfcc(frame)
}

/// Normalized cross-correlation between the last `window` samples of
/// `history` and the same span delayed by `lag`.
fn normalized_xcorr(history: &[f32], window: usize, lag: usize) -> f64 {
    let n = history.len();
    let cur = &history[n - window..];
    let past = &history[n - window - lag..n - lag];
    let (mut xy, mut xx, mut yy) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in cur.iter().zip(past) {
        let (a, b) = (a as f64, b as f64);
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    let denom = (xx * yy).sqrt();
    if denom <= 1e-12 {
        0.0
    } else {
        xy / denom
    }
}

/// Pitch period and correlation from the most recent samples.
///
/// The period is the arg-max of the normalized cross-correlation over the lag
/// range, after which the shortest sub-multiple of that lag whose correlation
/// is within 10% of the peak is preferred, so that exact multiples of the true
/// period do not win on rounding noise.
pub fn pitch_estimate(history: &[f32], cfg: &AnalysisConfig) -> Result<(u16, f32)> {
    let needed = cfg.pitch_history();
    if history.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            have: history.len(),
        });
    }
    let history = &history[history.len() - needed..];
    let corr: Vec<f64> = (cfg.min_lag..=cfg.max_lag)
        .map(|lag| normalized_xcorr(history, cfg.window, lag))
        .collect();
    let at = |lag: usize| corr[lag - cfg.min_lag];
    let mut best = cfg.min_lag;
    for lag in cfg.min_lag..=cfg.max_lag {
        if at(lag) > at(best) {
            best = lag;
        }
    }
    let peak = at(best);
    if peak > 0.0 {
        let mut chosen = best;
        for div in 2..=best / cfg.min_lag {
            let centre = (best as f64 / div as f64).round() as usize;
            let lo = centre.saturating_sub(1).max(cfg.min_lag);
            let hi = (centre + 1).min(cfg.max_lag);
            let cand = (lo..=hi).fold(lo, |m, l| if at(l) > at(m) { l } else { m });
            if at(cand) >= 0.9 * peak && cand < chosen {
                chosen = cand;
            }
        }
        best = chosen;
    }
    Ok((best as u16, at(best).clamp(-1.0, 1.0) as f32))
}

/// Frame-level analysis of a natural-domain 16 kHz utterance.
///
/// The whole utterance is pre-emphasized first. Frame `i` labels samples
/// `[160 i, 160 i + 160)`; its 320-sample Hann window ends [`LOOKAHEAD`]
/// samples after the frame, and the pitch search uses history ending at the
/// same point. Samples outside the utterance are zero.
pub fn analyze(wav: &SignalBuffer, cfg: &AnalysisConfig) -> Result<Vec<FeatureFrame>> {
    cfg.validate()?;
    wav.expect_rate()?;
    wav.expect_domain(Domain::Natural)?;
    let emph = pre_emphasis(wav, cfg.preemph)?;
    let x = &emph.samples;
    let frames = x.len() / cfg.frame_hop;
    let window = dsp::hann_periodic(cfg.window);
    let history_len = cfg.pitch_history();
    let mut analyzer = BfccAnalyzer::new();
    let mut frame_buf = vec![0.0f32; cfg.window];
    let mut history = vec![0.0f32; history_len];

    let sample = |idx: isize| -> f32 {
        if idx < 0 || idx as usize >= x.len() {
            0.0
        } else {
            x[idx as usize]
        }
    };

    let mut out = Vec::with_capacity(frames);
    for i in 0..frames {
        let end = ((i + 1) * cfg.frame_hop + LOOKAHEAD) as isize;
        let start = end - cfg.window as isize;
        for (k, (slot, w)) in frame_buf.iter_mut().zip(&window).enumerate() {
            *slot = (sample(start + k as isize) as f64 * w) as f32;
        }
        let hist_start = end - history_len as isize;
        for (k, slot) in history.iter_mut().enumerate() {
            *slot = sample(hist_start + k as isize);
        }
        let bfcc = analyzer.bfcc(&frame_buf)?;
        let (period, corr) = pitch_estimate(&history, cfg)?;
        out.push(FeatureFrame::new(bfcc, period, corr, i));
    }
    Ok(out)
}

pub fn encode_features(frames: &[FeatureFrame]) -> Vec<u8> {
    let mut out = Vec::with_capacity(frames.len() * FEATURE_VALUES * 4);
    for f in frames {
        for v in f.to_raw() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<Vec<FeatureFrame>> {
    let stride = FEATURE_VALUES * 4;
    if bytes.len() % stride != 0 {
        return Err(Error::Features(format!(
            "file size {} is not a multiple of {stride} bytes",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(stride)
        .enumerate()
        .map(|(i, chunk)| {
            let raw: Vec<f32> = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            FeatureFrame::from_raw(&raw, i)
        })
        .collect()
}

pub fn write_features(path: impl AsRef<Path>, frames: &[FeatureFrame]) -> Result<()> {
    std::fs::write(path, encode_features(frames))?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureFrame>> {
    decode_features(&std::fs::read(path)?)
}
