//! Multi-resolution sqrt-STFT reconstruction loss, spectrogram
//! discriminators and least-squares adversarial objectives.
//!
//! All spectral arithmetic is f64; reductions run in a fixed order so the
//! results are reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dsp::hann_periodic;
use crate::error::{dims_err, Error, Result};
use crate::tensor::leaky_relu;

pub const FFT_SIZES: [usize; 6] = [64, 128, 256, 512, 1024, 2048];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
}

impl StftConfig {
    /// Hann window of the full FFT size, 75 % overlap.
    pub fn new(fft_size: usize) -> Result<Self> {
        if fft_size < 4 || !fft_size.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("FFT size {fft_size} is not a power of two >= 4")));
        }
        Ok(Self {
            fft_size,
            hop: fft_size / 4,
        })
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Centered frames: one per hop plus one.
    pub fn frames(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    pub fn resolutions() -> Vec<StftConfig> {
        FFT_SIZES.iter().map(|&n| StftConfig { fft_size: n, hop: n / 4 }).collect()
    }
}

/// Time-major magnitude grid, `frames × bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<f64>,
}

impl Spectrogram {
    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.data[t * self.bins + k]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Spectrogram {
        Spectrogram {
            frames: self.frames,
            bins: self.bins,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn reflect(x: &[f32], i: isize) -> f32 {
    let n = x.len() as isize;
    let mut j = i;
    // Single reflection suffices because the pad is shorter than the signal.
    if j < 0 {
        j = -j;
    }
    if j >= n {
        j = 2 * (n - 1) - j;
    }
    x[j as usize]
}

/// Magnitude of the Hann-windowed STFT with centered, reflect-padded frames.
pub fn stft_magnitude(x: &[f32], cfg: &StftConfig) -> Result<Spectrogram> {
    let n = cfg.fft_size;
    if x.len() < n {
        return Err(Error::TooShort {
            needed: n,
            have: x.len(),
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("stft"));
    }
    let window = hann_periodic(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let frames = cfg.frames(x.len());
    let bins = cfg.bins();
    let half = (n / 2) as isize;
    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for t in 0..frames {
        let start = (t * cfg.hop) as isize - half;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(reflect(x, start + i as isize) as f64 * window[i], 0.0);
        }
        fft.process(&mut buf);
        data.extend(buf[..bins].iter().map(|c| c.norm()));
    }
    Ok(Spectrogram { frames, bins, data })
}

/// √|STFT|, the grid the magnitude loss and the discriminators see.
pub fn stft_sqrt_mag(x: &[f32], cfg: &StftConfig) -> Result<Spectrogram> {
    Ok(stft_magnitude(x, cfg)?.map(f64::sqrt))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionLoss {
    pub fft_size: usize,
    /// Spectral convergence on raw magnitudes.
    pub sc: f64,
    /// Mean absolute difference of sqrt magnitudes.
    pub mag: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLosses {
    pub per_resolution: Vec<ResolutionLoss>,
    pub aux: f64,
}

impl SpectralLosses {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:>6} | {:>12} | {:>12}\n", "fft", "L_sc", "L_mag");
        for r in &self.per_resolution {
            s.push_str(&format!("{:>6} | {:>12.6e} | {:>12.6e}\n", r.fft_size, r.sc, r.mag));
        }
        s.push_str(&format!("L_aux = {:.6e}\n", self.aux));
        s
    }
}

/// Losses from two precomputed magnitude grids, reference first.
pub fn losses_from_magnitudes(reference: &Spectrogram, degraded: &Spectrogram, fft_size: usize) -> Result<ResolutionLoss> {
    if reference.frames != degraded.frames || reference.bins != degraded.bins {
        return Err(dims_err(
            "spectral_losses",
            format!("{}x{}", reference.frames, reference.bins),
            format!("{}x{}", degraded.frames, degraded.bins),
        ));
    }
    let mut diff2 = 0.0;
    let mut ref2 = 0.0;
    let mut l1 = 0.0;
    for (&a, &b) in reference.data.iter().zip(&degraded.data) {
        diff2 += (a - b) * (a - b);
        ref2 += a * a;
        l1 += (a.sqrt() - b.sqrt()).abs();
    }
    let sc = if ref2 > 0.0 {
        diff2.sqrt() / ref2.sqrt()
    } else if diff2 == 0.0 {
        0.0
    } else {
        return Err(Error::ZeroReference);
    };
    Ok(ResolutionLoss {
        fft_size,
        sc,
        mag: l1 / reference.data.len() as f64,
    })
}

pub fn single_resolution_loss(reference: &[f32], degraded: &[f32], cfg: &StftConfig) -> Result<ResolutionLoss> {
    if reference.len() != degraded.len() {
        return Err(dims_err("spectral_losses", reference.len(), degraded.len()));
    }
    losses_from_magnitudes(&stft_magnitude(reference, cfg)?, &stft_magnitude(degraded, cfg)?, cfg.fft_size)
}

/// `L_sc` and `L_mag` at every resolution and their mean sum `L_aux`.
pub fn spectral_losses(reference: &[f32], degraded: &[f32]) -> Result<SpectralLosses> {
    let per_resolution = StftConfig::resolutions()
        .iter()
        .map(|cfg| single_resolution_loss(reference, degraded, cfg))
        .collect::<Result<Vec<_>>>()?;
    let aux = per_resolution.iter().map(|r| r.sc + r.mag).sum::<f64>() / per_resolution.len() as f64;
    Ok(SpectralLosses { per_resolution, aux })
}

/// One weight-normalized 2-D convolution over a `[channel, time, freq]` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    /// Direction, `[out][in][kt][kf]`.
    pub v: Vec<f32>,
    /// Per-output-channel norm.
    pub g: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    fn kernel_len(&self) -> usize {
        self.in_ch * self.kernel.0 * self.kernel.1
    }

    /// `g · v / ‖v‖` per output channel; a zero direction gives zero weights.
    pub fn effective_weight(&self) -> Vec<f32> {
        let k = self.kernel_len();
        let mut w = vec![0.0; self.v.len()];
        for o in 0..self.out_ch {
            let v = &self.v[o * k..(o + 1) * k];
            let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            if norm > 0.0 {
                let s = self.g[o] as f64 / norm;
                for (dst, &src) in w[o * k..(o + 1) * k].iter_mut().zip(v) {
                    *dst = (src as f64 * s) as f32;
                }
            }
        }
        w
    }

    pub fn output_dims(&self, time: usize, freq: usize) -> (usize, usize) {
        let (kt, kf) = self.kernel;
        let (st, sf) = self.stride;
        let (pt, pf) = self.padding;
        ((time + 2 * pt - kt) / st + 1, (freq + 2 * pf - kf) / sf + 1)
    }

    /// Pre-activation output with explicit effective weights.
    pub fn forward_with(&self, w: &[f32], input: &FeatureMap) -> Result<FeatureMap> {
        if input.channels != self.in_ch {
            return Err(dims_err("conv2d", format!("{} channels", self.in_ch), format!("{} channels", input.channels)));
        }
        let (kt, kf) = self.kernel;
        let (st, sf) = self.stride;
        let (pt, pf) = self.padding;
        if input.time + 2 * pt < kt || input.freq + 2 * pf < kf {
            return Err(Error::TooShort {
                needed: kt.max(kf),
                have: input.time.min(input.freq),
            });
        }
        let (ot, of) = self.output_dims(input.time, input.freq);
        let mut out = FeatureMap::zeros(self.out_ch, ot, of);
        let k = self.kernel_len();
        for o in 0..self.out_ch {
            let wo = &w[o * k..(o + 1) * k];
            for t in 0..ot {
                for f in 0..of {
                    let mut acc = self.bias[o];
                    for c in 0..self.in_ch {
                        for dt in 0..kt {
                            let ti = (t * st + dt) as isize - pt as isize;
                            if ti < 0 || ti >= input.time as isize {
                                continue;
                            }
                            let row = input.row(c, ti as usize);
                            let wrow = &wo[(c * kt + dt) * kf..(c * kt + dt + 1) * kf];
                            for (df, &wv) in wrow.iter().enumerate() {
                                let fi = (f * sf + df) as isize - pf as isize;
                                if fi >= 0 && (fi as usize) < input.freq {
                                    acc += wv * row[fi as usize];
                                }
                            }
                        }
                    }
                    out.data[(o * ot + t) * of + f] = acc;
                }
            }
        }
        Ok(out)
    }

    pub fn forward(&self, input: &FeatureMap) -> Result<FeatureMap> {
        self.forward_with(&self.effective_weight(), input)
    }
}

/// `[channel, time, freq]` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub time: usize,
    pub freq: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, time: usize, freq: usize) -> Self {
        Self {
            channels,
            time,
            freq,
            data: vec![0.0; channels * time * freq],
        }
    }

    pub fn from_spectrogram(s: &Spectrogram) -> Self {
        Self {
            channels: 1,
            time: s.frames,
            freq: s.bins,
            data: s.data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn row(&self, c: usize, t: usize) -> &[f32] {
        let start = (c * self.time + t) * self.freq;
        &self.data[start..start + self.freq]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    pub channels: Vec<usize>,
    pub kernel: (usize, usize),
    pub slope_milli: u32,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            channels: vec![1, 32, 32, 32, 32, 1],
            kernel: (3, 9),
            slope_milli: 200,
        }
    }
}

/// Five convolutions over a sqrt-magnitude spectrogram; the first four
/// halve the frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub layers: Vec<Conv2d>,
    slope: f32,
}

impl Discriminator {
    fn build(cfg: &DiscriminatorConfig, mut init: impl FnMut(usize) -> f32) -> Self {
        let n = cfg.channels.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (in_ch, out_ch) = (cfg.channels[l], cfg.channels[l + 1]);
                let len = out_ch * in_ch * cfg.kernel.0 * cfg.kernel.1;
                let fan_in = in_ch * cfg.kernel.0 * cfg.kernel.1;
                Conv2d {
                    in_ch,
                    out_ch,
                    kernel: cfg.kernel,
                    stride: (1, if l + 1 < n { 2 } else { 1 }),
                    padding: (cfg.kernel.0 / 2, cfg.kernel.1 / 2),
                    v: (0..len).map(|_| init(fan_in)).collect(),
                    g: vec![1.0; out_ch],
                    bias: vec![0.0; out_ch],
                }
            })
            .collect();
        Self {
            layers,
            slope: cfg.slope_milli as f32 / 1000.0,
        }
    }

    pub fn zeros(cfg: &DiscriminatorConfig) -> Self {
        let mut d = Self::build(cfg, |_| 0.0);
        for l in &mut d.layers {
            l.g.fill(0.0);
        }
        d
    }

    pub fn random(cfg: &DiscriminatorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(cfg, |fan_in| {
            let b = (3.0 / fan_in as f32).sqrt();
            rng.gen_range(-b..=b)
        })
    }

    /// Score map for one spectrogram grid.
    pub fn forward(&self, spec: &Spectrogram) -> Result<FeatureMap> {
        let (kt, kf) = self.layers[0].kernel;
        if spec.frames < kt || spec.bins < kf {
            return Err(Error::TooShort {
                needed: kt.max(kf),
                have: spec.frames.min(spec.bins),
            });
        }
        let mut x = FeatureMap::from_spectrogram(spec);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x)?;
            if i < last {
                for v in &mut x.data {
                    *v = leaky_relu(*v, self.slope);
                }
            }
        }
        if !x.data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("discriminator"));
        }
        Ok(x)
    }

    /// First-layer output before its activation.
    pub fn first_preactivation(&self, spec: &Spectrogram) -> Result<FeatureMap> {
        self.layers[0].forward(&FeatureMap::from_spectrogram(spec))
    }
}

/// One discriminator per STFT resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiResolutionDiscriminator {
    pub discriminators: Vec<(StftConfig, Discriminator)>,
}

impl MultiResolutionDiscriminator {
    pub fn random(cfg: &DiscriminatorConfig, seed: u64) -> Self {
        Self {
            discriminators: StftConfig::resolutions()
                .into_iter()
                .enumerate()
                .map(|(k, s)| (s, Discriminator::random(cfg, seed.wrapping_add(k as u64))))
                .collect(),
        }
    }

    pub fn zeros(cfg: &DiscriminatorConfig) -> Self {
        Self {
            discriminators: StftConfig::resolutions().into_iter().map(|s| (s, Discriminator::zeros(cfg))).collect(),
        }
    }

    pub fn scores(&self, x: &[f32]) -> Result<Vec<FeatureMap>> {
        self.discriminators
            .iter()
            .map(|(s, d)| d.forward(&stft_sqrt_mag(x, s)?))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsganLosses {
    pub d_loss: f64,
    /// Adversarial term only; the caller adds `L_aux`.
    pub g_loss: f64,
}

fn mean_sq_dev(map: &[f32], target: f64) -> f64 {
    if map.is_empty() {
        return 0.0;
    }
    map.iter().map(|&v| (v as f64 - target).powi(2)).sum::<f64>() / map.len() as f64
}

/// Least-squares objectives summed over discriminators; real target 1,
/// fake target 0.
pub fn lsgan_losses<R: AsRef<[f32]>, F: AsRef<[f32]>>(real: &[R], fake: &[F]) -> LsganLosses {
    let d_real: f64 = real.iter().map(|m| mean_sq_dev(m.as_ref(), 1.0)).sum();
    let d_fake: f64 = fake.iter().map(|m| mean_sq_dev(m.as_ref(), 0.0)).sum();
    let g: f64 = fake.iter().map(|m| mean_sq_dev(m.as_ref(), 1.0)).sum();
    LsganLosses {
        d_loss: d_real + d_fake,
        g_loss: g,
    }
}

impl AsRef<[f32]> for FeatureMap {
    fn as_ref(&self) -> &[f32] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn noise(n: usize, seed: u64) -> Vec<f32> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    fn padded_frame_oracle(x: &[f32], n: usize, start: isize) -> Vec<f64> {
        // Explicit mirrored copy of the signal, then a slice.
        let half = n / 2;
        let mut padded: Vec<f64> = (1..=half).rev().map(|i| x[i] as f64).collect();
        padded.extend(x.iter().map(|&v| v as f64));
        padded.extend((0..half).map(|i| x[x.len() - 2 - i] as f64));
        let s = (start + half as isize) as usize;
        padded[s..s + n].to_vec()
    }

    fn naive_mag(x: &[f32], cfg: &StftConfig) -> Vec<Vec<f64>> {
        let n = cfg.fft_size;
        (0..cfg.frames(x.len()))
            .map(|t| {
                let frame = padded_frame_oracle(x, n, (t * cfg.hop) as isize - (n / 2) as isize);
                (0..=n / 2)
                    .map(|k| {
                        let (mut re, mut im) = (0.0, 0.0);
                        for (i, v) in frame.iter().enumerate() {
                            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
                            let ph = -2.0 * PI * (k * i) as f64 / n as f64;
                            re += v * w * ph.cos();
                            im += v * w * ph.sin();
                        }
                        (re * re + im * im).sqrt()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn stft_matches_naive_dft() {
        let x = noise(300, 1);
        let cfg = StftConfig::new(64).unwrap();
        let s = stft_magnitude(&x, &cfg).unwrap();
        let oracle = naive_mag(&x, &cfg);
        assert_eq!(s.frames, oracle.len());
        for (t, row) in oracle.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                assert!((s.get(t, k) - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_signal_zero_grid() {
        let s = stft_sqrt_mag(&[0.0; 512], &StftConfig::new(256).unwrap()).unwrap();
        assert!(s.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_peaks_at_bin_16() {
        let x: Vec<f32> = (0..4096).map(|i| (2.0 * PI * 1000.0 * i as f64 / 16000.0).sin() as f32).collect();
        let s = stft_magnitude(&x, &StftConfig::new(256).unwrap()).unwrap();
        for t in 2..s.frames - 2 {
            let f = s.frame(t);
            let peak = (0..s.bins).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
            assert_eq!(peak, 16);
            let near: f64 = f[15..=17].iter().map(|v| v * v).sum();
            let total: f64 = f.iter().map(|v| v * v).sum();
            assert!(near / total > 0.999);
        }
    }

    #[test]
    fn parseval() {
        let x = noise(1000, 2);
        let cfg = StftConfig::new(128).unwrap();
        let n = cfg.fft_size;
        let s = stft_magnitude(&x, &cfg).unwrap();
        let w = hann_periodic(n);
        for t in 0..s.frames {
            let f = s.frame(t);
            let spec: f64 = f[0] * f[0] + f[n / 2] * f[n / 2] + 2.0 * f[1..n / 2].iter().map(|v| v * v).sum::<f64>();
            let frame = padded_frame_oracle(&x, n, (t * cfg.hop) as isize - (n / 2) as isize);
            let energy: f64 = frame.iter().zip(&w).map(|(v, w)| (v * w).powi(2)).sum();
            assert!((spec / n as f64 - energy).abs() < 1e-9 * energy.max(1.0));
        }
    }

    #[test]
    fn too_short_and_mismatch() {
        assert!(matches!(
            stft_magnitude(&[0.0; 100], &StftConfig::new(128).unwrap()),
            Err(Error::TooShort { needed: 128, have: 100 })
        ));
        assert!(spectral_losses(&noise(4000, 1), &noise(4001, 1)).is_err());
        assert!(StftConfig::new(100).is_err());
    }

    #[test]
    fn identity_and_zero_degraded() {
        let x = noise(4000, 3);
        let l = spectral_losses(&x, &x).unwrap();
        assert_eq!(l.aux, 0.0);
        let z = vec![0.0; x.len()];
        let l = spectral_losses(&x, &z).unwrap();
        assert!(l.per_resolution.iter().all(|r| r.sc == 1.0));
        assert_eq!(spectral_losses(&z, &z).unwrap().aux, 0.0);
        assert!(matches!(spectral_losses(&z, &x), Err(Error::ZeroReference)));
    }

    #[test]
    fn single_resolution_matches_oracle() {
        let x = noise(700, 4);
        let y = noise(700, 5);
        let cfg = StftConfig::new(128).unwrap();
        let l = single_resolution_loss(&x, &y, &cfg).unwrap();
        let (a, b) = (naive_mag(&x, &cfg), naive_mag(&y, &cfg));
        let (mut d2, mut r2, mut l1, mut n) = (0.0, 0.0, 0.0, 0.0);
        for (ra, rb) in a.iter().zip(&b) {
            for (p, q) in ra.iter().zip(rb) {
                d2 += (p - q) * (p - q);
                r2 += p * p;
                l1 += (p.sqrt() - q.sqrt()).abs();
                n += 1.0;
            }
        }
        assert!((l.sc - (d2 / r2).sqrt()).abs() < 1e-6);
        assert!((l.mag - l1 / n).abs() < 1e-6);
    }

    #[test]
    fn sqrt_not_log() {
        // A gain of 4 doubles every sqrt magnitude, so L_mag equals the mean
        // sqrt magnitude of the reference; a log variant would give ln 4.
        let x = noise(2048, 6);
        let y: Vec<f32> = x.iter().map(|v| 4.0 * v).collect();
        let cfg = StftConfig::new(256).unwrap();
        let l = single_resolution_loss(&x, &y, &cfg).unwrap();
        let s = stft_sqrt_mag(&x, &cfg).unwrap();
        let golden = s.data.iter().sum::<f64>() / s.data.len() as f64;
        assert!((l.mag - golden).abs() < 1e-9);
        assert!((l.mag - 4f64.ln()).abs() > 0.1);
        assert!((l.sc - 3.0).abs() < 1e-9);
    }

    #[test]
    fn magnitude_loss_monotone_in_scale() {
        let x = noise(4000, 7);
        let mag = |a: f32| {
            let y: Vec<f32> = x.iter().map(|v| a * v).collect();
            single_resolution_loss(&x, &y, &StftConfig::new(512).unwrap()).unwrap().mag
        };
        let mut pairs: Vec<(f64, f64)> = [0.25f32, 0.5, 2.0, 4.0]
            .iter()
            .map(|&a| ((1.0 - (a as f64).sqrt()).abs(), mag(a)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            assert!(w[1].1 > w[0].1);
        }
    }

    #[test]
    fn weight_norm_matches_direct_oracle() {
        let cfg = DiscriminatorConfig::default();
        let mut d = Discriminator::random(&cfg, 3);
        d.layers[0].g = (0..32).map(|i| 0.5 + i as f32 * 0.1).collect();
        let layer = &d.layers[0];
        let w = layer.effective_weight();
        for o in 0..32 {
            let v = &layer.v[o * 27..(o + 1) * 27];
            let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            for (a, b) in w[o * 27..(o + 1) * 27].iter().zip(v) {
                assert!((*a as f64 - layer.g[o] as f64 * *b as f64 / norm).abs() < 1e-6);
            }
        }
        let x = noise(800, 8);
        let spec = stft_sqrt_mag(&x, &StftConfig::new(64).unwrap()).unwrap();
        let pre = d.first_preactivation(&spec).unwrap();
        // Direct convolution with the reparameterized weights.
        let input = FeatureMap::from_spectrogram(&spec);
        let (ot, of) = layer.output_dims(input.time, input.freq);
        for &(o, t, f) in &[(0, 0, 0), (5, 10, 3), (31, ot - 1, of - 1)] {
            let mut acc = 0.0f64;
            for dt in 0..3 {
                for df in 0..9 {
                    let ti = t as isize + dt as isize - 1;
                    let fi = 2 * f as isize + df as isize - 4;
                    if ti >= 0 && (ti as usize) < input.time && fi >= 0 && (fi as usize) < input.freq {
                        acc += w[o * 27 + dt * 9 + df] as f64 * input.row(0, ti as usize)[fi as usize] as f64;
                    }
                }
            }
            assert!((pre.data[(o * ot + t) * of + f] as f64 - acc).abs() < 1e-5);
        }
        let doubled = spec.map(|v| 2.0 * v);
        let pre2 = d.first_preactivation(&doubled).unwrap();
        for (a, b) in pre.data.iter().zip(&pre2.data) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn discriminator_shapes_and_zero() {
        let cfg = DiscriminatorConfig::default();
        let x = noise(16000, 9);
        let spec = stft_sqrt_mag(&x, &StftConfig::new(512).unwrap()).unwrap();
        let out = Discriminator::random(&cfg, 1).forward(&spec).unwrap();
        assert_eq!(out.channels, 1);
        assert_eq!(out.time, spec.frames);
        assert_eq!(out.freq, 17);
        let z = Discriminator::zeros(&cfg).forward(&spec).unwrap();
        assert!(z.data.iter().all(|&v| v == 0.0));
        let tiny = Spectrogram { frames: 2, bins: 33, data: vec![0.0; 66] };
        assert!(Discriminator::zeros(&cfg).forward(&tiny).is_err());
    }

    #[test]
    fn lsgan_identities() {
        let ones = vec![vec![1.0f32; 10]; 6];
        let zeros = vec![vec![0.0f32; 10]; 6];
        assert_eq!(lsgan_losses(&ones, &ones).g_loss, 0.0);
        assert_eq!(lsgan_losses(&ones, &zeros).d_loss, 0.0);
        assert_eq!(lsgan_losses(&ones, &zeros).g_loss, 6.0);
        let real = [vec![0.5f32, 1.5], vec![2.0]];
        let fake = [vec![0.25f32, -0.5, 1.0]];
        let l = lsgan_losses(&real, &fake);
        // (0.25 + 0.25)/2 + 1 + (0.0625 + 0.25 + 1)/3
        assert!((l.d_loss - (0.25 + 1.0 + 1.3125 / 3.0)).abs() < 1e-12);
        // (0.5625 + 2.25 + 0)/3
        assert!((l.g_loss - 2.8125 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_discriminators_give_constant_generator_term() {
        let d = MultiResolutionDiscriminator::zeros(&DiscriminatorConfig::default());
        let fake = d.scores(&noise(4096, 10)).unwrap();
        assert_eq!(lsgan_losses(&fake, &fake).g_loss, 6.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn losses_non_negative(seed in any::<u64>(), gain in 0.01f32..3.0) {
                let x = noise(2100, seed);
                let y: Vec<f32> = noise(2100, seed ^ 1).iter().map(|v| v * gain).collect();
                let l = spectral_losses(&x, &y).unwrap();
                prop_assert!(l.aux > 0.0);
                for r in &l.per_resolution {
                    prop_assert!(r.sc >= 0.0 && r.mag >= 0.0);
                }
            }
        }
    }
}
