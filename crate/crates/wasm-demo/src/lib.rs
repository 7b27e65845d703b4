//! Browser demo: three interactive views over the vocoder engine.
//!
//! The plain functions in [`demo`] do the work and are tested natively; the
//! `#[wasm_bindgen]` exports below only convert errors to JS strings.

use wasm_bindgen::prelude::*;

pub mod demo {
    use std::f64::consts::PI;

    use fwgan_core::features::{cepstrum_from_energies, BAND_CENTERS_HZ, NB_BANDS};
    use fwgan_core::generator::GeneratorConfig;
    use fwgan_core::losses::{self, StftConfig};
    use fwgan_core::perceptual::{self, WeightingParams};
    use fwgan_core::sparsity::{self, ComplexityReport, PrunePlan};
    use fwgan_core::signal::SAMPLE_RATE;
    use fwgan_core::Result;

    /// Vowel-like band energies with formant peaks at `f1` and `f2`.
    fn vowel_bfcc(f1: f64, f2: f64) -> [f32; NB_BANDS] {
        let mut e = [0.0f64; NB_BANDS];
        for (v, &c) in e.iter_mut().zip(&BAND_CENTERS_HZ) {
            let peak = |f: f64, w: f64| (-((c - f) / w).powi(2)).exp();
            let tilt = 1.0 / (1.0 + c / 500.0);
            *v = 1e-3 + tilt * (peak(f1, 150.0) + 0.5 * peak(f2, 250.0));
        }
        cepstrum_from_energies(&e)
    }

    /// `points` frequencies from 0 to Nyquist, then the LPC envelope and the
    /// weighting response in dB, concatenated.
    pub fn weighting_curves(gamma1: f32, gamma2: f32, f1: f64, f2: f64, points: usize) -> Result<Vec<f64>> {
        let p = WeightingParams::new(gamma1, gamma2)?;
        let lpc = perceptual::lpc_from_bfcc(&vowel_bfcc(f1, f2))?;
        let nyq = SAMPLE_RATE as f64 / 2.0;
        let hz: Vec<f64> = (0..points).map(|i| nyq * i as f64 / (points.max(2) - 1) as f64).collect();
        let db = |v: f64| 20.0 * v.max(1e-12).log10();
        let mut out = hz.clone();
        out.extend(hz.iter().map(|&f| db(lpc.synthesis_gain(f))));
        out.extend(hz.iter().map(|&f| db(perceptual::weighting_response(&lpc, &p, f))));
        Ok(out)
    }

    /// A half-second test signal: a gliding harmonic tone.
    pub fn test_signal() -> Vec<f32> {
        (0..SAMPLE_RATE as usize / 2)
            .map(|i| {
                let t = i as f64 / SAMPLE_RATE as f64;
                let f0 = 120.0 + 80.0 * t;
                let ph = 2.0 * PI * f0 * t;
                (0.3 * (ph.sin() + 0.5 * (2.0 * ph).sin() + 0.25 * (3.0 * ph).sin())) as f32
            })
            .collect()
    }

    /// Scaled copy of `x` with deterministic uniform noise added.
    pub fn degrade(x: &[f32], gain: f32, noise: f32) -> Vec<f32> {
        let mut s = 0x2545_f491u32;
        x.iter()
            .map(|&v| {
                s ^= s << 13;
                s ^= s >> 17;
                s ^= s << 5;
                let u = s as f32 / u32::MAX as f32 * 2.0 - 1.0;
                gain * v + noise * u
            })
            .collect()
    }

    /// `[frames, bins, data...]`, sqrt magnitudes in frame-major order.
    pub fn sqrt_spectrogram(x: &[f32], fft_size: usize) -> Result<Vec<f64>> {
        let s = losses::stft_sqrt_mag(x, &StftConfig::new(fft_size)?)?;
        let mut out = vec![s.frames as f64, s.bins as f64];
        out.extend_from_slice(&s.data);
        Ok(out)
    }

    /// `[sc, mag]` per resolution, then `L_aux`.
    pub fn loss_values(reference: &[f32], degraded: &[f32]) -> Result<Vec<f64>> {
        let l = losses::spectral_losses(reference, degraded)?;
        let mut out: Vec<f64> = l.per_resolution.iter().flat_map(|r| [r.sc, r.mag]).collect();
        out.push(l.aux);
        Ok(out)
    }

    /// Complexity of the reference layout with custom sizes and densities.
    pub fn complexity(
        latent: usize,
        hidden: usize,
        conditional_layers: usize,
        gru_density: f64,
        fc_density: f64,
    ) -> Result<ComplexityReport> {
        let cfg = GeneratorConfig {
            latent_dim: latent,
            gru_hidden: hidden,
            conditional_layers,
            ..GeneratorConfig::reference()
        };
        let mut plan = PrunePlan::reference(&cfg);
        for (pat, d) in &mut plan.entries {
            *d = if pat.starts_with("gru") && !pat.ends_with("glu") { gru_density } else { fc_density };
        }
        let plan = PrunePlan::new(plan.entries)?;
        let total = cfg.parameter_count() as u64;
        let active = sparsity::planned_active_params(&cfg, &plan)?;
        let mut r = ComplexityReport::from_counts(active, sparsity::activation_calls(&cfg), sparsity::STEPS_PER_SECOND);
        r.total_params = total;
        Ok(r)
    }
}

fn js<T>(r: fwgan_core::Result<T>) -> Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

/// Frequencies, LPC envelope (dB) and weighting response (dB).
#[wasm_bindgen]
pub fn weighting_curves(gamma1: f32, gamma2: f32, f1: f64, f2: f64, points: usize) -> Result<Vec<f64>, JsValue> {
    js(demo::weighting_curves(gamma1, gamma2, f1, f2, points))
}

/// Spectrogram of the test signal after `degrade`.
#[wasm_bindgen]
pub fn spectrogram(fft_size: usize, gain: f32, noise: f32) -> Result<Vec<f64>, JsValue> {
    let x = demo::degrade(&demo::test_signal(), gain, noise);
    js(demo::sqrt_spectrogram(&x, fft_size))
}

/// Spectral losses between the test signal and its degraded copy.
#[wasm_bindgen]
pub fn losses(gain: f32, noise: f32) -> Result<Vec<f64>, JsValue> {
    let x = demo::test_signal();
    js(demo::loss_values(&x, &demo::degrade(&x, gain, noise)))
}

/// Key-value complexity report.
#[wasm_bindgen]
pub fn complexity(
    latent: usize,
    hidden: usize,
    conditional_layers: usize,
    gru_density: f64,
    fc_density: f64,
) -> Result<String, JsValue> {
    js(demo::complexity(latent, hidden, conditional_layers, gru_density, fc_density)).map(|r| r.to_key_value())
}
