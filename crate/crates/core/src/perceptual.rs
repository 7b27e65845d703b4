//! Linear prediction from cepstral features and the perceptual weighting
//! filter `W(z) = A(z/γ1) / (1 − γ2 z⁻¹)` with its exact inverse.
//!
//! Prediction polynomials use the convention `A(z) = 1 − Σ_{k=1}^{16} a_k z⁻ᵏ`.

use std::f64::consts::PI;

use crate::dsp;
use crate::error::{dims_err, Error, Result};
use crate::features::{self, ENERGY_FLOOR, FRAME_SIZE, NB_BANDS, SPECTRUM_BINS, WINDOW_SIZE};
use crate::signal::{Domain, SignalBuffer, SAMPLE_RATE};

pub const LPC_ORDER: usize = 16;
/// White-noise correction added to lag 0, relative.
pub const NOISE_FLOOR: f64 = 1e-4;
/// Bandwidth of the Gaussian lag window in Hz.
pub const LAG_WINDOW_HZ: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpcCoeffs {
    pub a: [f32; LPC_ORDER],
}

impl Default for LpcCoeffs {
    fn default() -> Self {
        Self { a: [0.0; LPC_ORDER] }
    }
}

impl LpcCoeffs {
    /// Magnitude of `1/A(e^{jω})` at `hz`.
    pub fn synthesis_gain(&self, hz: f64) -> f64 {
        let w = 2.0 * PI * hz / SAMPLE_RATE as f64;
        let (mut re, mut im) = (1.0, 0.0);
        for (k, &a) in self.a.iter().enumerate() {
            let ph = w * (k + 1) as f64;
            re -= a as f64 * ph.cos();
            im += a as f64 * ph.sin();
        }
        1.0 / (re * re + im * im).sqrt()
    }

    /// Coefficients of `A(z/γ)`: `a_k γᵏ`.
    pub fn bandwidth_expanded(&self, gamma: f32) -> [f32; LPC_ORDER] {
        let mut out = [0.0; LPC_ORDER];
        let mut g = gamma as f64;
        for (o, &a) in out.iter_mut().zip(&self.a) {
            *o = (a as f64 * g) as f32;
            g *= gamma as f64;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightingParams {
    pub gamma1: f32,
    pub gamma2: f32,
}

impl Default for WeightingParams {
    fn default() -> Self {
        Self {
            gamma1: 0.92,
            gamma2: 0.85,
        }
    }
}

impl WeightingParams {
    pub fn new(gamma1: f32, gamma2: f32) -> Result<Self> {
        if !(0.0 < gamma2 && gamma2 < gamma1 && gamma1 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "weighting requires 0 < gamma2 < gamma1 < 1, got gamma1={gamma1}, gamma2={gamma2}"
            )));
        }
        Ok(Self { gamma1, gamma2 })
    }

    fn check_stable(&self) -> Result<()> {
        for g in [self.gamma1, self.gamma2] {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::InvalidArgument(format!("gamma {g} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Magnitude of `W(e^{jω})` at `hz`.
pub fn weighting_response(lpc: &LpcCoeffs, p: &WeightingParams, hz: f64) -> f64 {
    let w = 2.0 * PI * hz / SAMPLE_RATE as f64;
    let (mut re, mut im) = (1.0, 0.0);
    for (k, &c) in lpc.bandwidth_expanded(p.gamma1).iter().enumerate() {
        let ph = w * (k + 1) as f64;
        re -= c as f64 * ph.cos();
        im += c as f64 * ph.sin();
    }
    let (dre, dim) = (1.0 - p.gamma2 as f64 * w.cos(), p.gamma2 as f64 * w.sin());
    ((re * re + im * im) / (dre * dre + dim * dim)).sqrt()
}

/// Levinson–Durbin recursion on autocorrelation `r[0..=order]`.
///
/// Returns the predictor `a` (convention `A(z) = 1 − Σ a_k z⁻ᵏ`) and the final
/// prediction error. Stops early, keeping the coefficients found so far, if
/// the error becomes non-positive.
pub fn levinson(r: &[f64], order: usize) -> (Vec<f64>, f64) {
    let mut a = vec![0.0; order];
    let mut err = r[0];
    if err <= 0.0 {
        return (a, 0.0);
    }
    let mut tmp = vec![0.0; order];
    for i in 0..order {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        let k = acc / err;
        tmp[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = tmp[j] - k * tmp[i - 1 - j];
        }
        a[i] = k;
        let next = err * (1.0 - k * k);
        if next <= 0.0 {
            break;
        }
        err = next;
    }
    (a, err)
}

/// Autocorrelation lags `0..=order` of a real signal whose one-sided power
/// spectrum on the [`WINDOW_SIZE`]-point grid is `power`.
pub fn autocorrelation_from_power(power: &[f64], order: usize) -> Vec<f64> {
    let n = WINDOW_SIZE as f64;
    let last = power.len() - 1;
    (0..=order)
        .map(|k| {
            let mut acc = power[0] + power[last] * if k % 2 == 0 { 1.0 } else { -1.0 };
            for (b, &p) in power.iter().enumerate().take(last).skip(1) {
                acc += 2.0 * p * (2.0 * PI * (b * k) as f64 / n).cos();
            }
            acc / n
        })
        .collect()
}

fn lag_window(k: usize) -> f64 {
    let x = 2.0 * PI * LAG_WINDOW_HZ * k as f64 / SAMPLE_RATE as f64;
    (-0.5 * x * x).exp()
}

/// Order-16 LPC implied by a BFCC vector.
///
/// The cepstrum is mapped back to band energies, interpolated onto a linear
/// frequency grid, turned into an autocorrelation, lag-windowed with a noise
/// floor and solved with Levinson–Durbin.
pub fn lpc_from_bfcc(bfcc: &[f32; NB_BANDS]) -> Result<LpcCoeffs> {
    if bfcc.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lpc_from_bfcc"));
    }
    let ceps: Vec<f64> = bfcc.iter().map(|&v| v as f64).collect();
    let logs = dsp::idct2(&ceps);
    let mut energies = [0.0; NB_BANDS];
    for (e, l) in energies.iter_mut().zip(&logs) {
        *e = 10f64.powf(*l);
    }
    if energies.iter().all(|&e| e <= ENERGY_FLOOR * (1.0 + 1e-6)) {
        return Ok(LpcCoeffs::default());
    }
    let power = features::interpolate_bands(&energies);
    debug_assert_eq!(power.len(), SPECTRUM_BINS);
    let mut r = autocorrelation_from_power(&power, LPC_ORDER);
    for (k, v) in r.iter_mut().enumerate() {
        *v *= lag_window(k);
    }
    r[0] *= 1.0 + NOISE_FLOOR;
    let (a, _) = levinson(&r, LPC_ORDER);
    let mut out = LpcCoeffs::default();
    for (o, v) in out.a.iter_mut().zip(a) {
        *o = v as f32;
    }
    Ok(out)
}

/// Filter memory of [`weighting_filter`], carried across frames.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WeightingState {
    /// Past inputs, most recent first.
    input: [f64; LPC_ORDER],
    output: f64,
}

/// Filter memory of [`inverse_weighting`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InverseWeightingState {
    input: f64,
    /// Past outputs, most recent first.
    output: [f64; LPC_ORDER],
}

impl WeightingState {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

impl InverseWeightingState {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

fn push_history(hist: &mut [f64; LPC_ORDER], v: f64) {
    hist.copy_within(0..LPC_ORDER - 1, 1);
    hist[0] = v;
}

/// Applies `W(z)` to one frame in place.
pub fn weighting_frame(x: &mut [f32], lpc: &LpcCoeffs, p: &WeightingParams, state: &mut WeightingState) {
    let fir = lpc.bandwidth_expanded(p.gamma1);
    for v in x {
        let input = *v as f64;
        let mut u = input;
        for (c, h) in fir.iter().zip(&state.input) {
            u -= *c as f64 * h;
        }
        push_history(&mut state.input, input);
        let y = u + p.gamma2 as f64 * state.output;
        state.output = y;
        *v = y as f32;
    }
}

/// Applies `W⁻¹(z)` to one frame in place.
pub fn inverse_weighting_frame(
    y: &mut [f32],
    lpc: &LpcCoeffs,
    p: &WeightingParams,
    state: &mut InverseWeightingState,
) {
    let fir = lpc.bandwidth_expanded(p.gamma1);
    for v in y {
        let input = *v as f64;
        let mut x = input - p.gamma2 as f64 * state.input;
        state.input = input;
        for (c, h) in fir.iter().zip(&state.output) {
            x += *c as f64 * h;
        }
        push_history(&mut state.output, x);
        *v = x as f32;
    }
}

fn check_frames(len: usize, lpc: &[LpcCoeffs]) -> Result<()> {
    let frames = len.div_ceil(FRAME_SIZE);
    if frames != lpc.len() {
        return Err(dims_err(
            "perceptual filter",
            format!("{frames} LPC frames for {len} samples"),
            format!("{} LPC frames", lpc.len()),
        ));
    }
    Ok(())
}

/// Perceptual weighting of a pre-emphasized signal, one LPC set per 10 ms.
pub fn weighting_filter(x: &SignalBuffer, lpc: &[LpcCoeffs], p: &WeightingParams) -> Result<SignalBuffer> {
    x.expect_domain(Domain::PreEmphasized)?;
    p.check_stable()?;
    check_frames(x.len(), lpc)?;
    let mut samples = x.samples.clone();
    let mut state = WeightingState::default();
    for (frame, coeffs) in samples.chunks_mut(FRAME_SIZE).zip(lpc) {
        weighting_frame(frame, coeffs, p, &mut state);
    }
    Ok(SignalBuffer::new(samples, x.sample_rate, Domain::Perceptual))
}

/// Exact inverse of [`weighting_filter`]; returns a pre-emphasized signal.
pub fn inverse_weighting(y: &SignalBuffer, lpc: &[LpcCoeffs], p: &WeightingParams) -> Result<SignalBuffer> {
    y.expect_domain(Domain::Perceptual)?;
    p.check_stable()?;
    check_frames(y.len(), lpc)?;
    let mut samples = y.samples.clone();
    let mut state = InverseWeightingState::default();
    for (frame, coeffs) in samples.chunks_mut(FRAME_SIZE).zip(lpc) {
        inverse_weighting_frame(frame, coeffs, p, &mut state);
    }
    Ok(SignalBuffer::new(samples, y.sample_rate, Domain::PreEmphasized))
}

pub fn lpc_sequence(frames: &[crate::features::FeatureFrame]) -> Result<Vec<LpcCoeffs>> {
    frames.iter().map(|f| lpc_from_bfcc(&f.bfcc)).collect()
}
