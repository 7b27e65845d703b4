//! Framewise generator: conditioning encoder, GRU stack, framewise
//! convolution stack and frame regression, with offline and streaming
//! synthesis paths that produce bit-identical output.
//!
//! Every tensor is a bias-free matrix. Activations are organized as
//! `[sequence, frame]`: one vector per 10 ms step. The waveform is the
//! concatenation of the 160-sample output frames.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{EmphasisState, FeatureFrame, NB_BANDS, PITCH_LEVELS, PREEMPHASIS};
use crate::perceptual::{self, InverseWeightingState, LpcCoeffs, WeightingParams};
use crate::signal::{Domain, SignalBuffer, SAMPLE_RATE};
use crate::tensor::{glu_into, gru_step_into, leaky_relu, DenseMatrix, GruParams, GruScratch, Matrix, DEFAULT_LEAKY_SLOPE};
use crate::weights::ModelWeights;

/// Kernel width, in frames, of both encoder convolutions.
pub const ENCODER_KERNEL: usize = 3;
/// BFCCs plus pitch correlation.
pub const FEATURE_INPUTS: usize = NB_BANDS + 1;

/// Tensor names used in weight files.
pub mod names {
    pub const PITCH_EMBED: &str = "enc.pitch_embed";
    pub const CONV1: &str = "enc.conv1";
    pub const CONV2: &str = "enc.conv2";
    pub const PROJ_FC: &str = "proj.fc";
    pub const PROJ_GLU: &str = "proj.glu";
    pub const OUT_FC: &str = "out.fc";
    pub const GRU_PARTS: [&str; 6] = ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h"];

    /// `index` starts at 1.
    pub fn gru(index: usize, part: &str) -> String {
        format!("gru{index}.{part}")
    }

    pub fn gru_glu(index: usize) -> String {
        format!("gru{index}.glu")
    }

    /// Layer 0 is the non-causal layer; 1.. are conditional.
    pub fn fwc_fc(layer: usize) -> String {
        format!("fwc{layer}.fc")
    }

    pub fn fwc_glu(layer: usize) -> String {
        format!("fwc{layer}.glu")
    }

    pub fn is_recurrent(name: &str) -> bool {
        name.starts_with("gru") && (name.ends_with(".u_z") || name.ends_with(".u_r") || name.ends_with(".u_h"))
    }

    pub fn is_gru_matrix(name: &str) -> bool {
        name.starts_with("gru") && !name.ends_with(".glu")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub cond_dim: usize,
    pub pitch_embed_dim: usize,
    pub conv1_channels: usize,
    pub gru_count: usize,
    pub gru_hidden: usize,
    pub latent_dim: usize,
    pub noncausal_kernel: usize,
    pub conditional_layers: usize,
    pub conditional_kernel: usize,
    pub frame_out: usize,
}

impl GeneratorConfig {
    /// 7.77 M parameters, about 1.5 GFLOPS dense.
    pub fn reference() -> Self {
        Self {
            cond_dim: 256,
            pitch_embed_dim: 128,
            conv1_channels: 128,
            gru_count: 5,
            gru_hidden: 192,
            latent_dim: 512,
            noncausal_kernel: 3,
            conditional_layers: 4,
            conditional_kernel: 2,
            frame_out: 160,
        }
    }

    /// Larger GRUs and ten framewise layers in total.
    pub fn high_complexity() -> Self {
        Self {
            gru_hidden: 320,
            conditional_layers: 9,
            ..Self::reference()
        }
    }

    /// Small model for tests and demos.
    pub fn tiny(latent_dim: usize, gru_hidden: usize, conditional_layers: usize) -> Self {
        Self {
            cond_dim: 8,
            pitch_embed_dim: 4,
            conv1_channels: 4,
            gru_count: 5,
            gru_hidden,
            latent_dim,
            noncausal_kernel: 3,
            conditional_layers,
            conditional_kernel: 2,
            frame_out: 160,
        }
    }

    pub fn framewise_layers(&self) -> usize {
        1 + self.conditional_layers
    }

    /// Input width of framewise layer `layer`'s fully-connected map.
    pub fn fwc_input_width(&self, layer: usize) -> usize {
        if layer == 0 {
            self.noncausal_kernel * self.latent_dim
        } else {
            self.conditional_kernel * self.latent_dim + self.latent_dim
        }
    }

    pub fn projection_input_width(&self) -> usize {
        self.gru_count * self.gru_hidden + self.cond_dim
    }

    fn validate(&self) -> Result<()> {
        if self.noncausal_kernel != 3 || self.conditional_kernel != 2 {
            return Err(Error::InvalidArgument(
                "framewise kernels must be 3 frames (non-causal, one look-ahead) and 2 frames (causal)".into(),
            ));
        }
        if self.gru_count == 0 || self.frame_out == 0 {
            return Err(Error::InvalidArgument("empty generator configuration".into()));
        }
        Ok(())
    }

    /// Expected `(name, rows, cols)` of every tensor, in network order.
    pub fn expected_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut v = vec![
            (names::PITCH_EMBED.to_string(), PITCH_LEVELS, self.pitch_embed_dim),
            (names::CONV1.to_string(), self.conv1_channels, ENCODER_KERNEL * FEATURE_INPUTS),
            (
                names::CONV2.to_string(),
                self.cond_dim,
                ENCODER_KERNEL * (self.pitch_embed_dim + self.conv1_channels),
            ),
        ];
        for j in 1..=self.gru_count {
            let input = if j == 1 { self.cond_dim } else { self.gru_hidden };
            for part in names::GRU_PARTS {
                let cols = if part.starts_with('w') { input } else { self.gru_hidden };
                v.push((names::gru(j, part), self.gru_hidden, cols));
            }
            v.push((names::gru_glu(j), self.gru_hidden, self.gru_hidden));
        }
        v.push((names::PROJ_FC.into(), self.latent_dim, self.projection_input_width()));
        v.push((names::PROJ_GLU.into(), self.latent_dim, self.latent_dim));
        for k in 0..self.framewise_layers() {
            v.push((names::fwc_fc(k), self.latent_dim, self.fwc_input_width(k)));
            v.push((names::fwc_glu(k), self.latent_dim, self.latent_dim));
        }
        v.push((names::OUT_FC.into(), self.frame_out, self.latent_dim));
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.expected_shapes().iter().map(|(_, r, c)| r * c).sum()
    }

    /// Reads the configuration implied by tensor shapes. The result still has
    /// to pass [`audit_shapes`].
    pub fn infer(weights: &ModelWeights) -> Result<Self> {
        let dims = |name: &str| weights.require(name).map(|m| (m.rows(), m.cols()));
        let (_, pitch_embed_dim) = dims(names::PITCH_EMBED)?;
        let (conv1_channels, _) = dims(names::CONV1)?;
        let (cond_dim, _) = dims(names::CONV2)?;
        let (gru_hidden, _) = dims(&names::gru(1, "u_z"))?;
        let gru_count = (1..).take_while(|&j| weights.contains(&names::gru(j, "u_z"))).count();
        let (latent_dim, _) = dims(names::PROJ_FC)?;
        let layers = (0..).take_while(|&k| weights.contains(&names::fwc_fc(k))).count();
        if layers == 0 {
            return Err(Error::UnknownTensor(names::fwc_fc(0)));
        }
        let (frame_out, _) = dims(names::OUT_FC)?;
        Ok(Self {
            cond_dim,
            pitch_embed_dim,
            conv1_channels,
            gru_count,
            gru_hidden,
            latent_dim,
            noncausal_kernel: 3,
            conditional_layers: layers - 1,
            conditional_kernel: 2,
            frame_out,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub params: usize,
    pub active_params: usize,
}

/// Shape section of the complexity report.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeReport {
    pub layers: Vec<LayerShape>,
    pub total_params: usize,
    pub active_params: usize,
}

/// Checks every tensor against `cfg` and lists per-layer parameter counts.
/// The first mismatch is reported with expected and actual dimensions.
pub fn audit_shapes(weights: &ModelWeights, cfg: &GeneratorConfig) -> Result<ShapeReport> {
    cfg.validate()?;
    let expected = cfg.expected_shapes();
    let mut layers = Vec::with_capacity(expected.len());
    for (name, rows, cols) in &expected {
        let m = weights.get(name).ok_or_else(|| Error::Shape {
            tensor: name.clone(),
            expected: format!("{rows}x{cols}"),
            actual: "missing".into(),
        })?;
        if m.rows() != *rows || m.cols() != *cols {
            return Err(Error::Shape {
                tensor: name.clone(),
                expected: format!("{rows}x{cols}"),
                actual: format!("{}x{}", m.rows(), m.cols()),
            });
        }
        layers.push(LayerShape {
            name: name.clone(),
            rows: *rows,
            cols: *cols,
            params: m.total_params(),
            active_params: m.active_params(),
        });
    }
    if let Some(extra) = weights.names().find(|n| !expected.iter().any(|(e, _, _)| e == n)) {
        return Err(Error::UnknownTensor(extra.to_string()));
    }
    Ok(ShapeReport {
        total_params: layers.iter().map(|l| l.params).sum(),
        active_params: layers.iter().map(|l| l.active_params).sum(),
        layers,
    })
}

/// Uniform random weights with variance `gain² / cols` per entry.
pub fn random_weights(cfg: &GeneratorConfig, seed: u64, gain: f32) -> ModelWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ModelWeights::new();
    for (name, rows, cols) in cfg.expected_shapes() {
        let bound = gain * (3.0 / cols as f32).sqrt();
        w.insert(name, DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound)));
    }
    w
}

pub fn zero_weights(cfg: &GeneratorConfig) -> ModelWeights {
    let mut w = ModelWeights::new();
    for (name, rows, cols) in cfg.expected_shapes() {
        w.insert(name, DenseMatrix::zeros(rows, cols));
    }
    w
}

/// Replaces every GLU gate with zeros, so each gate multiplies by 0.5.
pub fn zero_glu_gates(weights: &mut ModelWeights) {
    for (name, m) in weights.iter_mut() {
        if name.ends_with(".glu") {
            *m = DenseMatrix::zeros(m.rows(), m.cols()).into();
        }
    }
}

/// One framewise convolution: a single fully-connected map over `kernel`
/// concatenated frames (plus a conditioning frame), GLU-activated.
#[derive(Debug, Clone)]
pub struct FrameConv {
    pub fc: Matrix,
    pub glu: Matrix,
    pub kernel: usize,
    pub conditional: bool,
}

impl FrameConv {
    pub fn input_width(&self) -> usize {
        self.fc.cols()
    }

    pub fn forward(&self, inputs: &[&[f32]], cond: Option<&[f32]>) -> Result<Vec<f32>> {
        if inputs.len() != self.kernel {
            return Err(crate::error::dims_err(
                "framewise_conv",
                format!("{} input frames", self.kernel),
                format!("{} input frames", inputs.len()),
            ));
        }
        match (self.conditional, cond.is_some()) {
            (false, true) => {
                return Err(Error::InvalidArgument(
                    "conditioning frame passed to a non-conditional framewise layer".into(),
                ))
            }
            (true, false) => {
                return Err(Error::InvalidArgument(
                    "conditional framewise layer requires a conditioning frame".into(),
                ))
            }
            _ => {}
        }
        let mut x = Vec::with_capacity(self.fc.cols());
        for f in inputs {
            x.extend_from_slice(f);
        }
        if let Some(c) = cond {
            x.extend_from_slice(c);
        }
        let pre = self.fc.gemv(&x)?;
        let mut out = vec![0.0; pre.len()];
        glu_into(&pre, &self.glu, &mut out)?;
        Ok(out)
    }
}

/// Free-function form of [`FrameConv::forward`].
pub fn framewise_conv(layer: &FrameConv, inputs: &[&[f32]], cond: Option<&[f32]>) -> Result<Vec<f32>> {
    layer.forward(inputs, cond)
}

#[derive(Debug, Clone)]
struct GruLayer {
    params: GruParams,
    glu: Matrix,
}

/// Generator with its weights resolved into layers.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GeneratorConfig,
    embed: DenseMatrix,
    conv1: Matrix,
    conv2: Matrix,
    grus: Vec<GruLayer>,
    proj_fc: Matrix,
    proj_glu: Matrix,
    fwc: Vec<FrameConv>,
    out: Matrix,
}

/// Encoder convolution histories: the two previous input frames of each.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    conv1_hist: [Vec<f32>; 2],
    conv2_hist: [Vec<f32>; 2],
}

/// Everything the streaming path carries between frames. Its size depends
/// only on the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState {
    pub encoder: EncoderState,
    pub gru_hidden: Vec<Vec<f32>>,
    /// Latent of the frame before the pending one (zero at the start).
    pub prev_latent: Vec<f32>,
    /// Latent awaiting its look-ahead frame.
    pub pending_latent: Option<Vec<f32>>,
    /// Previous output of each framewise layer feeding a conditional layer.
    pub fwc_prev: Vec<Vec<f32>>,
}

impl GeneratorState {
    pub fn new(cfg: &GeneratorConfig) -> Self {
        let mid = cfg.pitch_embed_dim + cfg.conv1_channels;
        Self {
            encoder: EncoderState {
                conv1_hist: [vec![0.0; FEATURE_INPUTS], vec![0.0; FEATURE_INPUTS]],
                conv2_hist: [vec![0.0; mid], vec![0.0; mid]],
            },
            gru_hidden: vec![vec![0.0; cfg.gru_hidden]; cfg.gru_count],
            prev_latent: vec![0.0; cfg.latent_dim],
            pending_latent: None,
            fwc_prev: vec![vec![0.0; cfg.latent_dim]; cfg.conditional_layers],
        }
    }

    pub fn reset(&mut self) {
        for v in self
            .encoder
            .conv1_hist
            .iter_mut()
            .chain(self.encoder.conv2_hist.iter_mut())
            .chain(self.gru_hidden.iter_mut())
            .chain(self.fwc_prev.iter_mut())
            .chain(std::iter::once(&mut self.prev_latent))
        {
            v.fill(0.0);
        }
        self.pending_latent = None;
    }

    /// Number of stored reals (pending slot counted at full size).
    pub fn footprint(&self) -> usize {
        let e = &self.encoder;
        e.conv1_hist.iter().chain(&e.conv2_hist).map(Vec::len).sum::<usize>()
            + self.gru_hidden.iter().map(Vec::len).sum::<usize>()
            + 2 * self.prev_latent.len()
            + self.fwc_prev.iter().map(Vec::len).sum::<usize>()
    }
}

impl Generator {
    pub fn new(weights: &ModelWeights, cfg: &GeneratorConfig) -> Result<Self> {
        audit_shapes(weights, cfg)?;
        let get = |name: &str| weights.require(name).cloned();
        let mut grus = Vec::with_capacity(cfg.gru_count);
        for j in 1..=cfg.gru_count {
            let part = |p: &str| get(&names::gru(j, p));
            grus.push(GruLayer {
                params: GruParams::new(part("w_z")?, part("w_r")?, part("w_h")?, part("u_z")?, part("u_r")?, part("u_h")?)?,
                glu: get(&names::gru_glu(j))?,
            });
        }
        let fwc = (0..cfg.framewise_layers())
            .map(|k| {
                Ok(FrameConv {
                    fc: get(&names::fwc_fc(k))?,
                    glu: get(&names::fwc_glu(k))?,
                    kernel: if k == 0 { cfg.noncausal_kernel } else { cfg.conditional_kernel },
                    conditional: k > 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            embed: get(names::PITCH_EMBED)?.to_dense(),
            conv1: get(names::CONV1)?,
            conv2: get(names::CONV2)?,
            grus,
            proj_fc: get(names::PROJ_FC)?,
            proj_glu: get(names::PROJ_GLU)?,
            fwc,
            out: get(names::OUT_FC)?,
        })
    }

    /// Builds from weights alone, inferring the configuration.
    pub fn from_weights(weights: &ModelWeights) -> Result<Self> {
        Self::new(weights, &GeneratorConfig::infer(weights)?)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn framewise_layers(&self) -> &[FrameConv] {
        &self.fwc
    }

    pub fn new_state(&self) -> GeneratorState {
        GeneratorState::new(&self.cfg)
    }

    /// Conditioning vector for one feature frame; convolutions are causal
    /// over the current and two previous frames held in `state`.
    pub fn encode_conditioning(&self, f: &FeatureFrame, state: &mut EncoderState) -> Result<Vec<f32>> {
        if !f.bfcc.iter().all(|v| v.is_finite()) || !f.pitch_correlation.is_finite() {
            return Err(Error::NonFinite("encode_conditioning"));
        }
        let mut frame = Vec::with_capacity(FEATURE_INPUTS);
        frame.extend_from_slice(&f.bfcc);
        frame.push(f.pitch_correlation);

        let conv1_in = [&state.conv1_hist[0][..], &state.conv1_hist[1][..], &frame[..]].concat();
        let c1 = self.conv1.gemv(&conv1_in)?;

        let mut mid = Vec::with_capacity(self.cfg.pitch_embed_dim + self.cfg.conv1_channels);
        mid.extend_from_slice(self.embed.row(f.pitch_index as usize));
        mid.extend_from_slice(&c1);

        let conv2_in = [&state.conv2_hist[0][..], &state.conv2_hist[1][..], &mid[..]].concat();
        let mut cond = self.conv2.gemv(&conv2_in)?;
        for v in &mut cond {
            *v = leaky_relu(*v, DEFAULT_LEAKY_SLOPE);
        }

        state.conv1_hist.rotate_left(1);
        state.conv1_hist[1] = frame;
        state.conv2_hist.rotate_left(1);
        state.conv2_hist[1] = mid;
        Ok(cond)
    }

    /// Encoder and GRU stack for one frame: returns the projection input
    /// `[g1, …, g5, cond]`, where `g_j` is the GLU-activated output of GRU `j`.
    fn recurrent_step(&self, f: &FeatureFrame, state: &mut GeneratorState) -> Result<Vec<f32>> {
        let cond = self.encode_conditioning(f, &mut state.encoder)?;
        let mut proj_in = Vec::with_capacity(self.cfg.projection_input_width());
        let mut scratch = GruScratch::default();
        let mut gated = vec![0.0; self.cfg.gru_hidden];
        for (j, layer) in self.grus.iter().enumerate() {
            let input: &[f32] = if j == 0 { &cond } else { &proj_in[(j - 1) * self.cfg.gru_hidden..] };
            let input = input.to_vec();
            gru_step_into(&layer.params, &mut state.gru_hidden[j], &input, &mut scratch)?;
            glu_into(&state.gru_hidden[j], &layer.glu, &mut gated)?;
            proj_in.extend_from_slice(&gated);
        }
        proj_in.extend_from_slice(&cond);
        Ok(proj_in)
    }

    fn project(&self, proj_in: &[f32]) -> Result<Vec<f32>> {
        let pre = self.proj_fc.gemv(proj_in)?;
        let mut latent = vec![0.0; pre.len()];
        glu_into(&pre, &self.proj_glu, &mut latent)?;
        Ok(latent)
    }

    /// Projection inputs for a whole sequence, starting from a reset state.
    pub fn projection_inputs(&self, features: &[FeatureFrame]) -> Result<Vec<Vec<f32>>> {
        let mut state = self.new_state();
        features.iter().map(|f| self.recurrent_step(f, &mut state)).collect()
    }

    /// Runs projection, framewise stack and output layer over a sequence,
    /// layer by layer, and flattens the frames.
    pub fn synthesize_from_projection_inputs(&self, proj_inputs: &[Vec<f32>]) -> Result<Vec<f32>> {
        let n = proj_inputs.len();
        let zero = vec![0.0; self.cfg.latent_dim];
        let latents = proj_inputs.iter().map(|p| self.project(p)).collect::<Result<Vec<_>>>()?;

        let mut acts = Vec::with_capacity(n);
        for i in 0..n {
            let prev = if i > 0 { &latents[i - 1] } else { &zero };
            let next = latents.get(i + 1).unwrap_or(&zero);
            acts.push(self.fwc[0].forward(&[prev, &latents[i], next], None)?);
        }
        for layer in &self.fwc[1..] {
            let mut next_acts = Vec::with_capacity(n);
            for i in 0..n {
                let prev = if i > 0 { &acts[i - 1] } else { &zero };
                next_acts.push(layer.forward(&[prev, &acts[i]], Some(&latents[i]))?);
            }
            acts = next_acts;
        }
        let mut wave = Vec::with_capacity(n * self.cfg.frame_out);
        for a in &acts {
            wave.extend(self.out.gemv(a)?);
        }
        Ok(wave)
    }

    /// Perceptual-domain waveform for a feature sequence.
    pub fn synthesize_offline(&self, features: &[FeatureFrame]) -> Result<SignalBuffer> {
        if features.is_empty() {
            return Err(Error::InvalidArgument("at least one feature frame is required".into()));
        }
        let wave = self.synthesize_from_projection_inputs(&self.projection_inputs(features)?)?;
        Ok(SignalBuffer::new(wave, SAMPLE_RATE, Domain::Perceptual))
    }

    /// Framewise stack and output layer for the frame whose latent is
    /// `current`, given its neighbours. Updates the conditional-layer history.
    fn emit_frame(&self, prev: &[f32], current: &[f32], next: &[f32], fwc_prev: &mut [Vec<f32>]) -> Result<Vec<f32>> {
        let mut act = self.fwc[0].forward(&[prev, current, next], None)?;
        for (layer, prev_in) in self.fwc[1..].iter().zip(fwc_prev.iter_mut()) {
            let out = layer.forward(&[prev_in, &act], Some(current))?;
            *prev_in = std::mem::replace(&mut act, out);
        }
        self.out.gemv(&act)
    }
}

/// Streaming front end: one feature frame in, one waveform frame out, one
/// frame behind.
#[derive(Debug, Clone)]
pub struct StreamingEngine {
    generator: Arc<Generator>,
    state: GeneratorState,
    flushed: bool,
}

impl StreamingEngine {
    pub fn new(generator: Arc<Generator>) -> Self {
        let state = generator.new_state();
        Self {
            generator,
            state,
            flushed: false,
        }
    }

    pub fn state(&self) -> &GeneratorState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state.reset();
        self.flushed = false;
    }

    /// Returns nothing for the first frame; afterwards the perceptual-domain
    /// frame for the previous feature frame.
    pub fn push_frame(&mut self, f: &FeatureFrame) -> Result<Option<Vec<f32>>> {
        if self.flushed {
            return Err(Error::Flushed);
        }
        let g = &self.generator;
        let proj_in = g.recurrent_step(f, &mut self.state)?;
        let latent = g.project(&proj_in)?;
        match self.state.pending_latent.replace(latent) {
            None => Ok(None),
            Some(current) => {
                let st = &mut self.state;
                let next = st.pending_latent.as_ref().expect("just stored");
                let frame = g.emit_frame(&st.prev_latent, &current, next, &mut st.fwc_prev)?;
                st.prev_latent = current;
                Ok(Some(frame))
            }
        }
    }

    /// Emits the last frame with a zero look-ahead frame. No further pushes
    /// are accepted until [`reset`](Self::reset).
    pub fn flush(&mut self) -> Result<Option<Vec<f32>>> {
        if self.flushed {
            return Err(Error::Flushed);
        }
        self.flushed = true;
        let g = &self.generator;
        let st = &mut self.state;
        match st.pending_latent.take() {
            None => Ok(None),
            Some(current) => {
                let zero = vec![0.0; g.cfg.latent_dim];
                let frame = g.emit_frame(&st.prev_latent, &current, &zero, &mut st.fwc_prev)?;
                st.prev_latent = current;
                Ok(Some(frame))
            }
        }
    }
}

pub fn synthesize_offline(features: &[FeatureFrame], weights: &ModelWeights, cfg: &GeneratorConfig) -> Result<SignalBuffer> {
    Generator::new(weights, cfg)?.synthesize_offline(features)
}

/// Runs the streaming path over a sequence and concatenates its output.
pub fn synthesize_streaming(generator: Arc<Generator>, features: &[FeatureFrame]) -> Result<SignalBuffer> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("at least one feature frame is required".into()));
    }
    let mut engine = StreamingEngine::new(generator);
    let mut wave = Vec::new();
    for f in features {
        if let Some(frame) = engine.push_frame(f)? {
            wave.extend(frame);
        }
    }
    if let Some(frame) = engine.flush()? {
        wave.extend(frame);
    }
    Ok(SignalBuffer::new(wave, SAMPLE_RATE, Domain::Perceptual))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Speech {
    pub signal: SignalBuffer,
    /// Samples clamped to [−1, 1].
    pub clipped: usize,
}

fn clamp_count(samples: &mut [f32]) -> usize {
    let mut clipped = 0;
    for s in samples {
        if s.abs() > 1.0 {
            clipped += 1;
            *s = s.clamp(-1.0, 1.0);
        }
    }
    clipped
}

/// Generator, inverse perceptual weighting with LPC re-derived from the
/// input BFCCs, then de-emphasis.
pub fn synthesize_to_speech(features: &[FeatureFrame], weights: &ModelWeights, cfg: &GeneratorConfig) -> Result<Speech> {
    let g = Generator::new(weights, cfg)?;
    let perceptual_sig = g.synthesize_offline(features)?;
    perceptual_to_speech(&perceptual_sig, features)
}

pub fn perceptual_to_speech(perceptual_sig: &SignalBuffer, features: &[FeatureFrame]) -> Result<Speech> {
    let lpc = perceptual::lpc_sequence(features)?;
    let pre = perceptual::inverse_weighting(perceptual_sig, &lpc, &WeightingParams::default())?;
    let mut signal = crate::features::de_emphasis(&pre, PREEMPHASIS)?;
    let clipped = clamp_count(&mut signal.samples);
    Ok(Speech { signal, clipped })
}

/// Streaming counterpart of [`synthesize_to_speech`], frame by frame with
/// carried filter state.
#[derive(Debug, Clone)]
pub struct SpeechStream {
    engine: StreamingEngine,
    weighting: WeightingParams,
    inverse: InverseWeightingState,
    emphasis: EmphasisState,
    pending_lpc: Option<LpcCoeffs>,
    pub clipped: usize,
}

impl SpeechStream {
    pub fn new(generator: Arc<Generator>) -> Self {
        Self {
            engine: StreamingEngine::new(generator),
            weighting: WeightingParams::default(),
            inverse: InverseWeightingState::default(),
            emphasis: EmphasisState::default(),
            pending_lpc: None,
            clipped: 0,
        }
    }

    fn finish(&mut self, mut frame: Vec<f32>, lpc: LpcCoeffs) -> Vec<f32> {
        perceptual::inverse_weighting_frame(&mut frame, &lpc, &self.weighting, &mut self.inverse);
        crate::features::de_emphasis_in_place(&mut frame, PREEMPHASIS, &mut self.emphasis);
        self.clipped += clamp_count(&mut frame);
        frame
    }

    pub fn push_frame(&mut self, f: &FeatureFrame) -> Result<Option<Vec<f32>>> {
        let lpc = perceptual::lpc_from_bfcc(&f.bfcc)?;
        let out = self.engine.push_frame(f)?;
        let prev_lpc = self.pending_lpc.replace(lpc);
        Ok(match (out, prev_lpc) {
            (Some(frame), Some(l)) => Some(self.finish(frame, l)),
            _ => None,
        })
    }

    pub fn flush(&mut self) -> Result<Option<Vec<f32>>> {
        let out = self.engine.flush()?;
        Ok(match (out, self.pending_lpc.take()) {
            (Some(frame), Some(l)) => Some(self.finish(frame, l)),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(n: usize, seed: u64) -> Vec<FeatureFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut bfcc = [0.0; NB_BANDS];
                for v in &mut bfcc {
                    *v = rng.gen_range(-2.0..2.0);
                }
                FeatureFrame::new(bfcc, rng.gen_range(32..=288), rng.gen_range(-1.0..1.0), i)
            })
            .collect()
    }

    #[test]
    fn reference_parameter_budget() {
        let cfg = GeneratorConfig::reference();
        let n = cfg.parameter_count();
        assert_eq!(n, 7_773_312);
        assert!((n as f64 - 7.8e6).abs() / 7.8e6 < 0.05);
        assert_eq!(cfg.fwc_input_width(0), 1536);
        assert_eq!(cfg.fwc_input_width(1), 1536);
    }

    #[test]
    fn audit_accepts_matching_and_rejects_wrong_latent() {
        let cfg = GeneratorConfig::tiny(16, 16, 2);
        let w = random_weights(&cfg, 1, 1.0);
        let report = audit_shapes(&w, &cfg).unwrap();
        assert_eq!(report.total_params, cfg.parameter_count());

        let mut bad = w.clone();
        let width = 3 * 15;
        bad.insert(names::fwc_fc(0), DenseMatrix::zeros(16, width));
        match audit_shapes(&bad, &cfg).unwrap_err() {
            Error::Shape { tensor, expected, actual } => {
                assert_eq!(tensor, "fwc0.fc");
                assert_eq!(expected, "16x48");
                assert_eq!(actual, "16x45");
            }
            e => panic!("{e}"),
        }

        let mut extra = w;
        extra.insert("stray", DenseMatrix::zeros(1, 1));
        assert!(matches!(audit_shapes(&extra, &cfg), Err(Error::UnknownTensor(_))));
    }

    #[test]
    fn infer_recovers_config() {
        let cfg = GeneratorConfig::tiny(8, 4, 3);
        assert_eq!(GeneratorConfig::infer(&zero_weights(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn zero_weights_give_zero_conditioning() {
        let cfg = GeneratorConfig::tiny(8, 4, 1);
        let g = Generator::new(&zero_weights(&cfg), &cfg).unwrap();
        let mut st = g.new_state();
        let c = g.encode_conditioning(&features(1, 2)[0], &mut st.encoder).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
    }

    /// Offline causal convolution over the zero-padded sequence.
    fn conv_oracle(m: &Matrix, seq: &[Vec<f32>], t: usize) -> Vec<f32> {
        let width = seq[0].len();
        let mut x = Vec::new();
        for k in 0..ENCODER_KERNEL {
            let idx = t as isize - (ENCODER_KERNEL - 1 - k) as isize;
            if idx < 0 {
                x.extend(std::iter::repeat_n(0.0, width));
            } else {
                x.extend_from_slice(&seq[idx as usize]);
            }
        }
        m.gemv(&x).unwrap()
    }

    #[test]
    fn encoder_matches_offline_convolution() {
        let cfg = GeneratorConfig::tiny(8, 4, 1);
        let w = random_weights(&cfg, 3, 1.0);
        let g = Generator::new(&w, &cfg).unwrap();
        let feats = features(3, 4);
        let mut st = g.new_state();
        let streamed: Vec<Vec<f32>> = feats.iter().map(|f| g.encode_conditioning(f, &mut st.encoder).unwrap()).collect();

        let inputs: Vec<Vec<f32>> = feats
            .iter()
            .map(|f| {
                let mut v = f.bfcc.to_vec();
                v.push(f.pitch_correlation);
                v
            })
            .collect();
        let conv1 = w.get(names::CONV1).unwrap();
        let embed = w.get(names::PITCH_EMBED).unwrap().to_dense();
        let mids: Vec<Vec<f32>> = (0..3)
            .map(|t| {
                let mut m = embed.row(feats[t].pitch_index as usize).to_vec();
                m.extend(conv_oracle(conv1, &inputs, t));
                m
            })
            .collect();
        let conv2 = w.get(names::CONV2).unwrap();
        for t in 0..3 {
            let expect: Vec<f32> = conv_oracle(conv2, &mids, t)
                .into_iter()
                .map(|v| leaky_relu(v, DEFAULT_LEAKY_SLOPE))
                .collect();
            assert_eq!(streamed[t], expect, "frame {t}");
        }
    }

    #[test]
    fn framewise_conv_contract() {
        let cfg = GeneratorConfig::tiny(8, 4, 1);
        let g = Generator::new(&random_weights(&cfg, 5, 1.0), &cfg).unwrap();
        let (l0, l1) = (&g.framewise_layers()[0], &g.framewise_layers()[1]);
        assert_eq!(l0.input_width(), 24);
        assert_eq!(l1.input_width(), 24);
        let z = vec![0.0; 8];
        assert_eq!(l0.forward(&[&z, &z, &z], None).unwrap(), z);
        assert_eq!(l1.forward(&[&z, &z], Some(&z)).unwrap(), z);
        assert!(l0.forward(&[&z, &z], None).is_err());
        assert!(l0.forward(&[&z, &z, &z], Some(&z)).is_err());
        assert!(l1.forward(&[&z, &z], None).is_err());
    }

    #[test]
    fn output_lengths() {
        let cfg = GeneratorConfig::tiny(8, 4, 2);
        let g = Generator::new(&random_weights(&cfg, 6, 1.0), &cfg).unwrap();
        assert_eq!(g.synthesize_offline(&features(1, 1)).unwrap().len(), 160);
        assert_eq!(g.synthesize_offline(&features(100, 1)).unwrap().len(), 16000);
        assert!(g.synthesize_offline(&[]).is_err());
    }

    #[test]
    fn streaming_latency_and_conservation() {
        let cfg = GeneratorConfig::tiny(8, 4, 2);
        let g = Arc::new(Generator::new(&random_weights(&cfg, 7, 1.0), &cfg).unwrap());
        let feats = features(6, 2);
        let mut e = StreamingEngine::new(g.clone());
        assert!(e.push_frame(&feats[0]).unwrap().is_none());
        let mut n = 0;
        for f in &feats[1..] {
            assert_eq!(e.push_frame(f).unwrap().map(|v| v.len()), Some(160));
            n += 1;
        }
        assert!(e.flush().unwrap().is_some());
        n += 1;
        assert_eq!(n, feats.len());
        assert!(matches!(e.push_frame(&feats[0]), Err(Error::Flushed)));

        e.reset();
        assert_eq!(*e.state(), g.new_state());
        let footprint = e.state().footprint();
        for f in &feats {
            e.push_frame(f).unwrap();
        }
        assert_eq!(e.state().footprint(), footprint);
    }

    #[test]
    fn streaming_equals_offline() {
        let cfg = GeneratorConfig::tiny(8, 4, 3);
        let g = Arc::new(Generator::new(&random_weights(&cfg, 8, 1.0), &cfg).unwrap());
        let feats = features(17, 3);
        let off = g.synthesize_offline(&feats).unwrap();
        let on = synthesize_streaming(g, &feats).unwrap();
        assert_eq!(off.samples, on.samples);
    }

    #[test]
    fn zero_model_speaks_silence() {
        let cfg = GeneratorConfig::tiny(8, 4, 1);
        let speech = synthesize_to_speech(&features(10, 4), &zero_weights(&cfg), &cfg).unwrap();
        assert_eq!(speech.signal.len(), 1600);
        assert_eq!(speech.signal.domain, Domain::Natural);
        assert!(speech.signal.samples.iter().all(|&v| v == 0.0));
        assert_eq!(speech.clipped, 0);
    }

    #[test]
    fn speech_stream_matches_offline_chain() {
        let cfg = GeneratorConfig::tiny(8, 4, 2);
        let w = random_weights(&cfg, 9, 1.0);
        let feats = features(12, 5);
        let offline = synthesize_to_speech(&feats, &w, &cfg).unwrap();
        let mut stream = SpeechStream::new(Arc::new(Generator::new(&w, &cfg).unwrap()));
        let mut out = Vec::new();
        for f in &feats {
            if let Some(fr) = stream.push_frame(f).unwrap() {
                out.extend(fr);
            }
        }
        out.extend(stream.flush().unwrap().unwrap());
        assert_eq!(out, offline.signal.samples);
        assert_eq!(stream.clipped, offline.clipped);
    }

    #[test]
    fn zero_gates_make_decoder_linear() {
        let cfg = GeneratorConfig::tiny(8, 4, 2);
        let mut w = random_weights(&cfg, 10, 1.0);
        zero_glu_gates(&mut w);
        let g = Generator::new(&w, &cfg).unwrap();
        let inputs = g.projection_inputs(&features(5, 6)).unwrap();
        let doubled: Vec<Vec<f32>> = inputs.iter().map(|v| v.iter().map(|x| 2.0 * x).collect()).collect();
        let a = g.synthesize_from_projection_inputs(&inputs).unwrap();
        let b = g.synthesize_from_projection_inputs(&doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(2.0 * x, *y);
        }
    }
}
