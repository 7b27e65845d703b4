//! Block magnitude pruning, complexity accounting and real-time-factor
//! benchmarking.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureFrame, NB_BANDS};
use crate::generator::{names, Generator, GeneratorConfig, StreamingEngine};
use crate::tensor::{BlockShape, BlockSparseMatrix, DenseMatrix, Matrix};
use crate::weights::ModelWeights;

/// Inference steps per second of audio.
pub const STEPS_PER_SECOND: u64 = 100;
/// Cost charged for one tanh or sigmoid evaluation.
pub const ACTIVATION_FLOPS_PER_CALL: u64 = 11;

/// Ordered `(pattern, density)` pairs; `*` matches any run of characters.
/// The first matching pattern wins.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunePlan {
    pub entries: Vec<(String, f64)>,
    pub block: BlockShape,
}

fn glob_match(pattern: &str, name: &str) -> bool {
    let (p, n) = (pattern.as_bytes(), name.as_bytes());
    let (mut pi, mut ni) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ni < n.len() {
        if pi < p.len() && p[pi] == b'*' {
            star = Some((pi, ni));
            pi += 1;
        } else if pi < p.len() && p[pi] == n[ni] {
            pi += 1;
            ni += 1;
        } else if let Some((sp, sn)) = star {
            pi = sp + 1;
            ni = sn + 1;
            star = Some((sp, sn + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == b'*')
}

impl PrunePlan {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        for (p, d) in &entries {
            if !(*d > 0.0 && *d <= 1.0) {
                return Err(Error::InvalidArgument(format!("density {d} for {p} is outside (0, 1]")));
            }
        }
        Ok(Self {
            entries,
            block: BlockShape::default(),
        })
    }

    /// GRUs at 0.6, fully-connected layers at 0.65, the last two conditional
    /// framewise layers and the output layer dense. The encoder stays dense.
    pub fn reference(cfg: &GeneratorConfig) -> Self {
        let mut entries = vec![("gru*.w_*".to_string(), 0.6), ("gru*.u_*".to_string(), 0.6), ("gru*.glu".to_string(), 0.65)];
        entries.push((names::PROJ_FC.into(), 0.65));
        entries.push((names::PROJ_GLU.into(), 0.65));
        let pruned_fwc = cfg.framewise_layers().saturating_sub(2);
        for k in 0..pruned_fwc {
            entries.push((names::fwc_fc(k), 0.65));
            entries.push((names::fwc_glu(k), 0.65));
        }
        Self {
            entries,
            block: BlockShape::default(),
        }
    }

    /// One `pattern density` pair per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(p), Some(d), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::InvalidArgument(format!("plan line {}: expected `pattern density`", i + 1)));
            };
            let d: f64 = d
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("plan line {}: bad density {d:?}", i + 1)))?;
            entries.push((p.to_string(), d));
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(p, d)| format!("{p} {d}\n")).collect()
    }

    pub fn density_for(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(p, _)| glob_match(p, name)).map(|(_, d)| *d)
    }
}

/// Keeps the `⌈density · blocks⌉` blocks of largest L1 norm. With
/// `keep_diagonal`, blocks touching the main diagonal are kept first and
/// count toward the budget. Ties go to the lower block index.
pub fn prune_matrix(m: &DenseMatrix, density: f64, block: BlockShape, keep_diagonal: bool) -> Result<BlockSparseMatrix> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("density {density} is outside (0, 1]")));
    }
    if block.is_empty() || m.rows() % block.rows != 0 || m.cols() % block.cols != 0 {
        return Err(Error::InvalidArgument(format!(
            "{}x{} matrix does not tile into {}x{} blocks",
            m.rows(),
            m.cols(),
            block.rows,
            block.cols
        )));
    }
    let (brows, bcols) = (m.rows() / block.rows, m.cols() / block.cols);
    let total = brows * bcols;
    let budget = ((density * total as f64).ceil() as usize).min(total);

    let is_diag = |b: usize| {
        let (br, bc) = (b / bcols, b % bcols);
        let (r0, c0) = (br * block.rows, bc * block.cols);
        keep_diagonal && r0 < c0 + block.cols && c0 < r0 + block.rows
    };
    let norm = |b: usize| {
        let (br, bc) = (b / bcols, b % bcols);
        let mut s = 0.0f64;
        for r in 0..block.rows {
            for c in 0..block.cols {
                s += m.get(br * block.rows + r, bc * block.cols + c).abs() as f64;
            }
        }
        s
    };
    let mut mask = vec![false; total];
    let mut kept = 0;
    for (b, slot) in mask.iter_mut().enumerate() {
        if is_diag(b) {
            *slot = true;
            kept += 1;
        }
    }
    let mut rest: Vec<(f64, usize)> = (0..total).filter(|&b| !mask[b]).map(|b| (norm(b), b)).collect();
    rest.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, b) in rest.iter().take(budget.saturating_sub(kept)) {
        mask[b] = true;
    }
    BlockSparseMatrix::from_dense(m, block, mask)
}

/// Applies `plan` to every matching tensor. Recurrent GRU matrices keep
/// their diagonal. A pattern matching no tensor is an error.
pub fn prune(weights: &ModelWeights, plan: &PrunePlan) -> Result<ModelWeights> {
    for (p, _) in &plan.entries {
        if !weights.names().any(|n| glob_match(p, n)) {
            return Err(Error::UnknownTensor(p.clone()));
        }
    }
    let mut out = ModelWeights::new();
    for (name, m) in weights.iter() {
        let pruned: Matrix = match plan.density_for(name) {
            Some(d) if d < 1.0 => prune_matrix(&m.to_dense(), d, plan.block, names::is_recurrent(name))?.into(),
            _ => m.clone(),
        };
        out.insert(name, pruned);
    }
    Ok(out)
}

/// Active parameter count after applying `plan` to a model of shape `cfg`,
/// without materializing any weights.
pub fn planned_active_params(cfg: &GeneratorConfig, plan: &PrunePlan) -> Result<u64> {
    let shapes = cfg.expected_shapes();
    for (p, _) in &plan.entries {
        if !shapes.iter().any(|(n, _, _)| glob_match(p, n)) {
            return Err(Error::UnknownTensor(p.clone()));
        }
    }
    let b = plan.block;
    let mut n = 0u64;
    for (name, rows, cols) in &shapes {
        n += match plan.density_for(name) {
            Some(d) if d < 1.0 => {
                if b.is_empty() || rows % b.rows != 0 || cols % b.cols != 0 {
                    return Err(Error::InvalidArgument(format!("{name} does not tile into {}x{} blocks", b.rows, b.cols)));
                }
                let (br, bc) = (rows / b.rows, cols / b.cols);
                let total = br * bc;
                let budget = ((d * total as f64).ceil() as usize).min(total);
                let diag = if names::is_recurrent(name) {
                    (0..total)
                        .filter(|&k| {
                            let (r0, c0) = ((k / bc) * b.rows, (k % bc) * b.cols);
                            r0 < c0 + b.cols && c0 < r0 + b.rows
                        })
                        .count()
                } else {
                    0
                };
                (budget.max(diag) * b.rows * b.cols) as u64
            }
            _ => (rows * cols) as u64,
        };
    }
    Ok(n)
}

/// `N · 2 · S`.
pub fn matrix_flops(active_params: u64, steps_per_second: u64) -> u64 {
    active_params * 2 * steps_per_second
}

/// Nearest value of the E12 series (1.0, 1.2, 1.5, 1.8, 2.2, …) on a log
/// scale, with an SI prefix.
pub fn approx_label(flops: f64) -> String {
    const E12: [f64; 13] = [1.0, 1.2, 1.5, 1.8, 2.2, 2.7, 3.3, 3.9, 4.7, 5.6, 6.8, 8.2, 10.0];
    if !(flops > 0.0) {
        return "≈0 FLOPS".into();
    }
    let decade = flops.log10().floor();
    let m = flops / 10f64.powf(decade);
    let snapped = E12
        .iter()
        .copied()
        .min_by(|a, b| (m / a).ln().abs().total_cmp(&(m / b).ln().abs()))
        .unwrap();
    let value = snapped * 10f64.powf(decade);
    let (scale, unit) = [(1e9, "G"), (1e6, "M"), (1e3, "k"), (1.0, "")]
        .into_iter()
        .find(|(s, _)| value >= *s * 0.9999)
        .unwrap_or((1.0, ""));
    let shown = value / scale;
    let text = if (shown - shown.round()).abs() < 1e-9 && shown >= 10.0 {
        format!("{shown:.0}")
    } else {
        format!("{shown:.1}")
    };
    format!("≈{text} {unit}FLOPS")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerFlops {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub total_params: u64,
    pub active_params: u64,
    pub matrix_flops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub steps_per_second: u64,
    pub layers: Vec<LayerFlops>,
    pub total_params: u64,
    pub active_params: u64,
    pub matrix_flops: u64,
    /// tanh and sigmoid evaluations per step.
    pub activation_calls: u64,
    pub activation_flops_per_call: u64,
    pub activation_flops: u64,
    pub total_flops: u64,
}

/// tanh and sigmoid evaluations in one step: three GRU gates and one GLU
/// gate per hidden unit, and one GLU gate per latent unit in the projection
/// and every framewise layer.
pub fn activation_calls(cfg: &GeneratorConfig) -> u64 {
    let gru = cfg.gru_count * 4 * cfg.gru_hidden;
    let latent = (1 + cfg.framewise_layers()) * cfg.latent_dim;
    (gru + latent) as u64
}

impl ComplexityReport {
    /// Totals from counts alone; `total_params` is set to `active_params`.
    pub fn from_counts(active_params: u64, activation_calls: u64, steps_per_second: u64) -> Self {
        let matrix = matrix_flops(active_params, steps_per_second);
        let act = activation_calls * ACTIVATION_FLOPS_PER_CALL * steps_per_second;
        Self {
            steps_per_second,
            layers: Vec::new(),
            total_params: active_params,
            active_params,
            matrix_flops: matrix,
            activation_calls,
            activation_flops_per_call: ACTIVATION_FLOPS_PER_CALL,
            activation_flops: act,
            total_flops: matrix + act,
        }
    }

    pub fn gflops(&self) -> f64 {
        self.total_flops as f64 / 1e9
    }

    pub fn matrix_gflops(&self) -> f64 {
        self.matrix_flops as f64 / 1e9
    }

    pub fn label(&self) -> String {
        approx_label(self.total_flops as f64)
    }

    pub fn matrix_label(&self) -> String {
        approx_label(self.matrix_flops as f64)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {:>11} {:>11} {:>8} {:>14}", "layer", "params", "active", "density", "FLOPS");
        for l in &self.layers {
            let d = l.active_params as f64 / l.total_params.max(1) as f64;
            let _ = writeln!(
                s,
                "{:<14} {:>11} {:>11} {:>8.4} {:>14}",
                l.name, l.total_params, l.active_params, d, l.matrix_flops
            );
        }
        let _ = writeln!(s, "total params       {}", self.total_params);
        let _ = writeln!(s, "active params      {}", self.active_params);
        let _ = writeln!(
            s,
            "matrix FLOPS       {} ({:.4} GFLOPS, {})",
            self.matrix_flops,
            self.matrix_gflops(),
            self.matrix_label()
        );
        let _ = writeln!(
            s,
            "activation FLOPS   {} ({} calls/step x {} FLOPS x {} steps/s)",
            self.activation_flops, self.activation_calls, self.activation_flops_per_call, self.steps_per_second
        );
        let _ = writeln!(s, "total FLOPS        {} ({:.4} GFLOPS, {})", self.total_flops, self.gflops(), self.label());
        s
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "steps_per_second={}", self.steps_per_second);
        let _ = writeln!(s, "total_params={}", self.total_params);
        let _ = writeln!(s, "active_params={}", self.active_params);
        let _ = writeln!(s, "matrix_flops={}", self.matrix_flops);
        let _ = writeln!(s, "activation_calls_per_step={}", self.activation_calls);
        let _ = writeln!(s, "activation_flops_per_call={}", self.activation_flops_per_call);
        let _ = writeln!(s, "activation_flops={}", self.activation_flops);
        let _ = writeln!(s, "total_flops={}", self.total_flops);
        let _ = writeln!(s, "label={}", self.label());
        for l in &self.layers {
            let _ = writeln!(s, "layer.{}.active_params={}", l.name, l.active_params);
            let _ = writeln!(s, "layer.{}.matrix_flops={}", l.name, l.matrix_flops);
        }
        s
    }
}

/// Complexity of an audited model at `steps_per_second`. Every active
/// weight is charged one multiply and one add per step, the pitch embedding
/// table included, so `N` matches the model's parameter count.
pub fn count_flops(weights: &ModelWeights, steps_per_second: u64) -> Result<ComplexityReport> {
    let cfg = GeneratorConfig::infer(weights)?;
    let shapes = crate::generator::audit_shapes(weights, &cfg)?;
    let layers: Vec<LayerFlops> = shapes
        .layers
        .iter()
        .map(|l| LayerFlops {
            name: l.name.clone(),
            rows: l.rows,
            cols: l.cols,
            total_params: l.params as u64,
            active_params: l.active_params as u64,
            matrix_flops: matrix_flops(l.active_params as u64, steps_per_second),
        })
        .collect();
    let active: u64 = layers.iter().map(|l| l.active_params).sum();
    let mut report = ComplexityReport::from_counts(active, activation_calls(&cfg), steps_per_second);
    report.total_params = layers.iter().map(|l| l.total_params).sum();
    report.layers = layers;
    Ok(report)
}

/// Deterministic feature stream for benchmarks and demos.
pub fn synthetic_features(frames: usize, seed: u64) -> Vec<FeatureFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..frames)
        .map(|i| {
            let mut bfcc = [0.0; NB_BANDS];
            for v in &mut bfcc {
                *v = rng.gen_range(-1.0..1.0);
            }
            FeatureFrame::new(bfcc, rng.gen_range(40..=250), rng.gen_range(0.0..1.0), i)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RtfReport {
    pub audio_seconds: f64,
    pub threads: usize,
    pub runs: usize,
    /// Wall-clock seconds per run, warm-up excluded.
    pub run_seconds: Vec<f64>,
    pub median_seconds: f64,
    /// Median wall time over audio duration, per stream.
    pub rtf: f64,
    pub machine: String,
}

impl RtfReport {
    pub fn speedup(&self) -> f64 {
        1.0 / self.rtf
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "machine={}", self.machine);
        let _ = writeln!(s, "threads={}", self.threads);
        let _ = writeln!(s, "audio_seconds={}", self.audio_seconds);
        let _ = writeln!(s, "runs={}", self.runs);
        let runs: Vec<String> = self.run_seconds.iter().map(|r| format!("{r:.6}")).collect();
        let _ = writeln!(s, "run_seconds={}", runs.join(","));
        let _ = writeln!(s, "median_seconds={:.6}", self.median_seconds);
        let _ = writeln!(s, "rtf={:.6}", self.rtf);
        let _ = writeln!(s, "faster_than_real_time={:.2}x", self.speedup());
        s
    }
}

pub fn machine_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{cpu}; {} {}; {cores} logical cpus", std::env::consts::OS, std::env::consts::ARCH)
}

fn run_stream(g: &Arc<Generator>, feats: &[FeatureFrame]) -> Result<usize> {
    let mut engine = StreamingEngine::new(g.clone());
    let mut n = 0;
    for f in feats {
        if let Some(fr) = engine.push_frame(f)? {
            n += fr.len();
        }
    }
    if let Some(fr) = engine.flush()? {
        n += fr.len();
    }
    Ok(n)
}

/// Streams `seconds` of synthetic features through `threads` independent
/// engines at once. One warm-up run, then the median of `runs` timed runs.
pub fn bench_rtf(generator: Arc<Generator>, seconds: f64, threads: usize, runs: usize) -> Result<RtfReport> {
    if !(seconds > 0.0) || !seconds.is_finite() {
        return Err(Error::InvalidArgument("benchmark duration must be positive".into()));
    }
    if threads == 0 {
        return Err(Error::InvalidArgument("at least one thread is required".into()));
    }
    let runs = runs.max(5);
    let frames = (seconds * STEPS_PER_SECOND as f64).round().max(1.0) as usize;
    let feats = synthetic_features(frames, 0x5eed);
    let once = || -> Result<f64> {
        let start = Instant::now();
        if threads == 1 {
            run_stream(&generator, &feats)?;
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..threads).map(|_| s.spawn(|| run_stream(&generator, &feats))).collect();
                handles.into_iter().try_for_each(|h| h.join().expect("benchmark thread panicked").map(|_| ()))
            })?;
        }
        Ok(start.elapsed().as_secs_f64())
    };
    once()?;
    let mut run_seconds = (0..runs).map(|_| once()).collect::<Result<Vec<_>>>()?;
    let mut sorted = run_seconds.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if runs % 2 == 1 {
        sorted[runs / 2]
    } else {
        0.5 * (sorted[runs / 2 - 1] + sorted[runs / 2])
    };
    let audio_seconds = frames as f64 / STEPS_PER_SECOND as f64;
    run_seconds.shrink_to_fit();
    Ok(RtfReport {
        audio_seconds,
        threads,
        runs,
        run_seconds,
        median_seconds: median,
        rtf: median / audio_seconds,
        machine: machine_description(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::random_weights;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    #[test]
    fn glob() {
        assert!(glob_match("gru*.u_*", "gru3.u_h"));
        assert!(!glob_match("gru*.u_*", "gru3.w_h"));
        assert!(glob_match("proj.fc", "proj.fc"));
        assert!(!glob_match("proj.fc", "proj.fcx"));
        assert!(glob_match("*", "anything"));
        assert!(glob_match("a*b*c", "axxbyyc"));
        assert!(!glob_match("a*b*c", "axxbyy"));
    }

    #[test]
    fn prune_1x1_keeps_largest_half() {
        let vals = [3.0, -9.0, 1.0, 0.5, 7.0, -2.0, 8.0, 0.1, -6.0, 4.0, 0.2, 5.0, -0.3, 10.0, 0.4, -11.0];
        let m = DenseMatrix::new(4, 4, vals.to_vec()).unwrap();
        let p = prune_matrix(&m, 0.5, BlockShape::new(1, 1), false).unwrap();
        let mut sorted: Vec<f32> = vals.iter().map(|v| v.abs()).collect();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let threshold = sorted[7];
        let d = p.to_dense();
        for (i, &v) in vals.iter().enumerate() {
            let kept = d.data()[i] != 0.0;
            assert_eq!(kept, v.abs() >= threshold, "entry {i}");
            if kept {
                assert_eq!(d.data()[i], v);
            }
        }
        assert_eq!(p.kept_blocks(), 8);
    }

    #[test]
    fn planned_count_matches_prune() {
        for (latent, hidden, layers) in [(32, 16, 3), (64, 32, 4), (48, 16, 2)] {
            let cfg = GeneratorConfig::tiny(latent, hidden, layers);
            let plan = PrunePlan::reference(&cfg);
            let w = crate::generator::random_weights(&cfg, 5, 1.0);
            let pruned = prune(&w, &plan).unwrap();
            assert_eq!(planned_active_params(&cfg, &plan).unwrap(), pruned.active_params() as u64);
        }
        let low = PrunePlan::new(vec![("gru*.u_*".into(), 0.01)]).unwrap();
        let cfg = GeneratorConfig::tiny(32, 32, 2);
        let w = crate::generator::random_weights(&cfg, 1, 1.0);
        assert_eq!(planned_active_params(&cfg, &low).unwrap(), prune(&w, &low).unwrap().active_params() as u64);
        let bad = PrunePlan::new(vec![("nope".into(), 0.5)]).unwrap();
        assert!(matches!(planned_active_params(&cfg, &bad), Err(Error::UnknownTensor(_))));
    }

    #[test]
    fn diagonal_survives() {
        let m = DenseMatrix::from_fn(32, 32, |i, j| if i == j { 1e-6 } else { 1.0 + (i * 32 + j) as f32 });
        let p = prune_matrix(&m, 0.1, BlockShape::default(), true).unwrap();
        let d = p.to_dense();
        for i in 0..32 {
            assert_eq!(d.get(i, i), 1e-6);
        }
        // 32 diagonal blocks exceed the 7-block budget; all of them stay.
        assert_eq!(p.kept_blocks(), 32);
    }

    #[test]
    fn density_one_is_identity() {
        let cfg = GeneratorConfig::tiny(32, 32, 2);
        let w = random_weights(&cfg, 1, 1.0);
        let plan = PrunePlan::new(vec![("*".into(), 1.0)]).unwrap();
        assert_eq!(prune(&w, &plan).unwrap(), w);
    }

    #[test]
    fn unknown_pattern_and_bad_density() {
        let cfg = GeneratorConfig::tiny(32, 32, 2);
        let w = random_weights(&cfg, 1, 1.0);
        let plan = PrunePlan::new(vec![("nope.*".into(), 0.5)]).unwrap();
        assert!(matches!(prune(&w, &plan), Err(Error::UnknownTensor(_))));
        assert!(PrunePlan::new(vec![("*".into(), 0.0)]).is_err());
        assert!(PrunePlan::new(vec![("*".into(), 1.5)]).is_err());
    }

    #[test]
    fn plan_text_round_trip() {
        let plan = PrunePlan::reference(&GeneratorConfig::reference());
        assert_eq!(PrunePlan::parse(&plan.to_text()).unwrap(), plan);
        let parsed = PrunePlan::parse("# comment\n gru* 0.6\n\nproj.fc 0.65 # trailing\n").unwrap();
        assert_eq!(parsed.entries.len(), 2);
        assert!(PrunePlan::parse("gru* x").is_err());
        assert!(PrunePlan::parse("gru*").is_err());
    }

    #[test]
    fn reference_plan_leaves_last_three_dense() {
        let cfg = GeneratorConfig::reference();
        let plan = PrunePlan::reference(&cfg);
        assert_eq!(plan.density_for("gru1.u_z"), Some(0.6));
        assert_eq!(plan.density_for("gru5.glu"), Some(0.65));
        assert_eq!(plan.density_for("fwc2.fc"), Some(0.65));
        assert_eq!(plan.density_for("fwc3.fc"), None);
        assert_eq!(plan.density_for("fwc4.glu"), None);
        assert_eq!(plan.density_for("out.fc"), None);
        assert_eq!(plan.density_for("enc.conv2"), None);
    }

    #[test]
    fn labels() {
        assert_eq!(approx_label(1.56e9), "≈1.5 GFLOPS");
        assert_eq!(approx_label(1.18e9), "≈1.2 GFLOPS");
        assert_eq!(approx_label(7.3e6), "≈6.8 MFLOPS");
        assert_eq!(approx_label(2.0e5), "≈220 kFLOPS");
    }

    #[test]
    fn toy_count() {
        let r = ComplexityReport::from_counts(1000, 10, 100);
        assert_eq!(r.matrix_flops, 200_000);
        assert_eq!(r.activation_flops, 10 * ACTIVATION_FLOPS_PER_CALL * 100);
        assert_eq!(r.total_flops, 200_000 + 11_000);
    }

    #[test]
    fn reference_activation_budget() {
        let calls = activation_calls(&GeneratorConfig::reference());
        assert_eq!(calls, 6912);
        let act = (calls * ACTIVATION_FLOPS_PER_CALL * STEPS_PER_SECOND) as f64;
        assert!((act - 7.3e6).abs() / 7.3e6 < 0.10);
    }

    #[test]
    fn count_flops_sums_layers() {
        let cfg = GeneratorConfig::tiny(32, 16, 2);
        let w = random_weights(&cfg, 2, 1.0);
        let r = count_flops(&w, 100).unwrap();
        assert_eq!(r.active_params as usize, cfg.parameter_count());
        assert_eq!(r.matrix_flops, r.layers.iter().map(|l| l.matrix_flops).sum::<u64>());
        let kv = r.to_key_value();
        for key in ["steps_per_second=", "active_params=", "matrix_flops=", "total_flops=", "label="] {
            assert!(kv.lines().any(|l| l.starts_with(key)), "{key}");
        }
    }

    #[test]
    fn bench_rejects_empty() {
        let cfg = GeneratorConfig::tiny(16, 16, 1);
        let g = Arc::new(Generator::new(&random_weights(&cfg, 3, 1.0), &cfg).unwrap());
        assert!(bench_rtf(g.clone(), 0.0, 1, 5).is_err());
        assert!(bench_rtf(g.clone(), 0.1, 0, 5).is_err());
        let r = bench_rtf(g, 0.1, 2, 5).unwrap();
        assert_eq!(r.run_seconds.len(), 5);
        assert!(r.rtf > 0.0);
        let text = r.to_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
        assert_eq!(
            keys,
            ["machine", "threads", "audio_seconds", "runs", "run_seconds", "median_seconds", "rtf", "faster_than_real_time"]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pruned_gemv_equals_masked_dense(seed in any::<u64>(), density in 0.05f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = DenseMatrix::from_fn(48, 40, |_, _| rng.gen_range(-1.0..1.0));
            let p = prune_matrix(&m, density, BlockShape::default(), false).unwrap();
            let budget = (density * p.total_blocks() as f64).ceil() as usize;
            prop_assert_eq!(p.kept_blocks(), budget);
            let masked = p.to_dense();
            for (a, b) in masked.data().iter().zip(m.data()) {
                prop_assert!(*a == 0.0 || a == b);
            }
            let x: Vec<f32> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            prop_assert_eq!(p.gemv(&x).unwrap(), masked.gemv(&x).unwrap());
        }

        #[test]
        fn flops_linear_in_steps(n in 0u64..10_000_000, calls in 0u64..100_000, s in 1u64..1000) {
            let a = ComplexityReport::from_counts(n, calls, s);
            let b = ComplexityReport::from_counts(n, calls, 2 * s);
            prop_assert_eq!(2 * a.total_flops, b.total_flops);
            prop_assert_eq!(a.matrix_flops, n * 2 * s);
        }
    }
}
