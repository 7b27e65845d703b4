//! Objective voicing metrics: an autocorrelation pitch tracker with
//! dynamic-programming smoothing, pitch mean absolute error and voicing
//! decision error.

use std::fmt::Write as _;

use crate::error::{dims_err, Error, Result};
use crate::features::FRAME_SIZE;
use crate::signal::{SignalBuffer, SAMPLE_RATE};

/// Analysis window centered on each 10 ms frame.
pub const TRACK_WINDOW: usize = 480;
/// 400 Hz.
pub const MIN_LAG: usize = 40;
/// Just above 60 Hz.
pub const MAX_LAG: usize = 267;
pub const VOICING_THRESHOLD: f64 = 0.5;
pub const ENERGY_FLOOR_DBFS: f64 = -60.0;

const CANDIDATES: usize = 6;
/// Cost per octave of lag above the shortest lag; breaks ties between a
/// period and its multiples.
const OCTAVE_BIAS: f64 = 0.015;
/// Cost per octave of lag jump between neighbouring frames.
const TRANSITION_COST: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchPoint {
    pub voiced: bool,
    /// Hz; 0 when unvoiced.
    pub f0: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    lag: f64,
    corr: f64,
}

fn frame_window(x: &[f32], center: usize) -> Vec<f64> {
    let start = center as isize - (TRACK_WINDOW / 2) as isize;
    (0..TRACK_WINDOW as isize)
        .map(|i| {
            let j = start + i;
            if j < 0 || j as usize >= x.len() {
                0.0
            } else {
                x[j as usize] as f64
            }
        })
        .collect()
}

/// Normalized cross-correlation between the window and itself shifted by
/// each lag in `MIN_LAG..=MAX_LAG` (index 0 is `MIN_LAG`).
fn normalized_autocorrelation(w: &[f64]) -> Vec<f64> {
    let n = w.len();
    (MIN_LAG..=MAX_LAG)
        .map(|lag| {
            let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
            for i in 0..n - lag {
                let (a, b) = (w[i], w[i + lag]);
                xy += a * b;
                xx += a * a;
                yy += b * b;
            }
            let d = (xx * yy).sqrt();
            if d > 0.0 {
                xy / d
            } else {
                0.0
            }
        })
        .collect()
}

fn candidates(r: &[f64]) -> Vec<Candidate> {
    let mut peaks: Vec<Candidate> = (1..r.len() - 1)
        .filter(|&i| r[i] >= r[i - 1] && r[i] > r[i + 1] && r[i] > 0.0)
        .map(|i| {
            // Parabolic interpolation of the peak.
            let (a, b, c) = (r[i - 1], r[i], r[i + 1]);
            let denom = a - 2.0 * b + c;
            let off = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            Candidate {
                lag: (MIN_LAG + i) as f64 + off,
                corr: b - 0.25 * (a - c) * off,
            }
        })
        .collect();
    peaks.sort_by(|a, b| b.corr.total_cmp(&a.corr));
    peaks.truncate(CANDIDATES);
    peaks
}

fn local_cost(c: &Candidate) -> f64 {
    (1.0 - c.corr) + OCTAVE_BIAS * (c.lag / MIN_LAG as f64).log2()
}

/// Minimum-cost lag path through one voiced segment.
fn viterbi(frames: &[Vec<Candidate>]) -> Vec<f64> {
    let mut cost: Vec<f64> = frames[0].iter().map(local_cost).collect();
    let mut back: Vec<Vec<usize>> = vec![vec![0; frames[0].len()]];
    for t in 1..frames.len() {
        let mut next = Vec::with_capacity(frames[t].len());
        let mut ptr = Vec::with_capacity(frames[t].len());
        for c in &frames[t] {
            let (best, k) = frames[t - 1]
                .iter()
                .enumerate()
                .map(|(k, p)| (cost[k] + TRANSITION_COST * (c.lag / p.lag).log2().abs(), k))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .expect("voiced frames have candidates");
            next.push(best + local_cost(c));
            ptr.push(k);
        }
        cost = next;
        back.push(ptr);
    }
    let mut k = (0..cost.len()).min_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b))).unwrap();
    let mut path = vec![0.0; frames.len()];
    for t in (0..frames.len()).rev() {
        path[t] = frames[t][k].lag;
        k = back[t][k];
    }
    path
}

/// One point per 10 ms frame (`floor(len / 160)` frames), each centered on
/// its hop.
pub fn pitch_track(wav: &SignalBuffer) -> Result<Vec<PitchPoint>> {
    wav.expect_rate()?;
    let x = &wav.samples;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("pitch_track"));
    }
    let n = x.len() / FRAME_SIZE;
    let mut voiced_cands: Vec<Option<Vec<Candidate>>> = Vec::with_capacity(n);
    for i in 0..n {
        let w = frame_window(x, i * FRAME_SIZE + FRAME_SIZE / 2);
        let energy = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        let db = 10.0 * energy.max(1e-300).log10();
        let r = normalized_autocorrelation(&w);
        let peak = r.iter().copied().fold(f64::MIN, f64::max);
        let voiced = db > ENERGY_FLOOR_DBFS && peak > VOICING_THRESHOLD;
        voiced_cands.push(if voiced { Some(candidates(&r)).filter(|c| !c.is_empty()) } else { None });
    }

    let mut track = vec![PitchPoint { voiced: false, f0: 0.0 }; n];
    let mut t = 0;
    while t < n {
        if voiced_cands[t].is_none() {
            t += 1;
            continue;
        }
        let start = t;
        while t < n && voiced_cands[t].is_some() {
            t += 1;
        }
        let seg: Vec<Vec<Candidate>> = voiced_cands[start..t].iter().map(|c| c.clone().unwrap()).collect();
        for (k, lag) in viterbi(&seg).into_iter().enumerate() {
            track[start + k] = PitchPoint {
                voiced: true,
                f0: SAMPLE_RATE as f64 / lag,
            };
        }
    }
    Ok(track)
}

fn paired_tracks(reference: &SignalBuffer, degraded: &SignalBuffer) -> Result<(Vec<PitchPoint>, Vec<PitchPoint>)> {
    if reference.len() != degraded.len() {
        return Err(dims_err("metrics", format!("{} samples", reference.len()), format!("{} samples", degraded.len())));
    }
    Ok((pitch_track(reference)?, pitch_track(degraded)?))
}

/// Mean |Δf0| in Hz over frames voiced in both signals.
pub fn pmae_from_tracks(a: &[PitchPoint], b: &[PitchPoint]) -> Result<f64> {
    let diffs: Vec<f64> = a.iter().zip(b).filter(|(p, q)| p.voiced && q.voiced).map(|(p, q)| (p.f0 - q.f0).abs()).collect();
    if diffs.is_empty() {
        return Err(Error::NoVoicedOverlap);
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Fraction of frames with differing voicing decisions.
pub fn vde_from_tracks(a: &[PitchPoint], b: &[PitchPoint]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(p, q)| p.voiced != q.voiced).count() as f64 / a.len() as f64
}

pub fn pmae(reference: &SignalBuffer, degraded: &SignalBuffer) -> Result<f64> {
    let (a, b) = paired_tracks(reference, degraded)?;
    pmae_from_tracks(&a, &b)
}

pub fn vde(reference: &SignalBuffer, degraded: &SignalBuffer) -> Result<f64> {
    let (a, b) = paired_tracks(reference, degraded)?;
    Ok(vde_from_tracks(&a, &b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: String,
    /// None when no frame is voiced in both signals.
    pub pmae: Option<f64>,
    pub vde: f64,
}

pub fn evaluate(model: &str, reference: &SignalBuffer, degraded: &SignalBuffer) -> Result<MetricRow> {
    let (a, b) = paired_tracks(reference, degraded)?;
    let pmae = match pmae_from_tracks(&a, &b) {
        Ok(v) => Some(v),
        Err(Error::NoVoicedOverlap) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricRow {
        model: model.to_string(),
        pmae,
        vde: vde_from_tracks(&a, &b),
    })
}

/// `Model | PMAE | VDE` table.
pub fn format_table(rows: &[MetricRow]) -> String {
    let mut s = String::from("Model | PMAE | VDE\n");
    for r in rows {
        let p = r.pmae.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "{} | {} | {:.4}", r.model, p, r.vde);
    }
    s
}
