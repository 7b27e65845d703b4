use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fwgan_cli::exit;
use fwgan_core::features;
use fwgan_core::generator::{self, GeneratorConfig};
use fwgan_core::signal::{self, SignalBuffer};
use fwgan_core::weights;

fn fwgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fwgan")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = fwgan(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    fwgan(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn speechlike(secs: f64) -> SignalBuffer {
    let n = (secs * 16000.0) as usize;
    SignalBuffer::natural(
        (0..n)
            .map(|i| {
                let t = i as f64 / 16000.0;
                let f0 = 140.0 + 30.0 * (2.0 * PI * 2.0 * t).sin();
                let env = 0.5 + 0.5 * (2.0 * PI * 3.0 * t).sin().abs();
                (0.3 * env * ((2.0 * PI * f0 * t).sin() + 0.5 * (4.0 * PI * f0 * t).sin())) as f32
            })
            .collect(),
    )
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let cfg = GeneratorConfig::tiny(32, 16, 3);
        weights::save_model(&generator::random_weights(&cfg, 1, 1.0), root.join("w.fwgn")).unwrap();
        signal::write_wav(root.join("in.wav"), &speechlike(1.0)).unwrap();
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn analyze_then_synth() {
    let f = Fixture::new();
    let out = ok(&["analyze", "--in", s(&f.p("in.wav")), "--out", s(&f.p("feat.f32"))]);
    assert_eq!(out.trim(), "100 frames");
    assert_eq!(features::read_features(f.p("feat.f32")).unwrap().len(), 100);

    ok(&["synth", "--weights", s(&f.p("w.fwgn")), "--features", s(&f.p("feat.f32")), "--out", s(&f.p("a.wav"))]);
    ok(&["synth", "--weights", s(&f.p("w.fwgn")), "--features", s(&f.p("feat.f32")), "--out", s(&f.p("b.wav"))]);
    ok(&[
        "synth",
        "--streaming",
        "--weights",
        s(&f.p("w.fwgn")),
        "--features",
        s(&f.p("feat.f32")),
        "--out",
        s(&f.p("c.wav")),
    ]);
    let a = std::fs::read(f.p("a.wav")).unwrap();
    assert_eq!(a, std::fs::read(f.p("b.wav")).unwrap());
    assert_eq!(a, std::fs::read(f.p("c.wav")).unwrap());
    assert_eq!(signal::read_wav(f.p("a.wav")).unwrap().len(), 16000);
}

#[test]
fn analyze_errors() {
    let f = Fixture::new();
    std::fs::write(f.p("junk.wav"), b"not a wav file at all").unwrap();
    assert_eq!(code(&["analyze", "--in", s(&f.p("junk.wav")), "--out", s(&f.p("x"))]), exit::FORMAT);
    assert_eq!(code(&["analyze", "--in", s(&f.p("missing.wav")), "--out", s(&f.p("x"))]), exit::IO);
    write_pcm16(&f.p("8k.wav"), 8000, &speechlike(0.5).samples);
    assert_eq!(code(&["analyze", "--in", s(&f.p("8k.wav")), "--out", s(&f.p("x"))]), exit::INPUT);
    assert_eq!(code(&["analyze", "--in", s(&f.p("in.wav"))]), exit::USAGE);
}

/// Minimal RIFF writer, for rates the engine refuses to write.
fn write_pcm16(path: &Path, rate: u32, samples: &[f32]) {
    let data: Vec<u8> = samples.iter().flat_map(|&v| signal::to_pcm16(v).to_le_bytes()).collect();
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&rate.to_le_bytes());
    b.extend_from_slice(&(rate * 2).to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&(data.len() as u32).to_le_bytes());
    b.extend_from_slice(&data);
    std::fs::write(path, b).unwrap();
}

#[test]
fn flops_reports() {
    let f = Fixture::new();
    let table = ok(&["flops", "--weights", s(&f.p("w.fwgn"))]);
    assert!(table.contains("fwc0.fc"));
    assert!(table.contains("total FLOPS"));
    let kv = ok(&["flops", "--weights", s(&f.p("w.fwgn")), "--format", "kv"]);
    let n = GeneratorConfig::tiny(32, 16, 3).parameter_count() as u64;
    assert!(kv.lines().any(|l| l == format!("matrix_flops={}", n * 200)));
    ok(&["flops", "--weights", s(&f.p("w.fwgn")), "--format", "kv", "--out", s(&f.p("r.txt"))]);
    assert_eq!(std::fs::read_to_string(f.p("r.txt")).unwrap(), kv);
}

#[test]
fn sparsify_plans_and_errors() {
    let f = Fixture::new();
    std::fs::write(f.p("plan.txt"), "# GRU recurrent weights\ngru*.u_* 0.5\nproj.fc 0.25\n").unwrap();
    let out = ok(&["sparsify", "--weights", s(&f.p("w.fwgn")), "--plan", s(&f.p("plan.txt")), "--out", s(&f.p("p.fwgn"))]);
    assert!(out.starts_with("active parameters"));
    let pruned = weights::load_model(f.p("p.fwgn")).unwrap();
    let proj = pruned.get("proj.fc").unwrap();
    assert!(proj.is_sparse());
    assert!((proj.density() - 0.25).abs() < 1e-9);

    std::fs::write(f.p("bad.txt"), "nope.* 0.5\n").unwrap();
    let (w, plan, out) = (f.p("w.fwgn"), f.p("bad.txt"), f.p("q.fwgn"));
    assert_eq!(code(&["sparsify", "--weights", s(&w), "--plan", s(&plan), "--out", s(&out)]), exit::MODEL);

    let mut bytes = std::fs::read(f.p("w.fwgn")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(f.p("corrupt.fwgn"), bytes).unwrap();
    assert_eq!(code(&["flops", "--weights", s(&f.p("corrupt.fwgn"))]), exit::FORMAT);
}

#[test]
fn eval_and_loss_on_identical_files() {
    let f = Fixture::new();
    let wav = s(&f.p("in.wav")).to_string();
    let table = ok(&["eval", "--ref", &wav, "--deg", &wav, "--model", "same"]);
    assert_eq!(table, "Model | PMAE | VDE\nsame | 0.0000 | 0.0000\n");
    let loss = ok(&["loss", "--ref", &wav, "--deg", &wav]);
    let rows: Vec<&str> = loss.lines().skip(1).take(6).collect();
    assert_eq!(rows.len(), 6);
    for r in rows {
        let cols: Vec<f64> = r.split('|').skip(1).map(|c| c.trim().parse().unwrap()).collect();
        assert_eq!(cols, [0.0, 0.0], "{r}");
    }
    assert!(loss.contains("L_aux = 0.000000e0"));

    signal::write_wav(f.p("short.wav"), &speechlike(0.5)).unwrap();
    assert_eq!(code(&["eval", "--ref", &wav, "--deg", s(&f.p("short.wav"))]), exit::MODEL);
}

#[test]
fn bench_report_and_rejects_zero_length() {
    let f = Fixture::new();
    let out = ok(&["bench", "--weights", s(&f.p("w.fwgn")), "--seconds", "0.2", "--threads", "2"]);
    for key in ["machine=", "threads=2", "rtf=", "median_seconds="] {
        assert!(out.contains(key), "{key} missing in {out}");
    }
    assert_eq!(code(&["bench", "--weights", s(&f.p("w.fwgn")), "--seconds", "0"]), exit::INPUT);
}

#[test]
fn init_writes_loadable_presets() {
    let f = Fixture::new();
    let out = ok(&["init", "--preset", "tiny", "--seed", "3", "--out", s(&f.p("t.fwgn"))]);
    let w = weights::load_model(f.p("t.fwgn")).unwrap();
    assert_eq!(out.trim(), format!("{} parameters", w.total_params()));
}
