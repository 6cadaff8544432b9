//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use msr_core::basecodec::{base_decode, base_encode, quant_table, rate_of, QualityFactor};
use msr_core::bilevel::{meta_decode, meta_encode, meta_rate, MetaBitstream};
use msr_core::channel::{degrade, noise_field, ChannelSeed, DegradePreset};
use msr_core::corpus::{bundled, gradient, CORPUS_SIZE};
use msr_core::infotheory::{cond_mutual_info, entropy, DiscreteJoint, Var};
use msr_core::metagen::{canny, sweep_sparsity, CannyParams, MetadataPlane};
use msr_core::metrics::{frame_diff_loss, psnr, ssim};
use msr_core::pixel::{load_pnm, to_grayscale, FrameSequence};
use msr_core::rdo::{
    bitrate_saving_at_matched_quality, quality_gain_at_matched_rate, QualityMetric, RDCurve,
    RatePoint,
};
use msr_core::ImagePlane;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const THEOREM_SAMPLES: usize = 10_000;
const SIGN_TOL: f64 = 1e-12;
const DUAL_TOL: f64 = 1e-10;
const THEOREM_BUDGET: Duration = Duration::from_secs(30);
const SPARSE_DENSITY: f64 = 0.05;
const MIN_COMPRESSION: f64 = 4.0;
const Q100_MIN_PSNR: f64 = 40.0;
const UNIT_ERROR_PSNR: f64 = 48.1308;
const UNIT_ERROR_TOL: f64 = 1e-3;
const SSIM_VECTOR_TOL: f64 = 1e-4;
const NOISE_STD_TOL: f64 = 0.05;
const RDO_ORACLE_TOL: f64 = 1e-9;
const SWEEP_BUDGET: Duration = Duration::from_secs(300);

/// Table K.1 of ITU-T T.81, row-major.
const TABLE_K1: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113,
    92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99,
];

type Outcome = Result<String, String>;
type Check = fn(&mut Work) -> Outcome;

fn ensure(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Work {
    dir: tempfile::TempDir,
    theorem: Option<(Value, Duration)>,
}

impl Work {
    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn msr(&self, args: &[&str]) -> Result<String, String> {
        let o = Command::new(env!("CARGO_BIN_EXE_msr"))
            .current_dir(self.path())
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if o.status.success() {
            Ok(String::from_utf8_lossy(&o.stdout).into_owned())
        } else {
            Err(format!(
                "msr {} exited {:?}: {}",
                args[0],
                o.status.code(),
                String::from_utf8_lossy(&o.stderr).trim()
            ))
        }
    }

    fn json(&self, name: &str) -> Result<Value, String> {
        let bytes = fs::read(self.path().join(name)).map_err(|e| format!("{name}: {e}"))?;
        serde_json::from_slice(&bytes).map_err(|e| format!("{name}: {e}"))
    }

    /// One verify-theorem run shared by criteria 1 to 4.
    fn theorem(&mut self) -> Result<(Value, Duration), String> {
        if self.theorem.is_none() {
            let n = THEOREM_SAMPLES.to_string();
            let t = Instant::now();
            self.msr(&["verify-theorem", "--samples", &n, "--seed", "1", "--alphabets", "4,4,4", "--out", "theorem.json"])?;
            self.theorem = Some((self.json("theorem.json")?, t.elapsed()));
        }
        Ok(self.theorem.clone().expect("set above"))
    }
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or(f64::NAN)
}

fn criterion_1(w: &mut Work) -> Outcome {
    let (r, took) = w.theorem()?;
    let samples = r["samples"].as_u64().unwrap_or(0) as usize;
    let degenerate = r["degenerate_cases"].as_u64().unwrap_or(0);
    let reduction = num(&r, "min_entropy_reduction_slack");
    let cmi = num(&r, "min_cmi");
    let dual = num(&r, "max_dual_gap");
    ensure(
        samples >= THEOREM_SAMPLES
            && degenerate > 0
            && reduction >= -SIGN_TOL
            && cmi >= -SIGN_TOL
            && dual <= DUAL_TOL
            && took < THEOREM_BUDGET,
        format!(
            "{samples}+{degenerate} joints, min H(X|Y)-H(X|Y,M) {reduction:.3e}, min I {cmi:.3e}, dual gap {dual:.3e}, {:.2} s",
            took.as_secs_f64()
        ),
    )
}

fn criterion_2(w: &mut Work) -> Outcome {
    let (r, took) = w.theorem()?;
    let slack = num(&r, "min_gated_slack");
    ensure(
        slack >= -SIGN_TOL && took < THEOREM_BUDGET,
        format!("min H(X|Y)-H(X|Y,M~) {slack:.3e} over {THEOREM_SAMPLES}+ gated joints"),
    )
}

fn criterion_3(w: &mut Work) -> Outcome {
    let (r, _) = w.theorem()?;
    let gap = num(&r, "max_nll_identity_gap");
    let self_kl = num(&r, "max_self_kl");
    let min_kl = num(&r, "min_kl");
    ensure(
        gap <= DUAL_TOL && self_kl < SIGN_TOL && min_kl >= -SIGN_TOL,
        format!("max |NLL-(H+KL)| {gap:.3e}, KL at true conditional {self_kl:.3e}, min KL {min_kl:.3e}"),
    )
}

fn criterion_4(w: &mut Work) -> Outcome {
    let (r, _) = w.theorem()?;
    let slack = num(&r, "min_bitrate_bound_slack");
    // X = M with Y constant: I(X;M|Y) = H(M)
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for n in 1..=4 {
        for _ in 0..50 {
            let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let q = DiscreteJoint::from_fn(n, 1, n, |x, _, m| if x == m { weights[x] } else { 0.0 })
                .map_err(|e| e.to_string())?;
            let i = cond_mutual_info(&q).map_err(|e| e.to_string())?.value();
            worst = worst.max((i - entropy(&q.marginal(&[Var::M]))).abs());
        }
    }
    ensure(
        slack >= -SIGN_TOL && worst <= SIGN_TOL,
        format!("min H(M)-I(X;M|Y) {slack:.3e}, tight case |I-H(M)| {worst:.3e}"),
    )
}

fn bilevel_round_trip(m: &MetadataPlane) -> bool {
    MetaBitstream::from_bytes(&meta_encode(m).to_bytes())
        .and_then(|s| meta_decode(&s))
        .is_ok_and(|back| &back == m)
}

fn criterion_5(_: &mut Work) -> Outcome {
    let mut exhaustive = 0u64;
    let mut mismatches = 0u64;
    for h in 1..=4usize {
        for w in 1..=4usize {
            for pattern in 0u32..(1 << (w * h)) {
                let sites = (0..w * h).map(|i| ((pattern >> i) & 1) as u8).collect();
                let m = MetadataPlane::new(w, h, 1, sites).map_err(|e| e.to_string())?;
                exhaustive += 1;
                mismatches += u64::from(!bilevel_round_trip(&m));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for density in [0.01, 0.05, 0.20, 0.50] {
        for _ in 0..250 {
            let (w, h) = (rng.gen_range(1..=128), rng.gen_range(1..=128));
            let sites = (0..w * h).map(|_| u8::from(rng.gen_bool(density))).collect();
            let m = MetadataPlane::new(w, h, 1, sites).map_err(|e| e.to_string())?;
            mismatches += u64::from(!bilevel_round_trip(&m));
        }
    }
    let mut worst = f64::INFINITY;
    let mut sparse = 0;
    for img in bundled() {
        let mut maps = vec![canny(&img.plane, &CannyParams::default()).map_err(|e| e.to_string())?];
        let base = CannyParams::new(1.4, 10.0, 25.0).map_err(|e| e.to_string())?;
        maps.extend(sweep_sparsity(&img.plane, &base, 4).map_err(|e| e.to_string())?.maps);
        for m in maps.iter().filter(|m| m.density() <= SPARSE_DENSITY && m.count_nonzero() > 0) {
            let ratio = (m.width() * m.height()) as f64 / meta_rate(&meta_encode(m)) as f64;
            worst = worst.min(ratio);
            sparse += 1;
        }
    }
    ensure(
        mismatches == 0 && sparse > 0 && worst >= MIN_COMPRESSION,
        format!(
            "{exhaustive} exhaustive + 1000 random planes, {mismatches} mismatches; {sparse} sparse maps, worst ratio {worst:.2}x"
        ),
    )
}

fn criterion_6(_: &mut Work) -> Outcome {
    let q = |v| QualityFactor::new(v).expect("valid quality");
    let table_ok = quant_table(q(50)) == TABLE_K1;
    let mut violations = Vec::new();
    for img in bundled() {
        let mut prev = u64::MAX;
        for v in (1..=100).rev() {
            let r = rate_of(&base_encode(&img.plane, q(v)));
            if r > prev {
                violations.push(format!("{} q={v}", img.name));
            }
            prev = r;
        }
    }
    let g = gradient(CORPUS_SIZE);
    let dec = base_decode(&base_encode(&g, q(100))).map_err(|e| e.to_string())?;
    let p = psnr(&g, &dec).map_err(|e| e.to_string())?;
    ensure(
        table_ok && violations.is_empty() && p >= Q100_MIN_PSNR,
        format!("q50 table {}, monotone violations {violations:?}, q100 gradient {p:.2} dB", if table_ok { "exact" } else { "differs" }),
    )
}

fn fixture(name: &str) -> Result<ImagePlane, String> {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name);
    let bytes = fs::read(&p).map_err(|e| format!("{}: {e}", p.display()))?;
    Ok(to_grayscale(&load_pnm(&bytes).map_err(|e| e.to_string())?))
}

fn criterion_7(_: &mut Work) -> Outcome {
    let a = ImagePlane::from_fn(64, 64, |x, y| ((x * 3 + y * 5) % 250) as u8).map_err(|e| e.to_string())?;
    let b = ImagePlane::from_fn(64, 64, |x, y| a.get(x, y) + 1).map_err(|e| e.to_string())?;
    let unit = psnr(&a, &b).map_err(|e| e.to_string())?;
    let same = ssim(&a, &a).map_err(|e| e.to_string())?;

    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/ssim_vectors.txt");
    let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut pairs = 0;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let want: f64 = f[2].parse().map_err(|e| format!("{line}: {e}"))?;
        let got = ssim(&fixture(f[0])?, &fixture(f[1])?).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs());
        pairs += 1;
    }

    let px = |v: u8| ImagePlane::filled(1, 1, v).expect("1x1");
    let seq = |a, b| FrameSequence::from_planes(vec![px(a), px(b)]).expect("two frames");
    let fd = frame_diff_loss(&seq(0, 10), &seq(0, 4)).map_err(|e| e.to_string())?;
    ensure(
        (unit - UNIT_ERROR_PSNR).abs() <= UNIT_ERROR_TOL && same == 1.0 && pairs > 0 && worst <= SSIM_VECTOR_TOL && fd == 6.0,
        format!("unit-error PSNR {unit:.4} dB, SSIM(x,x) {same}, {pairs} SSIM vectors max err {worst:.2e}, frame loss {fd}"),
    )
}

fn criterion_8(_: &mut Work) -> Outcome {
    let grey = ImagePlane::filled(256, 256, 128).map_err(|e| e.to_string())?;
    let mut worst_rel = 0.0f64;
    for sigma in [10.0, 20.0] {
        let field = noise_field(256, 256, sigma, ChannelSeed(8));
        let noisy = degrade(&grey, &DegradePreset::custom("noise", sigma, None).map_err(|e| e.to_string())?, ChannelSeed(8));
        for v in [field, noisy.to_f64()] {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            worst_rel = worst_rel.max((sd / sigma - 1.0).abs());
        }
    }
    let mut identity = true;
    let mut order_fail = Vec::new();
    let q = QualityFactor::new(75).expect("valid quality");
    for (i, img) in bundled().iter().enumerate() {
        identity &= degrade(&img.plane, &DegradePreset::nn(), ChannelSeed(i as u64)) == img.plane;
        let dec = base_decode(&base_encode(&img.plane, q)).map_err(|e| e.to_string())?;
        let score = |p: DegradePreset| psnr(&img.plane, &degrade(&dec, &p, ChannelSeed(i as u64)));
        let (nn, ln, hn) = (
            score(DegradePreset::nn()).map_err(|e| e.to_string())?,
            score(DegradePreset::ln()).map_err(|e| e.to_string())?,
            score(DegradePreset::hn()).map_err(|e| e.to_string())?,
        );
        if !(nn > ln && ln > hn) {
            order_fail.push(img.name);
        }
    }
    ensure(
        worst_rel <= NOISE_STD_TOL && identity && order_fail.is_empty(),
        format!("noise std max rel err {:.2}%, NN identity {identity}, ordering failures {order_fail:?}", worst_rel * 100.0),
    )
}

fn synthetic(name: &str, pts: &[(u64, f64)]) -> Result<RDCurve, String> {
    RDCurve::from_points(name, pts.iter().map(|&(r, p)| RatePoint::synthetic(r, p, p / 50.0)).collect())
        .map_err(|e| e.to_string())
}

fn criterion_9(_: &mut Work) -> Outcome {
    let m = QualityMetric::Psnr;
    let pts = [(1000, 28.0), (2400, 31.5), (7000, 36.0)];
    let reference = synthetic("ref", &pts)?;
    let saving = |t: &RDCurve| bitrate_saving_at_matched_quality(&reference, t, m).map_err(|e| e.to_string());
    let gain = |r: &RDCurve, t: &RDCurve| quality_gain_at_matched_rate(r, t, m).map_err(|e| e.to_string());
    let self_s = saving(&reference)?.mean;
    let self_g = gain(&reference, &reference)?.mean;
    let half = saving(&synthetic("half", &pts.map(|(r, p)| (r / 2, p)))?)?.mean;
    let plus = gain(&reference, &synthetic("up", &pts.map(|(r, p)| (r, p + 1.0)))?)?.mean;
    // gain is 1 - (r-100)/100 up to r = 200, then (r-200)/100; sampled at
    // r = 100 + 3k the mean is 84.84 / 101 = 0.84
    let three = gain(
        &synthetic("a", &[(100, 30.0), (200, 34.0), (400, 36.0)])?,
        &synthetic("b", &[(100, 31.0), (200, 34.0), (400, 38.0)])?,
    )?;
    ensure(
        self_s == 0.0 && self_g == 0.0 && half == 50.0 && plus == 1.0
            && (three.mean - 0.84).abs() <= RDO_ORACLE_TOL
            && (three.max - 2.0).abs() <= RDO_ORACLE_TOL,
        format!(
            "self {self_s}% / {self_g} dB, half-rate {half}%, +1 dB curve {plus} dB, 3-point mean {:.12} (oracle 0.84)",
            three.mean
        ),
    )
}

const TREND_SWEEP: &[&str] = &[
    "sweep", "--bundled", "edge-rich", "--regimes", "NN,HN", "--qs", "5,10,20,30,50,70,90",
    "--meta-levels", "4", "--low", "10", "--high", "25", "--pools", "1,2,4",
    "--reconstructors", "bicubic,edgeguided,edgefill", "--scale", "4", "--seed", "7",
    "--lambda", "0", "--d-kind", "one_minus_ssim", "--format", "json", "--out", "trend.json",
];

fn criterion_10(w: &mut Work) -> Outcome {
    let t = Instant::now();
    w.msr(TREND_SWEEP)?;
    let took = t.elapsed();
    let mut parts = Vec::new();
    let mut pass = took < SWEEP_BUDGET;
    for rec in ["edgeguided", "edgefill"] {
        let mut gains = Vec::new();
        for regime in ["NN", "HN"] {
            let out = format!("trend_{regime}_{rec}.json");
            let r = format!("{regime}:bicubic:base");
            let t = format!("{regime}:{rec}:meta");
            w.msr(&["compare", "--ref", "trend.json", "--ref-method", &r, "--test", "trend.json", "--test-method", &t, "--metric", "ssim", "--out", &out])?;
            let g = &w.json(&out)?["quality_gain"];
            gains.push((num(g, "mean"), num(g, "max")));
        }
        let ((nn_mean, _), (hn_mean, hn_max)) = (gains[0], gains[1]);
        pass &= hn_max > 0.0 && hn_mean > nn_mean;
        parts.push(format!("{rec}: HN max {hn_max:+.4}, mean HN {hn_mean:+.4} vs NN {nn_mean:+.4}"));
    }
    ensure(pass, format!("SSIM gain over bicubic; {}; sweep {:.1} s", parts.join("; "), took.as_secs_f64()))
}

const DET_SWEEP: &[&str] = &[
    "sweep", "--bundled", "edge-rich", "--regimes", "LN,HN", "--qs", "15,60", "--meta-levels", "2",
    "--low", "10", "--high", "25", "--pools", "1,2", "--reconstructors", "edgeguided,edgefill",
    "--scale", "4", "--seed", "3", "--lambda", "0.0001", "--per-image",
];

fn criterion_11(w: &mut Work) -> Outcome {
    let run = |w: &Work, workers: &str, out: &str| -> Result<Vec<u8>, String> {
        let mut args = DET_SWEEP.to_vec();
        args.extend(["--workers", workers, "--out", out]);
        w.msr(&args)?;
        fs::read(w.path().join(out)).map_err(|e| e.to_string())
    };
    let four = run(w, "4", "det4.csv")?;
    let one = run(w, "1", "det1.csv")?;
    let manifest = fs::read(w.path().join("det4.csv.manifest.json")).map_err(|e| e.to_string())?;
    let replay = w.msr(&["replay", "det4.csv.manifest.json"])?;
    let after = fs::read(w.path().join("det4.csv")).map_err(|e| e.to_string())?;
    let manifest_after = fs::read(w.path().join("det4.csv.manifest.json")).map_err(|e| e.to_string())?;
    let trend = w.msr(&["replay", "trend.json.manifest.json"]);
    ensure(
        four == one && after == four && manifest_after == manifest && replay.contains("byte-identical") && trend.is_ok(),
        format!(
            "workers 1 vs 4 {}, replay of 4-worker sweep {}, replay of trend sweep {}",
            if four == one { "identical" } else { "differ" },
            replay.trim(),
            trend.map_or_else(|e| e, |s| s.trim().to_string())
        ),
    )
}

fn main() -> ExitCode {
    let mut work = Work {
        dir: tempfile::tempdir().expect("temp dir"),
        theorem: None,
    };
    let criteria: [(&str, Check); 11] = [
        ("entropy reduction under side information", criterion_1),
        ("gating never increases entropy", criterion_2),
        ("log-loss decomposition", criterion_3),
        ("information bounded by metadata entropy", criterion_4),
        ("bi-level codec losslessness and compression", criterion_5),
        ("base codec tables, monotone rate, q100 fidelity", criterion_6),
        ("metric oracles", criterion_7),
        ("degradation presets", criterion_8),
        ("R-D comparison oracles", criterion_9),
        ("metadata gain widens from NN to HN", criterion_10),
        ("deterministic sweeps and replay", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check(&mut work) {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag}  {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
