use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use msr_core::basecodec::{base_decode, base_encode, rate_of, BaseBitstream, QualityFactor};
use msr_core::bilevel::{meta_decode, meta_encode, meta_rate, MetaBitstream};
use msr_core::channel::{degrade, ChannelSeed, DegradePreset};
use msr_core::corpus;
use msr_core::infotheory::verify_theorem as run_theorem;
use msr_core::metagen::{
    canny, downsample_metadata, gradient_2bit, upsample_metadata, CannyParams, MetadataPlane,
};
use msr_core::metrics::report;
use msr_core::pixel::{load_pnm, resample, save_pnm, to_grayscale, ImageFrame, ImagePlane, ResampleKernel};
use msr_core::rdo::{
    bitrate_saving_with_axis, build_curve, build_curves_per_image, emit, parse,
    quality_gain_with_axis, Comparison, CurveConfig, DistortionKind, EmitFormat, MetadataSweep,
    QualityMetric, RDCurve, RateAxis, RdoError,
};
use msr_core::receiver::{gate, EdgeGuided, Registry, SUPPORTED_SCALES};

use crate::error::{Failure, Kind, Result};
use crate::manifest::{to_json_bytes, Recorder, RunManifest};
use crate::{
    CompareArgs, CorpusSet, EncodeArgs, GenCorpusArgs, KernelArg, MetaKind, ReceiveArgs,
    ReplayArgs, SweepArgs, VerifyArgs,
};

fn kernel(k: KernelArg) -> ResampleKernel {
    match k {
        KernelArg::Nearest => ResampleKernel::Nearest,
        KernelArg::Bicubic => ResampleKernel::Bicubic,
    }
}

fn check_scale(scale: usize) -> Result<()> {
    if SUPPORTED_SCALES.contains(&scale) {
        Ok(())
    } else {
        Err(Failure::usage(format!("scale {scale} not in {{1, 2, 4}}")))
    }
}

fn parse_arg<T: std::str::FromStr>(what: &str, s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| Failure::usage(format!("--{what}: {e}")))
}

fn finish<A: Serialize>(
    rec: Recorder,
    subcommand: &str,
    args: &A,
    summary: serde_json::Value,
    manifest_path: &Path,
) -> Result<RunManifest> {
    let m = rec.finish(subcommand, serde_json::to_value(args)?, summary);
    m.save(manifest_path)?;
    Ok(m)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn registry(alpha: f64) -> Result<Registry> {
    if !alpha.is_finite() {
        return Err(Failure::usage(format!("--alpha {alpha} must be finite")));
    }
    Ok(Registry::with_defaults().with(Arc::new(EdgeGuided::with_alpha(alpha))))
}

// ---------------------------------------------------------------------------

pub fn encode(a: &EncodeArgs) -> Result<RunManifest> {
    check_scale(a.scale)?;
    if a.pool == 0 {
        return Err(Failure::usage("--pool must be >= 1"));
    }
    let q = QualityFactor::new(a.q)?;
    let stem = match &a.stem {
        Some(s) => s.clone(),
        None => a
            .input
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Failure::usage("cannot derive a stem from --input; pass --stem"))?
            .to_string(),
    };
    let mut rec = Recorder::default();
    let hr = to_grayscale(&load_pnm(&rec.read(&a.input)?)?);
    let (w, h) = (hr.width(), hr.height());
    if w % a.scale != 0 || h % a.scale != 0 {
        return Err(Failure::usage(format!("{w}x{h} input is not divisible by scale {}", a.scale)));
    }
    let lr = if a.scale == 1 {
        hr.clone()
    } else {
        resample(&hr, w / a.scale, h / a.scale, kernel(a.downsample))
    };
    let base = base_encode(&lr, q);
    let base_bytes = base.to_bytes();
    rec.write(&a.out_dir.join(format!("{stem}.msrb")), &base_bytes)?;

    let meta = match a.meta {
        MetaKind::None => None,
        MetaKind::Canny => Some(canny(&hr, &CannyParams::new(a.canny_sigma, a.low, a.high)?)?),
        MetaKind::Grad2 => Some(gradient_2bit(&hr, a.grad_sigma)?),
    };
    let mut summary = json!({
        "width": w,
        "height": h,
        "base_width": lr.width(),
        "base_height": lr.height(),
        "base_bits": rate_of(&base),
        "base_file_bytes": base_bytes.len(),
        "meta_bits": 0,
    });
    if let Some(m) = meta {
        let pooled = downsample_metadata(&m, a.pool)?;
        let stream = meta_encode(&pooled);
        let bytes = stream.to_bytes();
        rec.write(&a.out_dir.join(format!("{stem}.msrm")), &bytes)?;
        summary["meta_bits"] = json!(meta_rate(&stream));
        summary["meta_payload_bits"] = json!(stream.bit_count);
        summary["meta_file_bytes"] = json!(bytes.len());
        summary["meta_density"] = json!(m.density());
        summary["meta_width"] = json!(pooled.width());
        summary["meta_height"] = json!(pooled.height());
    }
    let total = summary["base_bits"].as_u64().unwrap_or(0) + summary["meta_bits"].as_u64().unwrap_or(0);
    summary["total_bits"] = json!(total);
    let path = a
        .manifest
        .clone()
        .unwrap_or_else(|| a.out_dir.join(format!("{stem}.manifest.json")));
    finish(rec, "encode", a, summary, &path)
}

/// Brings a decoded (possibly pooled) metadata map to the output grid.
fn meta_to_grid(m: &MetadataPlane, w: usize, h: usize) -> Result<MetadataPlane> {
    let pool = w.div_ceil(m.width());
    if pool == 0 || w.div_ceil(pool) != m.width() || h.div_ceil(pool) != m.height() {
        return Err(Failure::format(format!(
            "metadata is {}x{}, which no pooling of the {w}x{h} output grid produces",
            m.width(),
            m.height()
        )));
    }
    if pool == 1 {
        return Ok(m.clone());
    }
    Ok(upsample_metadata(m, pool, w, h)?)
}

pub fn receive(a: &ReceiveArgs) -> Result<RunManifest> {
    check_scale(a.scale)?;
    let regime: DegradePreset = parse_arg("regime", &a.regime)?;
    let reg = registry(a.alpha)?;
    reg.get(&a.reconstructor)?;
    let mut rec = Recorder::default();
    let base = BaseBitstream::from_bytes(&rec.read(&a.base)?)?;
    let decoded = base_decode(&base)?;
    let lq = degrade(&decoded, &regime, ChannelSeed(a.seed));
    let (w, h) = (lq.width() * a.scale, lq.height() * a.scale);

    let mut summary = json!({
        "base_bits": rate_of(&base),
        "meta_bits": 0,
        "regime": regime.name,
        "reconstructor": a.reconstructor,
        "scale": a.scale,
        "seed": a.seed,
        "gate": null,
        "metadata_used": false,
        "metrics": null,
    });
    let meta = match &a.meta {
        None => None,
        Some(p) => {
            let stream = MetaBitstream::from_bytes(&rec.read(p)?)?;
            summary["meta_bits"] = json!(meta_rate(&stream));
            Some(meta_to_grid(&meta_decode(&stream)?, w, h)?)
        }
    };
    let m_tilde = match &meta {
        None => None,
        Some(m) => {
            let d = gate(&lq, m, a.scale, a.tau)?;
            summary["gate"] = serde_json::to_value(d)?;
            d.v.then_some(m)
        }
    };
    summary["metadata_used"] = json!(m_tilde.is_some());
    let sr = reg.reconstruct(&a.reconstructor, &lq, m_tilde, a.scale)?;
    if let Some(r) = &a.reference {
        let reference = to_grayscale(&load_pnm(&rec.read(r)?)?);
        summary["metrics"] = serde_json::to_value(report(&reference, &sr)?)?;
    }
    let total = summary["base_bits"].as_u64().unwrap_or(0) + summary["meta_bits"].as_u64().unwrap_or(0);
    summary["total_bits"] = json!(total);
    rec.write(&a.out, &save_pnm(&ImageFrame::gray(sr)))?;
    let report_path = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    rec.write(&report_path, &to_json_bytes(&summary)?)?;
    let path = a.manifest.clone().unwrap_or_else(|| with_suffix(&a.out, ".manifest.json"));
    finish(rec, "receive", a, summary, &path)
}

// ---------------------------------------------------------------------------

fn load_corpus(a: &SweepArgs, rec: &mut Recorder) -> Result<Vec<ImagePlane>> {
    match (&a.corpus, a.bundled) {
        (Some(dir), None) => {
            let mut files: Vec<PathBuf> = fs::read_dir(dir)
                .map_err(|e| Failure::from(e).context(dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                        Some("pgm" | "ppm" | "pnm")
                    )
                })
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Failure::usage(format!("no .pgm/.ppm/.pnm files in {}", dir.display())));
            }
            files
                .iter()
                .map(|p| {
                    let bytes = rec.read(p)?;
                    Ok(to_grayscale(&load_pnm(&bytes).map_err(|e| Failure::from(e).context(p.display()))?))
                })
                .collect()
        }
        (None, Some(set)) => Ok(bundled(set).into_iter().map(|c| c.plane).collect()),
        _ => Err(Failure::usage("pass exactly one of --corpus or --bundled")),
    }
}

fn bundled(set: CorpusSet) -> Vec<corpus::CorpusImage> {
    match set {
        CorpusSet::All => corpus::bundled(),
        CorpusSet::EdgeRich => corpus::edge_rich(),
    }
}

fn sweep_curves(a: &SweepArgs, images: &[ImagePlane]) -> Result<Vec<RDCurve>> {
    check_scale(a.scale)?;
    if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
        return Err(Failure::usage(format!("--lambda {} must be finite and >= 0", a.lambda)));
    }
    let d_kind: DistortionKind = parse_arg("d-kind", &a.d_kind)?;
    let reg = registry(a.alpha)?;
    for r in &a.reconstructors {
        reg.get(r)?;
    }
    let regimes = a
        .regimes
        .iter()
        .map(|r| parse_arg::<DegradePreset>("regimes", r))
        .collect::<Result<Vec<_>>>()?;
    let meta_on = match a.meta {
        MetaKind::None => None,
        _ if a.meta_levels == 0 => None,
        MetaKind::Canny => {
            let base = CannyParams::new(a.canny_sigma, a.low, a.high)?;
            if !(a.ratio > 1.0 && a.ratio.is_finite()) {
                return Err(Failure::usage(format!("--ratio {} must be > 1", a.ratio)));
            }
            Some(MetadataSweep::Canny {
                base,
                levels: a.meta_levels,
                ratio: a.ratio,
                pools: a.pools.clone(),
            })
        }
        MetaKind::Grad2 => Some(MetadataSweep::Grad2 {
            sigma: a.grad_sigma,
            pools: a.pools.clone(),
        }),
    };
    if a.pools.contains(&0) {
        return Err(Failure::usage("--pools entries must be >= 1"));
    }
    let mut curves = Vec::new();
    for regime in &regimes {
        for r in &a.reconstructors {
            let mut variants = vec![("base", MetadataSweep::None)];
            if let Some(m) = &meta_on {
                variants.push(("meta", m.clone()));
            }
            for (tag, metadata) in variants {
                let cfg = CurveConfig {
                    method: format!("{}:{r}:{tag}", regime.name),
                    regime: regime.clone(),
                    reconstructor: r.clone(),
                    metadata,
                    qualities: a.qs.clone(),
                    scale: a.scale,
                    seed: a.seed,
                    tau: a.tau,
                    d_kind,
                    lambda: a.lambda,
                    downsample: ResampleKernel::Bicubic,
                };
                if a.per_image {
                    curves.extend(build_curves_per_image(images, &cfg, &reg)?);
                } else {
                    curves.push(build_curve(images, &cfg, &reg)?);
                }
            }
        }
    }
    Ok(curves)
}

pub fn sweep(a: &SweepArgs) -> Result<RunManifest> {
    let format: EmitFormat = parse_arg("format", &a.format)?;
    let mut rec = Recorder::default();
    let images = load_corpus(a, &mut rec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers)
        .build()
        .map_err(|e| Failure::internal(e.to_string()))?;
    let curves = pool.install(|| sweep_curves(a, &images))?;
    let bytes = emit(&curves, format)?;
    rec.write(&a.out, &bytes)?;
    let summary = json!({
        "images": images.len(),
        "curves": curves.iter().map(|c| json!({"method": c.method, "points": c.points.len()})).collect::<Vec<_>>(),
    });
    let path = a.manifest.clone().unwrap_or_else(|| with_suffix(&a.out, ".manifest.json"));
    finish(rec, "sweep", a, summary, &path)
}

// ---------------------------------------------------------------------------

fn run_verify(a: &VerifyArgs) -> Result<(RunManifest, bool)> {
    let &[x, y, m] = a.alphabets.as_slice() else {
        return Err(Failure::usage("--alphabets takes three sizes, e.g. 4,4,4"));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let r = run_theorem(a.samples, a.seed, (x, y, m), &mut rng)?;
    let mut rec = Recorder::default();
    rec.write(&a.out, &to_json_bytes(&r)?)?;
    let path = a.manifest.clone().unwrap_or_else(|| with_suffix(&a.out, ".manifest.json"));
    let summary = json!({ "pass": r.pass, "failures": r.failures.len() });
    Ok((finish(rec, "verify-theorem", a, summary, &path)?, r.pass))
}

fn theorem_outcome(a: &VerifyArgs, pass: bool) -> Result<()> {
    if pass {
        Ok(())
    } else {
        Err(Failure::internal(format!(
            "inequality checks failed; see {}",
            a.out.display()
        )))
    }
}

pub fn verify_theorem(a: &VerifyArgs) -> Result<RunManifest> {
    let (m, pass) = run_verify(a)?;
    theorem_outcome(a, pass)?;
    Ok(m)
}

fn load_curve(rec: &mut Recorder, path: &Path, method: Option<&str>) -> Result<RDCurve> {
    let bytes = rec.read(path)?;
    let format = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        EmitFormat::Json
    } else {
        EmitFormat::Csv
    };
    let curves = parse(&bytes, format).map_err(|e| Failure::from(e).context(path.display()))?;
    match method {
        None => curves
            .into_iter()
            .next()
            .ok_or_else(|| Failure::format(format!("{} holds no curves", path.display()))),
        Some(m) => curves
            .into_iter()
            .find(|c| c.method == m)
            .ok_or_else(|| Failure::usage(format!("no curve '{m}' in {}", path.display()))),
    }
}

pub fn compare(a: &CompareArgs) -> Result<RunManifest> {
    let metric: QualityMetric = parse_arg("metric", &a.metric)?;
    let axis = match a.axis.as_str() {
        "linear" => RateAxis::Linear,
        "log" => RateAxis::Log,
        other => return Err(Failure::usage(format!("--axis: unknown '{other}'"))),
    };
    let mut rec = Recorder::default();
    let r = load_curve(&mut rec, &a.reference, a.ref_method.as_deref())?;
    let t = load_curve(&mut rec, &a.test, a.test_method.as_deref())?;
    let saving = bitrate_saving_with_axis(&r, &t, metric, axis);
    let gain = quality_gain_with_axis(&r, &t, metric, axis);
    let side = |c: &std::result::Result<Comparison, RdoError>| match c {
        Ok(v) => json!(v),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let out = json!({
        "reference": r.method,
        "test": t.method,
        "metric": a.metric,
        "axis": a.axis,
        "bitrate_saving_percent": side(&saving),
        "quality_gain": side(&gain),
    });
    rec.write(&a.out, &to_json_bytes(&out)?)?;
    let path = a.manifest.clone().unwrap_or_else(|| with_suffix(&a.out, ".manifest.json"));
    let m = finish(rec, "compare", a, out, &path)?;
    // outputs are written either way; a missing overlap still fails the run
    saving?;
    gain?;
    Ok(m)
}

pub fn gen_corpus(a: &GenCorpusArgs) -> Result<RunManifest> {
    let mut rec = Recorder::default();
    let images = bundled(a.set);
    for c in &images {
        rec.write(
            &a.out_dir.join(format!("{}.pgm", c.name)),
            &save_pnm(&ImageFrame::gray(c.plane.clone())),
        )?;
    }
    let summary = json!({ "images": images.iter().map(|c| c.name).collect::<Vec<_>>() });
    let path = a
        .manifest
        .clone()
        .unwrap_or_else(|| a.out_dir.join("corpus.manifest.json"));
    finish(rec, "gen-corpus", a, summary, &path)
}

// ---------------------------------------------------------------------------

fn from_params<T: serde::de::DeserializeOwned>(m: &RunManifest) -> Result<T> {
    serde_json::from_value(m.params.clone())
        .map_err(|e| Failure::format(format!("manifest params for '{}': {e}", m.subcommand)))
}

pub fn replay(a: &ReplayArgs) -> Result<()> {
    let old = RunManifest::load(&a.manifest)?;
    for input in &old.inputs {
        let bytes = fs::read(&input.path).map_err(|e| Failure::from(e).context(input.path.display()))?;
        if crate::manifest::sha256_hex(&bytes) != input.sha256 {
            return Err(Failure::format(format!(
                "input {} changed since the manifest was written",
                input.path.display()
            )));
        }
    }
    // The recorded parameters include the manifest location, so the re-run
    // writes its manifest where the original one was written.
    let mut theorem: Option<(VerifyArgs, bool)> = None;
    let fresh = match old.subcommand.as_str() {
        "encode" => encode(&from_params(&old)?)?,
        "receive" => receive(&from_params(&old)?)?,
        "sweep" => sweep(&from_params(&old)?)?,
        "verify-theorem" => {
            let p: VerifyArgs = from_params(&old)?;
            let (m, pass) = run_verify(&p)?;
            theorem = Some((p, pass));
            m
        }
        "compare" => compare(&from_params(&old)?)?,
        "gen-corpus" => gen_corpus(&from_params(&old)?)?,
        other => return Err(Failure::format(format!("unknown subcommand '{other}' in manifest"))),
    };
    let diverged: Vec<String> = old
        .outputs
        .iter()
        .zip(&fresh.outputs)
        .filter(|(o, n)| o != n)
        .map(|(o, _)| o.path.display().to_string())
        .collect();
    if !diverged.is_empty() || old.outputs.len() != fresh.outputs.len() {
        return Err(Failure::new(
            Kind::Internal,
            format!("replay diverged from the manifest: {}", diverged.join(", ")),
        ));
    }
    println!("replay ok: {} outputs byte-identical", fresh.outputs.len());
    match theorem {
        Some((p, pass)) => theorem_outcome(&p, pass),
        None => Ok(()),
    }
}
