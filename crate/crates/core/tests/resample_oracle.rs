//! Bicubic resampling against independent evaluations.
//!
//! `rs_*_pil_x4.pgm` hold a 4x shrink followed by a 4x enlargement computed
//! with Pillow's BICUBIC filter (Catmull-Rom, support widened when
//! shrinking, 8-bit rounding between passes).

use std::path::Path;

use msr_core::metrics::psnr;
use msr_core::pixel::{load_pnm, resample, to_grayscale, ImagePlane, ResampleKernel};
use proptest::prelude::*;

fn load(name: &str) -> ImagePlane {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name);
    to_grayscale(&load_pnm(&std::fs::read(p).unwrap()).unwrap())
}

fn catmull_rom(t: f64) -> f64 {
    let t = t.abs();
    if t < 1.0 {
        1.5 * t * t * t - 2.5 * t * t + 1.0
    } else if t < 2.0 {
        -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
    } else {
        0.0
    }
}

/// Non-separable direct evaluation: each output sums the full 2-D tap
/// product over edge-clamped source samples, normalized by the weight sum.
fn resize_direct(src: &ImagePlane, nw: usize, nh: usize) -> Vec<f64> {
    let (w, h) = (src.width(), src.height());
    let (rx, ry) = (w as f64 / nw as f64, h as f64 / nh as f64);
    let (sx, sy) = (rx.max(1.0), ry.max(1.0));
    let mut out = Vec::with_capacity(nw * nh);
    for oy in 0..nh {
        let cy = (oy as f64 + 0.5) * ry - 0.5;
        for ox in 0..nw {
            let cx = (ox as f64 + 0.5) * rx - 0.5;
            let (mut acc, mut norm) = (0.0, 0.0);
            let ylo = (cy - 2.0 * sy).floor() as isize;
            let xlo = (cx - 2.0 * sx).floor() as isize;
            for yy in ylo..=(cy + 2.0 * sy).ceil() as isize {
                let wy = catmull_rom((yy as f64 - cy) / sy);
                for xx in xlo..=(cx + 2.0 * sx).ceil() as isize {
                    let wgt = wy * catmull_rom((xx as f64 - cx) / sx);
                    acc += wgt * f64::from(src.get_clamped(xx, yy));
                    norm += wgt;
                }
            }
            out.push(acc / norm);
        }
    }
    out
}

fn round_trip(p: &ImagePlane) -> ImagePlane {
    let down = resample(p, p.width() / 4, p.height() / 4, ResampleKernel::Bicubic);
    resample(&down, p.width(), p.height(), ResampleKernel::Bicubic)
}

#[test]
fn round_trip_psnr_matches_pillow_within_tenth_db() {
    for name in ["scene", "glyphs", "steps"] {
        let orig = load(&format!("rs_{name}.pgm"));
        let pil = load(&format!("rs_{name}_pil_x4.pgm"));
        let ours = round_trip(&orig);
        let (a, b) = (psnr(&orig, &ours).unwrap(), psnr(&orig, &pil).unwrap());
        assert!((a - b).abs() <= 0.1, "{name}: ours {a:.3} dB, pillow {b:.3} dB");
    }
}

#[test]
fn round_trip_psnr_matches_direct_evaluation_on_a_64px_pattern() {
    let pattern = ImagePlane::from_fn(64, 64, |x, y| {
        let ring = ((x as f64 - 31.5).hypot(y as f64 - 31.5) / 3.0) as usize % 2;
        (40 + 150 * ring + (x * 2 + y) % 30) as u8
    })
    .unwrap();
    let down = resize_direct(&pattern, 16, 16);
    let down = ImagePlane::from_f64(16, 16, &down).unwrap();
    let back = ImagePlane::from_f64(64, 64, &resize_direct(&down, 64, 64)).unwrap();
    let (ours, oracle) = (psnr(&pattern, &round_trip(&pattern)).unwrap(), psnr(&pattern, &back).unwrap());
    assert!((ours - oracle).abs() <= 0.1, "{ours} vs {oracle}");
}

#[test]
fn separable_matches_direct_evaluation() {
    let orig = load("rs_scene.pgm");
    for (nw, nh) in [(32, 32), (40, 24), (128, 128), (300, 200), (7, 131)] {
        let want = resize_direct(&orig, nw, nh);
        let got = resample(&orig, nw, nh, ResampleKernel::Bicubic);
        for (g, w) in got.samples().iter().zip(&want) {
            let w = w.round().clamp(0.0, 255.0);
            assert!((f64::from(*g) - w).abs() <= 1.0, "{nw}x{nh}");
        }
    }
}

proptest! {
    #[test]
    fn constant_planes_survive_any_resize(v in 0u8..=255, w in 1usize..24, h in 1usize..24, nw in 1usize..40, nh in 1usize..40) {
        let p = ImagePlane::filled(w, h, v).unwrap();
        let r = resample(&p, nw, nh, ResampleKernel::Bicubic);
        prop_assert!(r.samples().iter().all(|&s| s == v));
    }
}
