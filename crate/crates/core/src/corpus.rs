//! Bundled synthetic corpus.
//!
//! All images are generated procedurally and deterministically, so the
//! corpus carries no licensed content and can be regenerated bit-exactly.

use crate::channel::splitmix64;
use crate::pixel::{round_clamp_u8, ImagePlane};

pub const CORPUS_SIZE: usize = 256;

#[derive(Debug, Clone)]
pub struct CorpusImage {
    pub name: &'static str,
    pub plane: ImagePlane,
}

/// Vertical, horizontal and diagonal step edges between flat regions.
pub fn steps(size: usize) -> ImagePlane {
    let s = size as f64;
    ImagePlane::from_fn(size, size, |x, y| {
        let (fx, fy) = (x as f64 / s, y as f64 / s);
        let mut v = if fx < 0.5 { 40.0 } else { 200.0 };
        if fy > 0.3 && fy < 0.7 && fx > 0.2 && fx < 0.8 {
            v = 120.0;
        }
        if fx + fy > 1.45 {
            v = 240.0;
        }
        if (fx - 0.25).powi(2) + (fy - 0.2).powi(2) < 0.01 {
            v = 10.0;
        }
        v as u8
    })
    .expect("non-empty")
}

/// Smooth diagonal ramp with a gentle sinusoidal swell.
pub fn gradient(size: usize) -> ImagePlane {
    let s = size as f64;
    ImagePlane::from_fn(size, size, |x, y| {
        let (fx, fy) = (x as f64 / s, y as f64 / s);
        round_clamp_u8(30.0 + 150.0 * (0.6 * fx + 0.4 * fy) + 20.0 * (3.0 * fx).sin() * fy)
    })
    .expect("non-empty")
}

/// Dark strokes on a light page, arranged in a text-like grid of cells.
pub fn glyphs(size: usize) -> ImagePlane {
    const CELL_W: usize = 16;
    const CELL_H: usize = 24;
    let mut ink = vec![false; size * size];
    let mut stamp = |x0: f64, y0: f64, x1: f64, y1: f64| {
        let steps = ((x1 - x0).abs().max((y1 - y0).abs()) * 2.0).ceil() as usize + 1;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let (cx, cy) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            for dy in 0..2 {
                for dx in 0..2 {
                    let (px, py) = (cx as usize + dx, cy as usize + dy);
                    if px < size && py < size {
                        ink[py * size + px] = true;
                    }
                }
            }
        }
    };
    let mut state = 0x5eed_u64;
    let mut next = || {
        state = splitmix64(state);
        state
    };
    for row in 0..size / CELL_H {
        // leave a blank gutter every few lines like a paragraph break
        if row % 4 == 3 {
            continue;
        }
        for col in 0..size / CELL_W {
            if next() % 7 == 0 {
                continue;
            }
            let (ox, oy) = ((col * CELL_W) as f64 + 2.0, (row * CELL_H) as f64 + 3.0);
            let strokes = 2 + (next() % 3) as usize;
            for _ in 0..strokes {
                let r = next();
                let (w, h) = (10.0, 16.0);
                let (x0, y0, x1, y1) = match r % 5 {
                    0 => (0.0, 0.0, 0.0, h),
                    1 => (w, 0.0, w, h),
                    2 => (0.0, h / 2.0, w, h / 2.0),
                    3 => (0.0, 0.0, w, h),
                    _ => (0.0, h, w, 0.0),
                };
                stamp(ox + x0, oy + y0, ox + x1, oy + y1);
            }
        }
    }
    ImagePlane::new(size, size, ink.iter().map(|&i| if i { 25 } else { 230 }).collect())
        .expect("non-empty")
}

/// 32-pixel checkerboard.
pub fn checker(size: usize) -> ImagePlane {
    ImagePlane::from_fn(size, size, |x, y| if (x / 32 + y / 32) % 2 == 0 { 50 } else { 205 })
        .expect("non-empty")
}

/// Sum of smooth Gaussian bumps; no sharp edges.
pub fn blob(size: usize) -> ImagePlane {
    let s = size as f64;
    let bumps = [
        (0.3, 0.35, 0.12, 120.0),
        (0.7, 0.6, 0.18, 90.0),
        (0.45, 0.8, 0.08, -60.0),
    ];
    ImagePlane::from_fn(size, size, |x, y| {
        let (fx, fy) = (x as f64 / s, y as f64 / s);
        let v: f64 = bumps
            .iter()
            .map(|&(cx, cy, r, a)| a * (-((fx - cx).powi(2) + (fy - cy).powi(2)) / (2.0 * r * r)).exp())
            .sum();
        round_clamp_u8(80.0 + v)
    })
    .expect("non-empty")
}

/// Natural-looking composite: graded sky, horizon, shapes and fine texture.
pub fn scene(size: usize) -> ImagePlane {
    let s = size as f64;
    ImagePlane::from_fn(size, size, |x, y| {
        let (fx, fy) = (x as f64 / s, y as f64 / s);
        let horizon = 0.55 + 0.06 * (fx * 9.0).sin();
        let mut v = if fy < horizon {
            170.0 + 60.0 * fy
        } else {
            70.0 + 30.0 * fx
        };
        // building
        if fx > 0.15 && fx < 0.35 && fy > 0.3 && fy < horizon + 0.05 {
            v = 95.0;
            if ((x / 6) % 2 == 0) && ((y / 8) % 2 == 0) && fy < horizon - 0.02 {
                v = 215.0;
            }
        }
        // sun
        if (fx - 0.75).powi(2) + (fy - 0.2).powi(2) < 0.008 {
            v = 250.0;
        }
        // ground texture
        if fy >= horizon {
            let h = splitmix64((y * size + x) as u64 ^ 0xa5a5);
            v += ((h >> 59) as f64) - 16.0;
            v += 12.0 * ((fx * 40.0).sin() * (fy * 25.0).cos());
        }
        round_clamp_u8(v)
    })
    .expect("non-empty")
}

/// The full bundled corpus.
pub fn bundled() -> Vec<CorpusImage> {
    let n = CORPUS_SIZE;
    vec![
        CorpusImage { name: "steps", plane: steps(n) },
        CorpusImage { name: "gradient", plane: gradient(n) },
        CorpusImage { name: "glyphs", plane: glyphs(n) },
        CorpusImage { name: "checker", plane: checker(n) },
        CorpusImage { name: "blob", plane: blob(n) },
        CorpusImage { name: "scene", plane: scene(n) },
    ]
}

/// Subset dominated by sharp structure.
pub fn edge_rich() -> Vec<CorpusImage> {
    bundled()
        .into_iter()
        .filter(|c| matches!(c.name, "steps" | "glyphs" | "checker" | "scene"))
        .collect()
}

pub fn by_name(name: &str) -> Option<ImagePlane> {
    bundled().into_iter().find(|c| c.name == name).map(|c| c.plane)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic() {
        let a = bundled();
        let b = bundled();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.plane, y.plane);
            assert_eq!((x.plane.width(), x.plane.height()), (CORPUS_SIZE, CORPUS_SIZE));
        }
        assert_eq!(edge_rich().len(), 4);
    }

    #[test]
    fn images_are_not_flat() {
        for c in bundled() {
            let s = c.plane.samples();
            let (lo, hi) = (s.iter().min().unwrap(), s.iter().max().unwrap());
            assert!(hi - lo > 50, "{}", c.name);
        }
    }
}
