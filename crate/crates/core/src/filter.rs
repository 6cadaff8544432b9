//! Float-domain filtering shared by edge extraction, the channel model and
//! the reconstructors. All convolutions clamp coordinates at the border.

/// Sampled Gaussian of odd length, normalized to sum 1.
///
/// Callers validate `size` (odd) and `sigma` (> 0).
pub(crate) fn gaussian_weights(sigma: f64, size: usize) -> Vec<f64> {
    let r = (size / 2) as isize;
    let denom = 2.0 * sigma * sigma;
    let mut w: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / denom).exp()).collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Kernel with radius ⌈3σ⌉.
pub(crate) fn gaussian_weights_3sigma(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(0.0) as usize;
    gaussian_weights(sigma, 2 * r + 1)
}

/// Separable convolution with the same odd-length kernel on both axes.
pub(crate) fn convolve_separable(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    if kernel.len() == 1 {
        return src.iter().map(|v| v * kernel[0]).collect();
    }
    let r = (kernel.len() / 2) as isize;
    let (wi, hi) = (width as isize, height as isize);
    let mut tmp = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..wi {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let sx = (x + k as isize - r).clamp(0, wi - 1) as usize;
                acc += w * row[sx];
            }
            tmp[y * width + x as usize] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..hi {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let sy = (y + k as isize - r).clamp(0, hi - 1) as usize;
                acc += w * tmp[sy * width + x];
            }
            out[y as usize * width + x] = acc;
        }
    }
    out
}

/// 3x3 Sobel gradients scaled by 1/4, so a unit-width step of height 255
/// yields a magnitude of 255 on the axis it crosses.
pub(crate) fn sobel(src: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>) {
    let (wi, hi) = (width as isize, height as isize);
    let at = |x: isize, y: isize| {
        src[(y.clamp(0, hi - 1) * wi + x.clamp(0, wi - 1)) as usize]
    };
    let mut gx = vec![0.0; src.len()];
    let mut gy = vec![0.0; src.len()];
    for y in 0..hi {
        for x in 0..wi {
            let i = (y * wi + x) as usize;
            gx[i] = ((at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1)))
                / 4.0;
            gy[i] = ((at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1)))
                / 4.0;
        }
    }
    (gx, gy)
}

/// Discrete 3x3 Laplacian (4-neighbour), border-clamped.
pub(crate) fn laplacian(src: &[f64], width: usize, height: usize) -> Vec<f64> {
    let (wi, hi) = (width as isize, height as isize);
    let at = |x: isize, y: isize| {
        src[(y.clamp(0, hi - 1) * wi + x.clamp(0, wi - 1)) as usize]
    };
    let mut out = vec![0.0; src.len()];
    for y in 0..hi {
        for x in 0..wi {
            out[(y * wi + x) as usize] =
                at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y);
        }
    }
    out
}

/// Noise standard deviation estimate from the response to the difference
/// of two Laplacians (Immerkaer's operator). Returns 0 for planes smaller
/// than 3x3.
pub(crate) fn estimate_noise_sigma(src: &[f64], width: usize, height: usize) -> f64 {
    if width < 3 || height < 3 {
        return 0.0;
    }
    const K: [[f64; 3]; 3] = [[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]];
    let mut acc = 0.0;
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let mut r = 0.0;
            for (dy, row) in K.iter().enumerate() {
                for (dx, k) in row.iter().enumerate() {
                    r += k * src[(y + dy - 1) * width + x + dx - 1];
                }
            }
            acc += r.abs();
        }
    }
    (std::f64::consts::PI / 2.0).sqrt() * acc / (6.0 * ((width - 2) * (height - 2)) as f64)
}

/// Normalized recursive smoothing that does not propagate across barrier
/// sites. Filters `values * weights` and `weights` with the same
/// edge-stopping first-order recursion (alternating row and column passes,
/// `iterations` rounds with geometrically shrinking spread) and returns
/// their ratio, or `None` where the filtered weight vanishes.
pub(crate) fn barrier_smooth(
    values: &[f64],
    weights: &[f64],
    width: usize,
    height: usize,
    barrier: &[bool],
    sigma: f64,
    iterations: u32,
) -> Vec<Option<f64>> {
    let mut num: Vec<f64> = values.iter().zip(weights).map(|(v, w)| v * w).collect();
    let mut den = weights.to_vec();
    let n = iterations.max(1);
    let norm = (4f64.powi(n as i32) - 1.0).sqrt();
    for it in 0..n {
        let s = sigma * 3f64.sqrt() * 2f64.powi((n - 1 - it) as i32) / norm;
        let a = (-(2f64.sqrt()) / s).exp();
        let link = |p: usize, q: usize| if barrier[p] || barrier[q] { 0.0 } else { a };
        let pass = |buf: &mut [f64], idx: &dyn Fn(usize) -> usize, len: usize| {
            for k in 1..len {
                let (p, q) = (idx(k), idx(k - 1));
                buf[p] += link(p, q) * (buf[q] - buf[p]);
            }
            for k in (0..len - 1).rev() {
                let (p, q) = (idx(k), idx(k + 1));
                buf[p] += link(p, q) * (buf[q] - buf[p]);
            }
        };
        for y in 0..height {
            let idx = |k: usize| y * width + k;
            pass(&mut num, &idx, width);
            pass(&mut den, &idx, width);
        }
        for x in 0..width {
            let idx = |k: usize| k * width + x;
            pass(&mut num, &idx, height);
            pass(&mut den, &idx, height);
        }
    }
    num.iter()
        .zip(&den)
        .map(|(&a, &b)| if b > 1e-9 { Some(a / b) } else { None })
        .collect()
}
