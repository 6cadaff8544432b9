//! Transmission degradation applied to the decoded base layer.
//!
//! Presets follow the no-noise / low-noise / high-noise regimes: additive
//! zero-mean Gaussian noise on the 0-255 scale, then an isotropic Gaussian
//! blur. Intermediates stay in `f64`; the result is rounded once.
//!
//! Noise is counter-based so every pixel's draw depends only on
//! `(seed, pixel index)`. For pixel index `i = y * width + x`:
//!
//! ```text
//! a  = splitmix64(seed ^ (2i     * 0x9E3779B97F4A7C15))
//! b  = splitmix64(seed ^ ((2i+1) * 0x9E3779B97F4A7C15))
//! u1 = ((a >> 11) + 1) * 2^-53          in (0, 1]
//! u2 =  (b >> 11)      * 2^-53          in [0, 1)
//! n  = sigma * sqrt(-2 ln u1) * cos(2 pi u2)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{convolve_separable, gaussian_weights};
use crate::pixel::{round_clamp_u8, ImagePlane};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("blur kernel size {0} must be odd")]
    EvenKernel(usize),
    #[error("blur sigma {0} must be > 0")]
    Sigma(f64),
    #[error("noise sigma {0} must be >= 0")]
    NoiseSigma(f64),
    #[error("unknown degradation preset '{0}'")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelSeed(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegradeOrder {
    #[default]
    NoiseThenBlur,
    BlurThenNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blur {
    pub kernel: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradePreset {
    pub name: String,
    pub noise_sigma: f64,
    pub blur: Option<Blur>,
    #[serde(default)]
    pub order: DegradeOrder,
}

impl DegradePreset {
    pub fn nn() -> Self {
        Self {
            name: "NN".into(),
            noise_sigma: 0.0,
            blur: None,
            order: DegradeOrder::NoiseThenBlur,
        }
    }

    pub fn ln() -> Self {
        Self {
            name: "LN".into(),
            noise_sigma: 10.0,
            blur: Some(Blur {
                kernel: 5,
                sigma: 0.8,
            }),
            order: DegradeOrder::NoiseThenBlur,
        }
    }

    pub fn hn() -> Self {
        Self {
            name: "HN".into(),
            noise_sigma: 20.0,
            blur: Some(Blur {
                kernel: 7,
                sigma: 1.2,
            }),
            order: DegradeOrder::NoiseThenBlur,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        noise_sigma: f64,
        blur: Option<Blur>,
    ) -> Result<Self, ChannelError> {
        let p = Self {
            name: name.into(),
            noise_sigma,
            blur,
            order: DegradeOrder::NoiseThenBlur,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_order(mut self, order: DegradeOrder) -> Self {
        self.order = order;
        self
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(ChannelError::NoiseSigma(self.noise_sigma));
        }
        if let Some(b) = self.blur {
            kernel_1d(b.sigma, b.kernel)?;
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.noise_sigma == 0.0 && self.blur.is_none()
    }
}

impl FromStr for DegradePreset {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NN" => Ok(Self::nn()),
            "LN" => Ok(Self::ln()),
            "HN" => Ok(Self::hn()),
            _ => Err(ChannelError::UnknownPreset(s.to_string())),
        }
    }
}

impl fmt::Display for DegradePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Normalized sampled Gaussian of odd length `size`.
pub fn kernel_1d(sigma: f64, size: usize) -> Result<Vec<f64>, ChannelError> {
    if size.is_multiple_of(2) {
        return Err(ChannelError::EvenKernel(size));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ChannelError::Sigma(sigma));
    }
    Ok(gaussian_weights(sigma, size))
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard normal draw for pixel index `i`.
#[inline]
pub fn gaussian_at(seed: ChannelSeed, i: u64) -> f64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let a = splitmix64(seed.0 ^ (2 * i).wrapping_mul(GOLDEN));
    let b = splitmix64(seed.0 ^ (2 * i + 1).wrapping_mul(GOLDEN));
    let u1 = ((a >> 11) + 1) as f64 * SCALE;
    let u2 = (b >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Zero-mean noise field with standard deviation `sigma`.
pub fn noise_field(width: usize, height: usize, sigma: f64, seed: ChannelSeed) -> Vec<f64> {
    (0..(width * height) as u64)
        .map(|i| sigma * gaussian_at(seed, i))
        .collect()
}

pub fn degrade(plane: &ImagePlane, preset: &DegradePreset, seed: ChannelSeed) -> ImagePlane {
    if preset.is_identity() {
        return plane.clone();
    }
    let (w, h) = (plane.width(), plane.height());
    let mut buf = plane.to_f64();
    let add_noise = |buf: &mut Vec<f64>| {
        if preset.noise_sigma > 0.0 {
            for (v, n) in buf.iter_mut().zip(noise_field(w, h, preset.noise_sigma, seed)) {
                *v += n;
            }
        }
    };
    let blur = |buf: Vec<f64>| match preset.blur {
        Some(b) => {
            let k = kernel_1d(b.sigma, b.kernel).expect("preset validated");
            convolve_separable(&buf, w, h, &k)
        }
        None => buf,
    };
    match preset.order {
        DegradeOrder::NoiseThenBlur => {
            add_noise(&mut buf);
            buf = blur(buf);
        }
        DegradeOrder::BlurThenNoise => {
            buf = blur(buf);
            add_noise(&mut buf);
        }
    }
    ImagePlane::new(w, h, buf.into_iter().map(round_clamp_u8).collect()).expect("same dimensions")
}
