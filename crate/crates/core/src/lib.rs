//! Base layer plus structured-metadata transmission toolkit.
//!
//! The sender compresses a grayscale base layer with a DCT codec and an edge
//! map with a context-adaptive bi-level coder. The channel degrades the
//! decoded base layer, and the receiver gates the metadata and reconstructs.
//! Everything is scored under the Lagrangian cost `J = D + lambda * R`.
//!
//! Module map:
//!
//! - [`pixel`]: rasters, PNM I/O, colour conversion and resampling
//! - [`basecodec`]: base-layer codec with exact bit accounting
//! - [`metagen`]: Canny and 2-bit gradient metadata extraction
//! - [`bilevel`]: lossless context-coded metadata streams
//! - [`channel`]: seedable noise-and-blur degradation presets
//! - [`receiver`]: verification gate and reconstructor registry
//! - [`metrics`]: PSNR, SSIM and the frame-difference loss
//! - [`infotheory`]: exact conditional entropies over small joints
//! - [`rdo`]: rate points, R-D curves and matched-axis comparisons
//! - [`corpus`]: the bundled synthetic test images

pub mod basecodec;
pub mod bilevel;
pub mod channel;
pub mod corpus;
pub(crate) mod filter;
pub mod infotheory;
pub mod metagen;
pub mod metrics;
pub mod pixel;
pub mod rdo;
pub mod receiver;
pub mod serde_f64;

pub use pixel::{ImageFrame, ImagePlane};
