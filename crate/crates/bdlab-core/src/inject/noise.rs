//! Shared uniform-noise template for the mix injection mode.

use crate::error::Result;
use crate::image::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A deterministically regenerable uniform-noise image.
///
/// One template is shared by an entire experiment; the seed is recorded in
/// the manifest so the template never needs to be shipped with the data.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTemplate {
    pub pixels: Image,
    pub seed: u64,
}

/// Generate the per-pixel i.i.d. uniform `[0, 255]` template for `shape`.
///
/// Pixels are drawn in row-major `(row, col, channel)` order from a
/// ChaCha stream seeded with `seed`, so equal seeds give bit-identical
/// templates on every platform.
pub fn make_noise_template(shape: (usize, usize, usize), seed: u64) -> Result<NoiseTemplate> {
    let (h, w, c) = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = ndarray::Array3::<u8>::zeros((h, w, c));
    for v in pixels.iter_mut() {
        *v = rng.random_range(0..=255u16) as u8;
    }
    Ok(NoiseTemplate {
        pixels: Image::new(pixels)?,
        seed,
    })
}
