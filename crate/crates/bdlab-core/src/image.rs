//! Image representation and deterministic I/O.
//!
//! Pixels are stored as unsigned 8-bit `(H, W, C)` arrays and converted to a
//! floating-point `[0, 1]` compute form on demand. PNG is the only write
//! format so trigger residuals survive a save/load round trip bit-exactly.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array2, Array3, Array4, ArrayView3, Axis};
use std::path::Path;

/// ITU-R BT.601 luminance weights used for all grayscale conversions.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Peak intensity of the 8-bit storage form.
pub const PEAK: f64 = 255.0;

/// An `(H, W, C)` image in 8-bit storage form, `C` either 1 or 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pixels: Array3<u8>,
}

/// What `load_image` does when the decoded size differs from the expected one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizePolicy {
    /// Reject the file with a shape error.
    Reject,
    /// Bilinear-resize the shorter side to fit, then center-crop.
    ResizeCrop,
}

impl Image {
    pub fn new(pixels: Array3<u8>) -> Result<Self> {
        let c = pixels.shape()[2];
        if c != 1 && c != 3 {
            return Err(Error::Shape(format!("channel count must be 1 or 3, got {c}")));
        }
        if pixels.shape()[0] == 0 || pixels.shape()[1] == 0 {
            return Err(Error::Shape("image dimensions must be non-zero".into()));
        }
        Ok(Image {
            pixels: to_standard_layout3(pixels),
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Image::new(Array3::zeros((height, width, channels)))
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Image::new(Array3::from_elem((height, width, channels), value))
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl Fn(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        Image::new(Array3::from_shape_fn((height, width, channels), |(r, c, ch)| {
            f(r, c, ch)
        }))
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height(), self.width(), self.channels())
    }

    pub fn pixels(&self) -> ArrayView3<'_, u8> {
        self.pixels.view()
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.pixels[(row, col, channel)]
    }

    /// Compute form: `(H, W, C)` scalars in `[0, 1]`.
    pub fn to_compute<T: Scalar>(&self) -> Array3<T> {
        let peak = T::from_f(PEAK);
        self.pixels.mapv(|v| T::from_f(v as f64) / peak)
    }

    /// Quantize a `[0, 1]` compute-form array back to storage form.
    ///
    /// Values are clipped to `[0, 1]` and rounded half away from zero, so
    /// `from_compute(img.to_compute())` reproduces `img` exactly.
    pub fn from_compute<T: Scalar>(compute: &Array3<T>) -> Result<Self> {
        let peak = T::from_f(PEAK);
        let quantized = compute.mapv(|v| {
            let v = v.max(T::zero()).min(T::one());
            (v * peak).round().to_f() as u8
        });
        Image::new(quantized)
    }

    /// Storage-scale grayscale plane `(H, W)` via BT.601 luminance weights.
    /// Single-channel images pass through unchanged.
    pub fn to_gray<T: Scalar>(&self) -> Array2<T> {
        let (h, w, c) = self.shape();
        if c == 1 {
            return Array2::from_shape_fn((h, w), |(r, q)| T::from_f(self.get(r, q, 0) as f64));
        }
        Array2::from_shape_fn((h, w), |(r, q)| {
            let mut acc = 0.0;
            for (ch, wt) in LUMA_WEIGHTS.iter().enumerate() {
                acc += wt * self.get(r, q, ch) as f64;
            }
            T::from_f(acc)
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (h, w, c) = self.shape();
        let raw = self.pixels.as_slice().expect("standard layout").to_vec();
        let err_map = |e: image::ImageError| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Decode {
                path: path.display().to_string(),
                source: other,
            },
        };
        match c {
            1 => image::GrayImage::from_raw(w as u32, h as u32, raw)
                .expect("raw buffer sized for image")
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(err_map),
            3 => image::RgbImage::from_raw(w as u32, h as u32, raw)
                .expect("raw buffer sized for image")
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(err_map),
            _ => unreachable!("validated at construction"),
        }
    }
}

fn to_standard_layout3(a: Array3<u8>) -> Array3<u8> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().to_owned()
    }
}

/// Load and decode an image file, converting to the expected channel count.
///
/// `expected` is `(height, width, channels)`. A size mismatch is either
/// rejected or fixed up by resize + center-crop depending on `policy`.
pub fn load_image(
    path: impl AsRef<Path>,
    expected: (usize, usize, usize),
    policy: ResizePolicy,
) -> Result<Image> {
    let path = path.as_ref();
    let (eh, ew, ec) = expected;
    if ec != 1 && ec != 3 {
        return Err(Error::Shape(format!("expected channel count must be 1 or 3, got {ec}")));
    }
    let dynamic = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.display().to_string(),
            source: other,
        },
    })?;
    let pixels: Array3<u8> = match ec {
        1 => {
            let gray = dynamic.to_luma8();
            let (w, h) = gray.dimensions();
            Array3::from_shape_vec((h as usize, w as usize, 1), gray.into_raw())
                .expect("decoder buffer matches dimensions")
        }
        _ => {
            let rgb = dynamic.to_rgb8();
            let (w, h) = rgb.dimensions();
            Array3::from_shape_vec((h as usize, w as usize, 3), rgb.into_raw())
                .expect("decoder buffer matches dimensions")
        }
    };
    let (h, w) = (pixels.shape()[0], pixels.shape()[1]);
    if (h, w) == (eh, ew) {
        return Image::new(pixels);
    }
    match policy {
        ResizePolicy::Reject => Err(Error::Shape(format!(
            "`{}` decodes to {h}x{w}, expected {eh}x{ew} (resizing disabled)",
            path.display()
        ))),
        ResizePolicy::ResizeCrop => {
            let img = Image::new(pixels)?;
            let compute: Array3<f32> = img.to_compute();
            let scale = f64::max(eh as f64 / h as f64, ew as f64 / w as f64);
            let rh = (h as f64 * scale).round().max(eh as f64) as usize;
            let rw = (w as f64 * scale).round().max(ew as f64) as usize;
            let resized = resize_bilinear(&compute.view(), rh, rw);
            let r0 = (rh - eh) / 2;
            let c0 = (rw - ew) / 2;
            let cropped = resized
                .slice(ndarray::s![r0..r0 + eh, c0..c0 + ew, ..])
                .to_owned();
            Image::from_compute(&cropped)
        }
    }
}

/// Bilinear resize of an `(H, W, C)` compute-form array (half-pixel centers).
pub fn resize_bilinear<T: Scalar>(src: &ArrayView3<'_, T>, out_h: usize, out_w: usize) -> Array3<T> {
    let (h, w, c) = (src.shape()[0], src.shape()[1], src.shape()[2]);
    if (h, w) == (out_h, out_w) {
        return src.to_owned();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    Array3::from_shape_fn((out_h, out_w, c), |(r, q, ch)| {
        let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let fx = ((q as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
        let y0 = fy.floor() as usize;
        let x0 = fx.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let dy = T::from_f(fy - y0 as f64);
        let dx = T::from_f(fx - x0 as f64);
        let one = T::one();
        let top = src[(y0, x0, ch)] * (one - dx) + src[(y0, x1, ch)] * dx;
        let bot = src[(y1, x0, ch)] * (one - dx) + src[(y1, x1, ch)] * dx;
        top * (one - dy) + bot * dy
    })
}

/// Stack storage images into an `(N, C, H, W)` compute-form batch.
pub fn batch_nchw<T: Scalar>(images: &[&Image]) -> Result<Array4<T>> {
    let (h, w, c) = images
        .first()
        .ok_or_else(|| Error::Data("cannot batch zero images".into()))?
        .shape();
    let mut out = Array4::<T>::zeros((images.len(), c, h, w));
    for (i, img) in images.iter().enumerate() {
        if img.shape() != (h, w, c) {
            return Err(Error::Shape(format!(
                "image {i} has shape {:?}, expected {:?}",
                img.shape(),
                (h, w, c)
            )));
        }
        let peak = T::from_f(PEAK);
        for ((r, q, ch), &v) in img.pixels().indexed_iter() {
            out[(i, ch, r, q)] = T::from_f(v as f64) / peak;
        }
    }
    Ok(out)
}

/// Convert one `(C, H, W)` compute-form slice back to a storage image.
pub fn image_from_chw<T: Scalar>(chw: &ndarray::ArrayView3<'_, T>) -> Result<Image> {
    let (c, h, w) = (chw.shape()[0], chw.shape()[1], chw.shape()[2]);
    let hwc = Array3::from_shape_fn((h, w, c), |(r, q, ch)| chw[(ch, r, q)]);
    Image::from_compute(&hwc)
}

/// View an image as a `(C, H, W)` compute-form array.
pub fn chw_from_image<T: Scalar>(img: &Image) -> Array3<T> {
    let hwc = img.to_compute::<T>();
    let mut out = Array3::zeros((img.channels(), img.height(), img.width()));
    for ((r, q, ch), &v) in hwc.indexed_iter() {
        out[(ch, r, q)] = v;
    }
    out
}

/// Mean over a batch axis helper used by evaluation code.
pub fn mean_over_batch<T: Scalar>(batch: &Array4<T>) -> Array3<T> {
    batch.mean_axis(Axis(0)).expect("non-empty batch")
}
