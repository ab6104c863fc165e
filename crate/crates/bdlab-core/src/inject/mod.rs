//! Visible, sample-specific feature injection.
//!
//! Three modes: blending with a shared noise template, coloring detected
//! corner points, and coloring detected edges. The injected artifacts are
//! later converted into imperceptible residuals by the trigger generator.

mod corner;
mod edge;
mod noise;

pub use corner::detect_corners;
pub use edge::{detect_edges, sobel_magnitude};
pub use noise::{make_noise_template, NoiseTemplate};

use crate::error::{Error, Result};
use crate::image::{Image, LUMA_WEIGHTS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    Mix,
    Corner,
    Edge,
}

impl std::fmt::Display for InjectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InjectionMode::Mix => write!(f, "mix"),
            InjectionMode::Corner => write!(f, "corner"),
            InjectionMode::Edge => write!(f, "edge"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CornerParams {
    pub max_corners: usize,
    /// Fraction of the maximum corner response below which candidates are dropped.
    pub quality_level: f64,
    /// Minimum Euclidean distance between accepted corners, in pixels.
    pub min_distance: f64,
    /// Side of the square patch painted around each corner; odd.
    pub fill_size: usize,
}

impl Default for CornerParams {
    fn default() -> Self {
        CornerParams {
            max_corners: 100,
            quality_level: 0.01,
            min_distance: 10.0,
            fill_size: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeParams {
    /// Threshold on the max-normalized gradient magnitude, in `(0, 1]`.
    pub threshold: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        EdgeParams { threshold: 0.25 }
    }
}

/// The full description of the feature-injection function `I(.)`.
///
/// Exactly one mode's parameter group is active, selected by `mode`;
/// the others are carried so a spec can be switched without re-editing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionSpec {
    pub mode: InjectionMode,
    /// Blend weight of the noise template (mix mode only).
    pub alpha: f64,
    /// RGB fill used by corner and edge modes.
    pub fill_color: [u8; 3],
    pub corner: CornerParams,
    pub edge: EdgeParams,
    /// Seed of the shared noise template (mix mode only).
    pub noise_seed: u64,
}

impl Default for InjectionSpec {
    fn default() -> Self {
        InjectionSpec {
            mode: InjectionMode::Mix,
            alpha: 0.2,
            fill_color: [139, 0, 0],
            corner: CornerParams::default(),
            edge: EdgeParams::default(),
            noise_seed: 0,
        }
    }
}

impl InjectionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("injection.alpha must be in [0,1], got {}", self.alpha)));
        }
        if !(self.corner.quality_level > 0.0 && self.corner.quality_level < 1.0) {
            return Err(Error::Config(format!(
                "injection.corner.quality_level must be in (0,1), got {}",
                self.corner.quality_level
            )));
        }
        if self.corner.min_distance < 0.0 {
            return Err(Error::Config("injection.corner.min_distance must be >= 0".into()));
        }
        if self.corner.fill_size == 0 || self.corner.fill_size % 2 == 0 {
            return Err(Error::Config(format!(
                "injection.corner.fill_size must be odd and positive, got {}",
                self.corner.fill_size
            )));
        }
        if !(self.edge.threshold > 0.0 && self.edge.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "injection.edge.threshold must be in (0,1], got {}",
                self.edge.threshold
            )));
        }
        Ok(())
    }

    /// Stable content id used in manifests and provenance records.
    pub fn id(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&json);
        hex_prefix(&digest, 16)
    }
}

pub(crate) fn hex_prefix(bytes: &[u8], chars: usize) -> String {
    let mut s = String::with_capacity(chars);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
        if s.len() >= chars {
            break;
        }
    }
    s.truncate(chars);
    s
}

/// Result of applying `I(.)` to one image.
#[derive(Debug, Clone)]
pub struct Injected {
    pub image: Image,
    /// Number of pixels whose value changed.
    pub changed_pixels: usize,
    /// True when a corner/edge image contained no detectable features and
    /// was returned unchanged.
    pub featureless: bool,
}

/// Blend `x` with the noise template: `(1-alpha)*x + alpha*template` per pixel.
pub fn inject_mix(x: &Image, template: &NoiseTemplate, alpha: f64) -> Result<Injected> {
    if x.shape() != template.pixels.shape() {
        return Err(Error::Shape(format!(
            "noise template shape {:?} does not match image {:?}",
            template.pixels.shape(),
            x.shape()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must be in [0,1], got {alpha}")));
    }
    let (h, w, c) = x.shape();
    let out = Image::from_fn(h, w, c, |r, q, ch| {
        let v = (1.0 - alpha) * x.get(r, q, ch) as f64 + alpha * template.pixels.get(r, q, ch) as f64;
        v.round().clamp(0.0, 255.0) as u8
    })?;
    let changed = count_changed(x, &out);
    Ok(Injected {
        image: out,
        changed_pixels: changed,
        featureless: false,
    })
}

fn fill_value_for_channels(fill_color: [u8; 3], channels: usize, ch: usize) -> u8 {
    if channels == 3 {
        fill_color[ch]
    } else {
        let luma: f64 = LUMA_WEIGHTS
            .iter()
            .zip(fill_color.iter())
            .map(|(w, &v)| w * v as f64)
            .sum();
        luma.round().clamp(0.0, 255.0) as u8
    }
}

/// Paint a `fill_size` square patch around every detected corner.
pub fn inject_corner(x: &Image, spec: &InjectionSpec) -> Result<Injected> {
    spec.validate()?;
    let corners = detect_corners::<f64>(x, &spec.corner);
    let (h, w, c) = x.shape();
    let mut pixels = x.pixels().to_owned();
    let half = (spec.corner.fill_size / 2) as isize;
    for &(r, q) in &corners {
        for dr in -half..=half {
            for dq in -half..=half {
                let rr = r as isize + dr;
                let qq = q as isize + dq;
                if rr < 0 || qq < 0 || rr >= h as isize || qq >= w as isize {
                    continue;
                }
                for ch in 0..c {
                    pixels[(rr as usize, qq as usize, ch)] = fill_value_for_channels(spec.fill_color, c, ch);
                }
            }
        }
    }
    let out = Image::new(pixels)?;
    let changed = count_changed(x, &out);
    Ok(Injected {
        image: out,
        changed_pixels: changed,
        featureless: corners.is_empty(),
    })
}

/// Paint every edge-mask pixel with the fill color.
pub fn inject_edge(x: &Image, spec: &InjectionSpec) -> Result<Injected> {
    spec.validate()?;
    let mask = detect_edges::<f64>(x, &spec.edge)?;
    let (h, w, c) = x.shape();
    let mut pixels = x.pixels().to_owned();
    let mut any = false;
    for r in 0..h {
        for q in 0..w {
            if mask[(r, q)] {
                any = true;
                for ch in 0..c {
                    pixels[(r, q, ch)] = fill_value_for_channels(spec.fill_color, c, ch);
                }
            }
        }
    }
    let out = Image::new(pixels)?;
    let changed = count_changed(x, &out);
    Ok(Injected {
        image: out,
        changed_pixels: changed,
        featureless: !any,
    })
}

/// Mode dispatch for `I(.)`. A noise template is required iff `mode == mix`.
pub fn inject(x: &Image, spec: &InjectionSpec, template: Option<&NoiseTemplate>) -> Result<Injected> {
    spec.validate()?;
    match spec.mode {
        InjectionMode::Mix => {
            let t = template.ok_or(Error::MissingTemplate)?;
            inject_mix(x, t, spec.alpha)
        }
        InjectionMode::Corner => inject_corner(x, spec),
        InjectionMode::Edge => inject_edge(x, spec),
    }
}

fn count_changed(a: &Image, b: &Image) -> usize {
    let (h, w, c) = a.shape();
    let mut n = 0;
    for r in 0..h {
        for q in 0..w {
            if (0..c).any(|ch| a.get(r, q, ch) != b.get(r, q, ch)) {
                n += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix_boundary_alphas() {
        let x = Image::filled(4, 4, 3, 100).unwrap();
        let t = make_noise_template((4, 4, 3), 9).unwrap();
        let id = inject_mix(&x, &t, 0.0).unwrap();
        assert_eq!(id.image, x);
        let full = inject_mix(&x, &t, 1.0).unwrap();
        assert_eq!(full.image, t.pixels);
    }

    #[test]
    fn mix_closed_form_blend() {
        let x = Image::filled(2, 2, 1, 100).unwrap();
        let t = NoiseTemplate {
            pixels: Image::filled(2, 2, 1, 200).unwrap(),
            seed: 0,
        };
        let out = inject_mix(&x, &t, 0.2).unwrap();
        assert!(out.image.pixels().iter().all(|&v| v == 120));
    }

    #[test]
    fn mix_requires_matching_shapes() {
        let x = Image::zeros(4, 4, 3).unwrap();
        let t = make_noise_template((4, 5, 3), 1).unwrap();
        assert!(matches!(inject_mix(&x, &t, 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn dispatch_requires_template_for_mix_only() {
        let x = Image::filled(16, 16, 3, 128).unwrap();
        let spec = InjectionSpec::default();
        assert!(matches!(inject(&x, &spec, None), Err(Error::MissingTemplate)));
        let corner_spec = InjectionSpec {
            mode: InjectionMode::Corner,
            ..InjectionSpec::default()
        };
        assert!(inject(&x, &corner_spec, None).is_ok());
    }

    #[test]
    fn constant_image_is_flagged_featureless() {
        let x = Image::filled(16, 16, 3, 77).unwrap();
        let corner_spec = InjectionSpec {
            mode: InjectionMode::Corner,
            ..InjectionSpec::default()
        };
        let out = inject_corner(&x, &corner_spec).unwrap();
        assert!(out.featureless);
        assert_eq!(out.image, x);
        assert_eq!(out.changed_pixels, 0);

        let edge_spec = InjectionSpec {
            mode: InjectionMode::Edge,
            ..InjectionSpec::default()
        };
        let out = inject_edge(&x, &edge_spec).unwrap();
        assert!(out.featureless);
        assert_eq!(out.image, x);
    }

    #[test]
    fn injection_is_deterministic() {
        let x = Image::from_fn(24, 24, 3, |r, c, ch| ((r * 11 + c * 3 + ch * 17) % 256) as u8).unwrap();
        let t = make_noise_template((24, 24, 3), 5).unwrap();
        for mode in [InjectionMode::Mix, InjectionMode::Corner, InjectionMode::Edge] {
            let spec = InjectionSpec { mode, ..InjectionSpec::default() };
            let a = inject(&x, &spec, Some(&t)).unwrap();
            let b = inject(&x, &spec, Some(&t)).unwrap();
            assert_eq!(a.image, b.image);
        }
    }

    #[test]
    fn spec_id_is_stable_and_mode_sensitive() {
        let a = InjectionSpec::default();
        let b = InjectionSpec::default();
        assert_eq!(a.id(), b.id());
        let c = InjectionSpec { mode: InjectionMode::Edge, ..InjectionSpec::default() };
        assert_ne!(a.id(), c.id());
    }

    #[test]
    fn validation_rejects_out_of_range() {
        let mut spec = InjectionSpec::default();
        spec.alpha = 1.5;
        assert!(spec.validate().is_err());
        let mut spec = InjectionSpec::default();
        spec.edge.threshold = 1.0 + 1e-9;
        assert!(spec.validate().is_err());
        let mut spec = InjectionSpec::default();
        spec.corner.fill_size = 4;
        assert!(spec.validate().is_err());
    }
}
