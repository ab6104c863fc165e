//! Synthetic image corpora.
//!
//! Two generated datasets back the experiment pipeline: a ten-class shape
//! corpus at 32x32 and a smaller eight-identity face-like corpus at 48x48
//! used for cross-dataset transfer runs. Every image is a pure function of
//! `(seed, split, class, index)`, so corpora regenerate bit-identically and
//! train/test streams never overlap.

use crate::dataset::{scan_dataset, DatasetManifest};
use crate::error::{Error, Result};
use crate::image::Image;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Class directories in label order (the `cN_` prefix keeps lexicographic
/// order equal to label order).
pub const SHAPE_CLASSES: [&str; 10] = [
    "c0_disk", "c1_square", "c2_triangle", "c3_ring", "c4_cross", "c5_xcross", "c6_diamond",
    "c7_hbars", "c8_vbars", "c9_checker",
];
pub const SHAPE_SIZE: (usize, usize, usize) = (32, 32, 3);

pub const FACE_CLASSES: [&str; 8] = ["id0", "id1", "id2", "id3", "id4", "id5", "id6", "id7"];
pub const FACE_SIZE: (usize, usize, usize) = (48, 48, 3);

#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

/// Derive an independent child seed for one image (splitmix64 finalizer).
fn child_seed(seed: u64, split: u64, class: u64, idx: u64) -> u64 {
    let mut z = seed
        ^ split.wrapping_mul(0xA076_1D64_78BD_642F)
        ^ class.wrapping_mul(0xE703_7ED1_A0B4_28DB)
        ^ idx.wrapping_mul(0x8EBC_6AF0_9C88_C6E3);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rotate(p: (f64, f64), angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (c * p.0 - s * p.1, s * p.0 + c * p.1)
}

/// Signed distance to an axis-aligned box with the given half-extents.
fn sd_box(p: (f64, f64), half: (f64, f64)) -> f64 {
    let dx = p.0.abs() - half.0;
    let dy = p.1.abs() - half.1;
    let outside = (dx.max(0.0).powi(2) + dy.max(0.0).powi(2)).sqrt();
    outside + dx.max(dy).min(0.0)
}

fn sd_disk(p: (f64, f64), r: f64) -> f64 {
    (p.0 * p.0 + p.1 * p.1).sqrt() - r
}

fn sd_equilateral_triangle(p: (f64, f64), r: f64) -> f64 {
    let k = 3.0f64.sqrt();
    let mut x = p.0.abs() - r;
    let mut y = p.1 + r / k;
    if x + k * y > 0.0 {
        let (nx, ny) = ((x - k * y) / 2.0, (-k * x - y) / 2.0);
        x = nx;
        y = ny;
    }
    x -= x.clamp(-2.0 * r, 0.0);
    -(x * x + y * y).sqrt() * y.signum()
}

/// Signed distance for one of the ten shape classes, with `r` the nominal
/// object radius. Negative inside.
fn shape_sdf(class: usize, p: (f64, f64), r: f64) -> f64 {
    match class {
        0 => sd_disk(p, r),
        1 => sd_box(p, (0.82 * r, 0.82 * r)),
        2 => sd_equilateral_triangle(p, 1.05 * r),
        3 => (sd_disk(p, 0.0) - 0.74 * r).abs() - 0.26 * r,
        4 => sd_box(p, (r, 0.30 * r)).min(sd_box(p, (0.30 * r, r))),
        5 => {
            let q = rotate(p, std::f64::consts::FRAC_PI_4);
            sd_box(q, (r, 0.30 * r)).min(sd_box(q, (0.30 * r, r)))
        }
        6 => (p.0.abs() + p.1.abs() - 1.15 * r) * std::f64::consts::FRAC_1_SQRT_2,
        7 => [-0.72, 0.0, 0.72]
            .iter()
            .map(|dy| sd_box((p.0, p.1 - dy * r), (r, 0.20 * r)))
            .fold(f64::INFINITY, f64::min),
        8 => [-0.72, 0.0, 0.72]
            .iter()
            .map(|dx| sd_box((p.0 - dx * r, p.1), (0.20 * r, r)))
            .fold(f64::INFINITY, f64::min),
        9 => {
            let mut d = f64::INFINITY;
            for (i, ci) in [-0.68, 0.0, 0.68].iter().enumerate() {
                for (j, cj) in [-0.68, 0.0, 0.68].iter().enumerate() {
                    if (i + j) % 2 == 0 {
                        d = d.min(sd_box((p.0 - ci * r, p.1 - cj * r), (0.30 * r, 0.30 * r)));
                    }
                }
            }
            d
        }
        _ => panic!("shape class {class} out of range"),
    }
}

/// Coverage of a pixel given its signed distance: one-pixel antialias band.
fn coverage(d: f64) -> f64 {
    (0.5 - d).clamp(0.0, 1.0)
}

fn mix(base: [f64; 3], over: [f64; 3], cov: f64) -> [f64; 3] {
    [
        base[0] + (over[0] - base[0]) * cov,
        base[1] + (over[1] - base[1]) * cov,
        base[2] + (over[2] - base[2]) * cov,
    ]
}

/// Dark two-color gradient background plus the per-pixel sensor noise that
/// both corpora share.
fn background(rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3], u8, f64) {
    let a = [0; 3].map(|_| rng.random_range(10.0..=90.0));
    let b = [0; 3].map(|_| rng.random_range(10.0..=90.0));
    let axis = rng.random_range(0u8..4);
    let noise = rng.random_range(5.0..=9.0);
    (a, b, axis, noise)
}

fn gradient_at(a: [f64; 3], b: [f64; 3], axis: u8, row: usize, col: usize, h: usize, w: usize) -> [f64; 3] {
    let t = match axis {
        0 => col as f64 / (w - 1) as f64,
        1 => row as f64 / (h - 1) as f64,
        2 => (row + col) as f64 / (h + w - 2) as f64,
        _ => (col as f64 - row as f64 + (h - 1) as f64) / (h + w - 2) as f64,
    };
    mix(a, b, t)
}

/// Render one sample of the given shape class. Geometry (position, size,
/// rotation), palette, and noise all come from `rng`, so a seeded RNG gives
/// a reproducible image.
pub fn synth_shape_image(class: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    if class >= SHAPE_CLASSES.len() {
        return Err(Error::Config(format!("shape class {class} out of range")));
    }
    let (h, w, _) = SHAPE_SIZE;
    let (bg_a, bg_b, axis, noise) = background(rng);
    // objects stay well above the background's 90-max channels
    let obj = [0; 3].map(|_| rng.random_range(150.0..=255.0));
    let cx = w as f64 / 2.0 + rng.random_range(-2.5..=2.5);
    let cy = h as f64 / 2.0 + rng.random_range(-2.5..=2.5);
    let r = rng.random_range(8.5..=11.5);
    // +-15 degrees keeps square/diamond and cross/xcross distinguishable
    let theta = rng.random_range(-15.0f64..=15.0).to_radians();

    Image::from_fn(h, w, 3, |row, col, ch| {
        let base = gradient_at(bg_a, bg_b, axis, row, col, h, w);
        let p = (col as f64 + 0.5 - cx, row as f64 + 0.5 - cy);
        let d = shape_sdf(class, rotate(p, -theta), r);
        let v = mix(base, obj, coverage(d))[ch];
        // deterministic per-pixel noise folded in from the pixel address so
        // the closure stays pure across evaluation order
        let n = hash_noise(cx.to_bits() ^ (row as u64) << 24 ^ (col as u64) << 8 ^ ch as u64);
        (v + (n * 2.0 - 1.0) * noise).round().clamp(0.0, 255.0) as u8
    })
}

/// Uniform [0,1) from a 64-bit address (splitmix64 finalizer again).
fn hash_noise(addr: u64) -> f64 {
    let mut z = addr.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Fixed appearance parameters for one synthetic identity.
struct FaceParams {
    skin: [f64; 3],
    head: (f64, f64),
    hair: Option<([f64; 3], f64)>,
    eye_dx: f64,
    eye_dy: f64,
    eye_r: f64,
    mouth: (f64, f64, f64),
}

const FACE_TABLE: [FaceParams; 8] = [
    FaceParams { skin: [224.0, 172.0, 138.0], head: (13.0, 17.0), hair: Some(([40.0, 28.0, 20.0], 7.0)), eye_dx: 5.0, eye_dy: 3.5, eye_r: 1.8, mouth: (4.5, 1.2, 7.5) },
    FaceParams { skin: [188.0, 134.0, 96.0], head: (15.0, 16.0), hair: Some(([12.0, 12.0, 14.0], 4.0)), eye_dx: 6.0, eye_dy: 2.5, eye_r: 2.2, mouth: (6.0, 1.5, 8.0) },
    FaceParams { skin: [108.0, 74.0, 52.0], head: (12.0, 18.0), hair: Some(([30.0, 20.0, 16.0], 9.0)), eye_dx: 4.5, eye_dy: 4.0, eye_r: 2.0, mouth: (5.0, 2.0, 6.5) },
    FaceParams { skin: [234.0, 196.0, 170.0], head: (16.0, 17.0), hair: None, eye_dx: 5.5, eye_dy: 3.0, eye_r: 1.6, mouth: (4.0, 1.0, 9.0) },
    FaceParams { skin: [150.0, 108.0, 80.0], head: (13.0, 15.0), hair: Some(([180.0, 160.0, 60.0], 5.0)), eye_dx: 4.0, eye_dy: 2.0, eye_r: 2.4, mouth: (6.5, 1.8, 7.0) },
    FaceParams { skin: [210.0, 160.0, 120.0], head: (15.0, 19.0), hair: Some(([90.0, 40.0, 20.0], 10.0)), eye_dx: 6.5, eye_dy: 4.5, eye_r: 1.7, mouth: (5.5, 1.3, 8.5) },
    FaceParams { skin: [96.0, 60.0, 40.0], head: (14.0, 16.0), hair: Some(([20.0, 16.0, 12.0], 6.0)), eye_dx: 5.0, eye_dy: 2.0, eye_r: 2.1, mouth: (4.8, 1.7, 7.8) },
    FaceParams { skin: [240.0, 210.0, 180.0], head: (12.0, 15.0), hair: Some(([130.0, 130.0, 140.0], 8.0)), eye_dx: 4.2, eye_dy: 3.8, eye_r: 1.9, mouth: (6.2, 1.1, 6.8) },
];

/// Approximate signed distance to an ellipse with half-axes `(a, b)`.
fn sd_ellipse(p: (f64, f64), a: f64, b: f64) -> f64 {
    let k = ((p.0 / a).powi(2) + (p.1 / b).powi(2)).sqrt();
    (k - 1.0) * a.min(b)
}

/// Render one sample of the given identity: fixed facial geometry from the
/// identity table plus per-sample jitter in pose, scale, and lighting.
pub fn synth_face_image(identity: usize, rng: &mut ChaCha8Rng) -> Result<Image> {
    if identity >= FACE_CLASSES.len() {
        return Err(Error::Config(format!("identity {identity} out of range")));
    }
    let fp = &FACE_TABLE[identity];
    let (h, w, _) = FACE_SIZE;
    let (bg_a, bg_b, axis, noise) = background(rng);
    let cx = w as f64 / 2.0 + rng.random_range(-2.0..=2.0);
    let cy = h as f64 / 2.0 + rng.random_range(-2.0..=2.0);
    let scale = rng.random_range(0.92..=1.08);
    let (ha, hb) = (fp.head.0 * scale, fp.head.1 * scale);
    // lighting: a per-sample brightness factor on the skin
    let light = rng.random_range(0.88..=1.08);
    let skin = fp.skin.map(|v| (v * light).min(255.0));
    let eye_jx = rng.random_range(-0.6..=0.6);
    let eye_jy = rng.random_range(-0.6..=0.6);
    let mouth_jy = rng.random_range(-0.8..=0.8);
    let seed_bits = (cx.to_bits() >> 4) ^ cy.to_bits();

    Image::from_fn(h, w, 3, |row, col, ch| {
        let mut color = gradient_at(bg_a, bg_b, axis, row, col, h, w);
        let p = (col as f64 + 0.5 - cx, row as f64 + 0.5 - cy);
        let head = sd_ellipse(p, ha, hb);
        color = mix(color, skin, coverage(head));
        if let Some((hair_color, offset)) = fp.hair {
            // hair: the part of the head above the identity's hairline
            let hairline = -hb + offset * scale;
            let d = head.max(p.1 - hairline);
            color = mix(color, hair_color, coverage(d));
        }
        for side in [-1.0, 1.0] {
            let e = (
                p.0 - side * (fp.eye_dx * scale + eye_jx * side),
                p.1 + fp.eye_dy * scale - eye_jy,
            );
            color = mix(color, [250.0, 250.0, 250.0], coverage(sd_disk(e, fp.eye_r + 0.8)));
            color = mix(color, [25.0, 20.0, 30.0], coverage(sd_disk(e, fp.eye_r * 0.75)));
        }
        let nose = sd_box((p.0, p.1 - 2.5 * scale), (0.8, 2.2 * scale));
        color = mix(color, skin.map(|v| v * 0.78), coverage(nose));
        let m = (p.0, p.1 - (fp.mouth.2 * scale + mouth_jy));
        let mouth = sd_box(m, (fp.mouth.0 * scale, fp.mouth.1));
        color = mix(color, [150.0, 45.0, 50.0], coverage(mouth));
        let n = hash_noise(seed_bits ^ (row as u64) << 24 ^ (col as u64) << 8 ^ ch as u64);
        (color[ch] + (n * 2.0 - 1.0) * noise).round().clamp(0.0, 255.0) as u8
    })
}

fn write_corpus(
    root: &Path,
    spec: &SynthSpec,
    classes: &[&str],
    shape: (usize, usize, usize),
    render: fn(usize, &mut ChaCha8Rng) -> Result<Image>,
) -> Result<(DatasetManifest, DatasetManifest)> {
    for (split, tag, count) in [
        ("train", 0u64, spec.train_per_class),
        ("test", 1u64, spec.test_per_class),
    ] {
        for (class, name) in classes.iter().enumerate() {
            let dir = root.join(split).join(name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for idx in 0..count {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(child_seed(spec.seed, tag, class as u64, idx as u64));
                let img = render(class, &mut rng)?;
                img.save_png(dir.join(format!("s{idx:04}.png")))?;
            }
        }
    }
    let train = scan_dataset(&root.join("train"), shape)?;
    let test = scan_dataset(&root.join("test"), shape)?;
    Ok((train, test))
}

/// Write the ten-class shape corpus under `root/{train,test}/<class>/` and
/// return the two scanned manifests.
pub fn write_shapes_dataset(root: &Path, spec: &SynthSpec) -> Result<(DatasetManifest, DatasetManifest)> {
    write_corpus(root, spec, &SHAPE_CLASSES, SHAPE_SIZE, synth_shape_image)
}

/// Write the eight-identity face corpus under `root/{train,test}/<id>/`.
pub fn write_faces_dataset(root: &Path, spec: &SynthSpec) -> Result<(DatasetManifest, DatasetManifest)> {
    write_corpus(root, spec, &FACE_CLASSES, FACE_SIZE, synth_face_image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_images_are_seed_deterministic() {
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        for class in 0..SHAPE_CLASSES.len() {
            assert_eq!(
                synth_shape_image(class, &mut a).unwrap(),
                synth_shape_image(class, &mut b).unwrap()
            );
        }
        let mut c = ChaCha8Rng::seed_from_u64(43);
        assert_ne!(
            synth_shape_image(0, &mut ChaCha8Rng::seed_from_u64(42)).unwrap(),
            synth_shape_image(0, &mut c).unwrap()
        );
    }

    #[test]
    fn shapes_vary_within_a_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = synth_shape_image(4, &mut rng).unwrap();
        let b = synth_shape_image(4, &mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn corpus_layout_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            train_per_class: 3,
            test_per_class: 2,
            seed: 11,
        };
        let (train, test) = write_shapes_dataset(&dir.path().join("a"), &spec).unwrap();
        assert_eq!(train.classes, SHAPE_CLASSES.to_vec());
        assert_eq!(train.len(), 30);
        assert_eq!(test.len(), 20);
        assert_eq!(train.image_shape, SHAPE_SIZE);
        // regeneration is bit-identical
        write_shapes_dataset(&dir.path().join("b"), &spec).unwrap();
        let f1 = std::fs::read(dir.path().join("a/train/c4_cross/s0002.png")).unwrap();
        let f2 = std::fs::read(dir.path().join("b/train/c4_cross/s0002.png")).unwrap();
        assert_eq!(f1, f2);
        // train and test streams are independent
        let t1 = std::fs::read(dir.path().join("a/train/c0_disk/s0000.png")).unwrap();
        let t2 = std::fs::read(dir.path().join("a/test/c0_disk/s0000.png")).unwrap();
        assert_ne!(t1, t2);
    }

    #[test]
    fn face_corpus_layout() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            train_per_class: 2,
            test_per_class: 1,
            seed: 5,
        };
        let (train, test) = write_faces_dataset(dir.path(), &spec).unwrap();
        assert_eq!(train.classes, FACE_CLASSES.to_vec());
        assert_eq!(train.len(), 16);
        assert_eq!(test.len(), 8);
        assert_eq!(train.image_shape, FACE_SIZE);
    }

    #[test]
    fn identities_are_visually_distinct() {
        // mean absolute pixel distance between identities should comfortably
        // exceed the distance between two samples of the same identity
        let sample = |id: usize, n: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(3, 0, id as u64, n));
            synth_face_image(id, &mut rng).unwrap()
        };
        let dist = |a: &Image, b: &Image| {
            a.pixels()
                .iter()
                .zip(b.pixels().iter())
                .map(|(&x, &y)| (x as f64 - y as f64).abs())
                .sum::<f64>()
                / a.pixels().len() as f64
        };
        let within = dist(&sample(0, 0), &sample(0, 1));
        let between = dist(&sample(0, 0), &sample(2, 0));
        assert!(
            between > within,
            "between-identity distance {between} not above within-identity {within}"
        );
    }

    #[test]
    fn rejects_out_of_range_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(synth_shape_image(10, &mut rng).is_err());
        assert!(synth_face_image(8, &mut rng).is_err());
    }
}
