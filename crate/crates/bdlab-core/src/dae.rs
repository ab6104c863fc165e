//! Trigger generation by denoising autoencoder.
//!
//! The generator is trained to map feature-injected images back to their
//! originals. Its imperfect reconstructions leave a faint, sample-specific
//! residual — the reconstruction error — which is what the attack uses as
//! an invisible trigger: poisoned images are simply `E(I(x))`.

use crate::dataset::sha256_hex;
use crate::error::{Error, Result};
use crate::image::{batch_nchw, image_from_chw, resize_bilinear, Image};
use crate::inject::{inject, InjectionSpec, NoiseTemplate};
use crate::nn::conv::{Conv2d, ConvTranspose2d};
use crate::nn::layers::{BatchNorm2d, Relu, Sigmoid};
use crate::nn::loss::mse_loss;
use crate::nn::optim::Adam;
use crate::nn::serialize::{load_checkpoint, save_checkpoint};
use crate::nn::Net;
use crate::scalar::Scalar;
use ndarray::{Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Training refuses to run with fewer clean images than this.
pub const MIN_BENIGN_SAMPLES: usize = 500;

/// Architecture identifier stored in generator checkpoints.
pub const GENERATOR_ARCH: &str = "dae_conv4";

/// Every spatial dimension must be a positive multiple of this (four
/// stride-2 encoder stages).
pub const INPUT_MULTIPLE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DaeOptimizer {
    Adam,
}

/// Generator training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DaeTrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: DaeOptimizer,
    pub val_fraction: f64,
}

impl Default for DaeTrainConfig {
    fn default() -> Self {
        DaeTrainConfig {
            batch_size: 32,
            epochs: 300,
            learning_rate: 3e-4,
            optimizer: DaeOptimizer::Adam,
            val_fraction: 0.1,
        }
    }
}

impl DaeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=0.5).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction must lie in [0, 0.5], got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Per-epoch reconstruction losses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaeEpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// How a generator came to be: enough to audit or reproduce the training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorProvenance {
    pub spec_id: String,
    pub template_seed: Option<u64>,
    pub seed: u64,
    pub epochs: usize,
    pub num_benign: usize,
    /// `None` until at least one epoch has run.
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
}

/// A trained reconstruction network plus its bookkeeping.
pub struct TriggerGenerator<T: Scalar> {
    pub net: Net<T>,
    /// Native `(height, width, channels)` the network was trained at.
    pub input_shape: (usize, usize, usize),
    pub provenance: GeneratorProvenance,
    pub history: Vec<DaeEpochStats>,
}

impl<T: Scalar> std::fmt::Debug for TriggerGenerator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TriggerGenerator")
            .field("input_shape", &self.input_shape)
            .field("provenance", &self.provenance)
            .finish_non_exhaustive()
    }
}

/// Encoder-decoder with four stride-2 stages each way and a sigmoid output.
fn dae_net<T: Scalar>(channels: usize, rng: &mut ChaCha8Rng) -> Net<T> {
    let enc = [32, 64, 128, 256];
    let mut layers: Vec<Box<dyn crate::nn::Layer<T>>> = Vec::new();
    let mut c_in = channels;
    for c_out in enc {
        layers.push(Box::new(Conv2d::new(c_in, c_out, 3, 2, 1, false, rng)));
        layers.push(Box::new(BatchNorm2d::new(c_out)));
        layers.push(Box::new(Relu::new()));
        c_in = c_out;
    }
    for c_out in [128, 64, 32] {
        layers.push(Box::new(ConvTranspose2d::new(c_in, c_out, 4, 2, 1, false, rng)));
        layers.push(Box::new(BatchNorm2d::new(c_out)));
        layers.push(Box::new(Relu::new()));
        c_in = c_out;
    }
    layers.push(Box::new(ConvTranspose2d::new(c_in, channels, 4, 2, 1, true, rng)));
    layers.push(Box::new(Sigmoid::new()));
    Net::new(layers)
}

fn check_input_shape(h: usize, w: usize) -> Result<()> {
    if h < INPUT_MULTIPLE || w < INPUT_MULTIPLE || h % INPUT_MULTIPLE != 0 || w % INPUT_MULTIPLE != 0 {
        return Err(Error::Config(format!(
            "generator input must be a positive multiple of {INPUT_MULTIPLE} in both dimensions, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Train a generator on clean images: inputs are the feature-injected
/// versions, targets the originals, loss is mean squared error.
pub fn train_dae<T: Scalar>(
    benign: &[Image],
    spec: &InjectionSpec,
    template: Option<&NoiseTemplate>,
    cfg: &DaeTrainConfig,
    seed: u64,
) -> Result<TriggerGenerator<T>> {
    cfg.validate()?;
    spec.validate()?;
    if benign.len() < MIN_BENIGN_SAMPLES {
        return Err(Error::Data(format!(
            "generator training needs at least {MIN_BENIGN_SAMPLES} clean images, got {}",
            benign.len()
        )));
    }
    let shape = benign[0].shape();
    let (h, w, c) = shape;
    check_input_shape(h, w)?;
    for (i, img) in benign.iter().enumerate() {
        if img.shape() != shape {
            return Err(Error::Shape(format!(
                "clean image {i} has shape {:?}, expected {:?}",
                img.shape(),
                shape
            )));
        }
    }

    // Injected inputs are computed once up front; they are deterministic.
    let injected: Vec<Image> = benign
        .iter()
        .map(|x| inject(x, spec, template).map(|inj| inj.image))
        .collect::<Result<_>>()?;
    let inj_refs: Vec<&Image> = injected.iter().collect();
    let clean_refs: Vec<&Image> = benign.iter().collect();
    let inputs: Array4<T> = batch_nchw(&inj_refs)?;
    let targets: Array4<T> = batch_nchw(&clean_refs)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = dae_net::<T>(c, &mut rng);
    let mut opt = Adam::new(T::from_f(cfg.learning_rate));

    let n = benign.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((cfg.val_fraction * n as f64).round() as usize).min(n.saturating_sub(1));
    let val_idx: Vec<usize> = order[n - n_val..].to_vec();
    let mut train_idx: Vec<usize> = order[..n - n_val].to_vec();

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0f64;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let x = inputs.select(Axis(0), chunk);
            let y = targets.select(Axis(0), chunk);
            let out = net.forward(&x, true);
            let (loss, grad) = mse_loss(&out, &y);
            let loss_f = loss.to_f();
            if !loss_f.is_finite() {
                return Err(Error::Divergence(format!(
                    "reconstruction loss became {loss_f} at epoch {epoch}"
                )));
            }
            epoch_loss += loss_f;
            batches += 1.0;
            net.zero_grads();
            net.backward(&grad, true);
            opt.step(net.params_mut());
        }
        let train_loss = epoch_loss / batches.max(1.0);

        let mut val_loss = 0.0;
        if !val_idx.is_empty() {
            let mut total = 0.0;
            for chunk in val_idx.chunks(cfg.batch_size) {
                let x = inputs.select(Axis(0), chunk);
                let y = targets.select(Axis(0), chunk);
                let out = net.forward(&x, false);
                let (loss, _) = mse_loss(&out, &y);
                total += loss.to_f() * chunk.len() as f64;
            }
            val_loss = total / val_idx.len() as f64;
        }
        history.push(DaeEpochStats {
            epoch,
            train_loss,
            val_loss,
        });
    }

    let provenance = GeneratorProvenance {
        spec_id: spec.id(),
        template_seed: template.map(|t| t.seed),
        seed,
        epochs: cfg.epochs,
        num_benign: n,
        final_train_loss: history.last().map(|e| e.train_loss),
        final_val_loss: history.last().map(|e| e.val_loss),
    };
    Ok(TriggerGenerator {
        net,
        input_shape: shape,
        provenance,
        history,
    })
}

fn hwc_from_chw<T: Scalar>(chw: &ndarray::ArrayView3<'_, T>) -> Array3<T> {
    let (c, h, w) = (chw.shape()[0], chw.shape()[1], chw.shape()[2]);
    Array3::from_shape_fn((h, w, c), |(r, q, ch)| chw[(ch, r, q)])
}

fn nchw_from_hwc<T: Scalar>(hwc: &Array3<T>) -> Array4<T> {
    let (h, w, c) = hwc.dim();
    let mut out = Array4::zeros((1, c, h, w));
    for ((r, q, ch), &v) in hwc.indexed_iter() {
        out[(0, ch, r, q)] = v;
    }
    out
}

impl<T: Scalar> TriggerGenerator<T> {
    /// A generator with freshly initialized (untrained) weights. Its
    /// reconstructions are garbage, but they are deterministic, which is all
    /// that pipeline fixtures and format tests need.
    pub fn new_untrained(input_shape: (usize, usize, usize), seed: u64) -> Result<Self> {
        let (h, w, c) = input_shape;
        check_input_shape(h, w)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = dae_net::<T>(c, &mut rng);
        Ok(TriggerGenerator {
            net,
            input_shape,
            provenance: GeneratorProvenance {
                spec_id: String::new(),
                template_seed: None,
                seed,
                epochs: 0,
                num_benign: 0,
                final_train_loss: None,
                final_val_loss: None,
            },
            history: Vec::new(),
        })
    }

    /// Short content hash over all parameters, stable across save/load.
    pub fn param_hash(&self) -> String {
        let mut bytes = Vec::new();
        for (name, tensor) in self.net.named_state() {
            bytes.extend_from_slice(name.as_bytes());
            for v in tensor.iter() {
                bytes.extend_from_slice(&(v.to_f() as f32).to_le_bytes());
            }
        }
        sha256_hex(&bytes)[..16].to_string()
    }

    /// Run one image through the reconstruction network, quantizing the
    /// result back to storage form. Images whose size differs from the
    /// native input shape are bilinearly resized through the network and
    /// back — the cross-resolution adapter.
    pub fn reconstruct(&mut self, x: &Image) -> Result<Image> {
        Ok(self.reconstruct_batch(&[x])?.pop().expect("one image in, one out"))
    }

    /// Batched [`reconstruct`](Self::reconstruct); all images must share one
    /// shape.
    pub fn reconstruct_batch(&mut self, xs: &[&Image]) -> Result<Vec<Image>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let shape = xs[0].shape();
        let (h, w, c) = shape;
        let (nh, nw, nc) = self.input_shape;
        if c != nc {
            return Err(Error::Shape(format!(
                "generator expects {nc} channel(s), image has {c}"
            )));
        }
        let native = (h, w) == (nh, nw);
        let batch: Array4<T> = if native {
            batch_nchw(xs)?
        } else {
            let mut out = Array4::zeros((xs.len(), nc, nh, nw));
            for (i, img) in xs.iter().enumerate() {
                if img.shape() != shape {
                    return Err(Error::Shape(format!(
                        "image {i} has shape {:?}, expected {:?}",
                        img.shape(),
                        shape
                    )));
                }
                let hwc = img.to_compute::<T>();
                let resized = resize_bilinear(&hwc.view(), nh, nw);
                out.index_axis_mut(Axis(0), i).assign(&nchw_from_hwc(&resized).index_axis(Axis(0), 0));
            }
            out
        };
        let out = self.net.forward(&batch, false);
        let mut images = Vec::with_capacity(xs.len());
        for i in 0..xs.len() {
            let chw = out.index_axis(Axis(0), i);
            let chw3 = chw.into_dimensionality::<ndarray::Ix3>().expect("3-d slice");
            if native {
                images.push(image_from_chw(&chw3)?);
            } else {
                let hwc = hwc_from_chw(&chw3);
                let back = resize_bilinear(&hwc.view(), h, w);
                images.push(Image::from_compute(&back)?);
            }
        }
        Ok(images)
    }

    /// Produce the poisoned version of `x`: reconstruct its feature-injected
    /// form.
    pub fn trigger_image(
        &mut self,
        spec: &InjectionSpec,
        template: Option<&NoiseTemplate>,
        x: &Image,
    ) -> Result<Image> {
        let injected = inject(x, spec, template)?;
        self.reconstruct(&injected.image)
    }

    /// Batched [`trigger_image`](Self::trigger_image).
    pub fn trigger_batch(
        &mut self,
        spec: &InjectionSpec,
        template: Option<&NoiseTemplate>,
        xs: &[&Image],
    ) -> Result<Vec<Image>> {
        let injected: Vec<Image> = xs
            .iter()
            .map(|x| inject(x, spec, template).map(|i| i.image))
            .collect::<Result<_>>()?;
        let refs: Vec<&Image> = injected.iter().collect();
        self.reconstruct_batch(&refs)
    }
}

/// Write a generator checkpoint.
pub fn save_generator<T: Scalar>(gen: &TriggerGenerator<T>, path: impl AsRef<Path>) -> Result<()> {
    let header = serde_json::json!({
        "arch": GENERATOR_ARCH,
        "input_shape": [gen.input_shape.0, gen.input_shape.1, gen.input_shape.2],
        "provenance": serde_json::to_value(&gen.provenance).expect("provenance serializes"),
        "history": serde_json::to_value(&gen.history).expect("history serializes"),
    });
    let state = gen.net.named_state();
    let refs: Vec<(String, &ndarray::ArrayD<T>)> = state.into_iter().collect();
    save_checkpoint(path, &header, &refs)
}

/// Load a generator checkpoint, rejecting foreign architectures or formats.
pub fn load_generator<T: Scalar>(path: impl AsRef<Path>) -> Result<TriggerGenerator<T>> {
    let (header, tensors) = load_checkpoint::<T>(path.as_ref())?;
    let arch = header["arch"].as_str().unwrap_or("");
    if arch != GENERATOR_ARCH {
        return Err(Error::Version(format!(
            "checkpoint holds arch `{arch}`, expected `{GENERATOR_ARCH}`"
        )));
    }
    let shape_vec: Vec<usize> = header["input_shape"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_u64().map(|v| v as usize)).collect())
        .unwrap_or_default();
    if shape_vec.len() != 3 {
        return Err(Error::Version("checkpoint missing input_shape".into()));
    }
    let provenance: GeneratorProvenance = serde_json::from_value(header["provenance"].clone())
        .map_err(|e| Error::Version(format!("checkpoint provenance unreadable: {e}")))?;
    let history: Vec<DaeEpochStats> =
        serde_json::from_value(header["history"].clone()).unwrap_or_default();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = dae_net::<T>(shape_vec[2], &mut rng);
    net.load_state(&tensors)?;
    Ok(TriggerGenerator {
        net,
        input_shape: (shape_vec[0], shape_vec[1], shape_vec[2]),
        provenance,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inject::{make_noise_template, InjectionMode};

    fn tiny_corpus(n: usize, size: usize) -> Vec<Image> {
        (0..n)
            .map(|i| {
                Image::from_fn(size, size, 3, |r, c, ch| {
                    ((r * 17 + c * 29 + ch * 61 + i * 13) % 251) as u8
                })
                .unwrap()
            })
            .collect()
    }

    fn edge_spec() -> InjectionSpec {
        InjectionSpec {
            mode: InjectionMode::Edge,
            ..Default::default()
        }
    }

    fn quick_cfg(epochs: usize) -> DaeTrainConfig {
        DaeTrainConfig {
            epochs,
            ..Default::default()
        }
    }

    #[test]
    fn rejects_small_corpus() {
        let corpus = tiny_corpus(10, 16);
        let err = train_dae::<f32>(&corpus, &edge_spec(), None, &quick_cfg(1), 1).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn rejects_bad_input_size() {
        let corpus = tiny_corpus(MIN_BENIGN_SAMPLES, 24);
        let err = train_dae::<f32>(&corpus, &edge_spec(), None, &quick_cfg(1), 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn rejects_invalid_config() {
        let cfg = DaeTrainConfig {
            val_fraction: 0.9,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn training_is_deterministic_and_loss_decreases() {
        let corpus = tiny_corpus(MIN_BENIGN_SAMPLES, 16);
        let spec = edge_spec();
        let gen_a = train_dae::<f32>(&corpus, &spec, None, &quick_cfg(3), 42).unwrap();
        let gen_b = train_dae::<f32>(&corpus, &spec, None, &quick_cfg(3), 42).unwrap();
        assert_eq!(gen_a.param_hash(), gen_b.param_hash());

        let first = gen_a.history.first().unwrap().train_loss;
        let last = gen_a.history.last().unwrap().train_loss;
        assert!(last < first, "loss should drop: first {first}, last {last}");

        let gen_c = train_dae::<f32>(&corpus, &spec, None, &quick_cfg(3), 43).unwrap();
        assert_ne!(gen_a.param_hash(), gen_c.param_hash(), "seed must matter");
    }

    #[test]
    fn reconstruct_save_load_round_trip() {
        let corpus = tiny_corpus(MIN_BENIGN_SAMPLES, 16);
        let template = make_noise_template((16, 16, 3), 7).unwrap();
        let spec = InjectionSpec {
            mode: InjectionMode::Mix,
            ..Default::default()
        };
        let mut gen = train_dae::<f32>(&corpus, &spec, Some(&template), &quick_cfg(1), 5).unwrap();
        let rec1 = gen.reconstruct(&corpus[0]).unwrap();
        assert_eq!(rec1.shape(), (16, 16, 3));
        let rec2 = gen.reconstruct(&corpus[0]).unwrap();
        assert_eq!(rec1, rec2, "reconstruction must be deterministic");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.bdnn");
        save_generator(&gen, &path).unwrap();
        let mut loaded = load_generator::<f32>(&path).unwrap();
        assert_eq!(loaded.param_hash(), gen.param_hash());
        assert_eq!(loaded.provenance.spec_id, spec.id());
        assert_eq!(loaded.provenance.template_seed, Some(7));
        assert_eq!(loaded.reconstruct(&corpus[0]).unwrap(), rec1);
    }

    #[test]
    fn adapter_handles_other_resolutions() {
        let corpus = tiny_corpus(MIN_BENIGN_SAMPLES, 16);
        let mut gen = train_dae::<f32>(&corpus, &edge_spec(), None, &quick_cfg(1), 9).unwrap();
        let big = Image::from_fn(32, 32, 3, |r, c, ch| ((r + 2 * c + 3 * ch) % 256) as u8).unwrap();
        let rec = gen.reconstruct(&big).unwrap();
        assert_eq!(rec.shape(), (32, 32, 3));
    }

    #[test]
    fn load_rejects_foreign_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("other.bdnn");
        let tensor = ndarray::ArrayD::<f32>::zeros(ndarray::IxDyn(&[2, 2]));
        crate::nn::serialize::save_checkpoint(
            &path,
            &serde_json::json!({"arch": "something_else", "input_shape": [16, 16, 3]}),
            &[("l0.w".to_string(), &tensor)],
        )
        .unwrap();
        let err = load_generator::<f32>(&path).err().unwrap();
        assert!(matches!(err, Error::Version(_)), "{err}");
    }

    #[test]
    fn trigger_images_stay_close_to_originals() {
        // after a few epochs on a tiny corpus the reconstruction should at
        // least be in the right ballpark (not saturated or inverted)
        let corpus = tiny_corpus(MIN_BENIGN_SAMPLES, 16);
        let spec = edge_spec();
        let mut gen = train_dae::<f32>(&corpus, &spec, None, &quick_cfg(3), 11).unwrap();
        let trig = gen.trigger_image(&spec, None, &corpus[0]).unwrap();
        let mse = crate::metrics::mse::<f64>(&corpus[0], &trig).unwrap();
        assert!(mse < 3000.0, "reconstruction wildly off: mse {mse}");
    }
}
