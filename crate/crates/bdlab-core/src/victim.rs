//! Victim classifiers: two small convolutional architectures, their
//! training loop, and the attack-side evaluation primitives (clean-data
//! accuracy, attack success rate, trigger exclusivity).

use crate::dataset::LoadedDataset;
use crate::error::{Error, Result};
use crate::image::{batch_nchw, Image};
use crate::inject::{InjectionSpec, NoiseTemplate};
use crate::dae::TriggerGenerator;
use crate::nn::conv::Conv2d;
use crate::nn::layers::{BatchNorm2d, ChannelMask, GlobalAvgPool, Linear, MaxPool2d, Relu, Residual};
use crate::nn::loss::{softmax, softmax_cross_entropy};
use crate::nn::optim::SgdMomentum;
use crate::nn::serialize::{load_checkpoint, save_checkpoint};
use crate::nn::{Layer, Net};
use crate::scalar::Scalar;
use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Fractions of the epoch budget after which the learning rate is decayed,
/// mirroring a step schedule of 15 and 35 out of 70.
pub const LR_MILESTONE_FRACTIONS: [f64; 2] = [15.0 / 70.0, 35.0 / 70.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VictimArch {
    SmallResnet,
    SmallVgg,
}

impl std::fmt::Display for VictimArch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VictimArch::SmallResnet => write!(f, "small_resnet"),
            VictimArch::SmallVgg => write!(f, "small_vgg"),
        }
    }
}

/// Classifier training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VictimTrainConfig {
    pub arch: VictimArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lr_decay_factor: f64,
}

impl Default for VictimTrainConfig {
    fn default() -> Self {
        VictimTrainConfig {
            arch: VictimArch::SmallResnet,
            epochs: 70,
            batch_size: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            lr_decay_factor: 0.1,
        }
    }
}

impl VictimTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(0.0 < self.lr_decay_factor && self.lr_decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay_factor must lie in (0, 1], got {}",
                self.lr_decay_factor
            )));
        }
        Ok(())
    }

    /// Step-decayed learning rate for a 0-based epoch index. Milestones sit
    /// at fixed fractions of the budget, so shorter runs keep the shape of
    /// the full schedule.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let mut decays = 0;
        for frac in LR_MILESTONE_FRACTIONS {
            let milestone = (frac * self.epochs as f64).floor() as usize;
            if epoch >= milestone && milestone > 0 {
                decays += 1;
            }
        }
        self.learning_rate * self.lr_decay_factor.powi(decays)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VictimEpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VictimTrainLog {
    pub seed: u64,
    pub base_lr: f64,
    pub epochs: Vec<VictimEpochStats>,
}

/// A trained classifier plus the metadata needed to evaluate and defend it.
pub struct VictimModel<T: Scalar> {
    pub net: Net<T>,
    pub arch: VictimArch,
    pub input_shape: (usize, usize, usize),
    pub num_classes: usize,
    /// Index of the channel-mask gate sitting on the final feature block.
    pub mask_layer: usize,
    pub log: VictimTrainLog,
}

impl<T: Scalar> std::fmt::Debug for VictimModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VictimModel")
            .field("arch", &self.arch)
            .field("input_shape", &self.input_shape)
            .field("num_classes", &self.num_classes)
            .finish_non_exhaustive()
    }
}

fn res_block<T: Scalar>(c_in: usize, c_out: usize, stride: usize, rng: &mut ChaCha8Rng) -> Residual<T> {
    let main: Vec<Box<dyn Layer<T>>> = vec![
        Box::new(Conv2d::new(c_in, c_out, 3, stride, 1, false, rng)),
        Box::new(BatchNorm2d::new(c_out)),
        Box::new(Relu::new()),
        Box::new(Conv2d::new(c_out, c_out, 3, 1, 1, false, rng)),
        Box::new(BatchNorm2d::new(c_out)),
    ];
    let shortcut: Vec<Box<dyn Layer<T>>> = if stride != 1 || c_in != c_out {
        vec![
            Box::new(Conv2d::new(c_in, c_out, 1, stride, 0, false, rng)),
            Box::new(BatchNorm2d::new(c_out)),
        ]
    } else {
        Vec::new()
    };
    Residual::new(main, shortcut)
}

/// Build an untrained victim network. Returns the layer stack and the index
/// of its channel-mask gate.
pub fn build_victim_net<T: Scalar>(
    arch: VictimArch,
    input_shape: (usize, usize, usize),
    num_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Net<T>, usize)> {
    let (h, w, c) = input_shape;
    match arch {
        VictimArch::SmallResnet => {
            let layers: Vec<Box<dyn Layer<T>>> = vec![
                Box::new(Conv2d::new(c, 16, 3, 1, 1, false, rng)),
                Box::new(BatchNorm2d::new(16)),
                Box::new(Relu::new()),
                Box::new(res_block(16, 16, 1, rng)),
                Box::new(res_block(16, 32, 2, rng)),
                Box::new(res_block(32, 64, 2, rng)),
                Box::new(ChannelMask::new(64)),
                Box::new(GlobalAvgPool::new()),
                Box::new(Linear::new(64, num_classes, rng)),
            ];
            Ok((Net::new(layers), 6))
        }
        VictimArch::SmallVgg => {
            if h % 8 != 0 || w % 8 != 0 {
                return Err(Error::Config(format!(
                    "small_vgg needs input divisible by 8, got {h}x{w}"
                )));
            }
            let mut layers: Vec<Box<dyn Layer<T>>> = Vec::new();
            let mut c_in = c;
            for c_out in [16usize, 32, 64] {
                layers.push(Box::new(Conv2d::new(c_in, c_out, 3, 1, 1, false, rng)));
                layers.push(Box::new(BatchNorm2d::new(c_out)));
                layers.push(Box::new(Relu::new()));
                layers.push(Box::new(Conv2d::new(c_out, c_out, 3, 1, 1, false, rng)));
                layers.push(Box::new(BatchNorm2d::new(c_out)));
                layers.push(Box::new(Relu::new()));
                layers.push(Box::new(MaxPool2d::new(2)));
                c_in = c_out;
            }
            let mask_layer = layers.len();
            layers.push(Box::new(ChannelMask::new(64)));
            let feat = 64 * (h / 8) * (w / 8);
            layers.push(Box::new(Linear::new(feat, 128, rng)));
            layers.push(Box::new(Relu::new()));
            layers.push(Box::new(Linear::new(128, num_classes, rng)));
            Ok((Net::new(layers), mask_layer))
        }
    }
}

fn dataset_tensor<T: Scalar>(data: &LoadedDataset) -> Result<ndarray::Array4<T>> {
    let refs: Vec<&Image> = data.images.iter().collect();
    batch_nchw(&refs)
}

/// Train a classifier with momentum SGD under the step-decay schedule.
pub fn train_victim<T: Scalar>(
    train: &LoadedDataset,
    cfg: &VictimTrainConfig,
    seed: u64,
) -> Result<VictimModel<T>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let num_classes = train.num_classes();
    if num_classes < 2 {
        return Err(Error::Data("need at least two classes".into()));
    }
    let labels = train.labels();
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Data(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    let (h, w, c) = train.manifest.image_shape;
    let input_shape = (h, w, c);

    let inputs = dataset_tensor::<T>(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut net, mask_layer) = build_victim_net::<T>(cfg.arch, input_shape, num_classes, &mut rng)?;
    let mut opt = SgdMomentum::new(T::from_f(cfg.lr_at_epoch(0)), T::from_f(cfg.momentum));

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = VictimTrainLog {
        seed,
        base_lr: cfg.learning_rate,
        epochs: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        opt.lr = T::from_f(lr);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = inputs.select(Axis(0), chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let out = net.forward(&x, true);
            let bsz = chunk.len();
            let logits = out
                .view()
                .into_shape_with_order((bsz, num_classes))
                .expect("logits contiguous");
            let (loss, dlogits) = softmax_cross_entropy(logits, &batch_labels);
            let loss_f = loss.to_f();
            if !loss_f.is_finite() {
                return Err(Error::Divergence(format!(
                    "training loss became {loss_f} at epoch {epoch}"
                )));
            }
            for (row, &label) in logits.outer_iter().zip(batch_labels.iter()) {
                if argmax_tie_lowest(row.iter().cloned()) == label {
                    hits += 1;
                }
            }
            loss_sum += loss_f;
            batches += 1;
            let grad4 = dlogits
                .into_shape_with_order((bsz, num_classes, 1, 1))
                .expect("grad contiguous");
            net.zero_grads();
            net.backward(&grad4, true);
            opt.step(net.params_mut());
        }
        log.epochs.push(VictimEpochStats {
            epoch,
            lr,
            train_loss: loss_sum / batches.max(1) as f64,
            train_acc: hits as f64 / n as f64,
        });
    }

    Ok(VictimModel {
        net,
        arch: cfg.arch,
        input_shape,
        num_classes,
        mask_layer,
        log,
    })
}

/// Index of the largest value; ties go to the lowest index, so a uniform
/// score vector yields class 0.
pub fn argmax_tie_lowest<T: Scalar>(values: impl Iterator<Item = T>) -> usize {
    let mut best = T::neg_infinity();
    let mut best_idx = 0;
    for (i, v) in values.enumerate() {
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    best_idx
}

impl<T: Scalar> VictimModel<T> {
    /// Activation index (for `Net::activation`) of the masked feature block
    /// output — the layer class-activation maps and pruning statistics read.
    pub fn feature_activation(&self) -> usize {
        self.mask_layer + 1
    }

    /// Class probabilities for a batch of images, eval mode.
    pub fn predict_batch(&mut self, images: &[&Image]) -> Result<Vec<(usize, Vec<f64>)>> {
        let mut results = Vec::with_capacity(images.len());
        for chunk in images.chunks(256) {
            for img in chunk {
                if img.shape() != self.input_shape {
                    return Err(Error::Shape(format!(
                        "image has shape {:?}, model expects {:?}",
                        img.shape(),
                        self.input_shape
                    )));
                }
            }
            let x = batch_nchw::<T>(chunk)?;
            let out = self.net.forward(&x, false);
            let logits = out
                .view()
                .into_shape_with_order((chunk.len(), self.num_classes))
                .expect("logits contiguous");
            let probs = softmax(logits);
            for row in probs.outer_iter() {
                let label = argmax_tie_lowest(row.iter().cloned());
                results.push((label, row.iter().map(|v| v.to_f()).collect()));
            }
        }
        Ok(results)
    }

    /// Predicted label and class probabilities for one image.
    pub fn predict(&mut self, image: &Image) -> Result<(usize, Vec<f64>)> {
        Ok(self.predict_batch(&[image])?.pop().expect("one prediction"))
    }

    pub fn param_hash(&self) -> String {
        let mut bytes = Vec::new();
        for (name, tensor) in self.net.named_state() {
            bytes.extend_from_slice(name.as_bytes());
            for v in tensor.iter() {
                bytes.extend_from_slice(&(v.to_f() as f32).to_le_bytes());
            }
        }
        crate::dataset::sha256_hex(&bytes)[..16].to_string()
    }

    /// Independent deep copy (used by defenses, which must never mutate the
    /// model under audit).
    pub fn clone_model(&self) -> VictimModel<T> {
        VictimModel {
            net: self.net.clone_net(),
            arch: self.arch,
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            mask_layer: self.mask_layer,
            log: self.log.clone(),
        }
    }
}

/// Fraction of a labeled set classified correctly.
pub fn compute_cda<T: Scalar>(model: &mut VictimModel<T>, test: &LoadedDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Data("empty evaluation set".into()));
    }
    let labels = test.labels();
    let refs: Vec<&Image> = test.images.iter().collect();
    let preds = model.predict_batch(&refs)?;
    let hits = preds
        .iter()
        .zip(labels.iter())
        .filter(|((p, _), l)| p == *l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// A pre-built set of triggered carrier images for attack evaluation.
pub struct TriggeredSet {
    pub images: Vec<Image>,
    pub source_labels: Vec<usize>,
    pub target: usize,
}

/// Trigger every eval image whose true class differs from the target.
pub fn build_triggered_set<T: Scalar>(
    test: &LoadedDataset,
    gen: &mut TriggerGenerator<T>,
    spec: &InjectionSpec,
    template: Option<&NoiseTemplate>,
    target: usize,
) -> Result<TriggeredSet> {
    let keep: Vec<usize> = test.indices_excluding_class(target);
    if keep.is_empty() {
        return Err(Error::Data("no eval samples outside the target class".into()));
    }
    let labels = test.labels();
    let mut images = Vec::with_capacity(keep.len());
    let mut source_labels = Vec::with_capacity(keep.len());
    for chunk in keep.chunks(64) {
        let refs: Vec<&Image> = chunk.iter().map(|&i| &test.images[i]).collect();
        images.extend(gen.trigger_batch(spec, template, &refs)?);
        source_labels.extend(chunk.iter().map(|&i| labels[i]));
    }
    Ok(TriggeredSet {
        images,
        source_labels,
        target,
    })
}

/// Fraction of triggered images classified as the attack target.
pub fn asr_on_triggered<T: Scalar>(model: &mut VictimModel<T>, set: &TriggeredSet) -> Result<f64> {
    if set.images.is_empty() {
        return Err(Error::Data("empty triggered set".into()));
    }
    let refs: Vec<&Image> = set.images.iter().collect();
    let preds = model.predict_batch(&refs)?;
    let hits = preds.iter().filter(|(p, _)| *p == set.target).count();
    Ok(hits as f64 / set.images.len() as f64)
}

/// Attack success rate: trigger all non-target eval images and measure how
/// many land in the target class.
pub fn compute_asr<T: Scalar>(
    model: &mut VictimModel<T>,
    test: &LoadedDataset,
    gen: &mut TriggerGenerator<T>,
    spec: &InjectionSpec,
    template: Option<&NoiseTemplate>,
    target: usize,
) -> Result<f64> {
    let set = build_triggered_set(test, gen, spec, template, target)?;
    asr_on_triggered(model, &set)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExclusivityReport {
    /// Success rate when each carrier wears its own trigger.
    pub same_trigger_asr: f64,
    /// Success rate when a carrier wears a trigger derived from a different
    /// image.
    pub cross_trigger_asr: f64,
    pub pairs: usize,
}

/// Test whether triggers fire only on the image they were derived from.
///
/// For each sampled carrier, the residual of a different image's trigger is
/// pasted on (clipped and re-quantized) and the model is asked to classify
/// it; the same carrier with its own trigger is the control.
pub fn exclusivity_test<T: Scalar>(
    model: &mut VictimModel<T>,
    test: &LoadedDataset,
    gen: &mut TriggerGenerator<T>,
    spec: &InjectionSpec,
    template: Option<&NoiseTemplate>,
    target: usize,
    pairs: usize,
    seed: u64,
) -> Result<ExclusivityReport> {
    let pool = test.indices_excluding_class(target);
    if pool.len() < 2 {
        return Err(Error::Data("need at least two non-target samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut carriers = pool.clone();
    carriers.shuffle(&mut rng);
    carriers.truncate(pairs.min(pool.len()));

    let mut donors = Vec::with_capacity(carriers.len());
    for &carrier in &carriers {
        loop {
            let donor = pool[rng.random_range(0..pool.len())];
            if donor != carrier {
                donors.push(donor);
                break;
            }
        }
    }

    let mut same_hits = 0usize;
    let mut cross_hits = 0usize;
    for (chunk_c, chunk_d) in carriers.chunks(64).zip(donors.chunks(64)) {
        let carrier_refs: Vec<&Image> = chunk_c.iter().map(|&i| &test.images[i]).collect();
        let donor_refs: Vec<&Image> = chunk_d.iter().map(|&i| &test.images[i]).collect();
        let own = gen.trigger_batch(spec, template, &carrier_refs)?;
        let donor_trig = gen.trigger_batch(spec, template, &donor_refs)?;

        let mut transplanted = Vec::with_capacity(chunk_c.len());
        for ((carrier, donor), donor_t) in carrier_refs.iter().zip(donor_refs.iter()).zip(donor_trig.iter()) {
            let residual = donor_t.to_compute::<T>() - donor.to_compute::<T>();
            let carried = carrier.to_compute::<T>() + &residual;
            transplanted.push(Image::from_compute(&carried)?);
        }

        let own_refs: Vec<&Image> = own.iter().collect();
        for (p, _) in model.predict_batch(&own_refs)? {
            if p == target {
                same_hits += 1;
            }
        }
        let trans_refs: Vec<&Image> = transplanted.iter().collect();
        for (p, _) in model.predict_batch(&trans_refs)? {
            if p == target {
                cross_hits += 1;
            }
        }
    }

    let n = carriers.len();
    Ok(ExclusivityReport {
        same_trigger_asr: same_hits as f64 / n as f64,
        cross_trigger_asr: cross_hits as f64 / n as f64,
        pairs: n,
    })
}

const VICTIM_ARCH_RESNET: &str = "small_resnet";
const VICTIM_ARCH_VGG: &str = "small_vgg";

/// Write a victim checkpoint.
pub fn save_victim<T: Scalar>(model: &VictimModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let arch = match model.arch {
        VictimArch::SmallResnet => VICTIM_ARCH_RESNET,
        VictimArch::SmallVgg => VICTIM_ARCH_VGG,
    };
    let header = serde_json::json!({
        "arch": arch,
        "input_shape": [model.input_shape.0, model.input_shape.1, model.input_shape.2],
        "num_classes": model.num_classes,
        "mask_layer": model.mask_layer,
        "log": serde_json::to_value(&model.log).expect("log serializes"),
    });
    let state = model.net.named_state();
    let refs: Vec<(String, &ndarray::ArrayD<T>)> = state.into_iter().collect();
    save_checkpoint(path, &header, &refs)
}

/// Load a victim checkpoint.
pub fn load_victim<T: Scalar>(path: impl AsRef<Path>) -> Result<VictimModel<T>> {
    let (header, tensors) = load_checkpoint::<T>(path.as_ref())?;
    let arch = match header["arch"].as_str().unwrap_or("") {
        VICTIM_ARCH_RESNET => VictimArch::SmallResnet,
        VICTIM_ARCH_VGG => VictimArch::SmallVgg,
        other => {
            return Err(Error::Version(format!(
                "checkpoint holds arch `{other}`, expected a victim classifier"
            )))
        }
    };
    let shape_vec: Vec<usize> = header["input_shape"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_u64().map(|v| v as usize)).collect())
        .unwrap_or_default();
    if shape_vec.len() != 3 {
        return Err(Error::Version("checkpoint missing input_shape".into()));
    }
    let input_shape = (shape_vec[0], shape_vec[1], shape_vec[2]);
    let num_classes = header["num_classes"].as_u64().unwrap_or(0) as usize;
    if num_classes < 2 {
        return Err(Error::Version("checkpoint missing num_classes".into()));
    }
    let log: VictimTrainLog = serde_json::from_value(header["log"].clone())
        .map_err(|e| Error::Version(format!("checkpoint log unreadable: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut net, mask_layer) = build_victim_net::<T>(arch, input_shape, num_classes, &mut rng)?;
    net.load_state(&tensors)?;
    Ok(VictimModel {
        net,
        arch,
        input_shape,
        num_classes,
        mask_layer,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetManifest, SampleRecord};

    /// Two clearly separable classes: dark-ish and bright-ish images.
    fn toy_dataset(n_per_class: usize, size: usize) -> LoadedDataset {
        let mut images = Vec::new();
        let mut samples = Vec::new();
        for i in 0..n_per_class {
            images.push(
                Image::from_fn(size, size, 3, |r, c, ch| ((r * 5 + c * 3 + ch + i) % 60) as u8)
                    .unwrap(),
            );
            samples.push(SampleRecord {
                path: format!("mem://dark/{i}").into(),
                label: 0,
            });
        }
        for i in 0..n_per_class {
            images.push(
                Image::from_fn(size, size, 3, |r, c, ch| {
                    (190 + (r * 5 + c * 3 + ch + i) % 60) as u8
                })
                .unwrap(),
            );
            samples.push(SampleRecord {
                path: format!("mem://bright/{i}").into(),
                label: 1,
            });
        }
        LoadedDataset {
            manifest: DatasetManifest {
                classes: vec!["dark".into(), "bright".into()],
                samples,
                image_shape: (size, size, 3),
            },
            images,
        }
    }

    fn quick_cfg(arch: VictimArch, epochs: usize) -> VictimTrainConfig {
        VictimTrainConfig {
            arch,
            epochs,
            batch_size: 16,
            learning_rate: 0.05,
            ..Default::default()
        }
    }

    #[test]
    fn lr_schedule_matches_step_decay() {
        let cfg = VictimTrainConfig {
            epochs: 70,
            learning_rate: 1e-3,
            ..Default::default()
        };
        assert!((cfg.lr_at_epoch(0) - 1e-3).abs() < 1e-12);
        assert!((cfg.lr_at_epoch(14) - 1e-3).abs() < 1e-12);
        assert!((cfg.lr_at_epoch(15) - 1e-4).abs() < 1e-12);
        assert!((cfg.lr_at_epoch(34) - 1e-4).abs() < 1e-12);
        assert!((cfg.lr_at_epoch(35) - 1e-5).abs() < 1e-12);
        assert!((cfg.lr_at_epoch(69) - 1e-5).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax_tie_lowest([0.0f32, 0.0, 0.0].into_iter()), 0);
        assert_eq!(argmax_tie_lowest([1.0f32, 2.0, 2.0].into_iter()), 1);
        assert_eq!(argmax_tie_lowest([1.0f32, 0.5, 2.0].into_iter()), 2);
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let mut cfg = VictimTrainConfig::default();
        cfg.momentum = 1.5;
        assert!(cfg.validate().is_err());
        cfg = VictimTrainConfig::default();
        cfg.learning_rate = f64::NAN;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn resnet_learns_toy_problem_deterministically() {
        let data = toy_dataset(30, 16);
        // enough epochs for the batch-norm running statistics to settle
        let cfg = quick_cfg(VictimArch::SmallResnet, 12);
        let mut model = train_victim::<f32>(&data, &cfg, 1).unwrap();
        let acc = compute_cda(&mut model, &data).unwrap();
        assert!(acc > 0.95, "toy accuracy only {acc}");

        let model_b = train_victim::<f32>(&data, &cfg, 1).unwrap();
        assert_eq!(model.param_hash(), model_b.param_hash());
        let model_c = train_victim::<f32>(&data, &cfg, 2).unwrap();
        assert_ne!(model.param_hash(), model_c.param_hash());
    }

    #[test]
    fn vgg_learns_toy_problem() {
        let data = toy_dataset(30, 16);
        let cfg = quick_cfg(VictimArch::SmallVgg, 12);
        let mut model = train_victim::<f32>(&data, &cfg, 3).unwrap();
        let acc = compute_cda(&mut model, &data).unwrap();
        assert!(acc > 0.95, "toy accuracy only {acc}");
    }

    #[test]
    fn save_load_preserves_predictions() {
        let data = toy_dataset(20, 16);
        let cfg = quick_cfg(VictimArch::SmallResnet, 2);
        let mut model = train_victim::<f32>(&data, &cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("victim.bdnn");
        save_victim(&model, &path).unwrap();
        let mut loaded = load_victim::<f32>(&path).unwrap();
        assert_eq!(loaded.param_hash(), model.param_hash());
        let img = &data.images[3];
        assert_eq!(model.predict(img).unwrap().0, loaded.predict(img).unwrap().0);
        assert_eq!(loaded.log.seed, 5);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let data = toy_dataset(10, 16);
        let cfg = quick_cfg(VictimArch::SmallResnet, 1);
        let mut model = train_victim::<f32>(&data, &cfg, 7).unwrap();
        let (_, probs) = model.predict(&data.images[0]).unwrap();
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-5, "probability sum {sum}");
    }

    #[test]
    fn predict_rejects_wrong_shape() {
        let data = toy_dataset(10, 16);
        let cfg = quick_cfg(VictimArch::SmallResnet, 1);
        let mut model = train_victim::<f32>(&data, &cfg, 7).unwrap();
        let wrong = Image::zeros(8, 8, 3).unwrap();
        assert!(model.predict(&wrong).is_err());
    }
}
