//! Poisoned-dataset construction: seeded source selection, trigger
//! application, relabeling to the target class, and an auditable manifest
//! that can be re-verified bit-for-bit later.

use crate::dae::{load_generator, TriggerGenerator};
use crate::dataset::{DatasetManifest, SampleRecord};
use crate::error::{Error, Result};
use crate::image::{load_image, Image, ResizePolicy};
use crate::inject::{make_noise_template, InjectionSpec, NoiseTemplate};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const POISON_SCHEMA_VERSION: u32 = 1;

/// How many records a verification pass re-derives through the generator.
pub const VERIFY_REDERIVE_SAMPLES: usize = 10;

/// Poisoning parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoisonConfig {
    /// Fraction of the training set to poison.
    pub rho: f64,
    /// Class every poisoned sample is relabeled to.
    pub target_label: usize,
    pub selection_seed: u64,
    /// Skip images already belonging to the target class when selecting.
    pub exclude_target_class: bool,
}

impl Default for PoisonConfig {
    fn default() -> Self {
        PoisonConfig {
            rho: 0.1,
            target_label: 0,
            selection_seed: 0,
            exclude_target_class: true,
        }
    }
}

/// One poisoned sample: where it came from and what was written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoisonRecord {
    pub source: PathBuf,
    pub source_label: usize,
    pub poisoned: PathBuf,
    pub generator_id: String,
    pub spec_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoisonCounts {
    pub train_total: usize,
    pub poisoned: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateRef {
    pub seed: u64,
    pub path: PathBuf,
}

/// Everything needed to audit a poisoned dataset after the fact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoisonManifest {
    pub schema_version: u32,
    pub rho: f64,
    pub target_label: usize,
    pub selection_seed: u64,
    pub exclude_target_class: bool,
    pub spec: InjectionSpec,
    pub template: Option<TemplateRef>,
    pub generator_path: PathBuf,
    pub generator_id: String,
    pub counts: PoisonCounts,
    pub records: Vec<PoisonRecord>,
}

impl PoisonManifest {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path.as_ref(), json).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("bad poison manifest: {e}")))
    }
}

/// Validate the config against a dataset and pick which samples to poison.
/// Returns sorted sample indices; the same seed always picks the same set.
pub fn select_poison_sources(train: &DatasetManifest, cfg: &PoisonConfig) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&cfg.rho) || !cfg.rho.is_finite() {
        return Err(Error::Config(format!("rho must lie in [0, 1], got {}", cfg.rho)));
    }
    if cfg.target_label >= train.num_classes() {
        return Err(Error::Config(format!(
            "target_label {} out of range for {} classes",
            cfg.target_label,
            train.num_classes()
        )));
    }
    let count = (cfg.rho * train.len() as f64).round() as usize;
    let mut pool: Vec<usize> = train
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| !(cfg.exclude_target_class && s.label == cfg.target_label))
        .map(|(i, _)| i)
        .collect();
    if count > pool.len() {
        return Err(Error::Data(format!(
            "cannot poison {count} of {} eligible samples (rho {}, {} total)",
            pool.len(),
            cfg.rho,
            train.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.selection_seed);
    pool.shuffle(&mut rng);
    pool.truncate(count);
    pool.sort_unstable();
    Ok(pool)
}

/// Remove any files this build created before bailing out with an error.
struct Cleanup {
    files: Vec<PathBuf>,
    armed: bool,
}

impl Cleanup {
    fn new() -> Self {
        Cleanup {
            files: Vec::new(),
            armed: true,
        }
    }
    fn track(&mut self, path: PathBuf) {
        self.files.push(path);
    }
    fn disarm(&mut self) {
        self.armed = false;
    }
}

impl Drop for Cleanup {
    fn drop(&mut self) {
        if self.armed {
            for f in &self.files {
                let _ = std::fs::remove_file(f);
            }
        }
    }
}

/// Build a poisoned training set under `out_dir`.
///
/// Selected samples are replaced by their triggered versions, written as new
/// PNG files under the target class's directory and relabeled; unselected
/// samples are referenced at their original paths. Produces the mixed
/// dataset manifest (`dataset_manifest.json`) and the poison audit manifest
/// (`poison_manifest.json`). On any error, files already written by this
/// call are removed.
pub fn build_poisoned_dataset<T: Scalar>(
    train: &DatasetManifest,
    gen: &mut TriggerGenerator<T>,
    generator_path: &Path,
    spec: &InjectionSpec,
    template: Option<&NoiseTemplate>,
    cfg: &PoisonConfig,
    out_dir: &Path,
) -> Result<PoisonManifest> {
    spec.validate()?;
    let selected = select_poison_sources(train, cfg)?;
    let selected_set: std::collections::BTreeSet<usize> = selected.iter().copied().collect();
    let target_class = train.classes[cfg.target_label].clone();
    let class_dir = out_dir.join(&target_class);
    std::fs::create_dir_all(&class_dir).map_err(|e| Error::io(&class_dir, e))?;

    let mut cleanup = Cleanup::new();
    let generator_id = gen.param_hash();
    let mut records = Vec::with_capacity(selected.len());

    for chunk in selected.chunks(64) {
        let sources: Vec<Image> = chunk
            .iter()
            .map(|&i| load_image(&train.samples[i].path, train.image_shape, ResizePolicy::Reject))
            .collect::<Result<_>>()?;
        let refs: Vec<&Image> = sources.iter().collect();
        let poisoned = gen.trigger_batch(spec, template, &refs)?;
        for (&idx, img) in chunk.iter().zip(poisoned.iter()) {
            let stem = train.samples[idx]
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sample".into());
            let out_path = class_dir.join(format!("poison_{idx:05}_{stem}.png"));
            img.save_png(&out_path)?;
            cleanup.track(out_path.clone());
            records.push(PoisonRecord {
                source: train.samples[idx].path.clone(),
                source_label: train.samples[idx].label,
                poisoned: out_path,
                generator_id: generator_id.clone(),
                spec_id: spec.id(),
            });
        }
    }

    let template_ref = match template {
        Some(t) => {
            let tpath = out_dir.join("template.png");
            t.pixels.save_png(&tpath)?;
            cleanup.track(tpath.clone());
            Some(TemplateRef {
                seed: t.seed,
                path: tpath,
            })
        }
        None => None,
    };

    let manifest = PoisonManifest {
        schema_version: POISON_SCHEMA_VERSION,
        rho: cfg.rho,
        target_label: cfg.target_label,
        selection_seed: cfg.selection_seed,
        exclude_target_class: cfg.exclude_target_class,
        spec: spec.clone(),
        template: template_ref,
        generator_path: generator_path.to_path_buf(),
        generator_id,
        counts: PoisonCounts {
            train_total: train.len(),
            poisoned: records.len(),
        },
        records,
    };

    // mixed dataset manifest: clean samples by reference, poisoned replacements
    let mut mixed_samples = Vec::with_capacity(train.len());
    let mut poison_iter = manifest.records.iter();
    for (i, sample) in train.samples.iter().enumerate() {
        if selected_set.contains(&i) {
            let rec = poison_iter.next().expect("record per selected index");
            mixed_samples.push(SampleRecord {
                path: rec.poisoned.clone(),
                label: cfg.target_label,
            });
        } else {
            mixed_samples.push(sample.clone());
        }
    }
    let mixed = DatasetManifest {
        classes: train.classes.clone(),
        samples: mixed_samples,
        image_shape: train.image_shape,
    };
    let mixed_path = out_dir.join("dataset_manifest.json");
    mixed.save_json(&mixed_path)?;
    cleanup.track(mixed_path);
    let manifest_path = out_dir.join("poison_manifest.json");
    manifest.save_json(&manifest_path)?;
    cleanup.track(manifest_path);

    cleanup.disarm();
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub records_checked: usize,
    pub files_checked: usize,
    pub rederived: usize,
}

/// Audit a poisoned dataset against its manifest.
///
/// Checks counts, file existence, template integrity, generator identity,
/// and finally re-derives a random subset of poisoned images from their
/// sources, comparing pixels bit-for-bit. Any discrepancy fails the audit
/// with the full list of violations.
pub fn verify_manifest<T: Scalar>(manifest_path: &Path) -> Result<VerifyReport> {
    let manifest = PoisonManifest::load_json(manifest_path)?;
    let mut violations: Vec<String> = Vec::new();

    if manifest.schema_version != POISON_SCHEMA_VERSION {
        return Err(Error::Version(format!(
            "poison manifest schema {}, this build reads {}",
            manifest.schema_version, POISON_SCHEMA_VERSION
        )));
    }

    let expected = (manifest.rho * manifest.counts.train_total as f64).round() as usize;
    if manifest.counts.poisoned != expected {
        violations.push(format!(
            "count mismatch: manifest holds {} poisoned samples, rho {} of {} gives {expected}",
            manifest.counts.poisoned, manifest.rho, manifest.counts.train_total
        ));
    }
    if manifest.records.len() != manifest.counts.poisoned {
        violations.push(format!(
            "record list length {} disagrees with counts.poisoned {}",
            manifest.records.len(),
            manifest.counts.poisoned
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for rec in &manifest.records {
        if !seen.insert(&rec.source) {
            violations.push(format!("source `{}` poisoned twice", rec.source.display()));
        }
    }

    let mut files_checked = 0usize;
    for rec in &manifest.records {
        for path in [&rec.source, &rec.poisoned] {
            files_checked += 1;
            if !path.exists() {
                violations.push(format!("missing file `{}`", path.display()));
            }
        }
    }

    // template: regenerate from the recorded seed at the stored file's shape
    let template = match &manifest.template {
        Some(tref) => {
            files_checked += 1;
            if !tref.path.exists() {
                violations.push(format!("missing template `{}`", tref.path.display()));
                None
            } else {
                match load_template(&tref.path, tref.seed) {
                    Ok(stored) => {
                        let fresh = make_noise_template(stored.pixels.shape(), tref.seed)?;
                        if fresh.pixels != stored.pixels {
                            violations.push(format!(
                                "template `{}` does not match its seed {}",
                                tref.path.display(),
                                tref.seed
                            ));
                        }
                        Some(stored)
                    }
                    Err(e) => {
                        violations.push(format!("unreadable template: {e}"));
                        None
                    }
                }
            }
        }
        None => None,
    };

    // generator: identity hash, then bit-exact re-derivation of a sample
    let mut rederived = 0usize;
    match load_generator::<T>(&manifest.generator_path) {
        Ok(mut gen) => {
            if gen.param_hash() != manifest.generator_id {
                violations.push(format!(
                    "generator `{}` hashes to {}, manifest records {}",
                    manifest.generator_path.display(),
                    gen.param_hash(),
                    manifest.generator_id
                ));
            } else if !manifest.records.is_empty() {
                let mut rng = ChaCha8Rng::seed_from_u64(manifest.selection_seed ^ 0x5eed_c0de);
                let mut order: Vec<usize> = (0..manifest.records.len()).collect();
                order.shuffle(&mut rng);
                order.truncate(VERIFY_REDERIVE_SAMPLES);
                for idx in order {
                    let rec = &manifest.records[idx];
                    if !rec.source.exists() || !rec.poisoned.exists() {
                        continue;
                    }
                    let derived = (|| -> Result<bool> {
                        let shape = image_dims(&rec.poisoned).ok_or_else(|| {
                            Error::Data(format!("unreadable image `{}`", rec.poisoned.display()))
                        })?;
                        let source = load_image(&rec.source, shape, ResizePolicy::Reject)?;
                        let stored = load_image(&rec.poisoned, shape, ResizePolicy::Reject)?;
                        let fresh = gen.trigger_image(&manifest.spec, template.as_ref(), &source)?;
                        Ok(fresh == stored)
                    })();
                    match derived {
                        Ok(true) => rederived += 1,
                        Ok(false) => violations.push(format!(
                            "poisoned image `{}` does not re-derive from its source",
                            rec.poisoned.display()
                        )),
                        Err(e) => violations.push(format!(
                            "re-derivation of `{}` failed: {e}",
                            rec.poisoned.display()
                        )),
                    }
                }
            }
        }
        Err(e) => violations.push(format!(
            "generator `{}` unusable: {e}",
            manifest.generator_path.display()
        )),
    }

    if violations.is_empty() {
        Ok(VerifyReport {
            records_checked: manifest.records.len(),
            files_checked,
            rederived,
        })
    } else {
        Err(Error::Verification { violations })
    }
}

fn image_dims(path: &Path) -> Option<(usize, usize, usize)> {
    let img = image::open(path).ok()?;
    let c = match img.color().channel_count() {
        1 => 1,
        _ => 3,
    };
    Some((img.height() as usize, img.width() as usize, c))
}

fn load_template(path: &Path, seed: u64) -> Result<NoiseTemplate> {
    let shape = image_dims(path)
        .ok_or_else(|| Error::Data(format!("unreadable template `{}`", path.display())))?;
    let pixels = load_image(path, shape, ResizePolicy::Reject)?;
    Ok(NoiseTemplate { pixels, seed })
}
