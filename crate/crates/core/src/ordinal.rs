//! Ordinal classification by binary threshold decomposition.
//!
//! A `C`-level label `y` becomes `C - 1` bits, bit `i` set iff `y <= i`.
//! One binary model per threshold estimates `p(y <= i)`; the class
//! distribution is recovered from the exceedance probabilities
//! `e_i = p(y > i)` by telescoping differences:
//!
//! ```text
//! p(0)     = 1 - e_0
//! p(k)     = e_{k-1} - e_k        0 < k < C-1
//! p(C - 1) = e_{C-2}
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Normalizer;
use crate::models::{build_model, load_checkpoint, save_checkpoint, Head, Model, ModelConfig};
use crate::training::{fit, sigmoid, Sample, Target, TrainConfig, TrainHistory};

/// Threshold bits of `y`: bit `i` is 1 iff `y <= i`.
pub fn decompose_label(y: usize, num_classes: usize) -> Result<Vec<u8>> {
    if y >= num_classes {
        return Err(Error::OutOfRange {
            value: y,
            classes: num_classes,
        });
    }
    Ok((0..num_classes - 1).map(|i| u8::from(y <= i)).collect())
}

/// Inverse of [`decompose_label`]: the number of leading zero bits.
pub fn decode_label(bits: &[u8]) -> usize {
    bits.iter().position(|&b| b == 1).unwrap_or(bits.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recombined {
    /// Telescoped class masses; may be negative for non-monotone inputs.
    pub raw: Vec<f64>,
    /// `raw` clipped at zero and renormalized.
    pub reported: Vec<f64>,
    /// Argmax of `raw`, ties to the lower class.
    pub class: usize,
}

/// Turns `C - 1` exceedance probabilities `p(y > i)` into a distribution
/// over `C` classes.
pub fn recombine(exceed: &[f64]) -> Result<Recombined> {
    if exceed.is_empty() {
        return Err(Error::ShapeMismatch("need at least one threshold".into()));
    }
    if let Some(&bad) = exceed.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::InputOutOfRange(bad));
    }
    let c = exceed.len() + 1;
    let mut raw = Vec::with_capacity(c);
    raw.push(1.0 - exceed[0]);
    for k in 1..c - 1 {
        raw.push(exceed[k - 1] - exceed[k]);
    }
    raw.push(exceed[c - 2]);

    let mut class = 0;
    for (k, &p) in raw.iter().enumerate() {
        if p > raw[class] {
            class = k;
        }
    }
    let clipped: Vec<f64> = raw.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let reported = clipped.iter().map(|p| p / total).collect();
    Ok(Recombined {
        raw,
        reported,
        class,
    })
}

/// Anything that can estimate `p(y <= i)` for one threshold.
pub trait ThresholdScorer {
    fn prob_at_or_below(&self, input: &Array2<f64>) -> Result<f64>;
}

impl ThresholdScorer for Model {
    fn prob_at_or_below(&self, input: &Array2<f64>) -> Result<f64> {
        Ok(sigmoid(self.predict(input)?[0]))
    }
}

/// Runs every threshold scorer and recombines. Returns reported
/// probabilities and the predicted class.
pub fn predict_with<S: ThresholdScorer>(
    scorers: &[S],
    input: &Array2<f64>,
) -> Result<(Vec<f64>, usize)> {
    let exceed: Vec<f64> = scorers
        .iter()
        .map(|s| s.prob_at_or_below(input).map(|p| 1.0 - p))
        .collect::<Result<_>>()?;
    let r = recombine(&exceed)?;
    Ok((r.reported, r.class))
}

/// `C - 1` independent binary models; threshold `i` predicts `p(y <= i)`.
#[derive(Debug, Clone)]
pub struct OrdinalModel {
    pub num_classes: usize,
    pub thresholds: Vec<Model>,
}

pub fn predict_ordinal(model: &OrdinalModel, input: &Array2<f64>) -> Result<(Vec<f64>, usize)> {
    predict_with(&model.thresholds, input)
}

/// Trains one binary model per threshold on the full training set. Model
/// and training seeds are offset by the threshold index. Every sample must
/// carry `class`.
pub fn train_ordinal(
    train: &[Sample],
    validation: &[Sample],
    base: &ModelConfig,
    normalizer: Option<Normalizer>,
    cfg: &TrainConfig,
) -> Result<(OrdinalModel, Vec<TrainHistory>)> {
    let num_classes = match base.head {
        Head::Multiclass { classes } => classes,
        Head::Thresholds { count } => count + 1,
        _ => {
            return Err(Error::InvalidConfig(
                "ordinal training needs the number of classes (multiclass head)".into(),
            ))
        }
    };
    if num_classes < 3 {
        return Err(Error::InvalidConfig(
            "ordinal decomposition needs at least 3 classes; use a plain binary model".into(),
        ));
    }
    let relabel = |samples: &[Sample], i: usize| -> Result<Vec<Sample>> {
        samples
            .iter()
            .map(|s| {
                let y = s
                    .class
                    .ok_or_else(|| Error::InvalidConfig("ordinal samples need a class".into()))?;
                let bits = decompose_label(y, num_classes)?;
                Ok(Sample {
                    input: s.input.clone(),
                    target: Target::Values(vec![f64::from(bits[i])]),
                    class: Some(y),
                })
            })
            .collect()
    };
    let trained: Vec<(Model, TrainHistory)> = (0..num_classes - 1)
        .into_par_iter()
        .map(|i| {
            let mut config = base.clone();
            config.head = Head::Binary;
            config.seed = base.seed.wrapping_add(i as u64);
            let mut model = build_model(config)?;
            model.normalizer = normalizer.clone();
            let cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            fit(model, &relabel(train, i)?, &relabel(validation, i)?, &cfg)
        })
        .collect::<Result<_>>()?;
    let (thresholds, histories) = trained.into_iter().unzip();
    Ok((
        OrdinalModel {
            num_classes,
            thresholds,
        },
        histories,
    ))
}

const ORDINAL_MANIFEST: &str = "ordinal.toml";

#[derive(Debug, Serialize, Deserialize)]
struct OrdinalManifest {
    format_major: u32,
    num_classes: usize,
    /// Threshold checkpoint directories, threshold 0 first.
    thresholds: Vec<String>,
}

pub fn save_ordinal(model: &OrdinalModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let mut names = Vec::new();
    for (i, m) in model.thresholds.iter().enumerate() {
        let name = format!("threshold_{i}");
        save_checkpoint(m, dir.join(&name))?;
        names.push(name);
    }
    let manifest = OrdinalManifest {
        format_major: crate::models::CHECKPOINT_FORMAT.0,
        num_classes: model.num_classes,
        thresholds: names,
    };
    let p = dir.join(ORDINAL_MANIFEST);
    let text = toml::to_string(&manifest).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    fs::write(&p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e))
}

pub fn is_ordinal_checkpoint(dir: impl AsRef<Path>) -> bool {
    dir.as_ref().join(ORDINAL_MANIFEST).is_file()
}

pub fn load_ordinal(dir: impl AsRef<Path>) -> Result<OrdinalModel> {
    let dir = dir.as_ref();
    let p = dir.join(ORDINAL_MANIFEST);
    if !p.is_file() {
        return Err(Error::MissingCheckpoint(dir.to_path_buf()));
    }
    let text =
        fs::read_to_string(&p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
    let manifest: OrdinalManifest =
        toml::from_str(&text).map_err(|e| Error::CorruptCheckpoint {
            path: p.clone(),
            reason: e.to_string(),
        })?;
    if manifest.format_major != crate::models::CHECKPOINT_FORMAT.0 {
        return Err(Error::VersionMismatch(format!(
            "ordinal manifest format {}",
            manifest.format_major
        )));
    }
    if manifest.thresholds.len() + 1 != manifest.num_classes {
        return Err(Error::CorruptCheckpoint {
            path: p,
            reason: format!(
                "{} thresholds listed for {} classes",
                manifest.thresholds.len(),
                manifest.num_classes
            ),
        });
    }
    let thresholds = manifest
        .thresholds
        .iter()
        .map(|name| load_checkpoint(dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    if thresholds
        .windows(2)
        .any(|w| w[0].config.mode != w[1].config.mode)
    {
        return Err(Error::CorruptCheckpoint {
            path: dir.to_path_buf(),
            reason: "threshold models disagree on input mode".into(),
        });
    }
    Ok(OrdinalModel {
        num_classes: manifest.num_classes,
        thresholds,
    })
}
