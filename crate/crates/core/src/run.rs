//! Run directories: resolved configuration, training, prediction,
//! evaluation reports and feature analyses on top of the library modules.
//!
//! A run directory holds `config.toml` (the resolved [`RunConfig`]),
//! `history.csv`, `summary.json` and `checkpoint/`. Evaluations go to
//! `eval-<split>/`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SequenceKind};
use crate::error::{Error, Result};
use crate::eval::{rf_importance, EvalReport, ForestConfig, ImportanceRanking, PredictionRecord};
use crate::features::{
    clip_features, clip_matrix, frame_matrix, write_clip_feature_table, BlinkParams,
    ClipFeatureRow, FeatureParams,
};
use crate::ingest::{
    load_manifest_with_base, repair_series, FrameSeries, LabelKind, Manifest, Split,
};
use crate::models::{
    build_model, load_checkpoint, save_checkpoint, Backbone, Head, InputMode, Model, ModelConfig,
};
use crate::ordinal::{
    is_ordinal_checkpoint, load_ordinal, predict_ordinal, recombine, save_ordinal, train_ordinal,
    OrdinalModel,
};
use crate::training::{fit, sigmoid, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMode {
    FrameClassify,
    FrameOrdinal,
    ClipRegress,
}

impl TaskMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskMode::FrameClassify => "frame-classify",
            TaskMode::FrameOrdinal => "frame-ordinal",
            TaskMode::ClipRegress => "clip-regress",
        }
    }

    fn label_kind(&self) -> LabelKind {
        match self {
            TaskMode::ClipRegress => LabelKind::Continuous,
            _ => LabelKind::Ordinal,
        }
    }
}

impl FromStr for TaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame-classify" => Ok(TaskMode::FrameClassify),
            "frame-ordinal" => Ok(TaskMode::FrameOrdinal),
            "clip-regress" => Ok(TaskMode::ClipRegress),
            _ => Err(Error::InvalidConfig(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackboneKind {
    Lstm,
    Tcn,
}

/// Everything needed to reproduce a run. Field names double as config
/// file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: TaskMode,
    pub model: BackboneKind,
    pub manifest: Option<PathBuf>,
    /// Base directory for relative feature paths; defaults to the manifest's directory.
    pub data_dir: Option<PathBuf>,
    pub seed: u64,

    pub clip_seconds: f64,
    pub overlap: f64,
    pub blink_threshold: f64,
    pub blink_min_separation: usize,

    pub reducer: Vec<usize>,
    pub lstm_hidden: Vec<usize>,
    pub tcn_levels: usize,
    pub tcn_hidden: usize,
    pub tcn_kernel: usize,
    pub tcn_dropout: f64,
    /// Ordinal mode only: one backbone with a threshold head instead of
    /// independent binary models.
    pub shared_ordinal_backbone: bool,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub patience: usize,
    pub balanced_batching: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let features = FeatureParams::default();
        let train = TrainConfig::default();
        let (tcn_levels, tcn_hidden, tcn_kernel, tcn_dropout) = match Backbone::tcn() {
            Backbone::Tcn {
                levels,
                hidden,
                kernel,
                dropout,
            } => (levels, hidden, kernel, dropout),
            Backbone::Lstm { .. } => unreachable!(),
        };
        RunConfig {
            mode: TaskMode::FrameOrdinal,
            model: BackboneKind::Tcn,
            manifest: None,
            data_dir: None,
            seed: train.seed,
            clip_seconds: features.clip_seconds,
            overlap: features.overlap,
            blink_threshold: features.blink.threshold,
            blink_min_separation: features.blink.min_separation,
            reducer: vec![128, 32],
            lstm_hidden: vec![128, 64],
            tcn_levels,
            tcn_hidden,
            tcn_kernel,
            tcn_dropout,
            shared_ordinal_backbone: false,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            epochs: train.max_epochs,
            patience: train.patience,
            balanced_batching: train.balanced_batching,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn feature_params(&self) -> FeatureParams {
        FeatureParams {
            clip_seconds: self.clip_seconds,
            overlap: self.overlap,
            blink: BlinkParams {
                threshold: self.blink_threshold,
                min_separation: self.blink_min_separation,
            },
        }
    }

    pub fn sequence_kind(&self) -> SequenceKind {
        match self.mode {
            TaskMode::ClipRegress => SequenceKind::Clips(self.feature_params()),
            _ => SequenceKind::Frames,
        }
    }

    pub fn backbone(&self) -> Backbone {
        match self.model {
            BackboneKind::Lstm => Backbone::Lstm {
                hidden: self.lstm_hidden.clone(),
            },
            BackboneKind::Tcn => Backbone::Tcn {
                levels: self.tcn_levels,
                hidden: self.tcn_hidden,
                kernel: self.tcn_kernel,
                dropout: self.tcn_dropout,
            },
        }
    }

    pub fn input_mode(&self) -> InputMode {
        match self.mode {
            TaskMode::ClipRegress => InputMode::clip(),
            _ => match InputMode::frame() {
                InputMode::Frame {
                    latent_dim,
                    affect_dim,
                    behavioral_dim,
                    ..
                } => InputMode::Frame {
                    latent_dim,
                    affect_dim,
                    behavioral_dim,
                    reducer: self.reducer.clone(),
                },
                clip => clip,
            },
        }
    }

    pub fn head(&self, num_classes: usize) -> Head {
        match self.mode {
            TaskMode::ClipRegress => Head::Regression,
            TaskMode::FrameOrdinal if self.shared_ordinal_backbone => Head::Thresholds {
                count: num_classes - 1,
            },
            _ => Head::Multiclass {
                classes: num_classes,
            },
        }
    }

    pub fn model_config(&self, num_classes: usize) -> ModelConfig {
        ModelConfig::new(
            self.input_mode(),
            self.backbone(),
            self.head(num_classes),
            self.seed,
        )
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: self.patience,
            learning_rate: self.learning_rate,
            balanced_batching: self.balanced_batching,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    /// Checks everything that can be checked without data.
    pub fn validate(&self) -> Result<()> {
        let p = self.feature_params();
        crate::features::clip_geometry(30.0, p.clip_seconds, p.overlap)?;
        if !(0.0..1.0).contains(&self.tcn_dropout) {
            return Err(Error::InvalidConfig("tcn_dropout must be in [0, 1)".into()));
        }
        self.model_config(4).validate()?;
        self.train_config().validate(None)
    }
}

/// Accepts a manifest file, a directory containing `manifest.toml`, or a
/// path missing its `.toml` extension.
pub fn resolve_manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        return path.join("manifest.toml");
    }
    if !path.exists() {
        let with_ext = path.with_extension("toml");
        if with_ext.exists() {
            return with_ext;
        }
    }
    path.to_path_buf()
}

/// Loads the manifest named by the config, resolving feature paths against
/// `data_dir` when set.
pub fn load_run_manifest(cfg: &RunConfig) -> Result<Manifest> {
    let path = cfg
        .manifest
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("no manifest given".into()))?;
    let path = resolve_manifest_path(path);
    let base = match &cfg.data_dir {
        Some(d) => d.clone(),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    load_manifest_with_base(&path, &base)
}

fn num_classes(manifest: &Manifest) -> usize {
    manifest.num_classes.unwrap_or_else(|| {
        manifest
            .entries
            .iter()
            .filter_map(|e| e.label.class())
            .max()
            .map_or(0, |m| m + 1)
    })
}

fn check_labels(cfg: &RunConfig, manifest: &Manifest) -> Result<()> {
    let want = cfg.mode.label_kind();
    match manifest.label_kind() {
        Some(kind) if kind == want => Ok(()),
        Some(kind) => Err(Error::InvalidManifest(format!(
            "mode {} needs {want:?} labels, manifest has {kind:?} labels",
            cfg.mode.as_str()
        ))),
        None => Err(Error::InvalidManifest("manifest has no entries".into())),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: TaskMode,
    pub num_classes: Option<usize>,
    pub train_videos: usize,
    pub validation_videos: usize,
    pub test_videos: usize,
    pub excluded_videos: Vec<String>,
    pub parameters: usize,
    /// One entry per trained model (one per threshold in ordinal mode).
    pub best_epochs: Vec<usize>,
    pub best_validation_metric: Vec<f64>,
}

fn write_histories(path: &Path, histories: &[TrainHistory]) -> Result<()> {
    if let [single] = histories {
        return single.write_csv(path);
    }
    let mut text = String::new();
    for (i, h) in histories.iter().enumerate() {
        for (k, line) in h.to_csv().lines().enumerate() {
            if k > 0 {
                let _ = writeln!(text, "{i},{line}");
            } else if i == 0 {
                let _ = writeln!(text, "threshold,{line}");
            }
        }
    }
    write_file(path, &text)
}

/// Trains the configured model on the manifest's train split, selects on
/// the validation split, and writes the run directory.
pub fn train_run(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let manifest = load_run_manifest(cfg)?;
    check_labels(cfg, &manifest)?;
    let classes = num_classes(&manifest);
    let data = Dataset::from_manifest(&manifest, cfg.sequence_kind())?;
    train_on_dataset(cfg, &data, classes, out)
}

/// Same as [`train_run`] but on an already featurized dataset.
pub fn train_on_dataset(
    cfg: &RunConfig,
    data: &Dataset,
    classes: usize,
    out: &Path,
) -> Result<RunSummary> {
    let normalizer = data.fit_normalizer()?;
    let mconf = cfg.model_config(classes);
    let tconf = cfg.train_config();
    let head = mconf.head;
    let train = data.samples(Split::Train, &normalizer, &head)?;
    let val = data.samples(Split::Validation, &normalizer, &head)?;
    fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let mut resolved = cfg.clone();
    if let Some(m) = &cfg.manifest {
        let m = resolve_manifest_path(m);
        resolved.manifest = Some(fs::canonicalize(&m).unwrap_or(m));
    }
    write_file(&out.join("config.toml"), &resolved.to_toml()?)?;

    let ckpt = out.join("checkpoint");
    if ckpt.exists() {
        fs::remove_dir_all(&ckpt)
            .map_err(|e| Error::io(format!("clearing {}", ckpt.display()), e))?;
    }
    let (histories, parameters) =
        if cfg.mode == TaskMode::FrameOrdinal && !cfg.shared_ordinal_backbone {
            let (model, histories) = train_ordinal(&train, &val, &mconf, Some(normalizer), &tconf)?;
            save_ordinal(&model, &ckpt)?;
            let params = model.thresholds.iter().map(Model::num_params).sum();
            (histories, params)
        } else {
            let mut model = build_model(mconf)?;
            model.normalizer = Some(normalizer);
            let (model, history) = fit(model, &train, &val, &tconf)?;
            save_checkpoint(&model, &ckpt)?;
            (vec![history], model.num_params())
        };
    write_histories(&out.join("history.csv"), &histories)?;
    let count = |s| data.split(s).count();
    let summary = RunSummary {
        mode: cfg.mode,
        num_classes: (cfg.mode != TaskMode::ClipRegress).then_some(classes),
        train_videos: count(Split::Train),
        validation_videos: count(Split::Validation),
        test_videos: count(Split::Test),
        excluded_videos: data.excluded.iter().map(|e| e.0.clone()).collect(),
        parameters,
        best_epochs: histories.iter().map(|h| h.best_epoch).collect(),
        best_validation_metric: histories.iter().map(|h| h.best().val_metric).collect(),
    };
    let json =
        serde_json::to_string_pretty(&summary).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    write_file(&out.join("summary.json"), &(json + "\n"))?;
    Ok(summary)
}

/// Prediction for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Predicted class (classification modes).
    pub class: Option<usize>,
    /// Class probabilities (classification modes).
    pub probabilities: Vec<f64>,
    /// Regression output, or the predicted class as a number.
    pub value: f64,
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn classified(probabilities: Vec<f64>, class: usize) -> Prediction {
    Prediction {
        class: Some(class),
        probabilities,
        value: class as f64,
    }
}

#[derive(Debug, Clone)]
pub enum Predictor {
    Single(Box<Model>),
    Ordinal(OrdinalModel),
}

impl Predictor {
    pub fn load(checkpoint: &Path) -> Result<Self> {
        if !checkpoint.exists() {
            return Err(Error::MissingCheckpoint(checkpoint.to_path_buf()));
        }
        if is_ordinal_checkpoint(checkpoint) {
            Ok(Predictor::Ordinal(load_ordinal(checkpoint)?))
        } else {
            Ok(Predictor::Single(Box::new(load_checkpoint(checkpoint)?)))
        }
    }

    /// `raw` is the unnormalized sequence; the stored normalizer is applied.
    pub fn predict(&self, raw: &Array2<f64>) -> Result<Prediction> {
        match self {
            Predictor::Ordinal(m) => {
                let (probs, class) = predict_ordinal(m, raw)?;
                Ok(classified(probs, class))
            }
            Predictor::Single(m) => {
                let out = m.predict(raw)?;
                Ok(match m.config.head {
                    Head::Multiclass { .. } => {
                        let p = softmax(&out);
                        let c = crate::training::argmax(&p);
                        classified(p, c)
                    }
                    Head::Thresholds { .. } => {
                        let exceed: Vec<f64> = out.iter().map(|&z| 1.0 - sigmoid(z)).collect();
                        let r = recombine(&exceed)?;
                        classified(r.reported, r.class)
                    }
                    Head::Binary => {
                        let p = sigmoid(out[0]);
                        classified(vec![1.0 - p, p], usize::from(p > 0.5))
                    }
                    Head::Regression => Prediction {
                        class: None,
                        probabilities: Vec::new(),
                        value: out[0],
                    },
                })
            }
        }
    }
}

/// A trained run loaded from disk.
pub struct Run {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub predictor: Predictor,
}

impl Run {
    pub fn open(dir: &Path) -> Result<Self> {
        let ckpt = dir.join("checkpoint");
        if !ckpt.exists() {
            return Err(Error::MissingCheckpoint(ckpt));
        }
        let config = RunConfig::from_toml_file(dir.join("config.toml"))?;
        Ok(Run {
            dir: dir.to_path_buf(),
            config,
            predictor: Predictor::load(&ckpt)?,
        })
    }

    /// Repairs and featurizes one series the way the run was trained.
    pub fn predict_series(&self, series: &FrameSeries) -> Result<Prediction> {
        let (repaired, report) = repair_series(series)?;
        if report.unusable {
            return Err(Error::AllFramesInvalid(format!(
                "{}: only {:.0}% of frames are valid",
                series.video_id,
                100.0 * report.valid_fraction
            )));
        }
        let raw = match self.config.sequence_kind() {
            SequenceKind::Frames => frame_matrix(&repaired),
            SequenceKind::Clips(p) => clip_matrix(&repaired, &p)?,
        };
        self.predictor.predict(&raw)
    }

    /// Scores one split of `manifest` (the training manifest when `None`)
    /// and writes `eval-<split>/`.
    pub fn evaluate(&self, split: Split, manifest: Option<&Manifest>) -> Result<EvalReport> {
        let owned;
        let manifest = match manifest {
            Some(m) => m,
            None => {
                owned = load_run_manifest(&self.config)?;
                &owned
            }
        };
        check_labels(&self.config, manifest)?;
        let data = Dataset::from_manifest(manifest, self.config.sequence_kind())?;
        let records = data
            .split(split)
            .map(|v| {
                let p = self.predictor.predict(&v.raw)?;
                Ok(PredictionRecord {
                    video_id: v.video_id.clone(),
                    label: v.label.as_f64(),
                    prediction: p.value,
                    probabilities: p.probabilities,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mode = self.config.mode.as_str();
        let report = match self.config.mode {
            TaskMode::ClipRegress => EvalReport::regression(mode, split.as_str(), records)?,
            _ => EvalReport::classification(mode, split.as_str(), num_classes(manifest), records)?,
        };
        report.write(self.dir.join(format!("eval-{}", split.as_str())))?;
        Ok(report)
    }
}

/// Clip feature rows of every usable video in the manifest.
pub fn clip_feature_rows(
    manifest: &Manifest,
    params: &FeatureParams,
    split: Option<Split>,
) -> Result<Vec<ClipFeatureRow>> {
    use rayon::prelude::*;
    let per_video = manifest
        .entries
        .par_iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .map(|e| {
            let mut series = e.load_series()?;
            series.fps = e.fps;
            let (repaired, report) = match repair_series(&series) {
                Ok(r) => r,
                Err(Error::AllFramesInvalid(_)) => return Ok(Vec::new()),
                Err(err) => return Err(err),
            };
            if report.unusable {
                return Ok(Vec::new());
            }
            Ok(clip_features(&repaired, params)?
                .into_iter()
                .enumerate()
                .map(|(i, f)| ClipFeatureRow {
                    video_id: e.video_id.clone(),
                    clip_index: i,
                    label: e.label.as_f64(),
                    features: f,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_video.into_iter().flatten().collect())
}

pub fn export_clip_features(
    manifest: &Manifest,
    params: &FeatureParams,
    out: &Path,
) -> Result<usize> {
    let rows = clip_feature_rows(manifest, params, None)?;
    write_clip_feature_table(out, &rows)?;
    Ok(rows.len())
}

/// Distinct label values mapped to class indices in ascending order.
pub fn label_classes(labels: &[f64]) -> Vec<usize> {
    let mut distinct: Vec<f64> = labels.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    labels
        .iter()
        .map(|l| distinct.partition_point(|d| d < l))
        .collect()
}

/// Forest importance ranking of clip features; writes `importance.csv`,
/// `importance.json` and `importance.svg` into `out`.
pub fn rank_features(
    rows: &[ClipFeatureRow],
    forest: &ForestConfig,
    out: &Path,
) -> Result<ImportanceRanking> {
    let table: Vec<Vec<f64>> = rows.iter().map(|r| r.features.0.to_vec()).collect();
    let labels = label_classes(&rows.iter().map(|r| r.label).collect::<Vec<_>>());
    let ranking = rf_importance(&table, &labels, forest)?;
    fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    write_file(&out.join("importance.csv"), &ranking.to_csv())?;
    write_file(&out.join("importance.svg"), &ranking.to_svg())?;
    let json =
        serde_json::to_string_pretty(&ranking).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    write_file(&out.join("importance.json"), &(json + "\n"))?;
    Ok(ranking)
}
