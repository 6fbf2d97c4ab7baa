//! Turns manifests or in-memory series into normalized training samples.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{
    clip_matrix, frame_matrix, FeatureParams, Normalizer, CLIP_LAYOUT, FRAME_LAYOUT,
};
use crate::ingest::{repair_series, FrameSeries, Label, Manifest, Split};
use crate::models::Head;
use crate::ordinal::decompose_label;
use crate::training::{Sample, Target};

/// Which per-video sequence feeds the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SequenceKind {
    /// One 270-d row per frame.
    Frames,
    /// One 49-d row per clip.
    Clips(FeatureParams),
}

impl SequenceKind {
    pub fn layout(&self) -> &'static str {
        match self {
            SequenceKind::Frames => FRAME_LAYOUT,
            SequenceKind::Clips(_) => CLIP_LAYOUT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VideoData {
    pub video_id: String,
    pub split: Split,
    pub label: Label,
    /// Unnormalized time-major sequence.
    pub raw: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub layout: &'static str,
    pub videos: Vec<VideoData>,
    /// Videos dropped because too few frames were valid, with their valid fraction.
    pub excluded: Vec<(String, f64)>,
}

fn prepare(
    series: &FrameSeries,
    split: Split,
    kind: &SequenceKind,
) -> Result<std::result::Result<VideoData, (String, f64)>> {
    let label = series
        .label
        .ok_or_else(|| Error::InvalidManifest(format!("video {} has no label", series.video_id)))?;
    let (repaired, report) = match repair_series(series) {
        Ok(r) => r,
        Err(Error::AllFramesInvalid(_)) => return Ok(Err((series.video_id.clone(), 0.0))),
        Err(e) => return Err(e),
    };
    if report.unusable {
        return Ok(Err((series.video_id.clone(), report.valid_fraction)));
    }
    let raw = match kind {
        SequenceKind::Frames => frame_matrix(&repaired),
        SequenceKind::Clips(params) => clip_matrix(&repaired, params)?,
    };
    Ok(Ok(VideoData {
        video_id: series.video_id.clone(),
        split,
        label,
        raw,
    }))
}

fn collect(
    results: Vec<std::result::Result<VideoData, (String, f64)>>,
    kind: &SequenceKind,
) -> Dataset {
    let mut videos = Vec::new();
    let mut excluded = Vec::new();
    for r in results {
        match r {
            Ok(v) => videos.push(v),
            Err(x) => excluded.push(x),
        }
    }
    Dataset {
        layout: kind.layout(),
        videos,
        excluded,
    }
}

impl Dataset {
    /// Loads, repairs and featurizes every manifest entry in parallel.
    pub fn from_manifest(manifest: &Manifest, kind: SequenceKind) -> Result<Self> {
        let results = manifest
            .entries
            .par_iter()
            .map(|e| {
                let mut series = e.load_series()?;
                series.label = Some(e.label);
                series.fps = e.fps;
                prepare(&series, e.split, &kind)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(collect(results, &kind))
    }

    pub fn from_series(items: &[(FrameSeries, Split)], kind: SequenceKind) -> Result<Self> {
        let results = items
            .par_iter()
            .map(|(s, split)| prepare(s, *split, &kind))
            .collect::<Result<Vec<_>>>()?;
        Ok(collect(results, &kind))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &VideoData> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    /// Per-feature statistics over every row of every training sequence.
    pub fn fit_normalizer(&self) -> Result<Normalizer> {
        let train: Vec<&Array2<f64>> = self.split(Split::Train).map(|v| &v.raw).collect();
        Normalizer::fit_matrices(self.layout, train)
    }

    /// Normalized samples of one split with targets shaped for `head`.
    pub fn samples(
        &self,
        split: Split,
        normalizer: &Normalizer,
        head: &Head,
    ) -> Result<Vec<Sample>> {
        self.split(split)
            .map(|v| {
                let input = normalizer.apply_matrix(self.layout, &v.raw)?;
                let class = v.label.class();
                let need_class = || {
                    class.ok_or_else(|| {
                        Error::InvalidManifest(format!(
                            "video {} has a continuous label; a class is needed",
                            v.video_id
                        ))
                    })
                };
                let target = match head {
                    Head::Multiclass { .. } => Target::Class(need_class()?),
                    Head::Thresholds { count } => Target::Values(
                        decompose_label(need_class()?, count + 1)?
                            .into_iter()
                            .map(f64::from)
                            .collect(),
                    ),
                    Head::Binary => Target::Values(vec![if need_class()? > 0 { 1.0 } else { 0.0 }]),
                    Head::Regression => Target::Values(vec![v.label.as_f64()]),
                };
                Ok(Sample {
                    input,
                    target,
                    class,
                })
            })
            .collect()
    }
}
