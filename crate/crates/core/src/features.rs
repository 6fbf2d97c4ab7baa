//! Frame-mode inputs and clip-level feature vectors.

use std::path::Path;
use std::sync::LazyLock;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FrameRecord, FrameSeries, AFFECT_DIM, BEHAVIORAL_DIM, LATENT_DIM};

/// Width of one frame-mode input row: latent, then valence/arousal, then
/// the twelve behavioral values.
pub const FRAME_INPUT_DIM: usize = LATENT_DIM + AFFECT_DIM + BEHAVIORAL_DIM;
pub const CLIP_FEATURE_DIM: usize = 49;

pub const FRAME_LAYOUT: &str = "frame-270-v1";
pub const CLIP_LAYOUT: &str = "clip-49-v1";

/// Behavioral channels that contribute velocity/acceleration statistics,
/// in clip-vector order.
const MOTION_CHANNELS: [&str; 11] = [
    "gaze_x",
    "gaze_y",
    "head_x",
    "head_y",
    "head_z",
    "head_pitch",
    "head_yaw",
    "head_roll",
    "wrist_x",
    "wrist_y",
    "wrist_z",
];

/// Column names of the 49 clip features, `f00_valence_mean` to `f48_wrist_z_acc_std`.
pub static CLIP_FEATURE_NAMES: LazyLock<Vec<String>> = LazyLock::new(|| {
    let mut base: Vec<String> = [
        "valence_mean",
        "valence_std",
        "arousal_mean",
        "arousal_std",
        "blink_rate",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for ch in MOTION_CHANNELS {
        for stat in ["vel_mean", "vel_std", "acc_mean", "acc_std"] {
            base.push(format!("{ch}_{stat}"));
        }
    }
    base.iter()
        .enumerate()
        .map(|(i, n)| format!("f{i:02}_{n}"))
        .collect()
});

/// Indices of the clip features derived from gaze direction.
pub const GAZE_FEATURE_RANGE: std::ops::Range<usize> = 5..13;

/// Frame-mode input blocks of one frame. Fusion happens inside the model.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub latent: Vec<f64>,
    pub affect: [f64; AFFECT_DIM],
    pub behavioral: [f64; BEHAVIORAL_DIM],
}

impl From<&FrameRecord> for FrameInput {
    fn from(r: &FrameRecord) -> Self {
        FrameInput {
            latent: r.latent.clone(),
            affect: [r.valence, r.arousal],
            behavioral: r.behavioral(),
        }
    }
}

impl FrameInput {
    pub fn to_row(&self) -> Vec<f64> {
        let mut row = Vec::with_capacity(FRAME_INPUT_DIM);
        row.extend_from_slice(&self.latent);
        row.extend_from_slice(&self.affect);
        row.extend_from_slice(&self.behavioral);
        row
    }
}

/// Time-major `T x 270` frame-mode matrix.
pub fn frame_matrix(series: &FrameSeries) -> Array2<f64> {
    let mut m = Array2::zeros((series.len(), FRAME_INPUT_DIM));
    for (mut row, rec) in m.rows_mut().into_iter().zip(&series.frames) {
        for (dst, v) in row.iter_mut().zip(FrameInput::from(rec).to_row()) {
            *dst = v;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlinkParams {
    /// Minimum peak height on the 0-5 AU45 scale.
    pub threshold: f64,
    /// Peaks closer than this many frames keep only the larger one.
    pub min_separation: usize,
}

impl Default for BlinkParams {
    fn default() -> Self {
        BlinkParams {
            threshold: 0.5,
            min_separation: 6,
        }
    }
}

/// Clip segmentation and aggregation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub clip_seconds: f64,
    pub overlap: f64,
    pub blink: BlinkParams,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            clip_seconds: 10.0,
            overlap: 0.5,
            blink: BlinkParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub video_id: String,
    /// Position of the first record in the source series.
    pub start_frame: usize,
    /// Position of the last real (non-padding) record.
    pub end_frame: usize,
    pub records: Vec<FrameRecord>,
    pub padded: bool,
}

/// Returns `(clip length, step)` in frames.
pub fn clip_geometry(fps: f64, clip_seconds: f64, overlap: f64) -> Result<(usize, usize)> {
    if !(fps > 0.0 && clip_seconds > 0.0) || !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidConfig(format!(
            "clip segmentation needs fps > 0, clip seconds > 0, overlap in [0, 1); got {fps}, {clip_seconds}, {overlap}"
        )));
    }
    let len = (clip_seconds * fps).round() as usize;
    if len < 2 {
        return Err(Error::InvalidConfig(format!(
            "clip length {len} frames is below 2"
        )));
    }
    let step = ((len as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    Ok((len, step))
}

/// Cuts a series into fixed-length overlapping clips. Trailing fragments are
/// dropped; a series shorter than one clip yields a single clip padded by
/// repeating its last frame.
pub fn segment_clips(series: &FrameSeries, clip_seconds: f64, overlap: f64) -> Result<Vec<Clip>> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let (len, step) = clip_geometry(series.fps, clip_seconds, overlap)?;
    let n = series.len();
    if n < len {
        let mut records = series.frames.clone();
        let last = records[n - 1].clone();
        records.resize(len, last);
        return Ok(vec![Clip {
            video_id: series.video_id.clone(),
            start_frame: 0,
            end_frame: n - 1,
            records,
            padded: true,
        }]);
    }
    Ok((0..=(n - len) / step)
        .map(|i| {
            let start = i * step;
            Clip {
                video_id: series.video_id.clone(),
                start_frame: start,
                end_frame: start + len - 1,
                records: series.frames[start..start + len].to_vec(),
                padded: false,
            }
        })
        .collect())
}

/// Indices of strict local maxima (flat tops count once, at their first
/// index) reaching `threshold`. Endpoints never count.
fn local_peaks(series: &[f64], threshold: f64) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = series.len();
    let mut i = 1;
    while i + 1 < n {
        if series[i] > series[i - 1] {
            let mut j = i;
            while j + 1 < n && series[j + 1] == series[i] {
                j += 1;
            }
            if j + 1 < n && series[j + 1] < series[i] && series[i] >= threshold {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Blinks per frame: peaks of the AU45 trace at or above the threshold,
/// with peaks closer than `min_separation` frames reduced to the tallest.
pub fn blink_rate(au45: &[f64], params: BlinkParams) -> f64 {
    if au45.is_empty() {
        return 0.0;
    }
    let mut peaks = local_peaks(au45, params.threshold);
    // Tallest first, earlier index wins ties.
    peaks.sort_by(|&a, &b| au45[b].total_cmp(&au45[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::with_capacity(peaks.len());
    for p in peaks {
        if kept.iter().all(|&k| k.abs_diff(p) >= params.min_separation) {
            kept.push(p);
        }
    }
    kept.len() as f64 / au45.len() as f64
}

/// Population mean and standard deviation.
pub fn mean_std(values: impl IntoIterator<Item = f64> + Clone) -> (f64, f64) {
    let (n, sum) = values
        .clone()
        .into_iter()
        .fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let var = values.into_iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Velocity and acceleration statistics of a signal, as
/// `[vel_mean, vel_std, acc_mean, acc_std]` in units per second (squared).
pub fn diff_stats(signal: &[f64], fps: f64) -> Result<[f64; 4]> {
    if signal.len() < 3 {
        return Err(Error::SeriesTooShort {
            needed: 3,
            got: signal.len(),
        });
    }
    let vel: Vec<f64> = signal.windows(2).map(|w| (w[1] - w[0]) * fps).collect();
    let acc: Vec<f64> = vel.windows(2).map(|w| (w[1] - w[0]) * fps).collect();
    let (vm, vs) = mean_std(vel.iter().copied());
    let (am, as_) = mean_std(acc.iter().copied());
    Ok([vm, vs, am, as_])
}

/// The 49-element clip vector. See [`CLIP_FEATURE_NAMES`] for the layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipFeatures(pub [f64; CLIP_FEATURE_DIM]);

impl ClipFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn clip_feature_vector(
    records: &[FrameRecord],
    fps: f64,
    blink: BlinkParams,
) -> Result<ClipFeatures> {
    if records.len() < 3 {
        return Err(Error::SeriesTooShort {
            needed: 3,
            got: records.len(),
        });
    }
    let mut out = [0.0; CLIP_FEATURE_DIM];
    let (vm, vs) = mean_std(records.iter().map(|r| r.valence));
    let (am, as_) = mean_std(records.iter().map(|r| r.arousal));
    out[..4].copy_from_slice(&[vm, vs, am, as_]);
    let au45: Vec<f64> = records.iter().map(|r| r.au45).collect();
    out[4] = blink_rate(&au45, blink);
    let mut signal = vec![0.0; records.len()];
    for ch in 0..MOTION_CHANNELS.len() {
        // behavioral()[0] is au45, motion channels follow it.
        for (s, r) in signal.iter_mut().zip(records) {
            *s = r.behavioral()[ch + 1];
        }
        let stats = diff_stats(&signal, fps)?;
        out[5 + 4 * ch..9 + 4 * ch].copy_from_slice(&stats);
    }
    Ok(ClipFeatures(out))
}

/// Clip vectors of every clip of a series.
pub fn clip_features(series: &FrameSeries, params: &FeatureParams) -> Result<Vec<ClipFeatures>> {
    segment_clips(series, params.clip_seconds, params.overlap)?
        .iter()
        .map(|c| clip_feature_vector(&c.records, series.fps, params.blink))
        .collect()
}

/// Time-major `n_clips x 49` matrix.
pub fn clip_matrix(series: &FrameSeries, params: &FeatureParams) -> Result<Array2<f64>> {
    let feats = clip_features(series, params)?;
    let mut m = Array2::zeros((feats.len(), CLIP_FEATURE_DIM));
    for (mut row, f) in m.rows_mut().into_iter().zip(&feats) {
        row.assign(&ndarray::ArrayView1::from(f.as_slice()));
    }
    Ok(m)
}

/// One row of the clip-feature export table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatureRow {
    pub video_id: String,
    pub clip_index: usize,
    pub label: f64,
    pub features: ClipFeatures,
}

pub fn write_clip_feature_table(path: impl AsRef<Path>, rows: &[ClipFeatureRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec!["video_id".to_string(), "clip_index".to_string()];
    header.extend(CLIP_FEATURE_NAMES.iter().cloned());
    header.push("label".into());
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for r in rows {
        let mut rec = vec![r.video_id.clone(), r.clip_index.to_string()];
        rec.extend(r.features.0.iter().map(|v| v.to_string()));
        rec.push(r.label.to_string());
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_clip_feature_table(path: impl AsRef<Path>) -> Result<Vec<ClipFeatureRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let header = r.headers().map_err(|e| csv_io(path, e))?.clone();
    for name in CLIP_FEATURE_NAMES.iter().chain(
        ["video_id", "clip_index", "label"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .iter(),
    ) {
        if !header.iter().any(|h| h == name) {
            return Err(Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.clone(),
            });
        }
    }
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let feature_cols: Vec<usize> = CLIP_FEATURE_NAMES.iter().map(|n| col(n)).collect();
    let (id_col, idx_col, label_col) = (col("video_id"), col("clip_index"), col("label"));
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_io(path, e))?;
        let bad = |reason: String| Error::MalformedRow {
            path: path.to_path_buf(),
            row: i + 1,
            reason,
        };
        let num = |c: usize| -> Result<f64> {
            rec[c]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("non-numeric cell {:?}", &rec[c])))
        };
        let mut f = [0.0; CLIP_FEATURE_DIM];
        for (dst, &c) in f.iter_mut().zip(&feature_cols) {
            *dst = num(c)?;
        }
        rows.push(ClipFeatureRow {
            video_id: rec[id_col].to_string(),
            clip_index: rec[idx_col]
                .trim()
                .parse()
                .map_err(|_| bad("clip_index is not an integer".into()))?,
            label: num(label_col)?,
            features: ClipFeatures(f),
        });
    }
    Ok(rows)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(format!("accessing {}", path.display()), io),
        other => Error::MalformedRow {
            path: path.to_path_buf(),
            row: 0,
            reason: format!("{other:?}"),
        },
    }
}

/// Per-feature z-score statistics fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub layout: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features with zero variance in the fit data; their std is 1.
    pub constant: Vec<bool>,
}

const CONSTANT_TOL: f64 = 1e-12;

impl Normalizer {
    /// Fits mean and population std over the rows of `samples`.
    pub fn fit<'a>(layout: &str, samples: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut rows: Vec<&[f64]> = Vec::new();
        for row in samples {
            if sum.is_empty() {
                sum = vec![0.0; row.len()];
            } else if row.len() != sum.len() {
                return Err(Error::ShapeMismatch(format!(
                    "normalizer rows of width {} and {}",
                    sum.len(),
                    row.len()
                )));
            }
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            rows.push(row);
            n += 1;
        }
        if n < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n });
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut var = vec![0.0; mean.len()];
        for row in &rows {
            for ((v, x), m) in var.iter_mut().zip(row.iter()).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let mut constant = Vec::with_capacity(mean.len());
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                let c = s <= CONSTANT_TOL;
                constant.push(c);
                if c {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Normalizer {
            layout: layout.to_string(),
            mean,
            std,
            constant,
        })
    }

    /// Fits over every row of a set of time-major matrices.
    pub fn fit_matrices<'a>(
        layout: &str,
        mats: impl IntoIterator<Item = &'a Array2<f64>>,
    ) -> Result<Self> {
        let mats: Vec<&Array2<f64>> = mats.into_iter().collect();
        Self::fit(
            layout,
            mats.iter().flat_map(|m| {
                m.rows()
                    .into_iter()
                    .map(|r| r.to_slice().expect("standard layout"))
            }),
        )
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, layout: &str, width: usize) -> Result<()> {
        if layout != self.layout {
            return Err(Error::LayoutMismatch {
                expected: self.layout.clone(),
                found: layout.to_string(),
            });
        }
        if width != self.width() {
            return Err(Error::ShapeMismatch(format!(
                "normalizer width {} vs features {width}",
                self.width()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, layout: &str, features: &[f64]) -> Result<Vec<f64>> {
        self.check(layout, features.len())?;
        Ok(features
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub fn apply_matrix(&self, layout: &str, m: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(layout, m.ncols())?;
        let mut out = m.clone();
        for mut row in out.rows_mut() {
            for ((x, mu), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - mu) / s;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(i: usize, f: impl Fn(usize) -> f64) -> FrameRecord {
        let v = f(i);
        FrameRecord {
            frame_index: i as u64,
            valid: true,
            valence: v,
            arousal: 0.3,
            latent: vec![0.0; LATENT_DIM],
            au45: 0.0,
            gaze: [v; 2],
            head_loc: [v; 3],
            head_pose: [v; 3],
            wrist: [v; 3],
        }
    }

    fn series(n: usize, fps: f64) -> FrameSeries {
        FrameSeries {
            video_id: "s".into(),
            fps,
            frames: (0..n).map(|i| rec(i, |_| 0.1)).collect(),
            label: None,
        }
    }

    #[test]
    fn clip_count_closed_form() {
        let clips = segment_clips(&series(9000, 30.0), 10.0, 0.5).unwrap();
        assert_eq!(clips.len(), (9000 - 300) / 150 + 1);
        assert_eq!(clips.len(), 59);
        assert!(clips.iter().all(|c| c.records.len() == 300 && !c.padded));
        assert_eq!(clips[1].start_frame, 150);
    }

    #[test]
    fn exact_fit_and_padding() {
        let clips = segment_clips(&series(300, 30.0), 10.0, 0.5).unwrap();
        assert_eq!(clips.len(), 1);
        assert!(!clips[0].padded);

        let s = series(200, 30.0);
        let clips = segment_clips(&s, 10.0, 0.5).unwrap();
        assert_eq!(clips.len(), 1);
        let c = &clips[0];
        assert!(c.padded);
        assert_eq!(c.records.len(), 300);
        assert_eq!(c.end_frame, 199);
        assert!(c.records[200..].iter().all(|r| *r == s.frames[199]));
    }

    #[test]
    fn segmentation_rejects_degenerate_input() {
        let empty = FrameSeries {
            frames: vec![],
            ..series(0, 30.0)
        };
        assert!(matches!(
            segment_clips(&empty, 10.0, 0.5),
            Err(Error::EmptySeries)
        ));
        assert!(segment_clips(&series(10, 30.0), 0.01, 0.5).is_err());
        assert!(segment_clips(&series(10, 30.0), 10.0, 1.0).is_err());
    }

    fn pulse(series: &mut [f64], center: usize, height: f64) {
        for d in 0..3usize {
            let v = height * (3 - d) as f64 / 3.0;
            series[center + d] = series[center + d].max(v);
            series[center - d] = series[center - d].max(v);
        }
    }

    #[test]
    fn blink_counts_pulses_above_threshold() {
        assert_eq!(blink_rate(&[0.0; 300], BlinkParams::default()), 0.0);

        let mut au = vec![0.0; 300];
        pulse(&mut au, 50, 1.2);
        pulse(&mut au, 150, 2.0);
        pulse(&mut au, 250, 0.3);
        assert_eq!(blink_rate(&au, BlinkParams::default()), 2.0 / 300.0);
    }

    #[test]
    fn blink_suppresses_close_peaks() {
        let mut au = vec![0.0; 40];
        au[10] = 1.0;
        au[13] = 1.5;
        assert_eq!(
            blink_rate(
                &au,
                BlinkParams {
                    threshold: 0.5,
                    min_separation: 6
                }
            ),
            1.0 / 40.0
        );
        assert_eq!(
            blink_rate(
                &au,
                BlinkParams {
                    threshold: 0.5,
                    min_separation: 3
                }
            ),
            2.0 / 40.0
        );
    }

    #[test]
    fn blink_flat_top_counts_once() {
        let au = [0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(blink_rate(&au, BlinkParams::default()), 0.1);
    }

    #[test]
    fn diff_stats_fixtures() {
        assert_eq!(diff_stats(&[3.0; 10], 30.0).unwrap(), [0.0; 4]);
        let ramp: Vec<f64> = (0..20).map(|t| 2.0 * t as f64).collect();
        assert_eq!(diff_stats(&ramp, 30.0).unwrap(), [60.0, 0.0, 0.0, 0.0]);
        let quad: Vec<f64> = (0..5).map(|t| (t * t) as f64).collect();
        assert_eq!(
            diff_stats(&quad, 1.0).unwrap(),
            [4.0, 5f64.sqrt(), 2.0, 0.0]
        );
        assert!(matches!(
            diff_stats(&[1.0, 2.0], 1.0),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn clip_layout() {
        assert_eq!(CLIP_FEATURE_NAMES.len(), 49);
        assert_eq!(CLIP_FEATURE_NAMES[0], "f00_valence_mean");
        assert_eq!(CLIP_FEATURE_NAMES[4], "f04_blink_rate");
        assert_eq!(CLIP_FEATURE_NAMES[5], "f05_gaze_x_vel_mean");
        assert_eq!(CLIP_FEATURE_NAMES[12], "f12_gaze_y_acc_std");
        assert_eq!(CLIP_FEATURE_NAMES[13], "f13_head_x_vel_mean");
        assert_eq!(CLIP_FEATURE_NAMES[25], "f25_head_pitch_vel_mean");
        assert_eq!(CLIP_FEATURE_NAMES[37], "f37_wrist_x_vel_mean");
        assert_eq!(CLIP_FEATURE_NAMES[48], "f48_wrist_z_acc_std");

        // Each motion channel gets a distinct ramp slope; the velocity mean
        // identifies which slot it landed in.
        let records: Vec<FrameRecord> = (0..10)
            .map(|t| {
                let t = t as f64;
                let mut r = rec(0, |_| 0.0);
                r.gaze = [1.0 * t, 2.0 * t];
                r.head_loc = [3.0 * t, 4.0 * t, 5.0 * t];
                r.head_pose = [6.0 * t, 7.0 * t, 8.0 * t];
                r.wrist = [9.0 * t, 10.0 * t, 11.0 * t];
                r
            })
            .collect();
        let f = clip_feature_vector(&records, 1.0, BlinkParams::default()).unwrap();
        for ch in 0..11 {
            assert_eq!(f.0[5 + 4 * ch], (ch + 1) as f64);
        }
        assert_eq!(f.0[48], 0.0);
    }

    #[test]
    fn constant_clip_features() {
        let records: Vec<FrameRecord> = (0..30).map(|i| rec(i, |_| 0.25)).collect();
        let f = clip_feature_vector(&records, 30.0, BlinkParams::default()).unwrap();
        assert_eq!(f.0[0], 0.25);
        assert_eq!(f.0[2], 0.3);
        assert_eq!(f.0[1], 0.0);
        assert_eq!(f.0[3], 0.0);
        assert_eq!(f.0[4], 0.0);
        assert!(f.0[5..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn alternating_valence() {
        let records: Vec<FrameRecord> = (0..30)
            .map(|i| rec(i, |i| if i % 2 == 0 { -0.2 } else { 0.2 }))
            .collect();
        let f = clip_feature_vector(&records, 30.0, BlinkParams::default()).unwrap();
        assert!(f.0[0].abs() < 1e-15);
        assert!((f.0[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn normalizer_fixtures() {
        let a = [0.0, 5.0];
        let b = [2.0, 5.0];
        let n = Normalizer::fit(CLIP_LAYOUT, [&a[..], &b[..]]).unwrap();
        assert_eq!(n.mean, vec![1.0, 5.0]);
        assert_eq!(n.std, vec![1.0, 1.0]);
        assert_eq!(n.constant, vec![false, true]);
        assert_eq!(n.apply(CLIP_LAYOUT, &[0.0, 5.0]).unwrap(), vec![-1.0, 0.0]);
        assert!(matches!(
            n.apply(FRAME_LAYOUT, &[0.0, 5.0]),
            Err(Error::LayoutMismatch { .. })
        ));
        assert!(matches!(
            Normalizer::fit(CLIP_LAYOUT, [&a[..]]),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
