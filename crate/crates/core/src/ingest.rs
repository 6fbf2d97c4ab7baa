//! Per-frame feature files, dataset manifests and tracking-failure repair.
//!
//! A feature file is a comma-separated table with a header row and exactly
//! [`FRAME_COLUMNS`] in order. One row per video frame.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LATENT_DIM: usize = 256;
pub const BEHAVIORAL_DIM: usize = 12;
pub const AFFECT_DIM: usize = 2;
/// frame, success, valence, arousal, latent block, behavioral block.
pub const FRAME_FILE_WIDTH: usize = 4 + LATENT_DIM + BEHAVIORAL_DIM;

/// Behavioral column names in model order (after `au45`).
pub const BEHAVIORAL_COLUMNS: [&str; BEHAVIORAL_DIM] = [
    "au45",
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

/// All 272 column names of a per-frame feature file, in file order.
pub static FRAME_COLUMNS: LazyLock<Vec<String>> = LazyLock::new(|| {
    let mut cols = vec![
        "frame".to_string(),
        "success".to_string(),
        "valence".to_string(),
        "arousal".to_string(),
    ];
    cols.extend((0..LATENT_DIM).map(|i| format!("latent_{i:03}")));
    cols.extend(BEHAVIORAL_COLUMNS.iter().map(|s| s.to_string()));
    cols
});

/// One video frame's extracted signals.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    /// Face tracking succeeded on this frame.
    pub valid: bool,
    pub valence: f64,
    pub arousal: f64,
    pub latent: Vec<f64>,
    /// Eye-closure intensity, tracker scale 0-5.
    pub au45: f64,
    pub gaze: [f64; 2],
    /// Head location in millimeters.
    pub head_loc: [f64; 3],
    /// Pitch, yaw, roll in radians.
    pub head_pose: [f64; 3],
    pub wrist: [f64; 3],
}

impl FrameRecord {
    /// The twelve behavioral values in model order.
    pub fn behavioral(&self) -> [f64; BEHAVIORAL_DIM] {
        [
            self.au45,
            self.gaze[0],
            self.gaze[1],
            self.head_loc[0],
            self.head_loc[1],
            self.head_loc[2],
            self.head_pose[0],
            self.head_pose[1],
            self.head_pose[2],
            self.wrist[0],
            self.wrist[1],
            self.wrist[2],
        ]
    }

    /// Copies every signal from `other`, keeping this record's index and validity.
    fn copy_signals_from(&mut self, other: &FrameRecord) {
        self.valence = other.valence;
        self.arousal = other.arousal;
        self.latent.clone_from(&other.latent);
        self.au45 = other.au45;
        self.gaze = other.gaze;
        self.head_loc = other.head_loc;
        self.head_pose = other.head_pose;
        self.wrist = other.wrist;
    }

    fn numeric_values(&self) -> impl Iterator<Item = f64> + '_ {
        [self.valence, self.arousal]
            .into_iter()
            .chain(self.latent.iter().copied())
            .chain(self.behavioral())
    }
}

/// Engagement annotation of one video.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Label {
    Ordinal { class: usize, num_classes: usize },
    Continuous { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Ordinal,
    Continuous,
}

impl Label {
    pub fn kind(&self) -> LabelKind {
        match self {
            Label::Ordinal { .. } => LabelKind::Ordinal,
            Label::Continuous { .. } => LabelKind::Continuous,
        }
    }

    pub fn class(&self) -> Option<usize> {
        match *self {
            Label::Ordinal { class, .. } => Some(class),
            Label::Continuous { .. } => None,
        }
    }

    /// Class index for ordinal labels, the real value otherwise.
    pub fn as_f64(&self) -> f64 {
        match *self {
            Label::Ordinal { class, .. } => class as f64,
            Label::Continuous { value } => value,
        }
    }
}

/// Frames of one video, ordered by frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeries {
    pub video_id: String,
    pub fps: f64,
    pub frames: Vec<FrameRecord>,
    pub label: Option<Label>,
}

impl FrameSeries {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn parse_cell(path: &Path, row: usize, column: &str, cell: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::MalformedRow {
        path: path.to_path_buf(),
        row,
        reason: format!("column `{column}` is not numeric: {cell:?}"),
    })
}

fn check_header(path: &Path, header: &csv::StringRecord) -> Result<()> {
    let present: HashSet<&str> = header.iter().map(str::trim).collect();
    if let Some(missing) = FRAME_COLUMNS.iter().find(|c| !present.contains(c.as_str())) {
        return Err(Error::MissingColumn {
            path: path.to_path_buf(),
            column: missing.clone(),
        });
    }
    if header.len() != FRAME_COLUMNS.len()
        || header
            .iter()
            .zip(FRAME_COLUMNS.iter())
            .any(|(h, c)| h.trim() != c)
    {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            row: 0,
            reason: "header columns are out of order or duplicated".into(),
        });
    }
    Ok(())
}

/// Parses one per-frame feature file. The series id is the file stem, the
/// frame rate defaults to 30 and no label is attached; manifest loading
/// fills those in.
pub fn parse_frame_file(path: impl AsRef<Path>) -> Result<FrameSeries> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    check_header(path, &header)?;

    let mut frames: Vec<FrameRecord> = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut row = 0usize;
    while reader
        .read_record(&mut record)
        .map_err(|e| csv_error(path, e))?
    {
        row += 1;
        if record.len() != FRAME_COLUMNS.len() {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                row,
                reason: format!(
                    "expected {} cells, found {}",
                    FRAME_COLUMNS.len(),
                    record.len()
                ),
            });
        }
        let mut values = [0.0f64; FRAME_FILE_WIDTH];
        for (i, cell) in record.iter().enumerate() {
            values[i] = parse_cell(path, row, &FRAME_COLUMNS[i], cell)?;
        }
        let frame = values[0];
        if frame < 0.0 || frame.fract() != 0.0 {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                row,
                reason: format!("frame index {frame} is not a non-negative integer"),
            });
        }
        let b = &values[4 + LATENT_DIM..];
        let rec = FrameRecord {
            frame_index: frame as u64,
            valid: values[1] != 0.0,
            valence: values[2],
            arousal: values[3],
            latent: values[4..4 + LATENT_DIM].to_vec(),
            au45: b[0],
            gaze: [b[1], b[2]],
            head_loc: [b[3], b[4], b[5]],
            head_pose: [b[6], b[7], b[8]],
            wrist: [b[9], b[10], b[11]],
        };
        if let Some(prev) = frames.last() {
            if rec.frame_index <= prev.frame_index {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    row,
                    reason: "frame indices must be strictly increasing".into(),
                });
            }
        }
        if rec.valid {
            if rec.numeric_values().any(|v| !v.is_finite()) {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    row,
                    reason: "non-finite value in a tracked frame".into(),
                });
            }
            if !(-1.0..=1.0).contains(&rec.valence) || !(-1.0..=1.0).contains(&rec.arousal) {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    row,
                    reason: "valence/arousal outside [-1, 1]".into(),
                });
            }
        }
        frames.push(rec);
    }
    if frames.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(FrameSeries {
        video_id,
        fps: 30.0,
        frames,
        label: None,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(format!("reading {}", path.display()), io),
        other => Error::MalformedRow {
            path: path.to_path_buf(),
            row: 0,
            reason: format!("{other:?}"),
        },
    }
}

/// Writes a series in the per-frame file format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_frame_file(series: &FrameSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(series.len() * 2048);
    out.push_str(&FRAME_COLUMNS.join(","));
    out.push('\n');
    for f in &series.frames {
        use std::fmt::Write;
        let _ = write!(
            out,
            "{},{},{},{}",
            f.frame_index,
            u8::from(f.valid),
            f.valence,
            f.arousal
        );
        for v in f.latent.iter().copied().chain(f.behavioral()) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (train, validation, test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub video_id: String,
    /// Resolved path of the per-frame feature file.
    pub feature_file_path: PathBuf,
    pub label: Label,
    pub split: Split,
    pub fps: f64,
}

impl ManifestEntry {
    /// Parses the entry's feature file and attaches id, frame rate and label.
    pub fn load_series(&self) -> Result<FrameSeries> {
        let mut series = parse_frame_file(&self.feature_file_path)?;
        series.video_id.clone_from(&self.video_id);
        series.fps = self.fps;
        series.label = Some(self.label);
        Ok(series)
    }
}

/// Dataset manifest: every video with its feature file, label and split.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub num_classes: Option<usize>,
    /// Entries grouped by split (train, validation, test), file order within a split.
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn label_kind(&self) -> Option<LabelKind> {
        self.entries.first().map(|e| e.label.kind())
    }
}

pub const MANIFEST_VERSION: u32 = 1;

/// On-disk manifest document (TOML).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    pub entries: Vec<ManifestFileEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFileEntry {
    pub video_id: String,
    pub feature_file_path: PathBuf,
    pub split: Split,
    pub fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_value: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_value: Option<f64>,
}

/// Loads a manifest, resolving relative feature paths against the
/// manifest's own directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_manifest_with_base(path, &base)
}

/// Loads a manifest, resolving relative feature paths against `base`.
pub fn load_manifest_with_base(path: impl AsRef<Path>, base: &Path) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
    let doc: ManifestFile =
        toml::from_str(&text).map_err(|e| Error::InvalidManifest(e.to_string()))?;
    resolve_manifest(doc, base)
}

pub fn resolve_manifest(doc: ManifestFile, base: &Path) -> Result<Manifest> {
    if doc.version != MANIFEST_VERSION {
        return Err(Error::InvalidManifest(format!(
            "unsupported manifest version {}",
            doc.version
        )));
    }
    if doc.entries.is_empty() {
        return Err(Error::InvalidManifest("no entries".into()));
    }
    let mut seen = HashSet::new();
    let mut kind = None;
    let mut entries = Vec::with_capacity(doc.entries.len());
    for e in doc.entries {
        if !seen.insert(e.video_id.clone()) {
            return Err(Error::DuplicateVideoId(e.video_id));
        }
        let label = match (e.class_value, e.real_value) {
            (Some(class), None) => {
                let num_classes = doc.num_classes.ok_or_else(|| {
                    Error::InvalidManifest("ordinal labels need `num_classes`".into())
                })?;
                if num_classes < 2 || class >= num_classes {
                    return Err(Error::OutOfRange {
                        value: class,
                        classes: num_classes,
                    });
                }
                Label::Ordinal { class, num_classes }
            }
            (None, Some(value)) => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::InvalidManifest(format!(
                        "`{}`: real_value {value} outside [0, 1]",
                        e.video_id
                    )));
                }
                Label::Continuous { value }
            }
            (Some(_), Some(_)) => return Err(Error::MixedLabelKinds),
            (None, None) => {
                return Err(Error::InvalidManifest(format!(
                    "`{}` has no label",
                    e.video_id
                )))
            }
        };
        match kind {
            None => kind = Some(label.kind()),
            Some(k) if k != label.kind() => return Err(Error::MixedLabelKinds),
            _ => {}
        }
        if !(e.fps > 0.0 && e.fps.is_finite()) {
            return Err(Error::InvalidManifest(format!(
                "`{}`: fps must be positive",
                e.video_id
            )));
        }
        let resolved = if e.feature_file_path.is_absolute() {
            e.feature_file_path.clone()
        } else {
            base.join(&e.feature_file_path)
        };
        if !resolved.is_file() {
            return Err(Error::UnresolvablePath {
                video_id: e.video_id,
                path: resolved,
            });
        }
        entries.push(ManifestEntry {
            video_id: e.video_id,
            feature_file_path: resolved,
            label,
            split: e.split,
            fps: e.fps,
        });
    }
    entries.sort_by_key(|e| e.split);
    Ok(Manifest {
        num_classes: doc.num_classes,
        entries,
    })
}

/// Outcome of [`repair_series`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub valid_fraction: f64,
    pub repaired_frames: usize,
    /// Fewer than half of the frames were tracked.
    pub unusable: bool,
}

pub const MIN_VALID_FRACTION: f64 = 0.5;

/// Replaces the signals of untracked frames with the last tracked frame's
/// (the first tracked frame's for a leading run). Frame indices and validity
/// flags are kept.
pub fn repair_series(series: &FrameSeries) -> Result<(FrameSeries, ValidationReport)> {
    if series.frames.is_empty() {
        return Err(Error::EmptySeries);
    }
    let first_valid = series
        .frames
        .iter()
        .position(|f| f.valid)
        .ok_or_else(|| Error::AllFramesInvalid(series.video_id.clone()))?;
    let mut out = series.clone();
    let mut last_valid = first_valid;
    let mut repaired = 0;
    for i in 0..out.frames.len() {
        if out.frames[i].valid {
            last_valid = i;
            continue;
        }
        let source = if i < first_valid {
            first_valid
        } else {
            last_valid
        };
        let donor = out.frames[source].clone();
        out.frames[i].copy_signals_from(&donor);
        repaired += 1;
    }
    let n = series.frames.len();
    let valid_fraction = (n - repaired) as f64 / n as f64;
    Ok((
        out,
        ValidationReport {
            valid_fraction,
            repaired_frames: repaired,
            unusable: valid_fraction < MIN_VALID_FRACTION,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(i: u64, valid: bool, v: f64) -> FrameRecord {
        FrameRecord {
            frame_index: i,
            valid,
            valence: v,
            arousal: -v,
            latent: vec![v; LATENT_DIM],
            au45: 0.1,
            gaze: [v, 0.0],
            head_loc: [1.0, 2.0, 3.0],
            head_pose: [0.0; 3],
            wrist: [0.5; 3],
        }
    }

    fn series(valid: impl Fn(u64) -> bool, n: u64) -> FrameSeries {
        FrameSeries {
            video_id: "v".into(),
            fps: 30.0,
            frames: (0..n)
                .map(|i| record(i, valid(i), i as f64 / 1000.0))
                .collect(),
            label: None,
        }
    }

    #[test]
    fn schema_has_275_columns() {
        assert_eq!(FRAME_COLUMNS.len(), FRAME_FILE_WIDTH);
        assert_eq!(FRAME_FILE_WIDTH, 272);
        assert_eq!(FRAME_COLUMNS[4], "latent_000");
        assert_eq!(FRAME_COLUMNS[259], "latent_255");
        assert_eq!(FRAME_COLUMNS[271], "wrist_z");
    }

    #[test]
    fn parse_counts_rows_and_invalid_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.csv");
        write_frame_file(&series(|i| !(10..15).contains(&i), 300), &path).unwrap();
        let parsed = parse_frame_file(&path).unwrap();
        assert_eq!(parsed.len(), 300);
        assert_eq!(parsed.frames.iter().filter(|f| !f.valid).count(), 5);
        assert_eq!(parsed.video_id, "clip");
    }

    #[test]
    fn missing_latent_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let header: Vec<&str> = FRAME_COLUMNS
            .iter()
            .filter(|c| *c != "latent_255")
            .map(String::as_str)
            .collect();
        let row = vec!["0"; header.len()].join(",");
        fs::write(&path, format!("{}\n{row}\n", header.join(","))).unwrap();
        match parse_frame_file(&path) {
            Err(Error::MissingColumn { column, .. }) => assert_eq!(column, "latent_255"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_and_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut cells = vec!["0".to_string(); FRAME_FILE_WIDTH];
        cells[1] = "1".into();
        cells[7] = "abc".into();
        fs::write(
            &path,
            format!("{}\n{}\n", FRAME_COLUMNS.join(","), cells.join(",")),
        )
        .unwrap();
        assert!(matches!(
            parse_frame_file(&path),
            Err(Error::MalformedRow { row: 1, .. })
        ));

        fs::write(&path, format!("{}\n", FRAME_COLUMNS.join(","))).unwrap();
        assert!(matches!(parse_frame_file(&path), Err(Error::EmptyFile(_))));
        fs::write(&path, "").unwrap();
        assert!(matches!(parse_frame_file(&path), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn repair_identity_when_all_valid() {
        let s = series(|_| true, 50);
        let (out, report) = repair_series(&s).unwrap();
        assert_eq!(out, s);
        assert_eq!(report.valid_fraction, 1.0);
        assert!(!report.unusable);
    }

    #[test]
    fn repair_forward_fills_gap() {
        let s = series(|i| !(10..15).contains(&i), 300);
        let (out, report) = repair_series(&s).unwrap();
        assert_eq!(report.valid_fraction, 295.0 / 300.0);
        for i in 10..15 {
            assert_eq!(out.frames[i].valence, s.frames[9].valence);
            assert_eq!(out.frames[i].latent, s.frames[9].latent);
            assert_eq!(out.frames[i].frame_index, i as u64);
            assert!(!out.frames[i].valid);
        }
    }

    #[test]
    fn repair_backward_fills_leading_run() {
        let s = series(|i| i >= 3, 10);
        let (out, _) = repair_series(&s).unwrap();
        for i in 0..3 {
            assert_eq!(out.frames[i].valence, s.frames[3].valence);
        }
    }

    #[test]
    fn repair_flags_unusable_and_rejects_all_invalid() {
        let s = series(|i| i < 100, 300);
        let (_, report) = repair_series(&s).unwrap();
        assert!(report.unusable);
        assert!((report.valid_fraction - 1.0 / 3.0).abs() < 1e-12);

        let s = series(|_| false, 5);
        assert!(matches!(repair_series(&s), Err(Error::AllFramesInvalid(_))));
    }

    fn write_manifest(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("manifest.toml");
        fs::write(&p, body).unwrap();
        p
    }

    fn touch(dir: &Path, name: &str) {
        fs::write(dir.join(name), "").unwrap();
    }

    #[test]
    fn manifest_splits_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["a.csv", "b.csv", "c.csv"] {
            touch(dir.path(), n);
        }
        let entry = |id: &str, file: &str, split: &str, label: &str| {
            format!(
                "[[entries]]\nvideo_id = \"{id}\"\nfeature_file_path = \"{file}\"\nsplit = \"{split}\"\nfps = 30.0\n{label}\n"
            )
        };
        let body = format!(
            "version = 1\nnum_classes = 4\n{}{}{}",
            entry("c", "c.csv", "test", "class_value = 2"),
            entry("a", "a.csv", "train", "class_value = 0"),
            entry("b", "b.csv", "validation", "class_value = 3"),
        );
        let m = load_manifest(write_manifest(dir.path(), &body)).unwrap();
        for split in [Split::Train, Split::Validation, Split::Test] {
            assert_eq!(m.split(split).count(), 1);
        }
        assert_eq!(m.entries[0].video_id, "a");

        let dup = format!(
            "version = 1\nnum_classes = 4\n{}{}",
            entry("a", "a.csv", "train", "class_value = 0"),
            entry("a", "b.csv", "test", "class_value = 1"),
        );
        assert!(matches!(
            load_manifest(write_manifest(dir.path(), &dup)),
            Err(Error::DuplicateVideoId(_))
        ));

        let mixed = format!(
            "version = 1\nnum_classes = 4\n{}{}",
            entry("a", "a.csv", "train", "class_value = 0"),
            entry("b", "b.csv", "test", "real_value = 0.33"),
        );
        assert!(matches!(
            load_manifest(write_manifest(dir.path(), &mixed)),
            Err(Error::MixedLabelKinds)
        ));

        let missing = format!(
            "version = 1\n{}",
            entry("z", "nope.csv", "train", "real_value = 0.5")
        );
        assert!(matches!(
            load_manifest(write_manifest(dir.path(), &missing)),
            Err(Error::UnresolvablePath { .. })
        ));
    }
}
