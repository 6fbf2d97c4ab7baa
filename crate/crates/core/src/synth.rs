//! Seeded synthetic engagement data with a known generative model.
//!
//! Each engagement level shifts the valence/arousal means, scales the
//! step size of head and wrist random walks, and sets the blink rate.
//! Gaze direction follows a level-independent random walk, so gaze carries
//! no signal. Affect follows a stationary AR(1) process; the 256-d latent
//! block is a fixed random projection of (valence, arousal) plus noise.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    write_frame_file, FrameRecord, FrameSeries, Label, ManifestFile, ManifestFileEntry, Split,
    LATENT_DIM, MANIFEST_VERSION,
};

/// `base + slope * level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelMap {
    pub base: f64,
    pub slope: f64,
}

impl LevelMap {
    pub const fn new(base: f64, slope: f64) -> Self {
        LevelMap { base, slope }
    }

    pub fn at(&self, level: usize) -> f64 {
        self.base + self.slope * level as f64
    }
}

/// Continuous labels for the four levels.
pub const CONTINUOUS_LEVELS: [f64; 4] = [0.0, 0.33, 0.66, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    /// Emit `real_value` labels (level mapped through [`CONTINUOUS_LEVELS`]).
    pub continuous: bool,
    pub videos_per_class: usize,
    pub frames_per_video: usize,
    pub fps: f64,
    pub arousal_mean: LevelMap,
    pub valence_mean: LevelMap,
    /// Stationary standard deviation of the affect AR(1) processes.
    pub affect_sd: f64,
    pub ar_coefficient: f64,
    /// Per-frame step scale of head and wrist random walks.
    pub movement_sd: LevelMap,
    /// Per-frame gaze step standard deviation (radians), equal for all levels.
    pub gaze_step_sd: f64,
    /// Level-independent tracker jitter on head and wrist channels, in
    /// units of each channel's step scale.
    pub sensor_noise: f64,
    /// Blink events per second.
    pub blink_rate: LevelMap,
    pub blink_height: f64,
    pub latent_noise_sd: f64,
    /// Train, validation fractions; the test split takes the rest.
    pub split: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 4,
            continuous: false,
            videos_per_class: 50,
            frames_per_video: 300,
            fps: 30.0,
            arousal_mean: LevelMap::new(-0.6, 0.4),
            valence_mean: LevelMap::new(-0.3, 0.25),
            affect_sd: 0.15,
            ar_coefficient: 0.9,
            movement_sd: LevelMap::new(0.5, -0.12),
            gaze_step_sd: 0.01,
            sensor_noise: 2.0,
            blink_rate: LevelMap::new(0.5, -0.1),
            blink_height: 1.5,
            latent_noise_sd: 0.1,
            split: (0.6, 0.2),
            seed: 7,
        }
    }
}

/// Step scale of each movement channel relative to `movement_sd`:
/// head location (mm), head pose (rad), wrist (normalized).
const HEAD_LOC_SCALE: f64 = 2.0;
const HEAD_POSE_SCALE: f64 = 0.01;
const WRIST_SCALE: f64 = 0.005;
const MOVEMENT_CHANNELS: usize = 9;
/// Half-width in frames of a rendered blink pulse.
const BLINK_HALF_WIDTH: usize = 2;

impl SynthConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synthetic config: {m}")));
        if self.num_classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.continuous && self.num_classes != CONTINUOUS_LEVELS.len() {
            return bad("continuous labels are defined for 4 levels");
        }
        if self.videos_per_class == 0
            || self.frames_per_video < 3
            || self.fps.is_nan()
            || self.fps <= 0.0
        {
            return bad("videos, frames (>= 3) and fps must be positive");
        }
        if !(0.0..1.0).contains(&self.ar_coefficient)
            || self.affect_sd < 0.0
            || self.latent_noise_sd < 0.0
        {
            return bad("AR coefficient must be in [0, 1) and noise levels non-negative");
        }
        for level in 0..self.num_classes {
            if self.movement_sd.at(level) < 0.0 || self.blink_rate.at(level) < 0.0 {
                return bad("movement sd and blink rate must stay non-negative across levels");
            }
        }
        let (tr, va) = self.split;
        if tr <= 0.0 || va < 0.0 || tr + va > 1.0 {
            return bad("split fractions must be positive and sum to at most 1");
        }
        Ok(())
    }

    fn label(&self, level: usize) -> Label {
        if self.continuous {
            Label::Continuous {
                value: CONTINUOUS_LEVELS[level],
            }
        } else {
            Label::Ordinal {
                class: level,
                num_classes: self.num_classes,
            }
        }
    }

    /// Per-class split sizes (train, validation, test).
    fn split_sizes(&self) -> (usize, usize) {
        let n = self.videos_per_class as f64;
        let train = (n * self.split.0).round() as usize;
        let val = ((n * self.split.1).round() as usize)
            .min(self.videos_per_class - train.min(self.videos_per_class));
        (train.min(self.videos_per_class), val)
    }

    fn latent_projection(&self) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5EED_1A7E);
        let n = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid normal");
        (0..LATENT_DIM)
            .map(|_| [n.sample(&mut rng), n.sample(&mut rng)])
            .collect()
    }
}

/// One generated video with its split.
#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub series: FrameSeries,
    pub split: Split,
    pub level: usize,
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn ar1<R: Rng>(rng: &mut R, n: usize, mean: f64, sd: f64, phi: f64) -> Vec<f64> {
    let stationary = Normal::new(0.0, sd).expect("sd >= 0");
    let innovation = Normal::new(0.0, sd * (1.0 - phi * phi).sqrt()).expect("sd >= 0");
    let mut x = stationary.sample(rng);
    (0..n)
        .map(|t| {
            if t > 0 {
                x = phi * x + innovation.sample(rng);
            }
            (mean + x).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Random walk observed through additive jitter of sd `noise_sd`.
fn random_walk<R: Rng>(rng: &mut R, n: usize, start: f64, step_sd: f64, noise_sd: f64) -> Vec<f64> {
    let step = Normal::new(0.0, step_sd).expect("sd >= 0");
    let jitter = Normal::new(0.0, noise_sd).expect("sd >= 0");
    let mut x = start;
    (0..n)
        .map(|t| {
            if t > 0 {
                x += step.sample(rng);
            }
            x + jitter.sample(rng)
        })
        .collect()
}

fn blink_trace<R: Rng>(rng: &mut R, n: usize, fps: f64, rate: f64, height: f64) -> Vec<f64> {
    let baseline = Normal::<f64>::new(0.0, 0.03).expect("valid normal");
    let mut au: Vec<f64> = (0..n).map(|_| baseline.sample(rng).abs()).collect();
    if rate <= 0.0 {
        return au;
    }
    let per_frame = rate / fps;
    let mut t = 0.0;
    loop {
        t += -(1.0 - rng.random::<f64>()).ln() / per_frame;
        let center = t.floor() as usize;
        if center >= n {
            break;
        }
        for d in 0..=BLINK_HALF_WIDTH {
            let v = height * (BLINK_HALF_WIDTH + 1 - d) as f64 / (BLINK_HALF_WIDTH + 1) as f64;
            for idx in [center.checked_sub(d), Some(center + d)]
                .into_iter()
                .flatten()
            {
                if idx < n {
                    au[idx] = au[idx].max(v);
                }
            }
        }
    }
    au
}

fn generate_video(
    cfg: &SynthConfig,
    projection: &[[f64; 2]],
    level: usize,
    index: usize,
    split: Split,
) -> SynthVideo {
    let video_seed = cfg
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(((level as u64) << 32) | index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(video_seed);
    let n = cfg.frames_per_video;
    let phi = cfg.ar_coefficient;
    let valence = ar1(&mut rng, n, cfg.valence_mean.at(level), cfg.affect_sd, phi);
    let arousal = ar1(&mut rng, n, cfg.arousal_mean.at(level), cfg.affect_sd, phi);
    let au45 = blink_trace(
        &mut rng,
        n,
        cfg.fps,
        cfg.blink_rate.at(level),
        cfg.blink_height,
    );
    let m = cfg.movement_sd.at(level);
    let tau = cfg.sensor_noise;
    let gaze: Vec<Vec<f64>> = (0..2)
        .map(|_| random_walk(&mut rng, n, 0.0, cfg.gaze_step_sd, 0.0))
        .collect();
    let head_loc: Vec<Vec<f64>> = [0.0, 0.0, 600.0]
        .iter()
        .map(|&start| random_walk(&mut rng, n, start, m * HEAD_LOC_SCALE, tau * HEAD_LOC_SCALE))
        .collect();
    let head_pose: Vec<Vec<f64>> = (0..3)
        .map(|_| random_walk(&mut rng, n, 0.0, m * HEAD_POSE_SCALE, tau * HEAD_POSE_SCALE))
        .collect();
    let wrist: Vec<Vec<f64>> = [0.5, 0.7, 0.0]
        .iter()
        .map(|&start| random_walk(&mut rng, n, start, m * WRIST_SCALE, tau * WRIST_SCALE))
        .collect();
    let noise = Normal::new(0.0, cfg.latent_noise_sd).expect("sd >= 0");

    let frames = (0..n)
        .map(|t| FrameRecord {
            frame_index: t as u64,
            valid: true,
            valence: round4(valence[t]),
            arousal: round4(arousal[t]),
            latent: projection
                .iter()
                .map(|p| round4(p[0] * valence[t] + p[1] * arousal[t] + noise.sample(&mut rng)))
                .collect(),
            au45: round4(au45[t]),
            gaze: [round4(gaze[0][t]), round4(gaze[1][t])],
            head_loc: [
                round4(head_loc[0][t]),
                round4(head_loc[1][t]),
                round4(head_loc[2][t]),
            ],
            head_pose: [
                round4(head_pose[0][t]),
                round4(head_pose[1][t]),
                round4(head_pose[2][t]),
            ],
            wrist: [
                round4(wrist[0][t]),
                round4(wrist[1][t]),
                round4(wrist[2][t]),
            ],
        })
        .collect();
    SynthVideo {
        series: FrameSeries {
            video_id: format!("syn_l{level}_{index:04}"),
            fps: cfg.fps,
            frames,
            label: Some(cfg.label(level)),
        },
        split,
        level,
    }
}

/// Generates every video in memory, ordered by level then index. Each
/// class is split into train/validation/test by the configured fractions.
pub fn generate_videos(cfg: &SynthConfig) -> Result<Vec<SynthVideo>> {
    cfg.validate()?;
    let projection = cfg.latent_projection();
    let (n_train, n_val) = cfg.split_sizes();
    let jobs: Vec<(usize, usize)> = (0..cfg.num_classes)
        .flat_map(|l| (0..cfg.videos_per_class).map(move |i| (l, i)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(level, i)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            generate_video(cfg, &projection, level, i, split)
        })
        .collect())
}

/// Writes per-frame files under `out/frames/` and `out/manifest.toml`.
/// Returns the manifest path.
pub fn generate(cfg: &SynthConfig, out: impl AsRef<Path>) -> Result<PathBuf> {
    let out = out.as_ref();
    let frames_dir = out.join("frames");
    fs::create_dir_all(&frames_dir)
        .map_err(|e| Error::io(format!("creating {}", frames_dir.display()), e))?;
    let videos = generate_videos(cfg)?;
    videos.par_iter().try_for_each(|v| {
        write_frame_file(
            &v.series,
            frames_dir.join(format!("{}.csv", v.series.video_id)),
        )
    })?;
    let entries = videos
        .iter()
        .map(|v| {
            let label = v.series.label.expect("generated label");
            ManifestFileEntry {
                video_id: v.series.video_id.clone(),
                feature_file_path: PathBuf::from("frames")
                    .join(format!("{}.csv", v.series.video_id)),
                split: v.split,
                fps: cfg.fps,
                class_value: label.class(),
                real_value: match label {
                    Label::Continuous { value } => Some(value),
                    Label::Ordinal { .. } => None,
                },
            }
        })
        .collect();
    let doc = ManifestFile {
        version: MANIFEST_VERSION,
        num_classes: (!cfg.continuous).then_some(cfg.num_classes),
        entries,
    };
    let path = out.join("manifest.toml");
    let text = toml::to_string(&doc).map_err(|e| Error::InvalidManifest(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let snapshot = out.join("synth_config.toml");
    let text = toml::to_string(cfg).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    fs::write(&snapshot, text)
        .map_err(|e| Error::io(format!("writing {}", snapshot.display()), e))?;
    Ok(path)
}

/// Variance of the mean of `n` consecutive samples of a stationary AR(1)
/// process with marginal standard deviation `sd`.
pub fn ar1_mean_variance(n: usize, sd: f64, phi: f64) -> f64 {
    let n_f = n as f64;
    // sum_{i,j} phi^|i-j| = n + 2 sum_{k=1}^{n-1} (n-k) phi^k
    let mut s = n_f;
    let mut pk = 1.0;
    for k in 1..n {
        pk *= phi;
        s += 2.0 * (n_f - k as f64) * pk;
    }
    sd * sd * s / (n_f * n_f)
}

/// Sufficient statistics of one video under the generative model.
#[derive(Debug, Clone, Copy)]
struct Stats {
    arousal_mean: f64,
    valence_mean: f64,
    /// Sum of squared movement steps divided by channel scales squared.
    movement_ss: f64,
    blinks: f64,
}

fn log_likelihood(
    cfg: &SynthConfig,
    level: usize,
    s: &Stats,
    mean_var: f64,
    df: f64,
    duration: f64,
) -> f64 {
    let var = mean_var.max(1e-300);
    let mut ll = -(s.arousal_mean - cfg.arousal_mean.at(level)).powi(2) / (2.0 * var)
        - (s.valence_mean - cfg.valence_mean.at(level)).powi(2) / (2.0 * var);
    let sigma = cfg.movement_sd.at(level).max(1e-150);
    ll += -df * sigma.ln() - s.movement_ss / (2.0 * sigma * sigma);
    let lambda = cfg.blink_rate.at(level) * duration;
    ll += if lambda > 0.0 {
        s.blinks * lambda.ln() - lambda
    } else if s.blinks > 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    ll
}

/// Monte Carlo accuracy of the Bayes classifier that sees the true
/// sufficient statistics (mean arousal, mean valence, movement step
/// energy, blink count) under a uniform class prior. Clipping of affect to
/// [-1, 1] is ignored.
pub fn oracle_accuracy(cfg: &SynthConfig, n_mc: usize, seed: u64) -> Result<f64> {
    cfg.validate()?;
    if n_mc < 10_000 {
        return Err(Error::TooFewSamples {
            needed: 10_000,
            got: n_mc,
        });
    }
    let n = cfg.frames_per_video;
    let mean_var = ar1_mean_variance(n, cfg.affect_sd, cfg.ar_coefficient);
    let mean_sd = mean_var.sqrt();
    let df = (MOVEMENT_CHANNELS * (n - 1)) as f64;
    let duration = n as f64 / cfg.fps;
    let chi = ChiSquared::new(df).expect("positive df");
    let correct: usize = (0..n_mc)
        .into_par_iter()
        .chunks(1024)
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(chunk[0] as u64));
            let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
            chunk
                .iter()
                .filter(|_| {
                    let level = rng.random_range(0..cfg.num_classes);
                    let lambda = cfg.blink_rate.at(level) * duration;
                    let stats = Stats {
                        arousal_mean: cfg.arousal_mean.at(level)
                            + mean_sd * std_normal.sample(&mut rng),
                        valence_mean: cfg.valence_mean.at(level)
                            + mean_sd * std_normal.sample(&mut rng),
                        movement_ss: cfg.movement_sd.at(level).powi(2) * chi.sample(&mut rng),
                        blinks: if lambda > 0.0 {
                            Poisson::new(lambda)
                                .expect("positive rate")
                                .sample(&mut rng)
                        } else {
                            0.0
                        },
                    };
                    let mut best = 0;
                    let mut best_ll = f64::NEG_INFINITY;
                    for j in 0..cfg.num_classes {
                        let ll = log_likelihood(cfg, j, &stats, mean_var, df, duration);
                        if ll > best_ll {
                            best = j;
                            best_ll = ll;
                        }
                    }
                    best == level
                })
                .count()
        })
        .sum();
    Ok(correct as f64 / n_mc as f64)
}
