//! Synthetic cohorts standing in for an ensemble of trained segmentation
//! models.
//!
//! Ground truth is a union of filled axis-aligned ellipses. Each simulated
//! model sees the ground truth through a 3x3 box blur, scaled by a gain, offset
//! by a bias and perturbed with Gaussian noise, then clamped to `[0, 1]`. A
//! low-gain model plateaus below the 0.5 threshold inside lesions and so
//! misses them wholesale, like a network stuck in a poor optimum.
//!
//! # Randomness
//!
//! All draws come from ChaCha8 streams seeded with [`derive_seed`], a
//! SplitMix64 mix of `(base_seed, subject_index, stream)`. Stream 0 draws the
//! ground truth; stream `k + 1` draws the noise of model `k`. Slices of one
//! volume consume a single stream in order. Outputs are reproducible for a
//! given seed within this crate version.

use std::fmt;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::codec::{format_manifest, write_atomically, write_sgm, SubjectRecord};
use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Raster, ScoreMap, Volume};

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// How faithfully a simulated model reproduces the ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelQuality {
    pub gain: f64,
    pub bias: f64,
    pub noise_sigma: f64,
}

impl ModelQuality {
    pub const GOOD: ModelQuality = ModelQuality {
        gain: 0.9,
        bias: 0.02,
        noise_sigma: 0.05,
    };
    pub const BAD: ModelQuality = ModelQuality {
        gain: 0.35,
        bias: 0.02,
        noise_sigma: 0.05,
    };

    pub fn new(gain: f64, bias: f64, noise_sigma: f64) -> Result<Self> {
        if !(gain > 0.0 && gain <= 1.0) {
            return Err(Error::invalid("model quality", format!("gain {gain} not in (0, 1]")));
        }
        if !(bias >= 0.0 && bias.is_finite()) || !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::invalid(
                "model quality",
                format!("bias {bias} and sigma {noise_sigma} must be finite and non-negative"),
            ));
        }
        Ok(ModelQuality {
            gain,
            bias,
            noise_sigma,
        })
    }

    pub fn preset_name(&self) -> Option<&'static str> {
        if *self == Self::GOOD {
            Some("good")
        } else if *self == Self::BAD {
            Some("bad")
        } else {
            None
        }
    }
}

impl FromStr for ModelQuality {
    type Err = Error;

    /// Accepts `good`, `bad`, or a custom `gain:bias:sigma` triple.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "good" => Ok(Self::GOOD),
            "bad" => Ok(Self::BAD),
            other => {
                let parts: Vec<f64> = other
                    .split(':')
                    .map(|p| p.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        Error::invalid(
                            "model preset",
                            format!("{other:?} (expected good, bad or gain:bias:sigma)"),
                        )
                    })?;
                match parts[..] {
                    [g, b, n] => ModelQuality::new(g, b, n),
                    _ => Err(Error::invalid(
                        "model preset",
                        format!("{other:?} (expected good, bad or gain:bias:sigma)"),
                    )),
                }
            }
        }
    }
}

impl fmt::Display for ModelQuality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.preset_name() {
            Some(name) => f.write_str(name),
            None => write!(f, "{}:{}:{}", self.gain, self.bias, self.noise_sigma),
        }
    }
}

/// Lesion count, semi-axis length range (pixels) and square image size.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionSpec {
    pub count_range: RangeInclusive<usize>,
    pub radius_range: RangeInclusive<f64>,
    pub image_size: usize,
}

impl LesionSpec {
    pub fn new(
        count_range: RangeInclusive<usize>,
        radius_range: RangeInclusive<f64>,
        image_size: usize,
    ) -> Result<Self> {
        let spec = LesionSpec {
            count_range,
            radius_range,
            image_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Defaults for a square image: one to six lesions, semi-axes 3 to
    /// `min(12, size / 8)` pixels.
    pub fn for_size(image_size: usize) -> Result<Self> {
        let r_max = (image_size as f64 / 8.0).min(12.0);
        Self::new(1..=6, 3.0f64.min(r_max)..=r_max, image_size)
    }

    pub fn validate(&self) -> Result<()> {
        let (r_lo, r_hi) = (*self.radius_range.start(), *self.radius_range.end());
        if self.image_size == 0 {
            return Err(Error::invalid("lesion spec", "image size must be positive"));
        }
        if self.count_range.is_empty() {
            return Err(Error::invalid("lesion spec", "empty count range"));
        }
        if !(r_lo > 0.0 && r_lo <= r_hi && r_hi.is_finite()) {
            return Err(Error::invalid(
                "lesion spec",
                format!("radius range {r_lo}..={r_hi} must be positive and ordered"),
            ));
        }
        if 2.0 * r_hi.ceil() + 1.0 > self.image_size as f64 {
            return Err(Error::invalid(
                "lesion spec",
                format!("radius {r_hi} does not fit in a {0}x{0} image", self.image_size),
            ));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (subject, stream) pair. Stream 0 is the ground truth, stream
/// `k + 1` is model `k`.
pub fn derive_seed(base_seed: u64, subject: u64, stream: u64) -> u64 {
    mix64(mix64(mix64(base_seed) ^ subject) ^ stream)
}

fn draw_gt<G: Rng>(spec: &LesionSpec, rng: &mut G) -> BinaryMask {
    let n = spec.image_size;
    let count = rng.gen_range(spec.count_range.clone());
    let mut data = vec![0u8; n * n];
    let (r_lo, r_hi) = (*spec.radius_range.start(), *spec.radius_range.end());
    for _ in 0..count {
        let rx = if r_lo == r_hi { r_lo } else { rng.gen_range(r_lo..=r_hi) };
        let ry = if r_lo == r_hi { r_lo } else { rng.gen_range(r_lo..=r_hi) };
        let mx = rx.ceil() as usize;
        let my = ry.ceil() as usize;
        let cx = rng.gen_range(mx..=n - 1 - mx);
        let cy = rng.gen_range(my..=n - 1 - my);
        paint_ellipse(&mut data, n, cx, cy, rx, ry);
    }
    BinaryMask::from_labels_unchecked(n, n, data)
}

/// Sets every pixel with `((x - cx) / rx)^2 + ((y - cy) / ry)^2 <= 1`.
fn paint_ellipse(data: &mut [u8], n: usize, cx: usize, cy: usize, rx: f64, ry: f64) {
    let (mx, my) = (rx.ceil() as usize, ry.ceil() as usize);
    for y in cy.saturating_sub(my)..=(cy + my).min(n - 1) {
        for x in cx.saturating_sub(mx)..=(cx + mx).min(n - 1) {
            let dx = (x as f64 - cx as f64) / rx;
            let dy = (y as f64 - cy as f64) / ry;
            if dx * dx + dy * dy <= 1.0 {
                data[y * n + x] = 1;
            }
        }
    }
}

/// Draws a lesion mask deterministically from `seed`.
pub fn generate_gt(spec: &LesionSpec, seed: u64) -> Result<BinaryMask> {
    spec.validate()?;
    Ok(draw_gt(spec, &mut ChaCha8Rng::seed_from_u64(seed)))
}

/// 3x3 mean filter; edge pixels average only the neighbors that exist.
pub fn box_blur3(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let px = mask.pixels();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0u32;
            let mut count = 0u32;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    sum += u32::from(px[ny * w + nx]);
                    count += 1;
                }
            }
            out.push(f64::from(sum) / f64::from(count));
        }
    }
    out
}

fn draw_scores<G: Rng>(gt: &BinaryMask, quality: &ModelQuality, rng: &mut G) -> ScoreMap {
    let data = box_blur3(gt)
        .into_iter()
        .map(|g| {
            let noise: f64 = if quality.noise_sigma > 0.0 {
                rng.sample(StandardNormal)
            } else {
                0.0
            };
            (quality.gain * g + quality.bias + quality.noise_sigma * noise).clamp(0.0, 1.0) as f32
        })
        .collect();
    ScoreMap::new(gt.width(), gt.height(), data).expect("clamped scores lie in [0, 1]")
}

/// `clamp(gain * blur(gt) + bias + sigma * N(0, 1), 0, 1)` per pixel, with
/// noise drawn in row-major order from `seed`.
pub fn simulate_score_map(gt: &BinaryMask, quality: &ModelQuality, seed: u64) -> ScoreMap {
    draw_scores(gt, quality, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Cohort layout parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub subjects: usize,
    pub depth: usize,
    pub lesions: LesionSpec,
    pub qualities: Vec<ModelQuality>,
    pub base_seed: u64,
}

/// One simulated subject held in memory.
#[derive(Debug, Clone)]
pub struct SimulatedSubject {
    pub subject_id: String,
    pub gt: Volume<BinaryMask>,
    pub models: Vec<Volume<ScoreMap>>,
}

pub fn subject_id(index: usize) -> String {
    format!("sub{index:03}")
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.qualities.is_empty() {
            return Err(Error::Empty("no model qualities"));
        }
        if self.depth == 0 {
            return Err(Error::invalid("cohort", "depth must be at least 1"));
        }
        self.lesions.validate()
    }

    pub fn simulate_subject(&self, index: usize) -> Result<SimulatedSubject> {
        self.validate()?;
        let seed = |stream: u64| derive_seed(self.base_seed, index as u64, stream);
        let mut gt_rng = ChaCha8Rng::seed_from_u64(seed(0));
        let gt = Volume::new(
            (0..self.depth)
                .map(|_| draw_gt(&self.lesions, &mut gt_rng))
                .collect(),
        )?;
        let models = self
            .qualities
            .iter()
            .enumerate()
            .map(|(k, q)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed(k as u64 + 1));
                Volume::new(gt.slices().iter().map(|s| draw_scores(s, q, &mut rng)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SimulatedSubject {
            subject_id: subject_id(index),
            gt,
            models,
        })
    }

    /// Simulates every subject in memory, in parallel on the current pool.
    pub fn simulate(&self) -> Result<Vec<SimulatedSubject>> {
        self.validate()?;
        (0..self.subjects)
            .into_par_iter()
            .map(|i| self.simulate_subject(i))
            .collect()
    }
}

fn relative_record(id: &str, n_models: usize) -> SubjectRecord {
    SubjectRecord {
        subject_id: id.to_string(),
        gt_path: PathBuf::from(format!("{id}/gt.sgm")),
        model_paths: (0..n_models)
            .map(|k| PathBuf::from(format!("{id}/model_{k}.sgm")))
            .collect(),
        intensity_path: None,
    }
}

/// Writes `<out>/<subject>/{gt.sgm, model_<k>.sgm}` for every subject plus
/// `<out>/manifest.tsv` (paths relative to `out`). Returns the records with
/// paths joined onto `out`.
pub fn simulate_cohort(spec: &CohortSpec, out: &Path) -> Result<Vec<SubjectRecord>> {
    spec.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io(e).in_file(out))?;
    let records = (0..spec.subjects)
        .into_par_iter()
        .map(|i| {
            let subject = spec.simulate_subject(i)?;
            let rec = relative_record(&subject.subject_id, spec.qualities.len());
            let dir = out.join(&subject.subject_id);
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io(e).in_file(&dir))?;
            write_sgm(&subject.gt, out.join(&rec.gt_path))?;
            for (vol, path) in subject.models.iter().zip(&rec.model_paths) {
                write_sgm(vol, out.join(path))?;
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut text = format!(
        "# simulated cohort: seed {}, models {}\n",
        spec.base_seed,
        spec.qualities
            .iter()
            .map(|q| q.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    text.push_str(&format_manifest(&records));
    write_atomically(&out.join(MANIFEST_NAME), text.as_bytes())?;

    Ok(records
        .into_iter()
        .map(|r| SubjectRecord {
            gt_path: out.join(&r.gt_path),
            model_paths: r.model_paths.iter().map(|p| out.join(p)).collect(),
            ..r
        })
        .collect())
}
