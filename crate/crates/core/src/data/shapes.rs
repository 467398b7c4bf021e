//! The long-tailed "shapes" benchmark.
//!
//! Each class is a parametric shape family drawn on a dark background with
//! per-sample jitter in position, scale and intensity plus Gaussian pixel
//! noise. Class sizes follow a geometric (power-law) decay from the head
//! class to the tail class.

use serde::{Deserialize, Serialize};

use crate::data::sketch::extract_sketch;
use crate::error::{Error, Result};
use crate::numeric::RngStream;

pub const IMAGE_SIDE: usize = 16;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const MAX_CLASSES: usize = 16;
pub const MAX_HEAD_COUNT: usize = 5000;
/// Smallest class size that still yields a non-empty train/val/test split.
pub const MIN_CLASS_COUNT: usize = 4;

pub const CENTER_JITTER: f64 = 2.0;
pub const SCALE_JITTER: f64 = 0.2;
pub const BASE_INTENSITY: f64 = 0.7;
pub const INTENSITY_JITTER: f64 = 0.2;
pub const PIXEL_NOISE: f64 = 0.05;
/// Nominal shape half-extent in pixels before scale jitter.
pub const BASE_RADIUS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeFamily {
    Disk,
    Square,
    Triangle,
    Cross,
    Ring,
    TwoBars,
    DotGrid,
    Diamond,
    HollowSquare,
    XCross,
    HorizontalBar,
    LShape,
    TShape,
    Checker,
    HalfDisk,
    Target,
}

impl ShapeFamily {
    /// Families in class order; class `c` renders `ALL[c]`.
    pub const ALL: [ShapeFamily; MAX_CLASSES] = [
        ShapeFamily::Disk,
        ShapeFamily::Square,
        ShapeFamily::Triangle,
        ShapeFamily::Cross,
        ShapeFamily::Ring,
        ShapeFamily::TwoBars,
        ShapeFamily::DotGrid,
        ShapeFamily::Diamond,
        ShapeFamily::HollowSquare,
        ShapeFamily::XCross,
        ShapeFamily::HorizontalBar,
        ShapeFamily::LShape,
        ShapeFamily::TShape,
        ShapeFamily::Checker,
        ShapeFamily::HalfDisk,
        ShapeFamily::Target,
    ];

    pub fn for_class(class: usize) -> ShapeFamily {
        Self::ALL[class]
    }

    /// Whether offset `(dx, dy)` from the shape centre lies inside a shape of
    /// half-extent `r`. `dy` grows downwards.
    pub fn contains(self, dx: f64, dy: f64, r: f64) -> bool {
        let (ax, ay) = (dx.abs(), dy.abs());
        let rad = (dx * dx + dy * dy).sqrt();
        match self {
            ShapeFamily::Disk => rad <= r,
            ShapeFamily::Square => ax.max(ay) <= 0.8 * r,
            ShapeFamily::Triangle => {
                let h = 0.9 * r;
                dy >= -h && dy <= h && ax <= (dy + h) / (2.0 * h) * r
            }
            ShapeFamily::Cross => (ax <= 0.3 * r && ay <= r) || (ay <= 0.3 * r && ax <= r),
            ShapeFamily::Ring => rad >= 0.55 * r && rad <= r,
            ShapeFamily::TwoBars => ay <= r && ax >= 0.3 * r && ax <= 0.75 * r,
            ShapeFamily::DotGrid => {
                let snap = |v: f64| (v / (0.7 * r)).round().clamp(-1.0, 1.0) * 0.7 * r;
                let (ox, oy) = (dx - snap(dx), dy - snap(dy));
                (ox * ox + oy * oy).sqrt() <= 0.3 * r
            }
            ShapeFamily::Diamond => ax + ay <= r,
            ShapeFamily::HollowSquare => {
                let m = ax.max(ay);
                m >= 0.5 * r && m <= 0.85 * r
            }
            ShapeFamily::XCross => (ax - ay).abs() <= 0.3 * r && ax.max(ay) <= 0.85 * r,
            ShapeFamily::HorizontalBar => ay <= 0.3 * r && ax <= r,
            ShapeFamily::LShape => {
                (dx >= -r && dx <= -0.4 * r && ay <= r) || (dy >= 0.4 * r && dy <= r && ax <= r)
            }
            ShapeFamily::TShape => {
                (dy >= -r && dy <= -0.4 * r && ax <= r) || (ax <= 0.3 * r && ay <= r)
            }
            ShapeFamily::Checker => dx * dy > 0.0 && ax.max(ay) <= 0.85 * r,
            ShapeFamily::HalfDisk => rad <= r && dy >= 0.0,
            ShapeFamily::Target => rad <= 0.35 * r || (rad >= 0.7 * r && rad <= r),
        }
    }
}

/// Per-sample rendering parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderParams {
    pub center_x: f64,
    pub center_y: f64,
    pub scale: f64,
    pub intensity: f64,
}

impl RenderParams {
    pub fn nominal() -> Self {
        let c = IMAGE_SIDE as f64 / 2.0;
        Self {
            center_x: c,
            center_y: c,
            scale: 1.0,
            intensity: BASE_INTENSITY,
        }
    }

    pub fn jittered(rng: &mut RngStream) -> Self {
        let c = IMAGE_SIDE as f64 / 2.0;
        Self {
            center_x: c + rng.uniform_range(-CENTER_JITTER, CENTER_JITTER),
            center_y: c + rng.uniform_range(-CENTER_JITTER, CENTER_JITTER),
            scale: 1.0 + rng.uniform_range(-SCALE_JITTER, SCALE_JITTER),
            intensity: BASE_INTENSITY + rng.uniform_range(-INTENSITY_JITTER, INTENSITY_JITTER),
        }
    }
}

/// Noise-free render, sampled at pixel centres.
pub fn render(family: ShapeFamily, params: &RenderParams) -> Vec<f64> {
    let r = BASE_RADIUS * params.scale;
    let mut img = vec![0.0; IMAGE_PIXELS];
    for row in 0..IMAGE_SIDE {
        for col in 0..IMAGE_SIDE {
            let dx = col as f64 + 0.5 - params.center_x;
            let dy = row as f64 + 0.5 - params.center_y;
            if family.contains(dx, dy, r) {
                img[row * IMAGE_SIDE + col] = params.intensity;
            }
        }
    }
    img
}

/// Rounds intensities onto the 8-bit grid used by the dataset file.
pub fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub pixels: Vec<f64>,
    pub label: usize,
    pub sketch: Vec<u8>,
    pub split: Split,
}

/// Class-count profile `n_c = round(n_max · ρ^(−c/(C−1)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTailProfile {
    pub num_classes: usize,
    pub head_count: usize,
    pub imbalance_ratio: f64,
}

impl LongTailProfile {
    pub fn new(num_classes: usize, head_count: usize, imbalance_ratio: f64) -> Self {
        Self {
            num_classes,
            head_count,
            imbalance_ratio,
        }
    }

    /// Per-class counts without validation.
    pub fn raw_counts(&self) -> Vec<usize> {
        let c = self.num_classes;
        (0..c)
            .map(|i| {
                let frac = if c > 1 {
                    i as f64 / (c - 1) as f64
                } else {
                    0.0
                };
                (self.head_count as f64 * self.imbalance_ratio.powf(-frac)).round() as usize
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > MAX_CLASSES {
            return Err(Error::Profile(format!(
                "class count {} outside [2, {MAX_CLASSES}]",
                self.num_classes
            )));
        }
        if self.head_count > MAX_HEAD_COUNT {
            return Err(Error::Profile(format!(
                "head count {} exceeds {MAX_HEAD_COUNT}",
                self.head_count
            )));
        }
        if !(self.imbalance_ratio.is_finite() && self.imbalance_ratio >= 1.0) {
            return Err(Error::Profile(format!(
                "imbalance ratio {} must be a finite value >= 1",
                self.imbalance_ratio
            )));
        }
        if let Some((c, &n)) = self
            .raw_counts()
            .iter()
            .enumerate()
            .find(|(_, &n)| n < MIN_CLASS_COUNT)
        {
            return Err(Error::Profile(format!(
                "class {c} would have {n} samples; at least {MIN_CLASS_COUNT} are needed to split"
            )));
        }
        Ok(())
    }

    pub fn counts(&self) -> Result<Vec<usize>> {
        self.validate()?;
        Ok(self.raw_counts())
    }
}

/// Per-class split sizes for the 7:1:2 train/val/test ratio, keeping at
/// least one validation and one test sample.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let val = ((n as f64 * 0.1).round() as usize).max(1);
    let test = ((n as f64 * 0.2).round() as usize).max(1);
    (n - val - test, val, test)
}

/// Labeled images with precomputed sketches.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub num_classes: usize,
    pub side: usize,
    /// Total samples per class across all splits.
    pub class_counts: Vec<usize>,
    /// Ordered by split (train, val, test), then by class.
    pub samples: Vec<ImageSample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ImageSample> + '_ {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Per-class sample counts within one split.
    pub fn split_class_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in self.split(split) {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn train_class_counts(&self) -> Vec<usize> {
        self.split_class_counts(Split::Train)
    }
}

/// Rendering knobs; the defaults are the benchmark's.
#[derive(Clone, Copy, Debug)]
pub struct RenderConfig {
    pub pixel_noise: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            pixel_noise: PIXEL_NOISE,
        }
    }
}

/// Draws one sample of `class` (pixels already on the 8-bit grid) and its sketch.
pub fn draw_sample(
    class: usize,
    config: &RenderConfig,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<u8>) {
    let params = RenderParams::jittered(rng);
    let mut pixels = render(ShapeFamily::for_class(class), &params);
    for p in &mut pixels {
        *p = quantize(*p + config.pixel_noise * rng.normal());
    }
    let sketch = extract_sketch(&pixels, IMAGE_SIDE);
    (pixels, sketch)
}

pub fn generate_dataset(profile: &LongTailProfile, seed: u64) -> Result<Dataset> {
    generate_dataset_with(profile, seed, &RenderConfig::default())
}

pub fn generate_dataset_with(
    profile: &LongTailProfile,
    seed: u64,
    config: &RenderConfig,
) -> Result<Dataset> {
    let counts = profile.counts()?;
    let root = RngStream::new(seed, 0);
    let mut per_split: [Vec<ImageSample>; 3] = Default::default();
    for (class, &n) in counts.iter().enumerate() {
        let mut rng = root.derive(class as u64);
        let (train, val, _) = split_sizes(n);
        for i in 0..n {
            let (pixels, sketch) = draw_sample(class, config, &mut rng);
            let split = if i < train {
                Split::Train
            } else if i < train + val {
                Split::Val
            } else {
                Split::Test
            };
            per_split[split as usize].push(ImageSample {
                pixels,
                label: class,
                sketch,
                split,
            });
        }
    }
    Ok(Dataset {
        num_classes: profile.num_classes,
        side: IMAGE_SIDE,
        class_counts: counts,
        samples: per_split.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_tail_count() {
        let p = LongTailProfile::new(8, 1000, 47.98);
        let counts = p.counts().unwrap();
        assert_eq!(counts[0], 1000);
        assert_eq!(counts[7], 21);
        assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn balanced_profile() {
        let p = LongTailProfile::new(2, 10, 1.0);
        assert_eq!(p.counts().unwrap(), vec![10, 10]);
    }

    #[test]
    fn tiny_tail_rejected() {
        let p = LongTailProfile::new(4, 20, 10.0);
        assert!(matches!(p.counts(), Err(Error::Profile(_))));
        assert!(LongTailProfile::new(17, 100, 2.0).validate().is_err());
        assert!(LongTailProfile::new(2, 6000, 2.0).validate().is_err());
    }

    #[test]
    fn split_sizes_follow_seven_one_two() {
        assert_eq!(split_sizes(1000), (700, 100, 200));
        assert_eq!(split_sizes(21), (15, 2, 4));
        assert_eq!(split_sizes(4), (2, 1, 1));
    }

    #[test]
    fn every_family_draws_something() {
        for f in ShapeFamily::ALL {
            let img = render(f, &RenderParams::nominal());
            let lit = img.iter().filter(|&&v| v > 0.0).count();
            assert!(lit >= 8, "{f:?} lit {lit} pixels");
        }
    }
}
