//! Seeded synthetic surface images: a noisy background texture with bright
//! rivet-like discs, and for defects a dark crack polyline. A configurable
//! share of defects get a crack so faint that the image is nearly identical
//! to a normal image built from the same texture.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::{Dataset, Image, LabeledImage};
use crate::error::{invalid, Result};
use crate::rng::{stream, substream};

pub const NORMAL_LABEL: &str = "normal";
pub const DEFECT_LABEL: &str = "defect";

/// Largest contrast a confusable crack may have against its background.
pub const CONFUSABLE_MAX_CONTRAST: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub image_size: (usize, usize),
    pub n_normal: usize,
    pub n_defect: usize,
    pub confusable_fraction: f64,
    /// Crack length as a fraction of the image diagonal, drawn from this range.
    pub stroke_length: (f64, f64),
    /// Crack width in pixels.
    pub thickness: (f64, f64),
    /// Crack darkness below the background, for non-confusable defects.
    pub intensity: (f64, f64),
    /// Amplitude of per-pixel uniform noise.
    pub noise: f64,
    /// Amplitude of the low-frequency shading.
    pub shading: f64,
    /// Number of bright rivet discs per image, drawn from `0..=max_rivets`.
    pub max_rivets: usize,
    /// Number of faint dark smudges per image, drawn from `0..=max_smudges`.
    pub max_smudges: usize,
    /// Set from the run seed rather than read from configuration files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            image_size: (32, 32),
            n_normal: 400,
            n_defect: 200,
            confusable_fraction: 0.0,
            stroke_length: (0.25, 0.5),
            thickness: (1.5, 2.5),
            intensity: (0.4, 0.6),
            noise: 0.08,
            shading: 0.08,
            max_rivets: 3,
            max_smudges: 2,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    /// A balanced 500-image set; with a 40/50/10 split the model sees only
    /// 200 training images.
    pub fn overfit_prone() -> Self {
        Self {
            n_normal: 250,
            n_defect: 250,
            ..Self::default()
        }
    }

    /// The default task with one defect in ten rendered near-invisibly on a
    /// texture shared with a normal image.
    pub fn confusable() -> Self {
        Self {
            confusable_fraction: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        if h < 16 || w < 16 {
            return Err(invalid!("synthetic images must be at least 16x16, got {h}x{w}"));
        }
        if self.n_normal == 0 || self.n_defect == 0 {
            return Err(invalid!("synthetic class counts must be positive"));
        }
        if !(0.0..=1.0).contains(&self.confusable_fraction) {
            return Err(invalid!("confusable_fraction must lie in [0, 1]"));
        }
        for (name, (lo, hi)) in [
            ("stroke_length", self.stroke_length),
            ("thickness", self.thickness),
            ("intensity", self.intensity),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(invalid!("{name} range must satisfy 0 < lo <= hi, got ({lo}, {hi})"));
            }
        }
        if self.intensity.0 <= 0.1 {
            return Err(invalid!("crack intensity must exceed 0.1 to be visible"));
        }
        Ok(())
    }

    /// Number of defect images rendered with a near-invisible crack.
    pub fn confusable_count(&self) -> usize {
        ((self.n_defect as f64) * self.confusable_fraction).round() as usize
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Background texture: base level, smooth shading, pixel noise, bright
/// rivets and faint smudges. Values in `[0, 1]`.
pub fn base_texture<R: Rng + ?Sized>(cfg: &SyntheticConfig, rng: &mut R) -> Image {
    let (h, w) = cfg.image_size;
    let level = rng.gen_range(0.45..0.6);
    let fx = rng.gen_range(0.5..2.0) * std::f64::consts::TAU / w as f64;
    let fy = rng.gen_range(0.5..2.0) * std::f64::consts::TAU / h as f64;
    let (px, py) = (
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let mut img = Image::filled(h, w, 1, 0.0);
    for y in 0..h {
        for x in 0..w {
            let shade = cfg.shading * 0.5 * ((x as f64 * fx + px).sin() + (y as f64 * fy + py).cos());
            let noise = cfg.noise * rng.gen_range(-1.0..1.0);
            img.set(y, x, 0, level + shade + noise);
        }
    }
    let rivets = rng.gen_range(0..=cfg.max_rivets);
    for _ in 0..rivets {
        let (cy, cx) = (rng.gen_range(2.0..h as f64 - 2.0), rng.gen_range(2.0..w as f64 - 2.0));
        let r = rng.gen_range(1.2..2.4);
        let lift = rng.gen_range(0.2..0.3);
        paint_disc(&mut img, cy, cx, r, lift);
    }
    let smudges = rng.gen_range(0..=cfg.max_smudges);
    for _ in 0..smudges {
        let (cy, cx) = (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
        let r = rng.gen_range(1.5..3.5);
        let depth = rng.gen_range(0.1..0.2);
        paint_disc(&mut img, cy, cx, r, -depth);
    }
    for v in &mut img.data {
        *v = v.clamp(0.0, 1.0);
    }
    img
}

fn paint_disc(img: &mut Image, cy: f64, cx: f64, r: f64, delta: f64) {
    for y in 0..img.height {
        for x in 0..img.width {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            let cover = (r + 0.5 - d).clamp(0.0, 1.0);
            if cover > 0.0 {
                let v = img.get(y, x, 0) + delta * cover;
                img.set(y, x, 0, v);
            }
        }
    }
}

/// A crack: connected segments with a width and darkness.
#[derive(Debug, Clone, PartialEq)]
pub struct Crack {
    pub points: Vec<(f64, f64)>,
    pub thickness: f64,
    pub contrast: f64,
}

impl Crack {
    pub fn random<R: Rng + ?Sized>(cfg: &SyntheticConfig, contrast: f64, rng: &mut R) -> Self {
        let (h, w) = cfg.image_size;
        let diag = ((h * h + w * w) as f64).sqrt();
        let length = draw(rng, cfg.stroke_length) * diag;
        let segments = rng.gen_range(2..=4);
        let mut heading = rng.gen_range(0.0..std::f64::consts::TAU);
        let margin = 3.0;
        let mut p = (
            rng.gen_range(margin..h as f64 - margin),
            rng.gen_range(margin..w as f64 - margin),
        );
        let mut points = vec![p];
        for _ in 0..segments {
            heading += rng.gen_range(-0.6..0.6);
            let step = length / segments as f64;
            let mut next = (p.0 + step * heading.sin(), p.1 + step * heading.cos());
            // turn back inside rather than leave the frame
            if next.0 < 1.0 || next.0 > h as f64 - 2.0 || next.1 < 1.0 || next.1 > w as f64 - 2.0 {
                heading += std::f64::consts::PI;
                next = (p.0 + step * heading.sin(), p.1 + step * heading.cos());
            }
            next = (next.0.clamp(1.0, h as f64 - 2.0), next.1.clamp(1.0, w as f64 - 2.0));
            points.push(next);
            p = next;
        }
        Self {
            points,
            thickness: draw(rng, cfg.thickness),
            contrast,
        }
    }

    fn distance(&self, y: f64, x: f64) -> f64 {
        self.points
            .windows(2)
            .map(|s| segment_distance((y, x), s[0], s[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Fraction of pixel `(y, x)` covered by the stroke.
    pub fn coverage(&self, y: usize, x: usize) -> f64 {
        let d = self.distance(y as f64, x as f64);
        (self.thickness / 2.0 + 0.5 - d).clamp(0.0, 1.0)
    }

    pub fn render(&self, base: &Image) -> Image {
        let mut out = base.clone();
        for y in 0..base.height {
            for x in 0..base.width {
                let cover = self.coverage(y, x);
                if cover > 0.0 {
                    for c in 0..base.channels {
                        let v = base.get(y, x, c) - self.contrast * cover;
                        out.set(y, x, c, v.clamp(0.0, 1.0));
                    }
                }
            }
        }
        out
    }

    /// Pixels fully inside the stroke.
    pub fn core_pixels(&self, height: usize, width: usize) -> usize {
        (0..height)
            .flat_map(|y| (0..width).map(move |x| (y, x)))
            .filter(|&(y, x)| self.coverage(y, x) >= 1.0)
            .count()
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let len2 = dy * dy + dx * dx;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dy + (p.1 - a.1) * dx) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qy, qx) = (a.0 + t * dy, a.1 + t * dx);
    ((p.0 - qy).powi(2) + (p.1 - qx).powi(2)).sqrt()
}

/// A generated defect together with the texture it was drawn on.
#[derive(Debug, Clone)]
pub struct DefectSample {
    pub base: Image,
    pub crack: Crack,
    pub image: Image,
}

/// Renders defect `index` of the configuration. Confusable defects reuse the
/// texture of the normal image with the same index.
pub fn defect_sample(cfg: &SyntheticConfig, index: usize, confusable: bool) -> DefectSample {
    let base = if confusable {
        normal_image(cfg, index)
    } else {
        base_texture(cfg, &mut substream(cfg.seed, &[stream::SYNTH, 1, index as u64]))
    };
    let mut rng = substream(cfg.seed, &[stream::SYNTH, 2, index as u64]);
    let contrast = if confusable {
        rng.gen_range(0.005..CONFUSABLE_MAX_CONTRAST)
    } else {
        draw(&mut rng, cfg.intensity)
    };
    let crack = Crack::random(cfg, contrast, &mut rng);
    let image = crack.render(&base);
    DefectSample { base, crack, image }
}

pub fn normal_image(cfg: &SyntheticConfig, index: usize) -> Image {
    base_texture(cfg, &mut substream(cfg.seed, &[stream::SYNTH, 0, index as u64]))
}

/// Generates `n_normal` normal images followed by `n_defect` defects. The
/// first `confusable_count()` defects are confusable and paired with the
/// normal image of the same index (while normals remain to pair with).
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n_conf = cfg.confusable_count().min(cfg.n_normal);
    let mut items = Vec::with_capacity(cfg.n_normal + cfg.n_defect);
    for i in 0..cfg.n_normal {
        let mut item = LabeledImage::new(normal_image(cfg, i), NORMAL_LABEL, Some(0));
        if i < n_conf {
            item.pair = Some(i);
        }
        items.push(item);
    }
    for i in 0..cfg.n_defect {
        let confusable = i < n_conf;
        let sample = defect_sample(cfg, i, confusable);
        let mut item = LabeledImage::new(sample.image, DEFECT_LABEL, Some(1));
        item.confusable = confusable;
        if confusable {
            item.pair = Some(i);
        }
        items.push(item);
    }
    Ok(Dataset::new(items, 1.0))
}
