//! Random flip / rotation / zoom augmentation on channel-first unit-range
//! tensors. Vacated pixels are filled with 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::Image;
use super::preprocess::{preprocess, resize_bilinear};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPipeline {
    pub target_size: (usize, usize),
    pub rescale: f64,
    pub flip_h: bool,
    pub flip_v: bool,
    /// Rotation bound as a fraction of a full turn (0.2 means +-72 degrees).
    pub rotation_factor: f64,
    /// Zoom scale is drawn from `[1 - zoom_factor, 1 + zoom_factor]`.
    pub zoom_factor: f64,
    pub seed: u64,
}

impl Default for AugmentPipeline {
    fn default() -> Self {
        Self {
            target_size: (32, 32),
            rescale: 1.0 / 255.0,
            flip_h: true,
            flip_v: true,
            rotation_factor: 0.2,
            zoom_factor: 0.2,
            seed: 42,
        }
    }
}

/// The random choices for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub flip_h: bool,
    pub flip_v: bool,
    pub angle_deg: f64,
    pub zoom: f64,
}

impl AugmentDraw {
    pub const IDENTITY: AugmentDraw = AugmentDraw {
        flip_h: false,
        flip_v: false,
        angle_deg: 0.0,
        zoom: 1.0,
    };
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.gen_range(-half_width..=half_width)
    } else {
        0.0
    }
}

impl AugmentPipeline {
    /// Disabled augmentation that only resizes and rescales.
    pub fn identity(target_size: (usize, usize), rescale: f64) -> Self {
        Self {
            target_size,
            rescale,
            flip_h: false,
            flip_v: false,
            rotation_factor: 0.0,
            zoom_factor: 0.0,
            seed: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.flip_h && !self.flip_v && self.rotation_factor == 0.0 && self.zoom_factor == 0.0
    }

    /// Draws one set of choices. Always consumes the same number of draws so
    /// streams stay aligned whatever is enabled.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentDraw {
        let h: bool = rng.gen_bool(0.5);
        let v: bool = rng.gen_bool(0.5);
        let angle = symmetric(rng, self.rotation_factor.max(0.0) * 360.0);
        let zoom = 1.0 + symmetric(rng, self.zoom_factor.max(0.0));
        AugmentDraw {
            flip_h: self.flip_h && h,
            flip_v: self.flip_v && v,
            angle_deg: angle,
            zoom,
        }
    }

    /// Resize + rescale, then augment with fresh draws.
    pub fn run<R: Rng + ?Sized>(&self, image: &Image, rng: &mut R) -> Result<Tensor> {
        let t = preprocess(image, self.target_size, self.rescale)?;
        self.augment(&t, rng)
    }

    /// Augments an already preprocessed `(C, H, W)` tensor, resizing it to
    /// `target_size` first if needed.
    pub fn augment<R: Rng + ?Sized>(&self, image: &Tensor, rng: &mut R) -> Result<Tensor> {
        let d = self.draw(rng);
        let image = self.fit(image)?;
        apply_draw(&image, &d)
    }

    fn fit(&self, image: &Tensor) -> Result<Tensor> {
        let &[c, h, w] = image.shape() else {
            return Err(shape_err!(
                "augment expects a (C, H, W) tensor, got {:?}",
                image.shape()
            ));
        };
        if (h, w) == self.target_size {
            return Ok(image.clone());
        }
        let mut hwc = vec![0.0; c * h * w];
        for ch in 0..c {
            for i in 0..h * w {
                hwc[i * c + ch] = image.values()[ch * h * w + i];
            }
        }
        let img = Image::new(h, w, c, hwc)?;
        preprocess(
            &resize_bilinear(&img, self.target_size.0, self.target_size.1)?,
            self.target_size,
            1.0,
        )
    }
}

/// Applies flips, then rotation and zoom about the image centre. The
/// rotation and zoom are composed into one inverse mapping and resampled
/// bilinearly once.
pub fn apply_draw(image: &Tensor, d: &AugmentDraw) -> Result<Tensor> {
    let &[c, h, w] = image.shape() else {
        return Err(shape_err!(
            "augment expects a (C, H, W) tensor, got {:?}",
            image.shape()
        ));
    };
    let src = image.values();
    let mut flipped = vec![0.0; src.len()];
    for ch in 0..c {
        for y in 0..h {
            let sy = if d.flip_v { h - 1 - y } else { y };
            for x in 0..w {
                let sx = if d.flip_h { w - 1 - x } else { x };
                flipped[(ch * h + y) * w + x] = src[(ch * h + sy) * w + sx];
            }
        }
    }
    if d.angle_deg == 0.0 && d.zoom == 1.0 {
        return Tensor::new(vec![c, h, w], flipped);
    }
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let theta = d.angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let inv_zoom = 1.0 / d.zoom;
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = ((y as f64 - cy) * inv_zoom, (x as f64 - cx) * inv_zoom);
            // inverse rotation of the output offset
            let sy = snap(cy + cos * dy - sin * dx);
            let sx = snap(cx + sin * dy + cos * dx);
            for ch in 0..c {
                let plane = &flipped[ch * h * w..(ch + 1) * h * w];
                out[(ch * h + y) * w + x] = sample_zero(plane, h, w, sy, sx).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}

/// Rounds away trigonometric noise so exact quarter turns hit pixel centres.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Bilinear sample where pixels outside the frame read as 0.
fn sample_zero(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    if y <= -1.0 || x <= -1.0 || y >= h as f64 || x >= w as f64 {
        return 0.0;
    }
    let (y0, x0) = (y.floor(), x.floor());
    let (ty, tx) = (y - y0, x - x0);
    let at = |yy: f64, xx: f64| -> f64 {
        if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
            0.0
        } else {
            plane[yy as usize * w + xx as usize]
        }
    };
    let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1.0) * tx;
    let bottom = at(y0 + 1.0, x0) * (1.0 - tx) + at(y0 + 1.0, x0 + 1.0) * tx;
    top * (1.0 - ty) + bottom * ty
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use proptest::prelude::*;

    fn ramp(c: usize, h: usize, w: usize) -> Tensor {
        let n = c * h * w;
        Tensor::new(vec![c, h, w], (0..n).map(|i| i as f64 / n as f64).collect()).unwrap()
    }

    #[test]
    fn disabled_pipeline_is_identity() {
        let p = AugmentPipeline::identity((5, 6), 1.0);
        let img = ramp(2, 5, 6);
        let mut rng = rng_from(1);
        for _ in 0..10 {
            assert_eq!(p.augment(&img, &mut rng).unwrap(), img);
        }
    }

    #[test]
    fn horizontal_flip_is_an_involution() {
        let img = ramp(1, 4, 5);
        let d = AugmentDraw {
            flip_h: true,
            ..AugmentDraw::IDENTITY
        };
        let once = apply_draw(&img, &d).unwrap();
        assert_ne!(once, img);
        assert_eq!(once.at(&[0, 0, 0]), img.at(&[0, 0, 4]));
        assert_eq!(apply_draw(&once, &d).unwrap(), img);
    }

    #[test]
    fn rotation_angles_stay_within_bound() {
        let p = AugmentPipeline {
            rotation_factor: 0.2,
            ..Default::default()
        };
        let mut rng = rng_from(3);
        let mut widest = 0.0f64;
        for _ in 0..10_000 {
            let d = p.draw(&mut rng);
            assert!(d.angle_deg.abs() <= 72.0);
            assert!((0.8..=1.2).contains(&d.zoom));
            widest = widest.max(d.angle_deg.abs());
        }
        assert!(widest > 70.0);
    }

    #[test]
    fn quarter_turn_moves_corners_and_fills_nothing() {
        // a square rotated by 90 degrees stays fully inside the frame
        let img = ramp(1, 5, 5);
        let d = AugmentDraw {
            angle_deg: 90.0,
            ..AugmentDraw::IDENTITY
        };
        let r = apply_draw(&img, &d).unwrap();
        let mut a: Vec<f64> = img.values().to_vec();
        let mut b: Vec<f64> = r.values().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn zoom_out_fills_border_with_zero() {
        let img = Tensor::full(vec![1, 9, 9], 1.0);
        let d = AugmentDraw {
            zoom: 0.5,
            ..AugmentDraw::IDENTITY
        };
        let r = apply_draw(&img, &d).unwrap();
        assert_eq!(r.at(&[0, 0, 0]), 0.0);
        assert_eq!(r.at(&[0, 4, 4]), 1.0);
    }

    #[test]
    fn resizes_to_target() {
        let p = AugmentPipeline {
            target_size: (8, 8),
            ..Default::default()
        };
        let img = Image::filled(16, 12, 1, 128.0);
        let t = p.run(&img, &mut rng_from(1)).unwrap();
        assert_eq!(t.shape(), &[1, 8, 8]);
    }

    proptest! {
        #[test]
        fn pure_function_of_seed_with_unit_range(seed in any::<u64>(), rot in 0.0f64..0.5, zoom in 0.0f64..0.5) {
            let p = AugmentPipeline { target_size: (6, 7), rotation_factor: rot, zoom_factor: zoom, ..Default::default() };
            let img = ramp(1, 6, 7);
            let a = p.augment(&img, &mut rng_from(seed)).unwrap();
            let b = p.augment(&img, &mut rng_from(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.shape(), &[1, 6, 7]);
            prop_assert!(a.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
