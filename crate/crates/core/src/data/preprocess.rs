use super::image::Image;
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Bilinear sample of one channel at continuous pixel-centre coordinates,
/// clamping to the border.
fn sample_clamped(img: &Image, y: f64, x: f64, c: usize) -> f64 {
    let max_y = (img.height - 1) as f64;
    let max_x = (img.width - 1) as f64;
    let y = y.clamp(0.0, max_y);
    let x = x.clamp(0.0, max_x);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(img.height - 1), (x0 + 1).min(img.width - 1));
    let (ty, tx) = (y - y0 as f64, x - x0 as f64);
    let top = img.get(y0, x0, c) * (1.0 - tx) + img.get(y0, x1, c) * tx;
    let bottom = img.get(y1, x0, c) * (1.0 - tx) + img.get(y1, x1, c) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Bilinear resize with half-pixel centres (output pixel `i` samples source
/// coordinate `(i + 0.5) * in / out - 0.5`).
pub fn resize_bilinear(img: &Image, height: usize, width: usize) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(invalid!("resize target must have positive area, got {height}x{width}"));
    }
    if height == img.height && width == img.width {
        return Ok(img.clone());
    }
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    let mut out = Image::filled(height, width, img.channels, 0.0);
    for y in 0..height {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..width {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            for c in 0..img.channels {
                out.set(y, x, c, sample_clamped(img, src_y, src_x, c));
            }
        }
    }
    Ok(out)
}

/// Resizes to `target` (height, width), multiplies by `rescale` and returns a
/// channel-first `(C, H, W)` tensor clamped to `[0, 1]`.
pub fn preprocess(img: &Image, target: (usize, usize), rescale: f64) -> Result<Tensor> {
    if img.data.is_empty() {
        return Err(invalid!("cannot preprocess an empty image"));
    }
    let resized = resize_bilinear(img, target.0, target.1)?;
    let (h, w, ch) = (resized.height, resized.width, resized.channels);
    let mut values = vec![0.0; h * w * ch];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                values[(c * h + y) * w + x] = (resized.get(y, x, c) * rescale).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(vec![ch, h, w], values)
}
