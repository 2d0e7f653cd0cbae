//! Synthetic source task for pretraining: classify a surface texture as
//! plain, scratched (dark strokes) or stained (dark blobs).

use rand::Rng;

use crate::data::synth::{base_texture, Crack, SyntheticConfig};
use crate::data::{Dataset, Image, LabeledImage, Samples};
use crate::error::Result;
use crate::rng::{stream, substream};

pub const SOURCE_TASK_ID: &str = "synthetic-texture-3class";
pub const SOURCE_CLASSES: [&str; 3] = ["plain", "scratched", "stained"];

#[derive(Debug, Clone, PartialEq)]
pub struct SourceTaskConfig {
    pub image_size: (usize, usize),
    pub per_class: usize,
    pub seed: u64,
}

fn stain<R: Rng + ?Sized>(img: &mut Image, rng: &mut R) {
    let blobs = rng.gen_range(1..=3);
    for _ in 0..blobs {
        let cy = rng.gen_range(3.0..img.height as f64 - 3.0);
        let cx = rng.gen_range(3.0..img.width as f64 - 3.0);
        let r = rng.gen_range(2.0..4.5);
        let depth = rng.gen_range(0.35..0.5);
        for y in 0..img.height {
            for x in 0..img.width {
                let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                let cover = (r + 0.5 - d).clamp(0.0, 1.0);
                if cover > 0.0 {
                    let v = (img.get(y, x, 0) - depth * cover).clamp(0.0, 1.0);
                    img.set(y, x, 0, v);
                }
            }
        }
    }
}

pub fn source_dataset(cfg: &SourceTaskConfig) -> Result<Dataset> {
    let texture = SyntheticConfig {
        image_size: cfg.image_size,
        max_smudges: 0,
        stroke_length: (0.4, 0.7),
        thickness: (2.0, 3.0),
        ..SyntheticConfig::default()
    };
    let mut items = Vec::with_capacity(3 * cfg.per_class);
    for i in 0..cfg.per_class {
        for (class, name) in SOURCE_CLASSES.iter().enumerate() {
            let mut rng = substream(cfg.seed, &[stream::SOURCE, class as u64, i as u64]);
            let mut img = base_texture(&texture, &mut rng);
            match class {
                1 => {
                    let contrast = rng.gen_range(0.45..0.6);
                    img = Crack::random(&texture, contrast, &mut rng).render(&img);
                }
                2 => stain(&mut img, &mut rng),
                _ => {}
            }
            items.push(LabeledImage::new(img, *name, Some(class as u8)));
        }
    }
    Ok(Dataset::new(items, 1.0))
}

pub fn source_samples(cfg: &SourceTaskConfig) -> Result<Samples> {
    Samples::from_dataset(&source_dataset(cfg)?, cfg.image_size)
}
