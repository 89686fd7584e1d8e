//! Synthetic four-class pattern dataset: a soft blob, speckle, a ring and a
//! wedge, each drawn on a noisy dark background.

use std::f64::consts::PI;
use std::path::Path;

use image::{GrayImage, Luma};
use rand::Rng;
use rayon::prelude::*;

use super::batch::ImageSet;
use super::manifest::SampleRecord;
use super::substream;
use crate::error::{Error, Result};
use crate::labels::Label;

/// Pattern drawn for each class.
pub fn pattern_name(label: Label) -> &'static str {
    match label {
        Label::Normal => "blob",
        Label::Stone => "speckle",
        Label::Cyst => "ring",
        Label::Tumor => "wedge",
    }
}

/// One synthetic image; a pure function of `(label, size, seed, index)`.
pub fn synthetic_image(label: Label, size: usize, seed: u64, index: u64) -> GrayImage {
    let mut rng = substream(seed, 0x3_0000_0000 + index * 4 + label.index() as u64);
    let s = size as f64;
    let mut field = vec![0.0f64; size * size];
    let cx = rng.random_range(0.35 * s..0.65 * s);
    let cy = rng.random_range(0.35 * s..0.65 * s);
    let intensity = rng.random_range(150.0..230.0);
    match label {
        Label::Normal => {
            let sigma = rng.random_range(0.10 * s..0.16 * s);
            for y in 0..size {
                for x in 0..size {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    field[y * size + x] = intensity * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        Label::Stone => {
            let dots = rng.random_range(18..30);
            for _ in 0..dots {
                let px = rng.random_range(0.1 * s..0.9 * s);
                let py = rng.random_range(0.1 * s..0.9 * s);
                let r = rng.random_range(0.015 * s..0.035 * s).max(1.0);
                for y in 0..size {
                    for x in 0..size {
                        if (x as f64 - px).powi(2) + (y as f64 - py).powi(2) <= r * r {
                            field[y * size + x] = intensity;
                        }
                    }
                }
            }
        }
        Label::Cyst => {
            let radius = rng.random_range(0.16 * s..0.28 * s);
            let width = rng.random_range(0.035 * s..0.055 * s).max(1.5);
            for y in 0..size {
                for x in 0..size {
                    let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                    if (d - radius).abs() <= width {
                        field[y * size + x] = intensity;
                    }
                }
            }
        }
        Label::Tumor => {
            let radius = rng.random_range(0.30 * s..0.42 * s);
            let heading = rng.random_range(0.0..2.0 * PI);
            let half = rng.random_range(0.30..0.55);
            for y in 0..size {
                for x in 0..size {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    let d = (dx * dx + dy * dy).sqrt();
                    let mut da = dy.atan2(dx) - heading;
                    da = (da + PI).rem_euclid(2.0 * PI) - PI;
                    if d <= radius && da.abs() <= half {
                        field[y * size + x] = intensity;
                    }
                }
            }
        }
    }
    let base = rng.random_range(10.0..30.0);
    let noise = 25.0;
    GrayImage::from_fn(size as u32, size as u32, |x, y| {
        let v = base + field[y as usize * size + x as usize] + rng.random_range(-noise..noise);
        Luma([v.round().clamp(0.0, 255.0) as u8])
    })
}

/// `per_class` images of every class, interleaved by index then class.
pub fn synthetic_images(per_class: usize, size: usize, seed: u64) -> Vec<(Label, GrayImage)> {
    let items: Vec<(usize, Label)> = (0..per_class)
        .flat_map(|i| Label::ALL.into_iter().map(move |l| (i, l)))
        .collect();
    items
        .par_iter()
        .map(|&(i, l)| (l, synthetic_image(l, size, seed, i as u64)))
        .collect()
}

/// The synthetic suite as an in-memory set with four-way labels. Pixels are
/// scaled exactly as decoding the written PNGs would scale them.
pub fn synthetic_set(per_class: usize, size: usize, seed: u64) -> ImageSet {
    let images = synthetic_images(per_class, size, seed);
    let mut data = Vec::with_capacity(images.len() * size * size * 3);
    let mut labels = Vec::with_capacity(images.len());
    for (l, img) in &images {
        for &v in img.as_raw() {
            let f = v as f32 / 255.0;
            data.extend_from_slice(&[f, f, f]);
        }
        labels.push(l.index());
    }
    ImageSet::new([size, size, 3], data, labels).expect("synthetic set shape")
}

/// Writes the suite as a class-per-subdirectory PNG tree under `dir`.
pub fn write_synthetic(dir: &Path, per_class: usize, size: usize, seed: u64) -> Result<Vec<SampleRecord>> {
    if per_class == 0 || size < 8 {
        return Err(Error::Config(format!(
            "synthetic suite needs at least one image per class and size >= 8, got {per_class} and {size}"
        )));
    }
    for l in Label::ALL {
        let d = dir.join(l.name());
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let images = synthetic_images(per_class, size, seed);
    let mut records = Vec::with_capacity(images.len());
    for (k, (label, img)) in images.iter().enumerate() {
        let i = k / Label::ALL.len();
        let path = dir.join(label.name()).join(format!("{}_{i:05}.png", pattern_name(*label)));
        let mut buf = std::io::Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png)
            .map_err(|e| Error::Data(format!("PNG encode failed: {e}")))?;
        std::fs::write(&path, buf.into_inner()).map_err(|e| Error::io(&path, e))?;
        records.push(SampleRecord::new(path, *label));
    }
    Ok(records)
}
