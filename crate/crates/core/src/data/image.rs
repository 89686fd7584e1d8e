//! Image decoding, resizing and the pixel-level augmentation transforms.

use std::path::Path;

use image::{ImageFormat, RgbImage};

use super::manifest::Transform;
use crate::error::{Error, Result};
use crate::ops::bilinear_resize_hwc;
use crate::tensor::Tensor;

/// Decodes a PNG or JPEG payload to RGB (grey replicated to three channels).
pub fn decode_rgb(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let format = image::guess_format(bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            msg: format!("unsupported format {format:?} (PNG or JPEG expected)"),
        });
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

/// `(H, W, 3)` tensor in [0, 1], bilinearly resized to `target`.
pub fn rgb_to_tensor(img: &RgbImage, target: (usize, usize)) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scaled: Vec<f32> = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    let data = if (h, w) == target {
        scaled
    } else {
        bilinear_resize_hwc(&scaled, h, w, 3, target.0, target.1)
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect()
    };
    Tensor::new(vec![target.0, target.1, 3], data).expect("resize output length")
}

pub fn decode_and_resize(bytes: &[u8], path: &Path, target: (usize, usize)) -> Result<Tensor<f32>> {
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::Config(format!("resize target must be positive, got {target:?}")));
    }
    Ok(rgb_to_tensor(&decode_rgb(bytes, path)?, target))
}

pub fn load_image(path: &Path, target: (usize, usize)) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_and_resize(&bytes, path, target)
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rgb(&bytes, path)
}

/// PNG encoding; deterministic for identical pixels.
pub fn png_bytes(img: &RgbImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encode");
    out.into_inner()
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    std::fs::write(path, png_bytes(img)).map_err(|e| Error::io(path, e))
}

pub fn apply_transform(img: &RgbImage, t: Transform) -> RgbImage {
    match t {
        Transform::HorizontalFlip => image::imageops::flip_horizontal(img),
        Transform::VerticalFlip => image::imageops::flip_vertical(img),
        Transform::Rotate30 => rotate(img, 30.0),
        Transform::MedianFilter => median3(img),
    }
}

/// Counter-clockwise rotation about the image centre with bilinear sampling;
/// samples falling outside the source read as 0.
pub fn rotate(img: &RgbImage, degrees: f64) -> RgbImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let src = img.as_raw();
    let fetch = |x: i64, y: i64, c: usize| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            src[((y * w + x) * 3) as usize + c] as f64
        }
    };
    let mut out = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            // inverse map: rotate the output position back by -theta
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let px = out.get_pixel_mut(x as u32, y as u32);
            for c in 0..3 {
                let v = fetch(x0, y0, c) * (1.0 - fx) * (1.0 - fy)
                    + fetch(x0 + 1, y0, c) * fx * (1.0 - fy)
                    + fetch(x0, y0 + 1, c) * (1.0 - fx) * fy
                    + fetch(x0 + 1, y0 + 1, c) * fx * fy;
                px[c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// 3x3 per-channel median with edge replication.
pub fn median3(img: &RgbImage) -> RgbImage {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let src = img.as_raw();
    let mut out = RgbImage::new(w as u32, h as u32);
    let mut window = [0u8; 9];
    for y in 0..h {
        for x in 0..w {
            let px = out.get_pixel_mut(x as u32, y as u32);
            for c in 0..3 {
                let mut k = 0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let sx = (x + dx).clamp(0, w - 1);
                        let sy = (y + dy).clamp(0, h - 1);
                        window[k] = src[((sy * w + sx) * 3) as usize + c];
                        k += 1;
                    }
                }
                window.sort_unstable();
                px[c] = window[4];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma, Rgb};

    fn gray_png(img: &GrayImage) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png).unwrap();
        out.into_inner()
    }

    #[test]
    fn large_source_resizes_to_target() {
        let img = RgbImage::from_fn(640, 640, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 7]));
        let t = decode_and_resize(&png_bytes(&img), Path::new("x.png"), (224, 224)).unwrap();
        assert_eq!(t.shape(), [224, 224, 3]);
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn same_size_is_identity() {
        let img = RgbImage::from_fn(5, 4, |x, y| Rgb([(x * 40) as u8, (y * 60) as u8, 255]));
        let t = decode_and_resize(&png_bytes(&img), Path::new("x.png"), (4, 5)).unwrap();
        let expect: Vec<f32> = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        assert_eq!(t.data(), expect.as_slice());
    }

    #[test]
    fn grey_checkerboard_upsamples_between_extremes() {
        let img = GrayImage::from_fn(2, 2, |x, y| Luma([if (x + y) % 2 == 0 { 0 } else { 255 }]));
        let t = decode_and_resize(&gray_png(&img), Path::new("c.png"), (4, 4)).unwrap();
        let at = |y: usize, x: usize| t.data()[(y * 4 + x) * 3];
        assert_eq!(at(0, 0), 0.0);
        assert_eq!(at(0, 3), 1.0);
        assert_eq!(at(3, 0), 1.0);
        assert_eq!(at(3, 3), 0.0);
        for y in 1..3 {
            for x in 1..3 {
                assert!(at(y, x) > 0.0 && at(y, x) < 1.0);
            }
        }
        // replicated grey
        assert!(t.data().chunks(3).all(|p| p[0] == p[1] && p[1] == p[2]));
    }

    #[test]
    fn garbage_bytes_name_the_path() {
        let err = decode_and_resize(b"not an image", Path::new("bad.png"), (4, 4)).unwrap_err();
        assert!(err.to_string().contains("bad.png"));
    }

    #[test]
    fn flips_are_involutions() {
        let img = RgbImage::from_fn(7, 5, |x, y| Rgb([(x * 31 + y) as u8, (y * 17) as u8, (x ^ y) as u8]));
        for t in [Transform::HorizontalFlip, Transform::VerticalFlip] {
            assert_eq!(apply_transform(&apply_transform(&img, t), t), img);
        }
    }

    #[test]
    fn median_of_constant_is_constant() {
        let img = RgbImage::from_pixel(6, 6, Rgb([9, 90, 200]));
        assert_eq!(median3(&img), img);
    }

    #[test]
    fn rotation_zero_fills_corners_and_keeps_shape() {
        let img = RgbImage::from_pixel(32, 32, Rgb([200, 200, 200]));
        let r = rotate(&img, 30.0);
        assert_eq!(r.dimensions(), (32, 32));
        assert_eq!(r.get_pixel(0, 0), &Rgb([0, 0, 0]));
        assert_eq!(r.get_pixel(16, 16), &Rgb([200, 200, 200]));
        let mean = |i: &RgbImage| i.as_raw().iter().map(|&v| v as f64).sum::<f64>() / i.as_raw().len() as f64;
        assert!(mean(&r) < mean(&img));
    }
}
