//! PNG encoding of `[3, H, W]` tensors in `[-1, 1]`.

use std::io::Cursor;
use std::path::Path;

use dlgan_core::{Real, Tensor};
use image::{ImageFormat, RgbImage};

use crate::error::{AppError, Result};

pub fn to_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

pub fn from_byte(b: u8) -> f32 {
    b as f32 / 127.5 - 1.0
}

/// Converts a `[3, H, W]` tensor to an 8-bit RGB image.
pub fn to_rgb<T: Real>(t: &Tensor<T>) -> Result<RgbImage> {
    let s = t.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(AppError::Image { context: "encode".into(), message: format!("expected [3,H,W], got {s:?}") });
    }
    let (h, w) = (s[1], s[2]);
    let d = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        image::Rgb([to_byte(d[i].as_f64()), to_byte(d[h * w + i].as_f64()), to_byte(d[2 * h * w + i].as_f64())])
    }))
}

pub fn from_rgb(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0f32; 3 * h * w];
    for (x, y, p) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * h * w + i] = from_byte(p[c]);
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("image shape")
}

pub fn encode_rgb(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| AppError::Image { context: "encode".into(), message: e.to_string() })?;
    Ok(out.into_inner())
}

pub fn encode_png<T: Real>(t: &Tensor<T>) -> Result<Vec<u8>> {
    encode_rgb(&to_rgb(t)?)
}

/// Decodes any PNG into `[3, H, W]` in `[-1, 1]`; alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<Tensor<f32>> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| AppError::Image { context: "decode".into(), message: e.to_string() })?;
    Ok(from_rgb(&img.to_rgb8()))
}

pub fn read_png(path: &Path) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode_png(&bytes).map_err(|e| match e {
        AppError::Image { message, .. } => AppError::Image { context: path.display().to_string(), message },
        other => other,
    })
}

pub fn write_png<T: Real>(path: &Path, t: &Tensor<T>) -> Result<()> {
    write_bytes(path, &encode_png(t)?)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

/// Splits `[B, 3, H, W]` into `B` images.
pub fn unbatch<T: Real>(t: &Tensor<T>) -> Vec<Tensor<T>> {
    let s = t.shape();
    (0..s[0]).map(|i| t.rows(i, 1).reshape(&s[1..]).expect("image shape")).collect()
}

/// Stacks `[3, H, W]` images into `[B, 3, H, W]`.
pub fn batch<T: Real>(images: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| AppError::Usage("no images".into()))?;
    let s = first.shape().to_vec();
    let flat = Tensor::stack_rows(images)?;
    Ok(flat.reshape(&[images.len(), s[0], s[1], s[2]])?)
}
