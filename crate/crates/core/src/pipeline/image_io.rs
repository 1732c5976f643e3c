//! PNG and binary PPM (P6) input/output as `(1, 3, h, w)` tensors in `[0, 1]`.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, ImageReader, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn from_rgb8(img: &RgbImage) -> Tensor {
    let (w, h) = img.dimensions();
    Tensor::from_fn([1, 3, h as usize, w as usize], |_, c, y, x| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    })
}

/// Rounds to 8 bits after clamping to `[0, 1]`.
pub fn to_rgb8(t: &Tensor) -> Result<RgbImage> {
    let [n, c, h, w] = t.shape();
    if n != 1 || c != 3 {
        return Err(Error::config(format!("expected a (1, 3, h, w) image, got {:?}", t.shape())));
    }
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([q(t.get(0, 0, y, x)), q(t.get(0, 1, y, x)), q(t.get(0, 2, y, x))])
    }))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let img = ImageReader::open(path.as_ref())?.with_guessed_format()?.decode()?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::Image(format!("{} is empty", path.as_ref().display())));
    }
    Ok(from_rgb8(&img.to_rgb8()))
}

/// Writes PPM for `.ppm`/`.pnm` extensions and PNG otherwise.
pub fn save_image(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let img = to_rgb8(t)?;
    if ext == "ppm" || ext == "pnm" {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let enc = PnmEncoder::new(file).with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary));
        enc.write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)?;
    } else {
        img.save_with_format(path, ImageFormat::Png)?;
    }
    Ok(())
}
