//! Reading inputs and writing outputs.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Rgb, RgbImage};
use pdm_core::{load_fmap, BinaryMask, FeatureBundle, RunLengthMask, ScoreMap};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::CliError;

pub fn load_bundle(path: &Path) -> Result<FeatureBundle, CliError> {
    load_fmap(path).map_err(|source| CliError::Fmap {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::input(path, e.to_string()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_mask_png(path: &Path, mask: &BinaryMask) -> Result<(), CliError> {
    let (h, w) = mask.shape();
    let img = GrayImage::from_raw(w as u32, h as u32, mask.to_gray_bytes())
        .expect("buffer matches mask size");
    img.save(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Any nonzero pixel is foreground.
pub fn read_mask_png(path: &Path) -> Result<BinaryMask, CliError> {
    let img = image::open(path)
        .map_err(|source| CliError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    let bits = img.pixels().map(|p| p.0[0] > 0).collect();
    Ok(BinaryMask::new(h as usize, w as usize, bits)?)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MaskSource {
    /// PNG (or RLE JSON) path, relative to the file that names it.
    Path(PathBuf),
    Rle(RunLengthMask),
}

impl MaskSource {
    pub fn load(&self, base: &Path) -> Result<BinaryMask, CliError> {
        match self {
            MaskSource::Path(p) => load_mask(&base.join(p)),
            MaskSource::Rle(rle) => Ok(rle.decode()?),
        }
    }
}

/// Mask from a PNG file or a `{"size", "counts"}` JSON file.
pub fn load_mask(path: &Path) -> Result<BinaryMask, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        let rle: RunLengthMask = read_json(path)?;
        Ok(rle.decode()?)
    } else {
        read_mask_png(path)
    }
}

pub fn parent_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Blue-to-red ramp through cyan, green and yellow.
fn heat(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let channel =
        |center: f64| ((1.5 - (4.0 * v - center).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    [channel(3.0), channel(2.0), channel(1.0)]
}

/// Heat-map rendering of a `[0, 1]` map, optionally blended half-and-half
/// over a background image of the same size.
pub fn write_overlay_png(
    path: &Path,
    map: &ScoreMap,
    background: Option<&RgbImage>,
) -> Result<(), CliError> {
    let (h, w) = map.shape();
    let img: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let mut c = heat(map.get(y as usize, x as usize));
        if let Some(bg) = background {
            let b = bg.get_pixel(x, y).0;
            for i in 0..3 {
                c[i] = ((c[i] as u16 + b[i] as u16) / 2) as u8;
            }
        }
        Rgb(c)
    });
    img.save(path).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_rgb(path: &Path) -> Result<RgbImage, CliError> {
    Ok(image::open(path)
        .map_err(|source| CliError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8())
}
