//! File formats and atomic writes.

use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::{ImageFormat, Luma, Rgb};
use spineseg::report::{GrayImage, RgbImage};
use spineseg::sidecar::{self, LabeledSet};
use spineseg::{BinaryMask, LabelMask, LabelTaxonomy};

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn encode_png<P: image::Pixel<Subpixel = u8> + image::PixelWithColorType>(img: &image::ImageBuffer<P, Vec<u8>>) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn gray_buffer(width: usize, height: usize, data: Vec<u8>) -> image::ImageBuffer<Luma<u8>, Vec<u8>> {
    image::ImageBuffer::from_raw(width as u32, height as u32, data).expect("buffer matches dimensions")
}

/// Semantic mask as an 8-bit PNG of class indices.
pub fn write_label_png(path: &Path, mask: &LabelMask) -> Result<()> {
    write_atomic(path, &encode_png(&gray_buffer(mask.width(), mask.height(), mask.data().to_vec()))?)
}

/// Instance mask as an 8-bit PNG with 0 and 255.
pub fn write_binary_png(path: &Path, mask: &BinaryMask) -> Result<()> {
    let data = mask.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    write_atomic(path, &encode_png(&gray_buffer(mask.width(), mask.height(), data))?)
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    let buf: image::ImageBuffer<Rgb<u8>, Vec<u8>> =
        image::ImageBuffer::from_raw(img.width as u32, img.height as u32, img.to_bytes()).expect("buffer matches dimensions");
    write_atomic(path, &encode_png(&buf)?)
}

pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).with_context(|| format!("reading {}", path.display()))?.into_luma8();
    Ok(GrayImage { width: img.width() as usize, height: img.height() as usize, data: img.into_raw() })
}

/// Reads a semantic mask; values above the taxonomy's largest index are an error.
pub fn read_label_png(path: &Path, taxonomy: &LabelTaxonomy) -> Result<LabelMask> {
    let g = read_gray(path)?;
    let mask = LabelMask::from_vec(g.width, g.height, g.data)?;
    let max = mask.max_value();
    if usize::from(max) >= taxonomy.n_classes() {
        bail!("{}: pixel value {max} is not a class index", path.display());
    }
    Ok(mask)
}

pub fn read_sidecar(path: &Path, taxonomy: &LabelTaxonomy, fallback_dims: Option<(usize, usize)>) -> Result<LabeledSet> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    sidecar::from_json(&text, taxonomy, fallback_dims).with_context(|| format!("parsing {}", path.display()))
}

/// Image id of a file: its name up to the first dot.
pub fn image_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

/// `path` itself, or the files in it with one of `exts`, sorted by name.
/// Files with more than one dot (`x.morph.json`) are outputs of other
/// commands and skipped.
pub fn list_inputs(path: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(path).with_context(|| format!("listing {}", path.display()))? {
        let p = entry?.path();
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let ext_ok = p.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)));
        if p.is_file() && ext_ok && name.matches('.').count() == 1 {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
