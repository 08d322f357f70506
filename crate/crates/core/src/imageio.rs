//! PNG / TIFF decoding and encoding for [`PixelGrid`].
//!
//! Supported on disk: PNG gray 8- or 16-bit, PNG/TIFF RGB 8-bit. Stored
//! values are mapped to `[0,1]` on load (16-bit divides by 65535) and
//! quantized back only on export; everything in between stays continuous.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use ndarray::Array3;

use crate::error::{Error, Result};
use crate::grid::{PixelGrid, RangeTag};

/// Decode an image file into a unit-range grid.
pub fn load(path: &Path) -> Result<PixelGrid> {
    let img = image::open(path).map_err(|e| Error::io(path, e))?;
    from_dynamic(img)
}

fn from_dynamic(img: DynamicImage) -> Result<PixelGrid> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(buf) => {
            Array3::from_shape_fn((h, w, 1), |(y, x, _)| f32::from(buf[(x as u32, y as u32)][0]) / 255.0)
        }
        DynamicImage::ImageLuma16(buf) => {
            Array3::from_shape_fn((h, w, 1), |(y, x, _)| f32::from(buf[(x as u32, y as u32)][0]) / 65535.0)
        }
        DynamicImage::ImageRgb8(buf) => Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
            f32::from(buf[(x as u32, y as u32)][c]) / 255.0
        }),
        other => {
            // Alpha and exotic layouts are normalized through rgb8.
            let buf = other.to_rgb8();
            Array3::from_shape_fn((h, w, 3), |(y, x, c)| f32::from(buf[(x as u32, y as u32)][c]) / 255.0)
        }
    };
    PixelGrid::new(data, RangeTag::Unit)
}

/// Bit depth selection for [`save`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaveDepth {
    Eight,
    Sixteen,
}

/// Encode a unit-range grid to `path`; the extension picks the container.
///
/// Grayscale grids write Luma8 or Luma16 per `depth`; RGB grids always
/// write 8-bit. Signed-range grids must be mapped to unit first.
pub fn save(img: &PixelGrid, path: &Path, depth: SaveDepth) -> Result<()> {
    if img.range() != RangeTag::Unit {
        return Err(Error::Precondition("save expects a unit-range image; map signed output first".into()));
    }
    let (h, w) = (img.height() as u32, img.width() as u32);
    let res = if img.channels() == 1 {
        match depth {
            SaveDepth::Eight => {
                let buf = ImageBuffer::from_fn(w, h, |x, y| {
                    Luma([quant_u8(img.get(y as usize, x as usize, 0))])
                });
                buf.save(path)
            }
            SaveDepth::Sixteen => {
                let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w, h, |x, y| {
                    Luma([quant_u16(img.get(y as usize, x as usize, 0))])
                });
                buf.save(path)
            }
        }
    } else {
        let buf = ImageBuffer::from_fn(w, h, |x, y| {
            Rgb([
                quant_u8(img.get(y as usize, x as usize, 0)),
                quant_u8(img.get(y as usize, x as usize, 1)),
                quant_u8(img.get(y as usize, x as usize, 2)),
            ])
        });
        buf.save(path)
    };
    res.map_err(|e| Error::io(path, e))
}

fn quant_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quant_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_gray16_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let img = PixelGrid::from_fn(9, 7, RangeTag::Unit, |y, x| ((y * 7 + x) as f32) / 62.0).unwrap();
        save(&img, &path, SaveDepth::Sixteen).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.channels(), 1);
        assert_eq!((back.height(), back.width()), (9, 7));
        for (a, b) in img.data().iter().zip(back.data().iter()) {
            assert!((a - b).abs() < 1.0 / 65535.0, "{a} vs {b}");
        }
    }

    #[test]
    fn rgb_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let data = Array3::from_shape_fn((5, 4, 3), |(y, x, c)| ((y + x + c) % 5) as f32 / 4.0);
        let img = PixelGrid::new(data, RangeTag::Unit).unwrap();
        save(&img, &path, SaveDepth::Eight).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.channels(), 3);
        for (a, b) in img.data().iter().zip(back.data().iter()) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn rgb_tiff_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tiff");
        let data = Array3::from_shape_fn((6, 6, 3), |(y, x, c)| ((y * x + c) % 7) as f32 / 6.0);
        let img = PixelGrid::new(data, RangeTag::Unit).unwrap();
        save(&img, &path, SaveDepth::Eight).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.channels(), 3);
        for (a, b) in img.data().iter().zip(back.data().iter()) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn undecodable_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(load(&path), Err(Error::Io { .. })));
    }
}
