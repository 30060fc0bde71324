//! PNG and binary PGM (P5) reading and writing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::image::{luminance, round_half_up, ImageBuffer, LEVELS_16BIT, LEVELS_8BIT};

/// Output bit depth for [`save_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_code(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }

    /// Depth that can hold every code of an image with `levels` gray levels.
    pub fn for_levels(levels: u32) -> Self {
        if levels <= LEVELS_8BIT {
            BitDepth::Eight
        } else {
            BitDepth::Sixteen
        }
    }
}

impl TryFrom<u8> for BitDepth {
    type Error = Error;

    fn try_from(bits: u8) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::Format(format!("unsupported bit depth {other}"))),
        }
    }
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(Error::Format(format!(
            "{}: expected a .png or .pgm file",
            path.display()
        ))),
    }
}

fn map_image_error(path: &Path, err: image::ImageError) -> Error {
    match err {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads a PNG or PGM file as raw integer codes stored in `f64`.
///
/// RGB inputs are reduced to BT.601 luminance; `levels` follows the bit depth.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(Error::Format(format!(
                "{}: {other:?} is not supported",
                path.display()
            )))
        }
        None => {
            return Err(Error::Format(format!(
                "{}: unrecognized image format",
                path.display()
            )))
        }
    }
    let decoded = reader.decode().map_err(|e| map_image_error(path, e))?;
    from_dynamic(decoded).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn from_dynamic(img: DynamicImage) -> Result<ImageBuffer> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (levels, data): (u32, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(buf) => {
            (LEVELS_8BIT, buf.into_raw().into_iter().map(f64::from).collect())
        }
        DynamicImage::ImageLuma16(buf) => {
            (LEVELS_16BIT, buf.into_raw().into_iter().map(f64::from).collect())
        }
        DynamicImage::ImageRgb8(buf) => (
            LEVELS_8BIT,
            buf.into_raw()
                .chunks_exact(3)
                .map(|p| luminance(f64::from(p[0]), f64::from(p[1]), f64::from(p[2])))
                .collect(),
        ),
        DynamicImage::ImageRgb16(buf) => (
            LEVELS_16BIT,
            buf.into_raw()
                .chunks_exact(3)
                .map(|p| luminance(f64::from(p[0]), f64::from(p[1]), f64::from(p[2])))
                .collect(),
        ),
        other => {
            return Err(Error::Format(format!(
                "color type {:?} is not single- or three-channel 8/16-bit",
                other.color()
            )))
        }
    };
    ImageBuffer::new(w, h, data, levels)
}

/// Clamps to `[0, 2^depth - 1]`, rounds half up, and writes losslessly.
///
/// The container follows the file extension (`.png` or `.pgm`).
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let (w, h) = (img.width() as u32, img.height() as u32);
    let top = depth.max_code();
    let codes = img.data().iter().map(move |&v| round_half_up(v.clamp(0.0, top)));

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    match format {
        ImageFormat::Png => {
            // The PNG encoder takes 16-bit samples as native-endian bytes.
            let (bytes, color): (Vec<u8>, ExtendedColorType) = match depth {
                BitDepth::Eight => (codes.map(|c| c as u8).collect(), ExtendedColorType::L8),
                BitDepth::Sixteen => (
                    codes.flat_map(|c| (c as u16).to_ne_bytes()).collect(),
                    ExtendedColorType::L16,
                ),
            };
            PngEncoder::new(writer)
                .write_image(&bytes, w, h, color)
                .map_err(|e| map_image_error(path, e))
        }
        _ => {
            // P5 stores multi-byte samples most significant byte first.
            let bytes: Vec<u8> = match depth {
                BitDepth::Eight => codes.map(|c| c as u8).collect(),
                BitDepth::Sixteen => codes.flat_map(|c| (c as u16).to_be_bytes()).collect(),
            };
            write!(writer, "P5\n{w} {h}\n{}\n", top as u32)
                .and_then(|_| writer.write_all(&bytes))
                .and_then(|_| writer.flush())
                .map_err(|e| Error::io(path, e))
        }
    }
}
