use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::raster::RenderOutput;
use crate::scene::RgbaImage;

fn image_error(path: &Path, message: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Decodes any PNG into straight RGBA in `[0, 1]`. Gray images are
/// replicated across the color channels.
pub fn read_png(path: &Path) -> Result<RgbaImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| image_error(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_error(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| image_error(path, e))?;
    let (width, height) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        ColorType::Indexed => return Err(image_error(path, "palette was not expanded")),
    };
    let samples: Vec<f64> = match info.bit_depth {
        BitDepth::Eight => buf[..info.buffer_size()].iter().map(|&v| v as f64 / 255.0).collect(),
        BitDepth::Sixteen => buf[..info.buffer_size()]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect(),
        other => return Err(image_error(path, format!("unsupported bit depth {other:?}"))),
    };
    let stride = width * channels;
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = &samples[y * stride..(y + 1) * stride];
        for px in row.chunks_exact(channels) {
            pixels.push(match channels {
                1 => [px[0], px[0], px[0], 1.0],
                2 => [px[0], px[0], px[0], px[1]],
                3 => [px[0], px[1], px[2], 1.0],
                _ => [px[0], px[1], px[2], px[3]],
            });
        }
    }
    RgbaImage::new(width, height, pixels)
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Writes 8-bit RGBA.
pub fn write_png(path: &Path, image: &RgbaImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.width as u32, image.height as u32);
    encoder.set_color(ColorType::Rgba);
    encoder.set_depth(BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| image_error(path, e))?;
    let data: Vec<u8> = image.pixels.iter().flat_map(|p| p.map(quantize)).collect();
    writer.write_image_data(&data).map_err(|e| image_error(path, e))?;
    writer.finish().map_err(|e| image_error(path, e))
}

/// Writes an 8-bit grayscale mask.
pub fn write_mask_png(path: &Path, mask: &crate::scene::Mask) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), mask.width as u32, mask.height as u32);
    encoder.set_color(ColorType::Grayscale);
    encoder.set_depth(BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| image_error(path, e))?;
    let data: Vec<u8> = mask.bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
    writer.write_image_data(&data).map_err(|e| image_error(path, e))?;
    writer.finish().map_err(|e| image_error(path, e))
}

pub fn render_to_image(render: &RenderOutput) -> RgbaImage {
    RgbaImage {
        width: render.width,
        height: render.height,
        pixels: render
            .rgb
            .iter()
            .zip(&render.alpha)
            .map(|(c, &a)| [c[0], c[1], c[2], a.clamp(0.0, 1.0)])
            .collect(),
    }
}

/// Treats a decoded raster as a render, so it can be scored like one.
pub fn image_as_render(image: &RgbaImage) -> RenderOutput {
    RenderOutput {
        width: image.width,
        height: image.height,
        rgb: image.pixels.iter().map(|p| [p[0], p[1], p[2]]).collect(),
        alpha: image.pixels.iter().map(|p| p[3]).collect(),
    }
}
