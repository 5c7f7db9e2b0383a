//! File formats: the FMAP float-map container, 8-bit PNG images and the raw
//! Hounsfield dump with its JSON header.
//!
//! FMAP layout, all integers little-endian:
//!
//! ```text
//! "FMAP"                          4 ASCII magic bytes
//! height, width, channels        3 x u32
//! role code                       1 byte (MapRole::code)
//! validity bitmap                 ceil(height*width / 8) bytes,
//!                                 row-major, 8 pixels per byte, MSB first
//! samples                         height*width*channels x f32,
//!                                 row-major, channel-interleaved
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{HuGrid, ImageGrid, MapField, MapRole, RangeTag};

const MAGIC: &[u8; 4] = b"FMAP";

pub fn write_fmap(path: &Path, field: &MapField) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io)?;
    for dim in [field.height(), field.width(), field.channels()] {
        w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    }
    w.write_all(&[field.role().code()]).map_err(io)?;
    w.write_all(&pack_bits(field.validity())).map_err(io)?;
    for &v in field.data() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_fmap(path: &Path) -> Result<MapField> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    decode_fmap(&bytes).map_err(|e| match e {
        Error::Format { detail, .. } => Error::format(format!("FMAP {}", path.display()), detail),
        other => other,
    })
}

fn decode_fmap(bytes: &[u8]) -> Result<MapField> {
    let bad = |detail: &str| Error::format("FMAP", detail);
    if bytes.len() < 17 {
        return Err(bad("file shorter than the fixed header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let dim = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(4), dim(8), dim(12));
    if h == 0 || w == 0 || c == 0 || h.saturating_mul(w).saturating_mul(c) > (1 << 28) {
        return Err(bad("implausible dimensions"));
    }
    let role = MapRole::from_code(bytes[16])
        .ok_or_else(|| bad(&format!("unknown role code {}", bytes[16])))?;

    let bitmap_len = (h * w).div_ceil(8);
    let expected = 17 + bitmap_len + h * w * c * 4;
    if bytes.len() != expected {
        return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let valid = unpack_bits(&bytes[17..17 + bitmap_len], h * w);
    let mut data = Vec::with_capacity(h * w * c);
    for chunk in bytes[17 + bitmap_len..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    // Invalid pixels may carry arbitrary bytes on disk; zero them so the
    // container's finite-sample check only sees valid pixels' payload.
    for (px, ok) in valid.iter().enumerate() {
        if !ok {
            data[px * c..(px + 1) * c].fill(0.0);
        }
    }
    MapField::new(role, h, w, c, data, valid)
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (idx, &bit) in bits.iter().enumerate() {
        if bit {
            out[idx / 8] |= 0x80 >> (idx % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|idx| bytes[idx / 8] & (0x80 >> (idx % 8)) != 0).collect()
}

/// Write a UNIT-range image as an 8-bit PNG (grayscale or RGB by channel count).
pub fn write_png(path: &Path, img: &ImageGrid) -> Result<()> {
    if img.range_tag() != RangeTag::Unit {
        return Err(Error::Contract("PNG export requires a UNIT-range image".into()));
    }
    let quantize = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let h = img.height() as u32;
    let w = img.width() as u32;
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let io = |e: image::ImageError| Error::format(format!("PNG {}", path.display()), e.to_string());
    match img.channels() {
        1 => image::GrayImage::from_raw(w, h, bytes)
            .expect("sized buffer")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(io),
        3 => image::RgbImage::from_raw(w, h, bytes)
            .expect("sized buffer")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(io),
        c => Err(Error::Contract(format!("PNG export supports 1 or 3 channels, got {c}"))),
    }
}

/// Read an 8-bit PNG into a UNIT-range image, keeping its channel count
/// (grayscale stays 1 channel, color becomes RGB).
pub fn read_png(path: &Path) -> Result<ImageGrid> {
    let img = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::format(format!("PNG {}", path.display()), e.to_string()))?;
    let (data, h, w, c) = match img {
        image::DynamicImage::ImageLuma8(g) => {
            let (w, h) = (g.width() as usize, g.height() as usize);
            (g.into_raw(), h, w, 1)
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = (rgb.width() as usize, rgb.height() as usize);
            (rgb.into_raw(), h, w, 3)
        }
    };
    let floats = data.iter().map(|&b| b as f32 / 255.0).collect();
    ImageGrid::new(h, w, c, RangeTag::Unit, floats)
}

/// JSON header written next to a raw HU dump.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HuHeader {
    pub h: usize,
    pub w: usize,
    pub slices: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<crate::quality::WindowSpec>,
}

/// Write stacked HU slices as little-endian i16 at `path`, with a JSON header
/// at `path` + ".json".
pub fn write_hu_raw(path: &Path, slices: &[HuGrid], window: Option<crate::quality::WindowSpec>) -> Result<()> {
    let header = write_hu_payload(path, slices, window)?;
    write_hu_header(&hu_header_path(path), &header)
}

/// The raw i16 payload alone; returns the header describing it.
pub fn write_hu_payload(
    path: &Path,
    slices: &[HuGrid],
    window: Option<crate::quality::WindowSpec>,
) -> Result<HuHeader> {
    if slices.is_empty() {
        return Err(Error::Argument("at least one HU slice required".into()));
    }
    let (h, w) = (slices[0].height, slices[0].width);
    if slices.iter().any(|s| s.height != h || s.width != w) {
        return Err(Error::Contract("HU slices must share one shape".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for slice in slices {
        for &v in &slice.data {
            out.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(HuHeader { h, w, slices: slices.len(), window })
}

pub fn write_hu_header(path: &Path, header: &HuHeader) -> Result<()> {
    let json = serde_json::to_string_pretty(header).expect("header serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_hu_raw(path: &Path) -> Result<(Vec<HuGrid>, HuHeader)> {
    let header_path = hu_header_path(path);
    let text = std::fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: HuHeader = serde_json::from_str(&text)
        .map_err(|e| Error::format(format!("HU header {}", header_path.display()), e.to_string()))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = header.h * header.w * header.slices * 2;
    if bytes.len() != expected {
        return Err(Error::format(
            format!("HU raw {}", path.display()),
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut slices = Vec::with_capacity(header.slices);
    for s in 0..header.slices {
        let start = s * header.h * header.w * 2;
        let data = bytes[start..start + header.h * header.w * 2]
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes(b.try_into().unwrap()))
            .collect();
        slices.push(HuGrid::new(header.h, header.w, data)?);
    }
    Ok((slices, header))
}

/// Header location for an HU payload: the payload path plus ".json".
pub fn hu_header_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    os.into()
}
