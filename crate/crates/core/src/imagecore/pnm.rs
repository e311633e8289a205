//! Binary PGM (P5) / PPM (P6) with maxval 255, plus the `labels.csv`
//! dataset index.

use std::fs;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    let n = img.plane_len();
    out.reserve(n * img.channels());
    for i in 0..n {
        for c in 0..img.channels() {
            out.push(img.data()[c * n + i].round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = bytes
        .get(..2)
        .ok_or_else(|| Error::Format("empty PNM".into()))?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::Format("not a binary PGM/PPM (P5/P6)".into())),
    };
    pos += 2;
    let width = header_number(bytes, &mut pos)?;
    let height = header_number(bytes, &mut pos)?;
    let maxval = header_number(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "maxval {maxval} unsupported (need 255)"
        )));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after header".into())),
    }
    let n = width * height;
    let raster = bytes
        .get(pos..pos + n * channels)
        .ok_or_else(|| Error::Format(format!("raster truncated: need {} bytes", n * channels)))?;
    let mut data = vec![0.0; n * channels];
    for (i, px) in raster.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * n + i] = f64::from(v);
        }
    }
    Image::from_data(width, height, channels, data)
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format("header truncated".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::Format(format!("bad header number at byte {start}")))
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn write_pnm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(img)).map_err(|e| Error::io(path, e))
}

/// Reads `filename,label_index` rows (no header).
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<(String, usize)>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let (name, label): (String, usize) = record?;
        rows.push((name, label));
    }
    Ok(rows)
}

pub fn write_labels(path: impl AsRef<Path>, rows: &[(String, usize)]) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
