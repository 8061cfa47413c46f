//! Organized scans stored as 3-channel 32-bit float TIFF images (x, y, z per pixel).

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::ColorType;

use super::OrganizedCloud;
use crate::error::{Error, Result};

pub fn load_organized_tiff(path: impl AsRef<Path>) -> Result<OrganizedCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let fmt = |e: tiff::TiffError| Error::Format(format!("{}: {e}", path.display()));
    let mut decoder = Decoder::new(BufReader::new(file)).map_err(fmt)?;
    let (width, height) = decoder.dimensions().map_err(fmt)?;
    let channels = match decoder.colortype().map_err(fmt)? {
        ColorType::RGB(_) => 3,
        ColorType::Gray(_) => 1,
        ColorType::GrayA(_) => 2,
        ColorType::RGBA(_) | ColorType::CMYK(_) => 4,
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported color type {other:?}, expected 3 float channels",
                path.display()
            )))
        }
    };
    if channels != 3 {
        return Err(Error::Format(format!(
            "{}: channel count is {channels}, expected 3 (x, y, z)",
            path.display()
        )));
    }
    let data = match decoder.read_image().map_err(fmt)? {
        DecodingResult::F32(v) => v,
        other => {
            return Err(Error::Format(format!(
                "{}: sample dtype is {}, expected float32",
                path.display(),
                dtype_name(&other)
            )))
        }
    };
    let (height, width) = (height as usize, width as usize);
    if data.len() != height * width * 3 {
        return Err(Error::Format(format!(
            "{}: pixel payload has {} samples, expected {}",
            path.display(),
            data.len(),
            height * width * 3
        )));
    }
    let points = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    OrganizedCloud::from_xyz(height, width, points)
}

/// Writes the grid's raw samples; invalid pixels keep whatever coordinates they hold.
pub fn save_organized_tiff(oc: &OrganizedCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = TiffEncoder::new(BufWriter::new(file))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let data: Vec<f32> = oc.points().iter().flatten().copied().collect();
    encoder
        .write_image::<colortype::RGB32Float>(oc.width() as u32, oc.height() as u32, &data)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn dtype_name(r: &DecodingResult) -> &'static str {
    match r {
        DecodingResult::U8(_) => "uint8",
        DecodingResult::U16(_) => "uint16",
        DecodingResult::U32(_) => "uint32",
        DecodingResult::U64(_) => "uint64",
        DecodingResult::I8(_) => "int8",
        DecodingResult::I16(_) => "int16",
        DecodingResult::I32(_) => "int32",
        DecodingResult::I64(_) => "int64",
        DecodingResult::F32(_) => "float32",
        DecodingResult::F64(_) => "float64",
    }
}
