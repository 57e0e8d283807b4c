use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use voxfilter_core::pgm;

use crate::CliError;

/// Writes an 8-bit grey image as PNG, or as binary PGM when the extension
/// is `.pgm`.
pub fn write_grey(path: &Path, width: u32, height: u32, pixels: &[u8]) -> Result<(), CliError> {
    let is_pgm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        return Ok(pgm::write(path, width as usize, height as usize, pixels)?);
    }
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let file = File::create(path).map_err(io)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(pixels).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

/// Reads back a grey PNG (used by tests and the determinism check).
pub fn read_png(path: &Path) -> Result<(u32, u32, Vec<u8>), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let dec = png::Decoder::new(std::io::BufReader::new(File::open(path).map_err(io)?));
    let err = |e: png::DecodingError| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut reader = dec.read_info().map_err(err)?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(err)?;
    buf.truncate(info.buffer_size());
    Ok((info.width, info.height, buf))
}
