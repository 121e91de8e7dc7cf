//! Grayscale PFM (portable float map) reader/writer.
//!
//! Written form: `Pf`, dimensions, scale −1.0 (little-endian), scanlines
//! bottom-up as the format prescribes. The reader also accepts big-endian
//! files (positive scale).

use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Read a whitespace-delimited ASCII token, skipping `#` comments.
fn read_token(reader: &mut impl BufRead) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            if token.is_empty() {
                return Err(Error::Format("unexpected end of PFM header".into()));
            }
            break;
        }
        let b = byte[0];
        if b == b'#' && token.is_empty() {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            continue;
        }
        if b.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(b);
    }
    String::from_utf8(token).map_err(|_| Error::Format("non-ASCII PFM header".into()))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Grid<f64>> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);

    let magic = read_token(&mut reader)?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::Format("color PFM not supported".into())),
        other => return Err(Error::Format(format!("bad PFM magic '{other}'"))),
    }
    let width: usize = read_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("bad PFM width".into()))?;
    let height: usize = read_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("bad PFM height".into()))?;
    let scale: f64 = read_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    if scale == 0.0 || width == 0 || height == 0 {
        return Err(Error::Format("degenerate PFM header".into()));
    }
    let little_endian = scale < 0.0;

    let mut payload = vec![0u8; width * height * 4];
    reader.read_exact(&mut payload)?;

    let mut grid = Grid::filled(height, width, 0.0f64);
    // PFM scanlines run bottom-up.
    for (line, chunk) in payload.chunks_exact(width * 4).enumerate() {
        let row = height - 1 - line;
        for (col, bytes) in chunk.chunks_exact(4).enumerate() {
            let raw = [bytes[0], bytes[1], bytes[2], bytes[3]];
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            grid.set(row, col, v as f64);
        }
    }
    Ok(grid)
}

pub fn write_pfm(path: impl AsRef<Path>, grid: &Grid<f64>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    write!(writer, "Pf\n{} {}\n-1.0\n", grid.width(), grid.height())?;
    for row in (0..grid.height()).rev() {
        for col in 0..grid.width() {
            writer.write_all(&(grid[(row, col)] as f32).to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}
