//! Binary PGM (P5) masks: 255 marks a valid pixel.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

fn read_token(reader: &mut impl BufRead) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            if token.is_empty() {
                return Err(Error::Format("unexpected end of PGM header".into()));
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
    String::from_utf8(token).map_err(|_| Error::Format("non-ASCII PGM header".into()))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Grid<bool>> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    let magic = read_token(&mut reader)?;
    if magic != "P5" {
        return Err(Error::Format(format!("bad PGM magic '{magic}'")));
    }
    let width: usize = read_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("bad PGM width".into()))?;
    let height: usize = read_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("bad PGM height".into()))?;
    let maxval: usize = read_token(&mut reader)?
        .parse()
        .map_err(|_| Error::Format("bad PGM maxval".into()))?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format("unsupported PGM maxval".into()));
    }
    let mut payload = vec![0u8; width * height];
    reader.read_exact(&mut payload)?;
    Grid::from_vec(height, width, payload.iter().map(|b| *b > 0).collect())
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Grid<bool>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    write!(writer, "P5\n{} {}\n255\n", mask.width(), mask.height())?;
    let bytes: Vec<u8> = mask.data().iter().map(|v| if *v { 255 } else { 0 }).collect();
    writer.write_all(&bytes)?;
    writer.flush()?;
    Ok(())
}
