//! Lookup-table persistence.
//!
//! Flat little-endian layout: magic `ERPLUT1`, u32 height, u32 width, then
//! `H·W` records of `(f32 row, f32 col, u8 valid)` in row-major order, and a
//! 32-byte fingerprint footer.

use std::io::{Read, Write};
use std::path::Path;

use crate::canonical::ErpLookupTable;
use crate::error::{Error, Result};
use crate::grid::Grid;

const MAGIC: &[u8; 7] = b"ERPLUT1";

pub fn write_lut(path: impl AsRef<Path>, table: &ErpLookupTable) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    writer.write_all(MAGIC)?;
    writer.write_all(&(table.erp_size.0 as u32).to_le_bytes())?;
    writer.write_all(&(table.erp_size.1 as u32).to_le_bytes())?;
    for (row, col, &(sr, sc)) in table.coords.iter_indexed() {
        writer.write_all(&sr.to_le_bytes())?;
        writer.write_all(&sc.to_le_bytes())?;
        writer.write_all(&[u8::from(table.valid[(row, col)])])?;
    }
    writer.write_all(&table.fingerprint)?;
    writer.flush()?;
    Ok(())
}

/// Load a persisted table. The source-camera size is not part of the file,
/// so the caller supplies it (the fingerprint pins the generating camera).
pub fn read_lut(path: impl AsRef<Path>, src_size: (usize, usize)) -> Result<ErpLookupTable> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);

    let mut magic = [0u8; 7];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad lookup-table magic".into()));
    }
    let mut dim = [0u8; 4];
    reader.read_exact(&mut dim)?;
    let h = u32::from_le_bytes(dim) as usize;
    reader.read_exact(&mut dim)?;
    let w = u32::from_le_bytes(dim) as usize;
    if h == 0 || w == 0 || h.checked_mul(w).is_none() {
        return Err(Error::Format("degenerate lookup-table dimensions".into()));
    }

    let mut payload = vec![0u8; h * w * 9];
    reader.read_exact(&mut payload)?;
    let mut fingerprint = [0u8; 32];
    reader.read_exact(&mut fingerprint)?;

    let mut coords = Vec::with_capacity(h * w);
    let mut valid = Vec::with_capacity(h * w);
    for record in payload.chunks_exact(9) {
        let sr = f32::from_le_bytes([record[0], record[1], record[2], record[3]]);
        let sc = f32::from_le_bytes([record[4], record[5], record[6], record[7]]);
        coords.push((sr, sc));
        valid.push(record[8] != 0);
    }
    Ok(ErpLookupTable {
        erp_size: (h, w),
        src_size,
        coords: Grid::from_vec(h, w, coords)?,
        valid: Grid::from_vec(h, w, valid)?,
        fingerprint,
    })
}
