//! Scale-head weight persistence.
//!
//! Layout: magic `DGSEW1`, u32 tensor count, then a manifest of named
//! tensors (u32 name length, UTF-8 name, u32 rank, rank u32 dims), followed
//! by the payloads as row-major little-endian f32 in manifest order.

use std::io::{Read, Write};
use std::path::Path;

use crate::dgse::HeadWeights;
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"DGSEW1";

fn manifest(d: usize) -> Vec<(&'static str, Vec<u32>)> {
    let h = 2 * d as u32;
    let d = d as u32;
    vec![
        ("attn.wq", vec![d, d]),
        ("attn.wk", vec![d, d]),
        ("attn.wv", vec![d, d]),
        ("scale_mlp.w1", vec![h, d]),
        ("scale_mlp.b1", vec![h]),
        ("scale_mlp.w2", vec![1, h]),
        ("scale_mlp.b2", vec![1]),
        ("shift_mlp.w1", vec![h, d]),
        ("shift_mlp.b1", vec![h]),
        ("shift_mlp.w2", vec![1, h]),
        ("shift_mlp.b2", vec![1]),
    ]
}

fn tensor_slices(w: &HeadWeights) -> Vec<Vec<f64>> {
    vec![
        w.wq.clone(),
        w.wk.clone(),
        w.wv.clone(),
        w.scale_w1.clone(),
        w.scale_b1.clone(),
        w.scale_w2.clone(),
        vec![w.scale_b2],
        w.shift_w1.clone(),
        w.shift_b1.clone(),
        w.shift_w2.clone(),
        vec![w.shift_b2],
    ]
}

pub fn write_head_weights(path: impl AsRef<Path>, weights: &HeadWeights) -> Result<()> {
    weights.validate()?;
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    let entries = manifest(weights.channels);
    writer.write_all(MAGIC)?;
    writer.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, dims) in &entries {
        writer.write_all(&(name.len() as u32).to_le_bytes())?;
        writer.write_all(name.as_bytes())?;
        writer.write_all(&(dims.len() as u32).to_le_bytes())?;
        for dim in dims {
            writer.write_all(&dim.to_le_bytes())?;
        }
    }
    for tensor in tensor_slices(weights) {
        for v in tensor {
            writer.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_head_weights(path: impl AsRef<Path>) -> Result<HeadWeights> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);

    let mut magic = [0u8; 6];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad weight-file magic".into()));
    }
    let read_u32 = |reader: &mut dyn Read| -> Result<u32> {
        let mut buf = [0u8; 4];
        reader.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    };
    let count = read_u32(&mut reader)? as usize;
    let mut names = Vec::with_capacity(count);
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut reader)? as usize;
        if name_len > 256 {
            return Err(Error::Format("unreasonable tensor name length".into()));
        }
        let mut name = vec![0u8; name_len];
        reader.read_exact(&mut name)?;
        let name =
            String::from_utf8(name).map_err(|_| Error::Format("non-UTF8 tensor name".into()))?;
        let rank = read_u32(&mut reader)? as usize;
        if rank > 8 {
            return Err(Error::Format("unreasonable tensor rank".into()));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut reader)?);
        }
        names.push(name);
        shapes.push(dims);
    }

    let mut tensors = std::collections::HashMap::new();
    for (name, dims) in names.iter().zip(&shapes) {
        let len: usize = dims.iter().map(|d| *d as usize).product();
        let mut payload = vec![0u8; len * 4];
        reader.read_exact(&mut payload)?;
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        tensors.insert(name.clone(), (dims.clone(), values));
    }

    let (wq_dims, _) = tensors
        .get("attn.wq")
        .ok_or_else(|| Error::Format("missing tensor attn.wq".into()))?;
    if wq_dims.len() != 2 || wq_dims[0] != wq_dims[1] {
        return Err(Error::Format("attn.wq must be square".into()));
    }
    let d = wq_dims[0] as usize;

    let mut take = |name: &str, dims: &[u32]| -> Result<Vec<f64>> {
        let (got_dims, values) = tensors
            .remove(name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
        if got_dims != dims {
            return Err(Error::Format(format!(
                "tensor {name} has dims {got_dims:?}, expected {dims:?}"
            )));
        }
        Ok(values)
    };
    let expected = manifest(d);
    let mut lookup = std::collections::HashMap::new();
    for (name, dims) in &expected {
        lookup.insert(*name, dims.clone());
    }
    let weights = HeadWeights {
        channels: d,
        wq: take("attn.wq", &lookup["attn.wq"])?,
        wk: take("attn.wk", &lookup["attn.wk"])?,
        wv: take("attn.wv", &lookup["attn.wv"])?,
        scale_w1: take("scale_mlp.w1", &lookup["scale_mlp.w1"])?,
        scale_b1: take("scale_mlp.b1", &lookup["scale_mlp.b1"])?,
        scale_w2: take("scale_mlp.w2", &lookup["scale_mlp.w2"])?,
        scale_b2: take("scale_mlp.b2", &lookup["scale_mlp.b2"])?[0],
        shift_w1: take("shift_mlp.w1", &lookup["shift_mlp.w1"])?,
        shift_b1: take("shift_mlp.b1", &lookup["shift_mlp.b1"])?,
        shift_w2: take("shift_mlp.w2", &lookup["shift_mlp.w2"])?,
        shift_b2: take("shift_mlp.b2", &lookup["shift_mlp.b2"])?[0],
    };
    weights.validate()?;
    Ok(weights)
}
