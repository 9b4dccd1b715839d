//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ERPD" | u32 version | u32 json_len | json bytes |
//! repeated: u16 name_len | name | u8 rank | u32 dims… | f32le payload
//! ```
//!
//! EMA tensors are stored under names suffixed `.ema`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::CoreError;
use crate::Result;

use super::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ERPD";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes raw and EMA tensors plus an opaque JSON config header.
pub fn save_checkpoint(store: &ParamStore<f32>, config_json: &str, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(config_json.as_bytes());

    let mut write_entry = |name: &str, t: &Tensor<f32>| {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.shape().len() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (name, t) in store.iter() {
        write_entry(name, t);
    }
    for (name, t) in store.iter_ema() {
        write_entry(&format!("{name}.ema"), t);
    }

    let mut f =
        fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    f.write_all(&buf)
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}

/// Reads a checkpoint back; returns the store and the JSON config header.
pub fn load_checkpoint(path: &Path) -> Result<(ParamStore<f32>, String)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut off = 0usize;
    let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
        if *off + n > bytes.len() {
            return Err(CoreError::Format(format!(
                "checkpoint {} truncated at byte {}",
                path.display(),
                *off
            )));
        }
        let s = &bytes[*off..*off + n];
        *off += n;
        Ok(s)
    };

    if take(&mut off, 4)? != CHECKPOINT_MAGIC {
        return Err(CoreError::Format(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CoreError::Format(format!(
            "checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let json_len = u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize;
    let config_json = String::from_utf8(take(&mut off, json_len)?.to_vec())
        .map_err(|_| CoreError::Format("checkpoint config is not UTF-8".into()))?;

    let mut raw: Vec<(String, Tensor<f32>)> = Vec::new();
    let mut ema: Vec<(String, Tensor<f32>)> = Vec::new();
    while off < bytes.len() {
        let name_len = u16::from_le_bytes(take(&mut off, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
            .map_err(|_| CoreError::Format("tensor name is not UTF-8".into()))?;
        let rank = take(&mut off, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(&mut off, 4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let payload = take(&mut off, numel * 4)?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::from_vec(&shape, data)?;
        match name.strip_suffix(".ema") {
            Some(base) => ema.push((base.to_string(), tensor)),
            None => raw.push((name, tensor)),
        }
    }

    let mut store = ParamStore::new();
    for (name, t) in raw {
        store.insert(&name, t);
    }
    for (name, t) in ema {
        store.insert_ema(&name, t)?;
    }
    Ok((store, config_json))
}
