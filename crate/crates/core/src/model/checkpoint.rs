//! Single-file weight archive:
//! `CAVECKPT | u32 version | u64 header length | JSON header | f32 LE data`.
//! The header carries the network configuration, the parameter table and
//! free-form metadata, so a checkpoint is self-describing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CaveConfig, SegNet};
use crate::error::{CaveError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CAVECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: CaveConfig,
    params: Vec<ParamEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub struct Checkpoint {
    pub model: SegNet,
    pub meta: serde_json::Value,
}

pub fn save_checkpoint(model: &SegNet, meta: &serde_json::Value, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        config: model.config().clone(),
        params: model
            .params()
            .iter()
            .map(|(_, name, t)| ParamEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CaveError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| CaveError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| CaveError::io(path, e));
    write(CHECKPOINT_MAGIC)?;
    write(&CHECKPOINT_VERSION.to_le_bytes())?;
    write(&(json.len() as u64).to_le_bytes())?;
    write(&json)?;
    for (_, _, t) in model.params().iter() {
        for v in t.data() {
            write(&v.to_le_bytes())?;
        }
    }
    out.flush().map_err(|e| CaveError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CaveError::io(path, e))?;
    let mut inp = BufReader::new(file);
    let mut read = |buf: &mut [u8]| {
        inp.read_exact(buf)
            .map_err(|_| CaveError::Format(format!("{}: truncated checkpoint", path.display())))
    };
    let mut magic = [0u8; 8];
    read(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CaveError::Format(format!("{}: not a checkpoint", path.display())));
    }
    let mut b4 = [0u8; 4];
    read(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CHECKPOINT_VERSION {
        return Err(CaveError::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut b8 = [0u8; 8];
    read(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; len];
    read(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;

    // the layout comes from the config; the file must agree with it entry by entry
    let mut model = SegNet::new(header.config, 0)?;
    if header.params.len() != model.params().len() {
        return Err(CaveError::Format(format!(
            "checkpoint lists {} parameters, configuration implies {}",
            header.params.len(),
            model.params().len()
        )));
    }
    let ids: Vec<_> = model.params().ids().collect();
    for (id, entry) in ids.into_iter().zip(&header.params) {
        let store = model.params_mut();
        if store.name(id) != entry.name || store.get(id).shape() != entry.shape.as_slice() {
            return Err(CaveError::Format(format!(
                "parameter {} {:?} does not match expected {} {:?}",
                entry.name,
                entry.shape,
                store.name(id),
                store.get(id).shape()
            )));
        }
        let t = store.get_mut(id);
        let mut bytes = vec![0u8; t.len() * 4];
        read(&mut bytes)?;
        for (v, b) in t.data_mut().iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    let mut rest = [0u8; 1];
    if inp.read(&mut rest).map_err(|e| CaveError::io(path, e))? != 0 {
        return Err(CaveError::Format(format!("{}: trailing bytes after weights", path.display())));
    }
    Ok(Checkpoint {
        model,
        meta: header.meta,
    })
}
