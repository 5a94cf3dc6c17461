//! Self-describing model checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! bytes 0..4    magic  b"SBCK"
//! bytes 4..8    u32    format version (1)
//! bytes 8..16   u64    header length in bytes
//! ...           JSON   header: {"spec", "step_count", "arrays":[{name, shape}]}
//! per array     u64    element count, then count * f64 values
//! ```
//!
//! Arrays appear in layout order (see [`super::layout::parameter_layout`])
//! and carry raw f64 bits, so a save/load round trip is lossless.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::layout::parameter_layout;
use super::spec::ModelSpec;
use super::state::ModelState;

const MAGIC: &[u8; 4] = b"SBCK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    step_count: u64,
    arrays: Vec<ArrayInfo>,
}

#[derive(Serialize, Deserialize)]
struct ArrayInfo {
    name: String,
    shape: Vec<usize>,
}

pub fn save(state: &ModelState, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    write(state, &mut out)
}

pub fn load(path: &Path) -> Result<ModelState> {
    let file = std::fs::File::open(path)?;
    let mut input = std::io::BufReader::new(file);
    read(&mut input)
}

pub fn write(state: &ModelState, out: &mut impl Write) -> Result<()> {
    let layout = parameter_layout(state.spec());
    let header = Header {
        spec: state.spec().clone(),
        step_count: state.step_count(),
        arrays: layout
            .iter()
            .map(|def| ArrayInfo { name: def.name.clone(), shape: def.shape.clone() })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| Error::Checkpoint(format!("header encoding failed: {e}")))?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    out.write_all(&header_bytes)?;
    for def in &layout {
        let tensor = state.param(&def.name).expect("layout names are the param keys");
        out.write_all(&(tensor.numel() as u64).to_le_bytes())?;
        for v in tensor.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read(input: &mut impl Read) -> Result<ModelState> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut len_bytes = [0u8; 8];
    input.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    input.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Checkpoint(format!("header decoding failed: {e}")))?;

    let layout = parameter_layout(&header.spec);
    if layout.len() != header.arrays.len() {
        return Err(Error::Checkpoint(format!(
            "array directory lists {} tensors, layout expects {}",
            header.arrays.len(),
            layout.len()
        )));
    }
    let mut params = BTreeMap::new();
    for (def, info) in layout.iter().zip(&header.arrays) {
        if def.name != info.name || def.shape != info.shape {
            return Err(Error::Checkpoint(format!(
                "array `{}` {:?} does not match layout `{}` {:?}",
                info.name, info.shape, def.name, def.shape
            )));
        }
        input.read_exact(&mut len_bytes)?;
        let count = u64::from_le_bytes(len_bytes) as usize;
        let expected: usize = def.shape.iter().product();
        if count != expected {
            return Err(Error::Checkpoint(format!(
                "array `{}` holds {count} values, shape {:?} needs {expected}",
                def.name, def.shape
            )));
        }
        let mut data = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        params.insert(def.name.clone(), Tensor::new(def.shape.clone(), data)?);
    }
    ModelState::from_parts(header.spec, params, header.step_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::spec::{ModelKind, ModelSpec};

    fn tiny_state() -> ModelState {
        let mut spec = ModelSpec::with_defaults(ModelKind::AttentionLstm);
        spec.past_history = 6;
        spec.hidden_dim = 4;
        spec.num_heads = 2;
        spec.num_encoder_layers = 1;
        ModelState::build(spec).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let state = tiny_state();
        let mut bytes = Vec::new();
        write(&state, &mut bytes).unwrap();
        let back = read(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.spec(), state.spec());
        assert_eq!(back.step_count(), state.step_count());
        assert_eq!(back.params(), state.params());
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let state = tiny_state();
        let mut bytes = Vec::new();
        write(&state, &mut bytes).unwrap();
        bytes[0] = b'X';
        assert!(matches!(read(&mut bytes.as_slice()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn truncated_payload_is_an_error() {
        let state = tiny_state();
        let mut bytes = Vec::new();
        write(&state, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 9);
        assert!(read(&mut bytes.as_slice()).is_err());
    }
}
