//! Binary model files.
//!
//! Layout: the magic line `CFNN1\n`, a little-endian `u32` header length,
//! a JSON header (config, ensemble state, parameter name table, value
//! count), the parameter values as little-endian `f64`, and a CRC32 of
//! everything between the magic line and the trailer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use cfnn::models::{Model, ModelConfig, ModelState, ParamBlock};
use cfnn::{Error, Result, Scalar};

pub const MAGIC: &[u8; 6] = b"CFNN1\n";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    state: ModelState,
    blocks: Vec<ParamBlock>,
    count: usize,
}

pub fn encode<T: Scalar>(model: &Model<T>) -> Result<Vec<u8>> {
    let header = Header {
        config: model.config().clone(),
        state: model.state().clone(),
        blocks: model.params().blocks().to_vec(),
        count: model.param_count(),
    };
    let json = serde_json::to_vec(&header)?;
    let len =
        u32::try_from(json.len()).map_err(|_| Error::Format("header exceeds 4 GiB".into()))?;
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + 8 * header.count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in model.params().values() {
        out.extend_from_slice(&v.f64().to_le_bytes());
    }
    let crc = crc32fast::hash(&out[MAGIC.len()..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<Model<T>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("expected magic \"CFNN1\"".into()));
    }
    let body = &bytes[MAGIC.len()..];
    if body.len() < 8 {
        return Err(Error::Checksum("file ends before the header".into()));
    }
    let (body, trailer) = body.split_at(body.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("four bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Checksum(format!(
            "stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let len = u32::from_le_bytes(body[..4].try_into().expect("four bytes")) as usize;
    let rest = &body[4..];
    if rest.len() < len {
        return Err(Error::Format("header length exceeds file".into()));
    }
    let header: Header = serde_json::from_slice(&rest[..len])?;
    let payload = &rest[len..];
    if payload.len() != 8 * header.count {
        return Err(Error::Format(format!(
            "{} payload bytes for {} values",
            payload.len(),
            header.count
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("eight bytes"))))
        .collect();
    Model::from_parts(header.config, header.state, header.blocks, values)
}

pub fn save_model<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
