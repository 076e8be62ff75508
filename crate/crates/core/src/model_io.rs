//! Model files: pretty JSON envelopes `{"format", "version", "kind", "model"}`.
//!
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so a save/load cycle is lossless at `f64` precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsModel;
use crate::error::{Error, Result};
use crate::policy::PolicyModel;

pub const FORMAT: &str = "ccil-model";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    model: T,
}

pub trait ModelKind: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

impl ModelKind for DynamicsModel {
    const KIND: &'static str = "dynamics";
}

impl ModelKind for PolicyModel {
    const KIND: &'static str = "policy";
}

pub fn to_json<M: ModelKind>(model: &M) -> Result<String> {
    let env = Envelope {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: M::KIND.to_string(),
        model,
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub fn from_json<M: ModelKind>(text: &str) -> Result<M> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
        kind: String,
    }
    let header: Header = serde_json::from_str(text).map_err(|e| Error::Schema {
        location: "model header".into(),
        message: e.to_string(),
    })?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Schema {
            location: "model header".into(),
            message: format!("unsupported format {} v{}", header.format, header.version),
        });
    }
    if header.kind != M::KIND {
        return Err(Error::Schema {
            location: "model header".into(),
            message: format!("expected a {} model, found {}", M::KIND, header.kind),
        });
    }
    let env: Envelope<M> = serde_json::from_str(text)?;
    Ok(env.model)
}

pub fn save<M: ModelKind>(model: &M, path: &Path) -> Result<()> {
    let text = to_json(model)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load<M: ModelKind>(path: &Path) -> Result<M> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    std::io::Read::read_to_string(&mut BufReader::new(file), &mut text).map_err(|e| Error::io(path, e))?;
    from_json(&text).map_err(|e| match e {
        Error::Schema { message, .. } => Error::Schema {
            location: path.display().to_string(),
            message,
        },
        other => other,
    })
}
