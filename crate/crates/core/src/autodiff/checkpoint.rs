//! Binary checkpoint container. All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   "NARCKPT\0"
//! version      u32       CHECKPOINT_VERSION
//! config_len   u32       length of the config echo in bytes
//! config       UTF-8     free-form (the model layer stores JSON here)
//! count        u32       number of parameters
//! count x {
//!     name_len u32, name UTF-8
//!     rank     u32       always 2
//!     dims     u64 x rank
//!     values   f64 x product(dims), row-major
//! }
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ParameterStore, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"NARCKPT\0";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O at {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

impl From<io::Error> for CheckpointError {
    fn from(source: io::Error) -> Self {
        CheckpointError::Io {
            path: "<stream>".into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub params: ParameterStore,
}

pub fn write_checkpoint(
    mut w: impl Write,
    params: &ParameterStore,
    config: &str,
) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    write_bytes(&mut w, config.as_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in params.iter() {
        write_bytes(&mut w, name.as_bytes())?;
        w.write_all(&2u32.to_le_bytes())?;
        for dim in tensor.shape() {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_bytes(w: &mut impl Write, bytes: &[u8]) -> io::Result<()> {
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(bytes)
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string(r: &mut impl Read) -> Result<String, CheckpointError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CheckpointError::Malformed(e.to_string()))
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let config = read_string(&mut r)?;
    let count = read_u32(&mut r)?;
    let mut params = ParameterStore::new();
    for _ in 0..count {
        let name = read_string(&mut r)?;
        let rank = read_u32(&mut r)?;
        if rank != 2 {
            return Err(CheckpointError::Malformed(format!(
                "parameter `{name}` has rank {rank}"
            )));
        }
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        if params.index_of(&name).is_some() {
            return Err(CheckpointError::Malformed(format!(
                "duplicate parameter `{name}`"
            )));
        }
        let tensor =
            Tensor::new(rows, cols, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        params.insert(name, tensor);
    }
    Ok(Checkpoint { config, params })
}

pub fn save_checkpoint(
    path: &Path,
    params: &ParameterStore,
    config: &str,
) -> Result<(), CheckpointError> {
    let with_path = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(with_path)?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, params, config).map_err(with_path)?;
    w.flush().map_err(with_path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let file = File::open(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_checkpoint(BufReader::new(file)).map_err(|e| match e {
        CheckpointError::Io { source, .. } => CheckpointError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}
