//! Checkpoints: a JSON header next to one flat tensor of parameters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tttk_core::tensorfile::Tensor;

use crate::error::{NnError, Result};
use crate::nets::{Architecture, Net};
use crate::params::{ParamLayout, Params};
use crate::scalar::NnScalar;
use crate::train::History;

pub const HEADER_FILE: &str = "checkpoint.json";
pub const PARAMS_FILE: &str = "params.tttk";
const FORMAT: &str = "tttk-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub arch: Architecture,
    pub init_seed: u64,
    pub layout: ParamLayout,
    #[serde(default)]
    pub history: Option<History>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub arch: Architecture,
    pub init_seed: u64,
    pub history: Option<History>,
    pub params: Params<T>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> NnError + '_ {
    move |source| NnError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: PathBuf, message: impl ToString) -> NnError {
    NnError::Format {
        path,
        message: message.to_string(),
    }
}

impl<T: NnScalar> Checkpoint<T> {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            arch: self.arch,
            init_seed: self.init_seed,
            layout: self.params.layout.clone(),
            history: self.history.clone(),
        };
        let path = dir.join(HEADER_FILE);
        let text = serde_json::to_string_pretty(&header).map_err(|e| format_err(path.clone(), e))?;
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        let flat: Vec<T> = self.params.values.iter().flatten().copied().collect();
        Tensor::new(vec![flat.len()], flat)?.save(dir.join(PARAMS_FILE))?;
        Ok(())
    }

    /// Loads and checks the stored layout against the architecture.
    /// Parameters stored in the other precision are converted.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(HEADER_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let header: Header = serde_json::from_str(&text).map_err(|e| format_err(path.clone(), e))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(format_err(
                path,
                format!("unsupported checkpoint {} v{}", header.format, header.version),
            ));
        }
        let net = Net::new(header.arch)?;
        if net.layout() != &header.layout {
            return Err(format_err(path, "parameter layout does not match the architecture"));
        }
        let tpath = dir.join(PARAMS_FILE);
        let tensor = Tensor::<T>::load_converted(&tpath)?;
        if tensor.dims != [header.layout.count()] {
            return Err(format_err(
                tpath,
                format!("expected {} parameters, found dims {:?}", header.layout.count(), tensor.dims),
            ));
        }
        let mut values = Vec::with_capacity(header.layout.blocks.len());
        let mut rest = tensor.data.as_slice();
        for b in &header.layout.blocks {
            let (head, tail) = rest.split_at(b.len());
            values.push(head.to_vec());
            rest = tail;
        }
        Ok(Self {
            arch: header.arch,
            init_seed: header.init_seed,
            history: header.history,
            params: Params {
                layout: header.layout,
                values,
            },
        })
    }
}
