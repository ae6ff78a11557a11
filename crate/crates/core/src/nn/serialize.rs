//! Model files: a JSON manifest next to a little-endian `f64` parameter blob.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::train::{EpochRecord, TrainConfig};
use super::{NetworkSpec, Tensor};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const MODEL_FORMAT: &str = "chanlearn-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub spec: NetworkSpec,
    /// Shape of every parameter tensor, layer by layer, in blob order.
    pub param_shapes: Vec<Vec<Vec<usize>>>,
    pub train_config: Option<TrainConfig>,
    pub best_epoch: Option<usize>,
    pub history: Vec<EpochRecord>,
}

pub fn save(
    dir: &Path,
    net: &Network,
    train_config: Option<&TrainConfig>,
    best_epoch: Option<usize>,
    history: &[EpochRecord],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        format: MODEL_FORMAT.to_string(),
        spec: net.spec().clone(),
        param_shapes: net.params().iter().map(|l| l.iter().map(|t| t.shape().to_vec()).collect()).collect(),
        train_config: train_config.copied(),
        best_epoch,
        history: history.to_vec(),
    };
    let mut blob = Vec::with_capacity(8 * net.param_count());
    for t in net.params().iter().flatten() {
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let path = dir.join(PARAMS_FILE);
    fs::write(&path, blob).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<(Network, Manifest)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != MODEL_FORMAT {
        return Err(Error::invalid(format!("unsupported model format {:?}", manifest.format)));
    }
    let path = dir.join(PARAMS_FILE);
    let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let mut net = Network::zeros(manifest.spec.clone())?;
    let total: usize = manifest.param_shapes.iter().flatten().map(|s| s.iter().product::<usize>()).sum();
    if blob.len() != 8 * total {
        return Err(Error::invalid(format!(
            "{} holds {} bytes, manifest implies {}",
            PARAMS_FILE,
            blob.len(),
            8 * total
        )));
    }
    let mut values = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut params = Vec::with_capacity(manifest.param_shapes.len());
    for layer in &manifest.param_shapes {
        let mut ts = Vec::with_capacity(layer.len());
        for shape in layer {
            let n = shape.iter().product();
            ts.push(Tensor::new(shape.clone(), values.by_ref().take(n).collect())?);
        }
        params.push(ts);
    }
    net.set_params(params)?;
    Ok((net, manifest))
}
