use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agent::AgentConfig;
use super::net::{Layer, QNetwork};
use super::state::StateScales;
use crate::envgen::Area;
use crate::error::{Error, Result};

/// On-disk form of a trained evaluation network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub area: Area,
    pub layer_sizes: Vec<usize>,
    pub normalization: StateScales,
    pub layers: Vec<Layer>,
    pub config: AgentConfig,
    pub seed: u64,
}

impl WeightsFile {
    pub fn new(area: Area, net: &QNetwork, scales: StateScales, config: &AgentConfig) -> Self {
        WeightsFile {
            area,
            layer_sizes: net.layer_sizes.clone(),
            normalization: scales,
            layers: net.layers.clone(),
            config: config.clone(),
            seed: config.seed,
        }
    }

    pub fn network(&self) -> Result<QNetwork> {
        let net = QNetwork {
            layer_sizes: self.layer_sizes.clone(),
            layers: self.layers.clone(),
        };
        net.validate()?;
        Ok(net)
    }
}

pub fn save_weights(weights: &WeightsFile, path: &Path) -> Result<()> {
    weights.network()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, weights).map_err(|e| Error::Malformed {
        path: path.into(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<WeightsFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let weights: WeightsFile = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Malformed {
        path: path.into(),
        message: e.to_string(),
    })?;
    weights.network()?;
    Ok(weights)
}
