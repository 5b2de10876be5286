//! Model persistence: a JSON header plus a checksummed parameter blob.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layout::{EncodedLayout, FrequencyTable};
use super::train::{CtganConfig, CtganModel, EpochLosses};
use crate::error::{Error, Result};
use crate::neural::{Activation, Layer, Mlp};
use crate::tabular::Schema;

pub const HEADER_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "params.bin";
const MAGIC: &[u8; 8] = b"LMTEPAR1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MlpShape {
    dims: Vec<usize>,
    activations: Vec<Activation>,
}

impl MlpShape {
    fn of(mlp: &Mlp<f64>) -> Self {
        let mut dims = vec![mlp.input_dim()];
        dims.extend(mlp.layers.iter().map(|l| l.weight.ncols()));
        MlpShape { dims, activations: mlp.layers.iter().map(|l| l.activation.clone()).collect() }
    }

    fn build(&self) -> Result<Mlp<f64>> {
        if self.dims.len() != self.activations.len() + 1 || self.activations.is_empty() {
            return Err(Error::CorruptModel("network shape is inconsistent".into()));
        }
        let layers = self
            .dims
            .windows(2)
            .zip(&self.activations)
            .map(|(d, a)| Layer {
                weight: ndarray::Array2::zeros((d[0], d[1])),
                bias: ndarray::Array1::zeros(d[1]),
                activation: a.clone(),
            })
            .collect();
        Ok(Mlp { layers })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    schema: Schema,
    layout: EncodedLayout,
    frequencies: FrequencyTable,
    config: CtganConfig,
    losses: Vec<EpochLosses>,
    generator: MlpShape,
    critic: MlpShape,
}

fn encode_blob(params: &[f64]) -> Vec<u8> {
    let mut payload = Vec::with_capacity(params.len() * 8);
    for p in params {
        payload.extend_from_slice(&p.to_le_bytes());
    }
    let digest = Sha256::digest(&payload);
    let mut out = Vec::with_capacity(48 + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    out.extend_from_slice(&digest);
    out.extend_from_slice(&payload);
    out
}

fn decode_blob(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 48 || &bytes[..8] != MAGIC {
        return Err(Error::CorruptModel("parameter blob has no valid header".into()));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let payload = &bytes[48..];
    if payload.len() != count.saturating_mul(8) {
        return Err(Error::CorruptModel(format!("expected {count} parameters, blob holds {} bytes", payload.len())));
    }
    if Sha256::digest(payload).as_slice() != &bytes[16..48] {
        return Err(Error::CorruptModel("parameter checksum mismatch".into()));
    }
    Ok(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

impl CtganModel {
    /// Writes `model.json` and `params.bin` into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = Header {
            format_version: FORMAT_VERSION,
            schema: self.schema.clone(),
            layout: self.layout.clone(),
            frequencies: self.frequencies.clone(),
            config: self.config.clone(),
            losses: self.losses.clone(),
            generator: MlpShape::of(&self.generator),
            critic: MlpShape::of(&self.critic),
        };
        std::fs::write(dir.join(HEADER_FILE), serde_json::to_string_pretty(&header)?)?;
        let mut params = self.generator.flatten_params();
        params.extend(self.critic.flatten_params());
        std::fs::write(dir.join(PARAMS_FILE), encode_blob(&params))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let header_path = dir.join(HEADER_FILE);
        if !header_path.exists() {
            return Err(Error::MissingFile(header_path));
        }
        let header: Header = serde_json::from_str(&std::fs::read_to_string(&header_path)?)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::CorruptModel(format!("unsupported format version {}", header.format_version)));
        }
        let params_path = dir.join(PARAMS_FILE);
        if !params_path.exists() {
            return Err(Error::MissingFile(params_path));
        }
        let params = decode_blob(&std::fs::read(&params_path)?)?;
        let mut generator = header.generator.build()?;
        let mut critic = header.critic.build()?;
        let ng = generator.n_params();
        if params.len() != ng + critic.n_params() {
            return Err(Error::CorruptModel("parameter count does not match the network shapes".into()));
        }
        generator.set_flat_params(&params[..ng])?;
        critic.set_flat_params(&params[ng..])?;
        if generator.output_dim() != header.layout.width {
            return Err(Error::CorruptModel("generator width does not match the layout".into()));
        }
        header.schema.validate()?;
        Ok(CtganModel {
            schema: header.schema,
            layout: header.layout,
            frequencies: header.frequencies,
            generator,
            critic,
            config: header.config,
            losses: header.losses,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_round_trip_and_tamper_detection() {
        let params = vec![1.5, -2.25, f64::MIN_POSITIVE, 0.0];
        let mut blob = encode_blob(&params);
        assert_eq!(decode_blob(&blob).unwrap(), params);
        let last = blob.len() - 1;
        blob[last] ^= 1;
        assert!(matches!(decode_blob(&blob), Err(Error::CorruptModel(_))));
        assert!(matches!(decode_blob(&blob[..40]), Err(Error::CorruptModel(_))));
        let mut short = encode_blob(&params);
        short.truncate(short.len() - 8);
        assert!(matches!(decode_blob(&short), Err(Error::CorruptModel(_))));
    }
}
