//! JSON checkpoints. Floats are written with shortest round-trip formatting,
//! so a save/load cycle reproduces every parameter bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::PVae;
use super::params::{ModelDims, PVaeParams, Slot};
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const FORMAT: &str = "eduvae-pvae";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

/// Seed and ratios of the student split the model was trained under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub seed: u64,
    pub ratios: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    dims: ModelDims,
    config: Option<TrainConfig>,
    #[serde(default)]
    split: Option<SplitRecord>,
    question_ids: Vec<String>,
    tensors: Vec<TensorRecord>,
}

/// A trained model plus what is needed to apply it to new data files.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: PVae,
    pub config: Option<TrainConfig>,
    /// Question id of each model column, in model order.
    pub question_ids: Vec<String>,
    pub split: Option<SplitRecord>,
}

impl Checkpoint {
    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let params = &self.model.params;
        if self.question_ids.len() != params.dims().questions {
            return Err(Error::DimensionMismatch { expected: params.dims().questions, found: self.question_ids.len() });
        }
        let tensors = Slot::ALL
            .iter()
            .map(|&s| {
                let t = params.get(s);
                let (rows, cols) = t.shape();
                TensorRecord { name: s.name().to_string(), rows, cols, values: t.value().iter().copied().collect() }
            })
            .collect();
        let c = Container {
            format: FORMAT.into(),
            version: VERSION,
            dims: *params.dims(),
            config: self.config.clone(),
            split: self.split,
            question_ids: self.question_ids.clone(),
            tensors,
        };
        serde_json::to_writer(w, &c)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let c: Container = serde_json::from_reader(r)?;
        if c.format != FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", c.format)));
        }
        if c.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
        }
        if c.tensors.len() != Slot::ALL.len() {
            return Err(Error::Checkpoint(format!("expected {} tensors, found {}", Slot::ALL.len(), c.tensors.len())));
        }
        let mut values = Vec::with_capacity(c.tensors.len());
        for (slot, t) in Slot::ALL.iter().zip(c.tensors) {
            if t.name != slot.name() {
                return Err(Error::Checkpoint(format!("tensor `{}` where `{}` was expected", t.name, slot.name())));
            }
            let a = Array2::from_shape_vec((t.rows, t.cols), t.values)
                .map_err(|e| Error::Checkpoint(format!("tensor `{}`: {e}", t.name)))?;
            values.push(a);
        }
        let params = PVaeParams::from_tensors(c.dims, values)?;
        if c.question_ids.len() != c.dims.questions {
            return Err(Error::Checkpoint(format!(
                "{} question ids for a model over {} questions",
                c.question_ids.len(),
                c.dims.questions
            )));
        }
        Ok(Self { model: PVae::new(params), config: c.config, question_ids: c.question_ids, split: c.split })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let dims = ModelDims { questions: 3, embedding: 2, pointwise: 3, latent: 2, hidden: 4 };
        let mut params = PVaeParams::init(dims, 11).unwrap();
        params.get_mut(Slot::DecOutB).value_mut()[[1, 0]] = 0.1 + 0.2;
        params.get_mut(Slot::PostOutB).value_mut()[[0, 0]] = -1.0e-300;
        Checkpoint {
            model: PVae::new(params),
            config: Some(TrainConfig { seed: 4, ..TrainConfig::default() }),
            question_ids: vec!["q1".into(), "q2".into(), "q10".into()],
            split: Some(SplitRecord { seed: 4, ratios: [0.8, 0.1, 0.1] }),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        let back = Checkpoint::read(buf.as_slice()).unwrap();
        for slot in Slot::ALL {
            let a = ck.model.params.get(slot).value();
            let b = back.model.params.get(slot).value();
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", slot.name());
        }
        assert_eq!(back, ck);
    }

    #[test]
    fn rejects_foreign_files() {
        assert!(Checkpoint::read(&b"{\"format\":\"x\"}"[..]).is_err());
        let mut buf = Vec::new();
        sample().write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replace("\"version\":1", "\"version\":9");
        assert!(matches!(Checkpoint::read(text.as_bytes()), Err(Error::Checkpoint(_))));
    }
}
