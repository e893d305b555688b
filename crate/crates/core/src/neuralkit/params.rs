use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::matrix::Matrix;

/// Index of a parameter inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
}

/// Flat, ordered collection of named parameter arrays. Layers refer to their
/// weights by [`ParamId`], so optimizers, checkpoints and gradient checks can
/// treat every model the same way.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    params: Vec<Param>,
}

/// Gradients laid out like the [`ParamSet`] they belong to.
pub type Grads = Vec<Matrix>;

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// Weight matrix initialized uniformly in `±1/sqrt(fan_in)`.
    pub fn push_uniform<R: Rng>(&mut self, name: impl Into<String>, rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        self.push(name, Matrix::from_vec(rows, cols, data).expect("shape"))
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zeros_like(&self) -> Grads {
        self.params
            .iter()
            .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
            .collect()
    }

    pub fn check_grads(&self, grads: &Grads) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.params.len()
            )));
        }
        for (p, g) in self.params.iter().zip(grads) {
            if !p.value.same_shape(g) {
                return Err(Error::Shape(format!(
                    "gradient of `{}` is {:?}, parameter is {:?}",
                    p.name,
                    g.shape(),
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        self.params.iter().try_for_each(|p| p.value.ensure_finite(&p.name))
    }

    /// Writes `<stem>.bin` (little-endian f64 values, parameters in order)
    /// and `<stem>.json` (the shape manifest).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = CheckpointManifest {
            format: "f64-le".into(),
            arrays: Vec::with_capacity(self.params.len()),
        };
        let mut bytes = Vec::with_capacity(self.count() * 8);
        let mut offset = 0;
        for p in &self.params {
            manifest.arrays.push(ArrayEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                offset,
            });
            for v in p.value.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            offset += p.value.len();
        }
        fs::File::create(dir.join(format!("{stem}.bin")))?.write_all(&bytes)?;
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let manifest: CheckpointManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
        if manifest.format != "f64-le" {
            return Err(Error::invalid(format!("unknown checkpoint format `{}`", manifest.format)));
        }
        let mut bytes = Vec::new();
        fs::File::open(dir.join(format!("{stem}.bin")))?.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::invalid("checkpoint length is not a multiple of 8 bytes"));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut set = ParamSet::new();
        for entry in manifest.arrays {
            let [rows, cols] = <[usize; 2]>::try_from(entry.shape.as_slice())
                .map_err(|_| Error::invalid(format!("array `{}` is not 2-D", entry.name)))?;
            let end = entry.offset + rows * cols;
            let data = values
                .get(entry.offset..end)
                .ok_or_else(|| Error::invalid(format!("array `{}` runs past the data", entry.name)))?
                .to_vec();
            set.push(entry.name, Matrix::from_vec(rows, cols, data)?);
        }
        Ok(set)
    }
}

/// Mutable access to the gradients of two distinct parameters.
pub fn pair_mut(grads: &mut [Matrix], a: ParamId, b: ParamId) -> (&mut Matrix, &mut Matrix) {
    assert_ne!(a.0, b.0, "pair_mut needs two distinct parameters");
    if a.0 < b.0 {
        let (lo, hi) = grads.split_at_mut(b.0);
        (&mut lo[a.0], &mut hi[0])
    } else {
        let (lo, hi) = grads.split_at_mut(a.0);
        (&mut hi[0], &mut lo[b.0])
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    format: String,
    arrays: Vec<ArrayEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut set = ParamSet::new();
        set.push_uniform("w", 3, 4, 3, &mut rng);
        set.push("b", Matrix::filled(1, 4, -0.125));
        let dir = tempfile::tempdir().unwrap();
        set.save(dir.path(), "model").unwrap();
        let back = ParamSet::load(dir.path(), "model").unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn uniform_init_respects_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut set = ParamSet::new();
        let id = set.push_uniform("w", 16, 16, 16, &mut rng);
        assert!(set.get(id).as_slice().iter().all(|v| v.abs() < 0.25));
    }
}
