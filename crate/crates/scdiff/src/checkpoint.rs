//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! "SCRD"  u32 version
//! config:      n_genes patch_size hidden_size n_blocks n_heads (u64)  mlp_ratio (f64)  t_embed_dim (u64)
//! schedule:    T (u64)  beta_start beta_end (f64)
//! preprocess:  top_k (u64)  negation (f64)  u64 count, then count × (u32 len, UTF-8 name)
//! tensors:     u64 count, then count × (u32 len, UTF-8 name, u32 ndims, ndims × u64 dim, f64 values)
//! train state: u8 flag; when 1: epoch (u64) running_loss (f64) lr beta1 beta2 eps (f64)
//!              adam step (u64) rng 4 × u64, u64 n + n × f64 loss history,
//!              then the Adam m and v buffers (f64 values shaped like the tensors)
//! ```

use std::fs;
use std::path::Path;

use scdiff_core::optim::Adam;
use scdiff_core::{
    DenoiserConfig, DenoiserModel, NoiseSchedule, PreprocessSpec, Rng, Tensor, TrainState,
};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"SCRD";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: DenoiserModel,
    pub schedule: NoiseSchedule,
    pub preprocess: PreprocessSpec,
    pub train_state: Option<TrainState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated at byte {}", self.pos)),
        }
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|e| e.to_string())
    }
    /// A count that must fit in the remaining bytes at `unit` bytes each.
    fn count(&mut self, unit: usize) -> Result<usize, String> {
        let n = self.usize()?;
        if n.saturating_mul(unit) > self.buf.len() - self.pos {
            return Err(format!("count {n} at byte {} exceeds file size", self.pos - 8));
        }
        Ok(n)
    }
    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("size overflow")?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        let c = self.model.config();
        for v in [c.n_genes, c.patch_size, c.hidden_size, c.n_blocks, c.n_heads] {
            w.usize(v);
        }
        w.f64(c.mlp_ratio);
        w.usize(c.t_embed_dim);
        w.usize(self.schedule.steps());
        w.f64(self.schedule.beta_start());
        w.f64(self.schedule.beta_end());
        let p = &self.preprocess;
        w.usize(p.top_k);
        w.f64(p.negation);
        w.usize(p.selected_gene_names.len());
        for name in &p.selected_gene_names {
            w.str(name);
        }
        let params = self.model.parameters();
        w.usize(params.len());
        for prm in params {
            w.str(&prm.name);
            w.u32(prm.value.shape().len() as u32);
            for &d in prm.value.shape() {
                w.usize(d);
            }
            w.f64s(prm.value.data());
        }
        match &self.train_state {
            None => w.u8(0),
            Some(s) => {
                w.u8(1);
                w.usize(s.epoch);
                w.f64(s.running_loss);
                let o = &s.optimizer;
                w.f64s(&[o.lr, o.beta1, o.beta2, o.eps]);
                w.u64(o.step);
                for x in s.rng.state() {
                    w.u64(x);
                }
                w.usize(s.loss_history.len());
                w.f64s(&s.loss_history);
                for t in o.m.iter().chain(&o.v) {
                    w.f64s(t.data());
                }
            }
        }
        w.0
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, String> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let mut ints = [0usize; 5];
        for v in &mut ints {
            *v = r.usize()?;
        }
        let config = DenoiserConfig {
            n_genes: ints[0],
            patch_size: ints[1],
            hidden_size: ints[2],
            n_blocks: ints[3],
            n_heads: ints[4],
            mlp_ratio: r.f64()?,
            t_embed_dim: r.usize()?,
        };
        let steps = r.usize()?;
        let (b0, b1) = (r.f64()?, r.f64()?);
        let schedule = NoiseSchedule::linear(steps, b0, b1).map_err(|e| e.to_string())?;
        let top_k = r.usize()?;
        let negation = r.f64()?;
        let n_names = r.count(4)?;
        let names = (0..n_names).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        let n_tensors = r.count(8)?;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name = r.str()?;
            let ndims = r.u32()? as usize;
            let dims = (0..ndims).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
            let numel = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("size overflow")?;
            let values = r.f64s(numel)?;
            let t = Tensor::new(dims, values).map_err(|e| format!("tensor `{name}`: {e}"))?;
            tensors.push((name, t));
        }
        let model =
            DenoiserModel::from_parameters(config, steps, tensors).map_err(|e| e.to_string())?;
        let train_state = match r.u8()? {
            0 => None,
            1 => {
                let epoch = r.usize()?;
                let running_loss = r.f64()?;
                let h = r.f64s(4)?;
                let step = r.u64()?;
                let mut st = [0u64; 4];
                for s in &mut st {
                    *s = r.u64()?;
                }
                let rng = Rng::from_state(st).ok_or("all-zero generator state")?;
                let n = r.count(8)?;
                let loss_history = r.f64s(n)?;
                let mut moment = || {
                    model
                        .parameters()
                        .iter()
                        .map(|p| {
                            let v = r.f64s(p.value.numel())?;
                            Tensor::new(p.value.shape().to_vec(), v).map_err(|e| e.to_string())
                        })
                        .collect::<Result<Vec<_>, String>>()
                };
                let m = moment()?;
                let v = moment()?;
                Some(TrainState {
                    epoch,
                    running_loss,
                    optimizer: Adam {
                        lr: h[0],
                        beta1: h[1],
                        beta2: h[2],
                        eps: h[3],
                        step,
                        m,
                        v,
                    },
                    rng,
                    loss_history,
                })
            }
            f => return Err(format!("bad train-state flag {f}")),
        };
        if r.pos != buf.len() {
            return Err(format!("{} trailing bytes", buf.len() - r.pos));
        }
        Ok(Checkpoint {
            model,
            schedule,
            preprocess: PreprocessSpec {
                top_k,
                negation,
                selected_gene_indices: Vec::new(),
                selected_gene_names: names,
            },
            train_state,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&buf).map_err(|message| CliError::Format {
            path: path.to_path_buf(),
            message,
        })
    }
}

/// Lower-case hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let buf = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use scdiff_core::{ExpressionMatrix, TrainConfig, Trainer};

    fn sample_checkpoint(with_state: bool) -> Checkpoint {
        let names: Vec<String> = (0..6).map(|g| format!("g{g}")).collect();
        let model = DenoiserModel::new(DenoiserConfig::tiny(6), 20, 4).unwrap();
        let schedule = NoiseSchedule::linear(20, 1e-3, 0.05).unwrap();
        let mut train_state = None;
        let mut model = model;
        if with_state {
            let data = ExpressionMatrix::new(
                5,
                (0..30).map(|i| (i % 7) as f64 * 0.3 - 1.0).collect(),
                names.clone(),
                None,
            )
            .unwrap();
            let cfg = TrainConfig {
                epochs: 2,
                batch_size: 2,
                learning_rate: 1e-3,
                ..TrainConfig::default()
            };
            let mut tr = Trainer::new(&model, &data, &schedule, cfg).unwrap();
            tr.run_epoch(&mut model).unwrap();
            train_state = Some(tr.into_state());
        }
        Checkpoint {
            model,
            schedule,
            preprocess: PreprocessSpec {
                top_k: 6,
                negation: -10.0,
                selected_gene_indices: Vec::new(),
                selected_gene_names: names,
            },
            train_state,
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for state in [false, true] {
            let ck = sample_checkpoint(state);
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = sample_checkpoint(false).to_bytes();
        assert_eq!(&bytes[..4], b"SCRD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 6);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample_checkpoint(true).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut longer = bytes;
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
    }
}
