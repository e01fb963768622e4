use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, Linear};
use super::schedule::NoiseSchedule;
use super::train::DiffusionModel;
use crate::error::{Error, Result};
use crate::preprocess::Layout;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TDPM";
const VERSION: u32 = 1;

/// Loss history written next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub steps_run: usize,
    pub final_loss: Option<f64>,
    pub loss_curve: Vec<f64>,
}

impl DiffusionModel {
    pub fn training_log(&self) -> TrainingLog {
        TrainingLog { steps_run: self.steps_run, final_loss: self.final_loss, loss_curve: self.loss_curve.clone() }
    }

    /// Little-endian binary: magic, version, layout hash, schedule betas,
    /// denoiser shapes, parameters as f64, then training metadata.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut b, VERSION);
        b.extend_from_slice(&self.layout.schema_hash());
        put_u32(&mut b, self.schedule.steps() as u32);
        for t in 1..=self.schedule.steps() {
            b.extend_from_slice(&self.schedule.beta(t).to_le_bytes());
        }
        let d = &self.denoiser;
        put_u32(&mut b, d.embedding_dim as u32);
        put_u32(&mut b, d.numeric_dims as u32);
        put_u32(&mut b, d.category_sizes.len() as u32);
        for &k in &d.category_sizes {
            put_u32(&mut b, k as u32);
        }
        put_u32(&mut b, d.layers.len() as u32);
        for l in &d.layers {
            put_u32(&mut b, l.input() as u32);
            put_u32(&mut b, l.output() as u32);
        }
        for l in &d.layers {
            for v in l.weight.iter().chain(l.bias.iter()) {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b.extend_from_slice(&(self.steps_run as u64).to_le_bytes());
        b.extend_from_slice(&self.final_loss.unwrap_or(f64::NAN).to_le_bytes());
        out.write_all(&b)?;
        Ok(())
    }

    /// Reads a checkpoint written for `layout`; the stored layout hash must
    /// match. The loss curve is not part of the binary.
    pub fn read_checkpoint<R: Read>(mut input: R, layout: &Layout) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("missing TDPM magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        if r.take(8)? != layout.schema_hash() {
            return Err(Error::Checkpoint("layout hash does not match the encoder".into()));
        }
        let steps = r.u32()? as usize;
        let betas = (0..steps).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let schedule = NoiseSchedule::from_betas(betas)?;
        let embedding_dim = r.u32()? as usize;
        let numeric_dims = r.u32()? as usize;
        let ncat = r.u32()? as usize;
        let category_sizes = (0..ncat).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let nlayers = r.u32()? as usize;
        let shapes = (0..nlayers)
            .map(|_| Ok((r.u32()? as usize, r.u32()? as usize)))
            .collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(nlayers);
        for (i, o) in shapes {
            let w = (0..i * o).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let bias = (0..o).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            layers.push(Linear {
                weight: Array2::from_shape_vec((i, o), w).expect("shape"),
                bias: Array1::from_vec(bias),
            });
        }
        let steps_run = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
        let final_loss = Some(r.f64()?).filter(|v| !v.is_nan());
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if layers.is_empty() || layers.windows(2).any(|w| w[0].output() != w[1].input()) {
            return Err(Error::Checkpoint("inconsistent layer shapes".into()));
        }
        let denoiser = Denoiser { layers, embedding_dim, numeric_dims, category_sizes };
        denoiser.check_layout(layout)?;
        if denoiser.output_dim() != numeric_dims + denoiser.category_sizes.iter().sum::<usize>() {
            return Err(Error::Checkpoint("output width does not match the layout".into()));
        }
        Ok(Self { schedule, denoiser, layout: layout.clone(), steps_run, final_loss, loss_curve: Vec::new() })
    }
}

fn put_u32(b: &mut Vec<u8>, v: u32) {
    b.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::train::TrainConfig;

    fn model() -> (DiffusionModel, Layout) {
        let layout = Layout::from_parts(&["a", "b"], &[("c", 3)]);
        let cfg = TrainConfig { steps: 0, hidden: vec![8, 8], embedding_dim: 4, timesteps: 20, ..TrainConfig::default() };
        let mut m = DiffusionModel::init(&layout, &cfg).unwrap();
        m.steps_run = 7;
        m.final_loss = Some(0.25);
        (m, layout)
    }

    #[test]
    fn round_trip() {
        let (m, layout) = model();
        let mut buf = Vec::new();
        m.write_checkpoint(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"TDPM");
        let back = DiffusionModel::read_checkpoint(&buf[..], &layout).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_other_layouts_and_truncation() {
        let (m, _) = model();
        let mut buf = Vec::new();
        m.write_checkpoint(&mut buf).unwrap();
        let other = Layout::from_parts(&["a", "x"], &[("c", 3)]);
        assert!(DiffusionModel::read_checkpoint(&buf[..], &other).is_err());
        let layout = Layout::from_parts(&["a", "b"], &[("c", 3)]);
        assert!(DiffusionModel::read_checkpoint(&buf[..buf.len() - 1], &layout).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(DiffusionModel::read_checkpoint(&bad[..], &layout).is_err());
    }
}
