//! `LTCK` synthesizer checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "LTCK"
//! u64 config hash
//! u32 trained epochs
//! u32 × 6  steps, classes, pixels, embed dim, hidden[0], hidden[1]
//! u32 T, then T × f64 β_t, then T × f64 ᾱ_t
//! u64 parameter count, then that many f64 in layer order
//! u32 CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::synth::model::{DenoiserConfig, DenoiserModel};
use crate::synth::schedule::NoiseSchedule;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LTCK";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub model: DenoiserModel,
    pub schedule: NoiseSchedule,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.model.config;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&self.model.trained_epochs.to_le_bytes());
        for v in [
            cfg.steps,
            cfg.num_classes,
            cfg.pixels,
            cfg.embed_dim,
            cfg.hidden[0],
            cfg.hidden[1],
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.schedule.steps() as u32).to_le_bytes());
        for &b in self.schedule.betas() {
            out.extend_from_slice(&b.to_le_bytes());
        }
        for &a in self.schedule.alpha_bars() {
            out.extend_from_slice(&a.to_le_bytes());
        }
        out.extend_from_slice(&(self.model.param_count() as u64).to_le_bytes());
        for p in &self.model.params {
            for &v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing LTCK magic".into()));
        }
        if bytes.len() < 8 {
            return Err(Error::Corruption("checkpoint too short".into()));
        }
        let (body, footer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(footer.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Corruption("checkpoint CRC mismatch".into()));
        }
        let mut cur = Cursor {
            bytes: body,
            pos: 4,
        };
        let config_hash = cur.u64()?;
        let trained_epochs = cur.u32()? as u32;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = cur.u32()?;
        }
        let config = DenoiserConfig {
            steps: dims[0],
            num_classes: dims[1],
            pixels: dims[2],
            embed_dim: dims[3],
            hidden: [dims[4], dims[5]],
        };
        let t = cur.u32()?;
        if t != config.steps {
            return Err(Error::Model(format!(
                "schedule has {t} steps, model expects {}",
                config.steps
            )));
        }
        let betas = (0..t).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let alpha_bars = (0..t).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let schedule = NoiseSchedule::from_betas(betas)?;
        if schedule.alpha_bars() != alpha_bars.as_slice() {
            return Err(Error::Corruption(
                "stored ᾱ table disagrees with β table".into(),
            ));
        }
        let count = cur.u64()? as usize;
        let shapes = config.param_shapes();
        let expected: usize = shapes.iter().map(|(r, c)| r * c).sum();
        if count != expected {
            return Err(Error::Model(format!(
                "checkpoint holds {count} parameters, architecture needs {expected}"
            )));
        }
        let mut params = Vec::with_capacity(shapes.len());
        for &(r, c) in &shapes {
            let data = (0..r * c).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            params.push(Matrix::new(r, c, data)?);
        }
        if cur.pos != body.len() {
            return Err(Error::Corruption("trailing bytes after parameters".into()));
        }
        Ok(Self {
            config_hash,
            model: DenoiserModel {
                config,
                params,
                trained_epochs,
            },
            schedule,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.bytes.len() - self.pos < N {
            return Err(Error::Corruption("checkpoint truncated".into()));
        }
        let out = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::RngStream;

    fn ckpt() -> Checkpoint {
        let cfg = DenoiserConfig {
            steps: 5,
            num_classes: 2,
            pixels: 4,
            embed_dim: 3,
            hidden: [6, 6],
        };
        let mut model = DenoiserModel::new(cfg, &mut RngStream::new(0, 0)).unwrap();
        model.trained_epochs = 3;
        Checkpoint {
            config_hash: 0xDEAD_BEEF,
            model,
            schedule: NoiseSchedule::linear(5, 1e-4, 0.02).unwrap(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = ckpt();
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn flipped_bit_fails_crc() {
        let mut b = ckpt().to_bytes();
        let mid = b.len() / 2;
        b[mid] ^= 1;
        assert!(matches!(
            Checkpoint::from_bytes(&b),
            Err(Error::Corruption(_))
        ));
    }

    #[test]
    fn wrong_magic() {
        let mut b = ckpt().to_bytes();
        b[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&b), Err(Error::Format(_))));
    }
}
