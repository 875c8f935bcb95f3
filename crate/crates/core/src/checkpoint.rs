//! Self-describing binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//! magic `PPNC`, format version, architecture (feature dim, hidden sizes,
//! action count), flat parameter array as f64, optional optimizer state,
//! optional RNG state. Loading a checkpoint and running a forward pass
//! reproduces the original network bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::policynet::{NetConfig, OptimizerState, PolicyValueNet};

const MAGIC: &[u8; 4] = b"PPNC";
const VERSION: u32 = 1;

/// Serializable position of a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything needed to resume or replay a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: PolicyValueNet,
    pub optimizer: Option<OptimizerState>,
    pub rng: Option<RngState>,
}

impl Checkpoint {
    pub fn new(net: PolicyValueNet) -> Self {
        Self {
            net,
            optimizer: None,
            rng: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let config = self.net.config();
        put_u32(&mut out, config.feature_dim as u32);
        put_u32(&mut out, config.hidden.len() as u32);
        for &h in &config.hidden {
            put_u32(&mut out, h as u32);
        }
        put_u32(&mut out, config.n_actions as u32);
        put_u64(&mut out, self.net.params().len() as u64);
        for &p in self.net.params() {
            put_f64(&mut out, p);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(opt) => {
                out.push(1);
                put_f64(&mut out, opt.learning_rate);
                put_f64(&mut out, opt.beta1);
                put_f64(&mut out, opt.beta2);
                put_f64(&mut out, opt.epsilon);
                put_u64(&mut out, opt.step);
                let (m, v) = opt.moments();
                for &x in m {
                    put_f64(&mut out, x);
                }
                for &x in v {
                    put_f64(&mut out, x);
                }
            }
        }
        match &self.rng {
            None => out.push(0),
            Some(rng) => {
                out.push(1);
                out.extend_from_slice(&rng.seed);
                out.extend_from_slice(&rng.word_pos.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::CheckpointFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::CheckpointFormat(format!(
                "unsupported version {version}"
            )));
        }
        let feature_dim = r.u32()? as usize;
        let n_hidden = r.u32()? as usize;
        if n_hidden > 64 {
            return Err(Error::CheckpointFormat(format!(
                "implausible hidden layer count {n_hidden}"
            )));
        }
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(r.u32()? as usize);
        }
        let n_actions = r.u32()? as usize;
        let config = NetConfig::new(feature_dim, hidden, n_actions)?;
        let param_count = r.u64()? as usize;
        if param_count != config.param_count() {
            return Err(Error::CheckpointFormat(format!(
                "parameter count {param_count} does not match architecture ({})",
                config.param_count()
            )));
        }
        let mut params = Vec::with_capacity(param_count);
        for _ in 0..param_count {
            params.push(r.f64()?);
        }
        let net = PolicyValueNet::from_params(config, params)?;
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let learning_rate = r.f64()?;
                let beta1 = r.f64()?;
                let beta2 = r.f64()?;
                let epsilon = r.f64()?;
                let step = r.u64()?;
                let mut m = Vec::with_capacity(param_count);
                for _ in 0..param_count {
                    m.push(r.f64()?);
                }
                let mut v = Vec::with_capacity(param_count);
                for _ in 0..param_count {
                    v.push(r.f64()?);
                }
                Some(OptimizerState::from_parts(
                    learning_rate,
                    beta1,
                    beta2,
                    epsilon,
                    step,
                    m,
                    v,
                )?)
            }
            other => {
                return Err(Error::CheckpointFormat(format!(
                    "bad optimizer flag {other}"
                )))
            }
        };
        let rng = match r.u8()? {
            0 => None,
            1 => {
                let mut seed = [0u8; 32];
                seed.copy_from_slice(r.take(32)?);
                let mut pos = [0u8; 16];
                pos.copy_from_slice(r.take(16)?);
                Some(RngState {
                    seed,
                    word_pos: u128::from_le_bytes(pos),
                })
            }
            other => return Err(Error::CheckpointFormat(format!("bad rng flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::CheckpointFormat(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            net,
            optimizer,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CheckpointFormat("truncated checkpoint".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        b.copy_from_slice(self.take(4)?);
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        b.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        b.copy_from_slice(self.take(8)?);
        Ok(f64::from_le_bytes(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn roundtrip_is_bitwise_identical() {
        let config = NetConfig::new(16, vec![64, 64], 5).unwrap();
        let net = PolicyValueNet::init(77, config.clone());
        let mut opt = OptimizerState::new(config.param_count(), 3e-4);
        let mut scratch = net.clone();
        let grad: Vec<f64> = (0..config.param_count())
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        opt.apply(&mut scratch, &grad, crate::policynet::Direction::Descend)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let _: u64 = rng.gen();
        let ckpt = Checkpoint {
            net: scratch.clone(),
            optimizer: Some(opt.clone()),
            rng: Some(RngState::capture(&rng)),
        };

        let restored = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(restored, ckpt);

        // Forward passes must agree bitwise.
        let x: Vec<f64> = (0..16).map(|i| (i as f64).cos()).collect();
        let (p1, v1) = scratch.forward(&x).unwrap();
        let (p2, v2) = restored.net.forward(&x).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(v1.to_bits(), v2.to_bits());

        // Restored RNG continues the exact stream.
        let mut restored_rng = restored.rng.unwrap().restore();
        assert_eq!(rng.gen::<u64>(), restored_rng.gen::<u64>());
    }

    #[test]
    fn rejects_corrupted_input() {
        let net = PolicyValueNet::init(1, NetConfig::new(4, vec![6], 3).unwrap());
        let mut bytes = Checkpoint::new(net).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::CheckpointFormat(_))
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&[]),
            Err(Error::CheckpointFormat(_))
        ));
    }

    #[test]
    fn rejects_truncation_and_trailing_garbage() {
        let net = PolicyValueNet::init(1, NetConfig::new(4, vec![6], 3).unwrap());
        let bytes = Checkpoint::new(net).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(Checkpoint::from_bytes(&extended).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ppnc");
        let net = PolicyValueNet::init(9, NetConfig::new(8, vec![16], 4).unwrap());
        let ckpt = Checkpoint::new(net);
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }
}
