//! Versioned, checksummed binary checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "IARED2CK" | version u32 | body length u64 | body | SHA-256(everything before)
//! ```
//!
//! The body holds the model configuration, every parameter (name, shape,
//! `f64` payload) and optionally the curriculum state: cursor, generator
//! position and the optimizer moments of the phase in progress.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{CheckpointFault, Error, Result};
use crate::gradcore::{ParamStore, Rng, RngState, Tensor};
use crate::interpreter::GroupConfig;
use crate::model::{Model, ModelConfig};
use crate::policy::{Adam, Cursor, Phase, TrainState};
use crate::vit::VitConfig;

pub const MAGIC: &[u8; 8] = b"IARED2CK";
pub const VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 8;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub train: Option<TrainState>,
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
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        for &x in v {
            self.f64(x);
        }
    }
    fn bytes(&mut self, v: &[u8]) {
        self.0.extend_from_slice(v);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed() -> Error {
    Error::Checkpoint(CheckpointFault::Malformed)
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(malformed)?;
        let s = self.buf.get(self.pos..end).ok_or_else(malformed)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| malformed())
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n > self.buf.len() / 8 {
            return Err(malformed());
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(malformed()),
        }
    }
}

fn write_config(w: &mut Writer, c: &ModelConfig) {
    let v = &c.vit;
    for x in [
        v.image_height,
        v.image_width,
        v.channels,
        v.patch_size,
        v.embed_dim,
        v.depth,
        v.heads,
        v.classes,
        c.groups.groups,
        c.groups.blocks_per_group,
        c.interpreter_heads,
    ] {
        w.usize(x);
    }
    w.f64(c.groups.threshold);
    w.u8(c.interpreter_bias as u8);
}

fn read_config(r: &mut Reader<'_>) -> Result<ModelConfig> {
    let mut u = [0usize; 11];
    for x in u.iter_mut() {
        *x = r.usize()?;
    }
    let threshold = r.f64()?;
    let bias = r.flag()?;
    Ok(ModelConfig {
        vit: VitConfig {
            image_height: u[0],
            image_width: u[1],
            channels: u[2],
            patch_size: u[3],
            embed_dim: u[4],
            depth: u[5],
            heads: u[6],
            classes: u[7],
        },
        groups: GroupConfig {
            groups: u[8],
            blocks_per_group: u[9],
            threshold,
        },
        interpreter_heads: u[10],
        interpreter_bias: bias,
    })
}

fn write_train(w: &mut Writer, t: &TrainState) {
    w.usize(t.cursor.group);
    w.u8(match t.cursor.phase {
        Phase::Policy => 0,
        Phase::Blocks => 1,
    });
    w.usize(t.cursor.epoch);
    let s = t.rng.state();
    w.bytes(&s.seed);
    w.u64(s.stream);
    w.bytes(&s.word_pos.to_le_bytes());
    match &t.adam {
        None => w.u8(0),
        Some(a) => {
            w.u8(1);
            w.f64(a.lr);
            w.u64(a.total_steps);
            w.u64(a.warmup_steps);
            w.u64(a.step);
            w.usize(a.moments.len());
            for m in &a.moments {
                match m {
                    None => w.u8(0),
                    Some((m1, m2)) => {
                        w.u8(1);
                        w.f64s(m1);
                        w.f64s(m2);
                    }
                }
            }
        }
    }
}

fn read_train(r: &mut Reader<'_>) -> Result<TrainState> {
    let group = r.usize()?;
    let phase = match r.u8()? {
        0 => Phase::Policy,
        1 => Phase::Blocks,
        _ => return Err(malformed()),
    };
    let epoch = r.usize()?;
    let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let stream = r.u64()?;
    let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
    let adam = if r.flag()? {
        let lr = r.f64()?;
        let total_steps = r.u64()?;
        let warmup_steps = r.u64()?;
        let step = r.u64()?;
        let n = r.usize()?;
        if n > r.buf.len() {
            return Err(malformed());
        }
        let moments = (0..n)
            .map(|_| -> Result<_> {
                Ok(if r.flag()? {
                    Some((r.f64s()?, r.f64s()?))
                } else {
                    None
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Some(Adam {
            lr,
            total_steps,
            warmup_steps,
            step,
            moments,
        })
    } else {
        None
    };
    Ok(TrainState {
        cursor: Cursor {
            group,
            phase,
            epoch,
        },
        rng: Rng::from_state(RngState {
            seed,
            stream,
            word_pos,
        }),
        adam,
    })
}

pub fn encode(model: &Model, train: Option<&TrainState>) -> Vec<u8> {
    let mut body = Writer(Vec::new());
    write_config(&mut body, &model.cfg);
    body.usize(model.store.len());
    for (_, name, t) in model.store.iter() {
        body.u32(name.len() as u32);
        body.bytes(name.as_bytes());
        body.u32(t.shape().len() as u32);
        for &d in t.shape() {
            body.usize(d);
        }
        for &v in t.data() {
            body.f64(v);
        }
    }
    match train {
        None => body.u8(0),
        Some(t) => {
            body.u8(1);
            write_train(&mut body, t);
        }
    }
    let mut out = Writer(Vec::with_capacity(HEADER + body.0.len() + 32));
    out.bytes(MAGIC);
    out.u32(VERSION);
    out.usize(body.0.len());
    out.bytes(&body.0);
    let digest = Sha256::digest(&out.0);
    out.bytes(&digest);
    out.0
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let fault = |f| Err(Error::Checkpoint(f));
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return if bytes.len() < 8 && MAGIC.starts_with(bytes) {
            fault(CheckpointFault::Truncated)
        } else {
            fault(CheckpointFault::BadMagic)
        };
    }
    if bytes.len() < HEADER {
        return fault(CheckpointFault::Truncated);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return fault(CheckpointFault::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let body_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let expected = (HEADER as u64).saturating_add(body_len).saturating_add(32);
    if (bytes.len() as u64) < expected {
        return fault(CheckpointFault::Truncated);
    }
    if bytes.len() as u64 != expected {
        return fault(CheckpointFault::Malformed);
    }
    let split = bytes.len() - 32;
    if Sha256::digest(&bytes[..split]).as_slice() != &bytes[split..] {
        return fault(CheckpointFault::ChecksumMismatch);
    }
    let mut r = Reader {
        buf: &bytes[HEADER..split],
        pos: 0,
    };
    let cfg = read_config(&mut r)?;
    let count = r.usize()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| malformed())?
            .to_string();
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(malformed)?;
        if n > r.buf.len() / 8 {
            return Err(malformed());
        }
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        store.add(name, Tensor::new(shape, data).map_err(|_| malformed())?);
    }
    let train = if r.flag()? {
        Some(read_train(&mut r)?)
    } else {
        None
    };
    if r.pos != r.buf.len() {
        return Err(malformed());
    }
    let model = Model::from_store(cfg, store)?;
    Ok(Checkpoint { model, train })
}

/// Writes atomically through a temporary file in the same directory.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &Model,
    train: Option<&TrainState>,
) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(model, train))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let mut c = ModelConfig::toy();
        c.vit.embed_dim = 8;
        c.interpreter_heads = 2;
        c.vit.heads = 2;
        Model::init(c, &mut Rng::seed_from_u64(1)).unwrap()
    }

    fn state(m: &Model) -> TrainState {
        let mut t = TrainState::new(4);
        t.rng.next_u64();
        t.cursor = Cursor {
            group: 1,
            phase: Phase::Blocks,
            epoch: 2,
        };
        let mut a = Adam::new(&m.store, 1e-3, 50);
        a.step = 7;
        a.warmup_steps = 3;
        a.moments[3] = Some((
            vec![0.1; m.store.get(crate::gradcore::ParamId(3)).len()],
            vec![0.2; m.store.get(crate::gradcore::ParamId(3)).len()],
        ));
        t.adam = Some(a);
        t
    }

    #[test]
    fn round_trip_bit_exact() {
        let m = model();
        let t = state(&m);
        let c = decode(&encode(&m, Some(&t))).unwrap();
        assert_eq!(c.model.store, m.store);
        assert_eq!(c.model.cfg, m.cfg);
        assert_eq!(c.train, Some(t));
        assert_eq!(decode(&encode(&m, None)).unwrap().train, None);
    }

    #[test]
    fn faults_are_distinct() {
        let m = model();
        let bytes = encode(&m, None);
        let fault = |b: &[u8]| match decode(b) {
            Err(Error::Checkpoint(f)) => f,
            other => panic!("expected a checkpoint fault, got {other:?}"),
        };
        let mut flipped = bytes.clone();
        flipped[HEADER + 100] ^= 1;
        assert_eq!(fault(&flipped), CheckpointFault::ChecksumMismatch);
        assert_eq!(
            fault(&bytes[..bytes.len() - 10]),
            CheckpointFault::Truncated
        );
        assert_eq!(fault(&bytes[..5]), CheckpointFault::Truncated);
        let mut v = bytes.clone();
        v[8] = 9;
        assert_eq!(
            fault(&v),
            CheckpointFault::VersionMismatch {
                found: 9,
                expected: VERSION
            }
        );
        assert_eq!(
            fault(b"NOTACHECKPOINTFILE AT ALL"),
            CheckpointFault::BadMagic
        );
    }
}
