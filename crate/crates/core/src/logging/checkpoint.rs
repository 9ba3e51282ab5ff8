//! Binary checkpoint files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "MODRLCKP" | u32 version | str agent | u64 step | f64 wall_time
//! u32 n_tensors | { u32 rows | u32 cols | f64 * rows*cols }*
//! u32 n_rngs    | { [u8; 32] seed | u64 stream | u128 word_pos }*
//! [u8; 32] sha256 of every byte above except wall_time
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{io_err, LogError};
use crate::agents::{Agent, RngState};
use crate::nn::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MODRLCKP";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub agent: String,
    pub step: u64,
    pub wall_time: f64,
    pub tensors: Vec<Matrix>,
    pub rngs: Vec<RngState>,
}

impl Checkpoint {
    pub fn capture(agent: &dyn Agent, step: u64, wall_time: f64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            agent: agent.name().to_string(),
            step,
            wall_time,
            tensors: agent.state_tensors(),
            rngs: agent.rng_states(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = Vec::new();
        head.extend_from_slice(MAGIC);
        head.extend_from_slice(&self.version.to_le_bytes());
        head.extend_from_slice(&(self.agent.len() as u32).to_le_bytes());
        head.extend_from_slice(self.agent.as_bytes());
        head.extend_from_slice(&self.step.to_le_bytes());

        let mut body = Vec::new();
        body.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            body.extend_from_slice(&(t.rows() as u32).to_le_bytes());
            body.extend_from_slice(&(t.cols() as u32).to_le_bytes());
            for x in t.data() {
                body.extend_from_slice(&x.to_le_bytes());
            }
        }
        body.extend_from_slice(&(self.rngs.len() as u32).to_le_bytes());
        for r in &self.rngs {
            body.extend_from_slice(&r.seed);
            body.extend_from_slice(&r.stream.to_le_bytes());
            body.extend_from_slice(&r.word_pos.to_le_bytes());
        }

        let digest = Sha256::new().chain_update(&head).chain_update(&body).finalize();
        let mut out = head;
        out.extend_from_slice(&self.wall_time.to_le_bytes());
        out.extend_from_slice(&body);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LogError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(LogError::Format("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(LogError::Compatibility(format!(
                "format version {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let name_len = r.u32()? as usize;
        let agent = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| LogError::Integrity("agent name is not utf-8".into()))?;
        let step = r.u64()?;
        let head_end = r.pos;
        let wall_time = f64::from_le_bytes(r.array::<8>()?);
        let body_start = r.pos;

        let n_tensors = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors.min(1 << 16));
        for _ in 0..n_tensors {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let len = rows
                .checked_mul(cols)
                .ok_or_else(|| LogError::Integrity("tensor shape overflows".into()))?;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| LogError::Integrity("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            tensors.push(Matrix::from_vec(rows, cols, data).map_err(|e| LogError::Integrity(e.to_string()))?);
        }
        let n_rngs = r.u32()? as usize;
        let mut rngs = Vec::with_capacity(n_rngs.min(1 << 10));
        for _ in 0..n_rngs {
            let seed = r.array::<32>()?;
            let stream = r.u64()?;
            let word_pos = u128::from_le_bytes(r.array::<16>()?);
            rngs.push(RngState { seed, stream, word_pos });
        }
        let body_end = r.pos;
        let stored = r.array::<32>()?;
        if r.pos != bytes.len() {
            return Err(LogError::Integrity("trailing bytes after checksum".into()));
        }
        let digest = Sha256::new()
            .chain_update(&bytes[..head_end])
            .chain_update(&bytes[body_start..body_end])
            .finalize();
        if digest.as_slice() != stored {
            return Err(LogError::Integrity("checksum mismatch".into()));
        }
        Ok(Self {
            version,
            agent,
            step,
            wall_time,
            tensors,
            rngs,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LogError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| LogError::Integrity("file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], LogError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, LogError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, LogError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
}

/// Writes through a temporary file and a rename, so a reader never sees a
/// half-written checkpoint under the final name.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), LogError> {
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, ckpt.to_bytes()).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, LogError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        LogError::Integrity(m) => LogError::Integrity(format!("{}: {m}", path.display())),
        LogError::Compatibility(m) => LogError::Compatibility(format!("{}: {m}", path.display())),
        LogError::Format(m) => LogError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Restores an agent, refusing a checkpoint written by a different agent.
pub fn apply_checkpoint(agent: &mut dyn Agent, ckpt: &Checkpoint) -> Result<(), LogError> {
    if ckpt.agent != agent.name() {
        return Err(LogError::Compatibility(format!(
            "checkpoint is for agent '{}', not '{}'",
            ckpt.agent,
            agent.name()
        )));
    }
    agent
        .load_state_tensors(&ckpt.tensors)
        .map_err(|e| LogError::Compatibility(e.to_string()))?;
    agent
        .load_rng_states(&ckpt.rngs)
        .map_err(|e| LogError::Compatibility(e.to_string()))
}
