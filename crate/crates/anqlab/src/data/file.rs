//! Dataset persistence.
//!
//! Layout: magic `ANQD`, format version `u16`, length-prefixed env tag,
//! counts `(n, state_dim, action_dim)` as `u32`, then columnar little-endian
//! `f32` blocks (S, A, R, S') and the `u8` done column, followed by a JSON
//! provenance trailer running to end of file. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Dataset, NormStats, Provenance};

const MAGIC: &[u8; 4] = b"ANQD";
const VERSION: u16 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Trailer {
    stats: NormStats,
    provenance: Provenance,
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::invalid("refusing to save an empty dataset"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let tag = dataset.env_tag.as_bytes();
    w.write_all(&(tag.len() as u16).to_le_bytes())?;
    w.write_all(tag)?;
    w.write_all(&(dataset.len() as u32).to_le_bytes())?;
    w.write_all(&(dataset.state_dim as u32).to_le_bytes())?;
    w.write_all(&(dataset.action_dim as u32).to_le_bytes())?;
    for block in [
        &dataset.states,
        &dataset.actions,
        &dataset.rewards,
        &dataset.next_states,
    ] {
        for v in block.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.write_all(&dataset.dones)?;
    let trailer = Trailer {
        stats: dataset.stats.clone(),
        provenance: dataset.provenance.clone(),
    };
    let json = serde_json::to_vec(&trailer)
        .map_err(|e| Error::invalid(format!("provenance serialization failed: {e}")))?;
    w.write_all(&json)?;
    w.flush()?;
    Ok(())
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn take(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|_| Error::Format {
            offset: at,
            msg: format!("truncated while reading {what}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let mut b = [0u8; 2];
        self.take(&mut b, what)?;
        Ok(u16::from_le_bytes(b))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn f32_block(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; count * 4];
        self.take(&mut bytes, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = Cursor {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.take(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported dataset version {version}"),
        });
    }
    let tag_len = r.u16("env tag length")? as usize;
    let mut tag_bytes = vec![0u8; tag_len];
    r.take(&mut tag_bytes, "env tag")?;
    let env_tag = String::from_utf8(tag_bytes).map_err(|_| Error::Format {
        offset: 8,
        msg: "env tag is not UTF-8".to_string(),
    })?;
    let n = r.u32("transition count")? as usize;
    let state_dim = r.u32("state_dim")? as usize;
    let action_dim = r.u32("action_dim")? as usize;
    if n == 0 || state_dim == 0 || action_dim == 0 {
        return Err(Error::Format {
            offset: r.offset - 12,
            msg: format!("degenerate counts (n={n}, state_dim={state_dim}, action_dim={action_dim})"),
        });
    }
    let states = r.f32_block(n * state_dim, "state block")?;
    let actions = r.f32_block(n * action_dim, "action block")?;
    let rewards = r.f32_block(n, "reward block")?;
    let next_states = r.f32_block(n * state_dim, "next-state block")?;
    let mut dones = vec![0u8; n];
    r.take(&mut dones, "done block")?;
    if dones.iter().any(|d| *d > 1) {
        return Err(Error::Format {
            offset: r.offset - n as u64,
            msg: "done flags must be 0 or 1".to_string(),
        });
    }
    let mut trailer_bytes = Vec::new();
    let trailer_at = r.offset;
    r.inner
        .read_to_end(&mut trailer_bytes)
        .map_err(Error::Io)?;
    let trailer: Trailer = serde_json::from_slice(&trailer_bytes).map_err(|e| Error::Format {
        offset: trailer_at,
        msg: format!("provenance trailer is not valid JSON: {e}"),
    })?;
    Ok(Dataset {
        env_tag,
        state_dim,
        action_dim,
        states,
        actions,
        rewards,
        next_states,
        dones,
        stats: trailer.stats,
        provenance: trailer.provenance,
    })
}
