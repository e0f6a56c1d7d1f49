//! Parameter checkpoint files.
//!
//! Layout: magic `ANQP`, format version `u16`, the `NetSpec` (dims as `u32`,
//! activation tag + scale), then the parameters as little-endian `f32` in
//! layer order (weights row-major, then biases, per layer).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Net, NetSpec, OutputActivation};

const MAGIC: &[u8; 4] = b"ANQP";
const VERSION: u16 = 1;

pub fn save_net(net: &Net, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let spec = net.spec();
    w.write_all(&(spec.input_dim as u32).to_le_bytes())?;
    w.write_all(&(spec.hidden_dims.len() as u32).to_le_bytes())?;
    for &h in &spec.hidden_dims {
        w.write_all(&(h as u32).to_le_bytes())?;
    }
    w.write_all(&(spec.output_dim as u32).to_le_bytes())?;
    match spec.output_activation {
        OutputActivation::Identity => {
            w.write_all(&[0u8])?;
            w.write_all(&0f64.to_le_bytes())?;
        }
        OutputActivation::Bounded(scale) => {
            w.write_all(&[1u8])?;
            w.write_all(&scale.to_le_bytes())?;
        }
    }
    for layer in net.layers() {
        for &v in layer.w.iter().chain(&layer.b) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
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

    fn f32(&mut self, what: &str) -> Result<f32> {
        let mut b = [0u8; 4];
        self.take(&mut b, what)?;
        Ok(f32::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.take(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }
}

pub fn load_net(path: &Path) -> Result<Net> {
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
            msg: format!("unsupported checkpoint version {version}"),
        });
    }
    let input_dim = r.u32("input_dim")? as usize;
    let n_hidden = r.u32("hidden count")? as usize;
    if n_hidden > 64 {
        return Err(Error::Format {
            offset: r.offset - 4,
            msg: format!("implausible hidden layer count {n_hidden}"),
        });
    }
    let mut hidden = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden.push(r.u32("hidden dim")? as usize);
    }
    let output_dim = r.u32("output_dim")? as usize;
    let mut tag = [0u8; 1];
    r.take(&mut tag, "activation tag")?;
    let scale = r.f64("activation scale")?;
    let activation = match tag[0] {
        0 => OutputActivation::Identity,
        1 => OutputActivation::Bounded(scale),
        other => {
            return Err(Error::Format {
                offset: r.offset - 9,
                msg: format!("unknown activation tag {other}"),
            })
        }
    };
    let spec = NetSpec::new(input_dim, &hidden, output_dim, activation)
        .map_err(|e| Error::Format {
            offset: r.offset,
            msg: format!("invalid net spec in header: {e}"),
        })?;
    let mut net = Net::zeros(spec)?;
    let count = net.param_count();
    for idx in 0..count {
        let v = r.f32("parameter block")? as f64;
        net.set_param(idx, v);
    }
    Ok(net)
}
