//! Binary received-vector files.
//!
//! Layout, all little-endian: the 8-byte magic `MIMOSRV1`, `N` and `N_R` as
//! `u64`, then `N·N_R` pairs of `f64` (real, imaginary) in stacked antenna
//! order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::model::ReceivedSignal;
use crate::numerics::{CVector, C64};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MIMOSRV1";

/// Refuse headers describing more samples than this.
const MAX_SAMPLES: u64 = 1 << 28;

pub fn write_signal(r: &ReceivedSignal, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(r.n_subcarriers() as u64).to_le_bytes())?;
    w.write_all(&(r.n_rx() as u64).to_le_bytes())?;
    for z in r.samples().iter() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_signal(mut r: impl Read) -> Result<ReceivedSignal> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "header")?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, not a received-vector file".into()));
    }
    let n = read_u64(&mut r, "header")?;
    let n_rx = read_u64(&mut r, "header")?;
    let total = n.checked_mul(n_rx).filter(|&t| t > 0 && t <= MAX_SAMPLES).ok_or_else(|| {
        Error::Format(format!("implausible dimensions N = {n}, N_R = {n_rx}"))
    })?;
    let mut buf = vec![0u8; total as usize * 16];
    read_exact(&mut r, &mut buf, &format!("payload: expected {total} complex samples"))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let samples: Vec<C64> = buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    ReceivedSignal::new(n as usize, n_rx as usize, CVector::from_vec(samples))
}

pub fn save_signal(r: &ReceivedSignal, path: &Path) -> Result<()> {
    write_signal(r, BufWriter::new(File::create(path)?))
}

pub fn load_signal(path: &Path) -> Result<ReceivedSignal> {
    let f = File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    read_signal(BufReader::new(f)).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
