//! Flat binary container for [`CurrentHistory`]; the byte layout is
//! described in `docs/history_format.md`.

use std::io::{Cursor, Read, Write};

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};

use super::history::{CurrentHistory, Interpolation};
use crate::gridlab::{TimeSampling, UniformGrid3};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SRCH";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 104;
const LAYOUT_RHO_J: u8 = 0b11;

fn format_err(e: std::io::Error) -> Error {
    Error::Format(e.to_string())
}

/// Writes the history little-endian.
pub fn encode_history<W: Write>(history: &CurrentHistory, mut w: W) -> Result<()> {
    encode_with::<LittleEndian, W>(history, &mut w, b'L').map_err(format_err)
}

/// Same as [`encode_history`] with big-endian payload.
pub fn encode_history_be<W: Write>(history: &CurrentHistory, mut w: W) -> Result<()> {
    encode_with::<BigEndian, W>(history, &mut w, b'B').map_err(format_err)
}

pub fn to_bytes(history: &CurrentHistory) -> Vec<u8> {
    let n = history.grid().len() * 32 * history.times().len() + HEADER_LEN;
    let mut out = Vec::with_capacity(n);
    encode_history(history, &mut out).expect("writing to a Vec cannot fail");
    out
}

fn encode_with<E: ByteOrder, W: Write>(
    h: &CurrentHistory,
    w: &mut W,
    tag: u8,
) -> std::io::Result<()> {
    let g = h.grid();
    w.write_all(&MAGIC)?;
    w.write_u8(tag)?;
    w.write_u8(VERSION)?;
    w.write_u8(match h.interpolation() {
        Interpolation::Linear => 0,
        Interpolation::Cubic => 1,
    })?;
    w.write_u8(LAYOUT_RHO_J)?;
    for v in g.origin().into_iter().chain(g.spacing()) {
        w.write_f64::<E>(v)?;
    }
    for c in g.counts() {
        w.write_u64::<E>(c as u64)?;
    }
    w.write_f64::<E>(h.times().t_start())?;
    w.write_f64::<E>(h.times().dt())?;
    w.write_u64::<E>(h.times().len() as u64)?;
    let mut buf = vec![0u8; g.len() * 32];
    for i in 0..h.times().len() {
        let (rho, cur) = buf.split_at_mut(g.len() * 8);
        E::write_f64_into(h.rho(i), rho);
        let flat: Vec<f64> = h.current(i).iter().flatten().copied().collect();
        E::write_f64_into(&flat, cur);
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Parses a container. Every structural inconsistency is reported as
/// [`Error::Format`]; grid and sampling validation errors pass through.
pub fn decode_history(bytes: &[u8]) -> Result<CurrentHistory> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "{} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    match bytes[4] {
        b'L' => decode_with::<LittleEndian>(bytes),
        b'B' => decode_with::<BigEndian>(bytes),
        t => Err(Error::Format(format!("unknown endianness tag 0x{t:02x}"))),
    }
}

pub fn read_history<R: Read>(mut r: R) -> Result<CurrentHistory> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(format_err)?;
    decode_history(&bytes)
}

fn decode_with<E: ByteOrder>(bytes: &[u8]) -> Result<CurrentHistory> {
    let mut c = Cursor::new(&bytes[5..HEADER_LEN]);
    let version = c.read_u8().map_err(format_err)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let interpolation = match c.read_u8().map_err(format_err)? {
        0 => Interpolation::Linear,
        1 => Interpolation::Cubic,
        v => return Err(Error::Format(format!("unknown interpolation code {v}"))),
    };
    let layout = c.read_u8().map_err(format_err)?;
    if layout != LAYOUT_RHO_J {
        return Err(Error::Format(format!(
            "unsupported payload layout 0b{layout:b}"
        )));
    }
    let mut f = [0.0; 6];
    for v in &mut f {
        *v = c.read_f64::<E>().map_err(format_err)?;
    }
    let mut counts = [0usize; 3];
    for v in &mut counts {
        *v = usize::try_from(c.read_u64::<E>().map_err(format_err)?)
            .map_err(|_| Error::Format("node count overflows".into()))?;
    }
    let t_start = c.read_f64::<E>().map_err(format_err)?;
    let dt = c.read_f64::<E>().map_err(format_err)?;
    let n_times = usize::try_from(c.read_u64::<E>().map_err(format_err)?)
        .map_err(|_| Error::Format("sample count overflows".into()))?;

    let nodes = counts
        .iter()
        .try_fold(1usize, |a, &b| a.checked_mul(b))
        .ok_or_else(|| Error::Format("node count overflows".into()))?;
    let block = nodes
        .checked_mul(32)
        .ok_or_else(|| Error::Format("block size overflows".into()))?;
    let expected = block
        .checked_mul(n_times)
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let grid = UniformGrid3::new([f[0], f[1], f[2]], [f[3], f[4], f[5]], counts)?;
    let times = TimeSampling::new(t_start, dt, n_times)?;
    let mut rho = Vec::with_capacity(n_times);
    let mut current = Vec::with_capacity(n_times);
    for chunk in bytes[HEADER_LEN..].chunks_exact(block) {
        let mut r = vec![0.0; nodes];
        E::read_f64_into(&chunk[..nodes * 8], &mut r);
        let mut flat = vec![0.0; nodes * 3];
        E::read_f64_into(&chunk[nodes * 8..], &mut flat);
        rho.push(r);
        current.push(flat.chunks_exact(3).map(|v| [v[0], v[1], v[2]]).collect());
    }
    CurrentHistory::new(grid, times, interpolation, rho, current)
}
