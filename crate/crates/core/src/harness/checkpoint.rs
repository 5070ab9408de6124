//! Little-endian orbital snapshots.
//!
//! Layout: `b"FMFD"`, version `u32`, points per axis `u32`, box length `f64`,
//! orbital count `u32`, sign `i8`, then every orbital as `n^3` pairs of `f64`
//! (real, imaginary) in grid order.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid};
use crate::kernel::Sign;
use crate::orbitals::OrbitalSet;

pub const MAGIC: [u8; 4] = *b"FMFD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 4 + 1;

pub fn encode_orbitals(set: &OrbitalSet) -> Vec<u8> {
    let grid = set.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + set.n_particles() * grid.len() * 16);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&grid.box_length().to_le_bytes());
    out.extend_from_slice(&(set.n_particles() as u32).to_le_bytes());
    out.extend_from_slice(&set.sign().as_i8().to_le_bytes());
    for f in set.orbitals() {
        for v in f.values() {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const K: usize>(&mut self, what: &str) -> Result<[u8; K]> {
        let end = self.pos + K;
        let Some(chunk) = self.bytes.get(self.pos..end) else {
            return Err(format_error(
                self.bytes.len(),
                format!("truncated while reading {what} ({} of {K} bytes present)", self.bytes.len() - self.pos),
            ));
        };
        self.pos = end;
        Ok(chunk.try_into().expect("slice of length K"))
    }
}

fn format_error(offset: usize, detail: String) -> Error {
    Error::Format { offset: offset as u64, detail }
}

/// Parses a snapshot; the coupling is reset to `N^{-2/3}`.
pub fn decode_orbitals(bytes: &[u8]) -> Result<OrbitalSet> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take::<4>("magic")?;
    if magic != MAGIC {
        return Err(format_error(0, format!("bad magic {magic:?}, expected {:?} (\"FMFD\")", MAGIC)));
    }
    let version = u32::from_le_bytes(r.take("version")?);
    if version != VERSION {
        return Err(format_error(4, format!("unsupported version {version}, expected {VERSION}")));
    }
    let n = u32::from_le_bytes(r.take("grid size")?) as usize;
    let l = f64::from_le_bytes(r.take("box length")?);
    let grid = Grid::new(n, l).map_err(|e| format_error(8, format!("bad grid header: {e}")))?;
    let count = u32::from_le_bytes(r.take("orbital count")?) as usize;
    let raw_sign = i8::from_le_bytes(r.take("sign")?);
    let sign = Sign::from_i8(raw_sign).ok_or_else(|| format_error(24, format!("bad sign byte {raw_sign}")))?;
    let expected = HEADER_LEN + count * grid.len() * 16;
    if bytes.len() != expected {
        let detail = if bytes.len() < expected { "truncated orbital data" } else { "trailing bytes after orbital data" };
        return Err(format_error(
            bytes.len().min(expected),
            format!("{detail}: file has {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    let mut orbitals = Vec::with_capacity(count);
    for _ in 0..count {
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = f64::from_le_bytes(r.take("amplitude")?);
            let im = f64::from_le_bytes(r.take("amplitude")?);
            values.push(Complex64::new(re, im));
        }
        orbitals.push(ComplexField::from_values(grid, values)?);
    }
    OrbitalSet::new(grid, orbitals, sign)
}

/// Writes via a sibling temporary file so a failed write leaves no partial
/// snapshot behind.
pub fn save_orbitals(set: &OrbitalSet, path: &Path) -> Result<()> {
    let tmp = path.with_extension("fmfd.partial");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&encode_orbitals(set))?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_orbitals(path: &Path) -> Result<OrbitalSet> {
    decode_orbitals(&std::fs::read(path)?)
}
