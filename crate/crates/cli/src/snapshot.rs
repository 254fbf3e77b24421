//! Binary particle snapshots: `FLIP`, version u32, count u64, then the six
//! SoA arrays (pos_x, pos_y, pos_z, vel_x, vel_y, vel_z) as little-endian f32.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flipsim::particles::ParticleSet;

pub const MAGIC: [u8; 4] = *b"FLIP";
pub const VERSION: u32 = 1;
const HEADER: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: byte offset {offset}: {message}", path.display())]
    Format { path: PathBuf, offset: usize, message: String },
}

pub fn encode(particles: &ParticleSet) -> Vec<u8> {
    let n = particles.len();
    let mut out = Vec::with_capacity(HEADER + 24 * n);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for array in particles.arrays() {
        for x in array {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Decodes a snapshot; the error carries the byte offset where parsing failed.
pub fn decode(bytes: &[u8]) -> Result<ParticleSet, (usize, String)> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err((0, "missing FLIP magic".into()));
    }
    if bytes.len() < 8 {
        return Err((4, "truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err((4, format!("unsupported version {version}")));
    }
    if bytes.len() < HEADER {
        return Err((8, "truncated header".into()));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let expected = usize::try_from(count)
        .ok()
        .and_then(|n| n.checked_mul(24))
        .and_then(|b| b.checked_add(HEADER))
        .ok_or((8, format!("particle count {count} too large")))?;
    if bytes.len() < expected {
        return Err((bytes.len(), format!("truncated: {count} particles need {expected} bytes, found {}", bytes.len())));
    }
    if bytes.len() > expected {
        return Err((expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let n = count as usize;
    let mut particles = ParticleSet::with_capacity(n);
    for (a, array) in particles.arrays_mut().into_iter().enumerate() {
        let start = HEADER + 4 * n * a;
        array.extend(bytes[start..start + 4 * n].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())));
    }
    Ok(particles)
}

pub fn write_snapshot(particles: &ParticleSet, path: &Path) -> Result<(), SnapshotError> {
    let io_err = |source| SnapshotError::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    w.write_all(&encode(particles)).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn read_snapshot(path: &Path) -> Result<ParticleSet, SnapshotError> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| SnapshotError::Io { path: path.to_path_buf(), source })?;
    decode(&bytes).map_err(|(offset, message)| SnapshotError::Format { path: path.to_path_buf(), offset, message })
}
