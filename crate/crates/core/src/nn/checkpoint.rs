//! Named-tensor checkpoint archive.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic "NTNS0001" (8 bytes)
//! tensor count: u32
//! per tensor:
//!   name length: u16, name bytes (UTF-8)
//!   rank: u8, dims: u32 x rank
//!   data: f32 x prod(dims)
//! ```
//!
//! A JSON sidecar written next to the archive carries run metadata
//! (architecture, width, epoch, schedules, config hash, optimizer state
//! names); see the training module. Loading verifies magic, bounds and
//! exact length so truncated or foreign files fail loudly.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::ArrayD;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NTNS0001";

/// Write named f32 tensors.
pub fn save_tensors(path: &Path, tensors: &[(String, ArrayD<f32>)]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(Error::InvalidInput(format!("tensor name too long: {name}")));
        }
        w.write_all(&(name_bytes.len() as u16).to_le_bytes()).map_err(io_err)?;
        w.write_all(name_bytes).map_err(io_err)?;
        let dims = tensor.shape();
        if dims.len() > u8::MAX as usize {
            return Err(Error::InvalidInput(format!("tensor rank too high: {name}")));
        }
        w.write_all(&[dims.len() as u8]).map_err(io_err)?;
        for &d in dims {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
        }
        // Standard layout guaranteed for freshly built arrays; fall back to
        // an explicit iteration otherwise.
        match tensor.as_slice() {
            Some(slice) => {
                for &v in slice {
                    w.write_all(&v.to_le_bytes()).map_err(io_err)?;
                }
            }
            None => {
                for &v in tensor.iter() {
                    w.write_all(&v.to_le_bytes()).map_err(io_err)?;
                }
            }
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Read an archive written by [`save_tensors`].
pub fn load_tensors(path: &Path) -> Result<Vec<(String, ArrayD<f32>)>> {
    let file = fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(format!("checkpoint {} not found", path.display()))
        } else {
            Error::io(path, e)
        }
    })?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| Error::Decode(format!("{}: {msg}", path.display()));

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("file too short for header"))?;
    if &magic != MAGIC {
        return Err(bad("not a tensor archive (bad magic)"));
    }
    let mut cnt = [0u8; 4];
    r.read_exact(&mut cnt).map_err(|_| bad("missing tensor count"))?;
    let count = u32::from_le_bytes(cnt);
    let mut out = Vec::with_capacity(count as usize);
    for i in 0..count {
        let mut nl = [0u8; 2];
        r.read_exact(&mut nl).map_err(|_| bad("truncated tensor name length"))?;
        let name_len = u16::from_le_bytes(nl) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|_| bad("truncated tensor name"))?;
        let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank).map_err(|_| bad("truncated tensor rank"))?;
        let mut dims = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut d = [0u8; 4];
            r.read_exact(&mut d).map_err(|_| bad("truncated tensor dims"))?;
            dims.push(u32::from_le_bytes(d) as usize);
        }
        let n: usize = dims.iter().product();
        // Guard absurd sizes before allocating (a corrupt header could
        // otherwise request terabytes).
        if n > (1 << 31) {
            return Err(bad(&format!("tensor {i} claims {n} elements")));
        }
        let mut data = vec![0f32; n];
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf).map_err(|_| bad("truncated tensor data"))?;
        for (j, chunk) in buf.chunks_exact(4).enumerate() {
            data[j] = f32::from_le_bytes(chunk.try_into().expect("chunk is 4 bytes"));
        }
        let tensor = ArrayD::from_shape_vec(dims, data)
            .map_err(|_| bad("tensor shape/length mismatch"))?;
        out.push((name, tensor));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(bad("trailing bytes after last tensor"));
    }
    Ok(out)
}
