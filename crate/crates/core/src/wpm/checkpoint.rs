//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "GWLANWPM"
//! version  u32      1
//! header   u32 length + UTF-8 `key=value` lines (the model config)
//! count    u32      number of tensors
//! tensor   u32 name length + UTF-8 name
//!          u32 rank + rank × u64 dims
//!          dims.product() × f64, row-major
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{ModelError, Tensor, WpmConfig, WpmModel};

const MAGIC: &[u8; 8] = b"GWLANWPM";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_bytes<W: Write>(w: &mut W, b: &[u8]) -> io::Result<()> {
    put_u32(w, b.len() as u32)?;
    w.write_all(b)
}

pub fn write_checkpoint<W: Write>(model: &WpmModel, mut w: W) -> Result<(), ModelError> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    put_bytes(&mut w, model.config.to_header().as_bytes())?;
    let tensors = model.params.named_tensors();
    put_u32(&mut w, tensors.len() as u32)?;
    for (name, t) in tensors {
        put_bytes(&mut w, name.as_bytes())?;
        put_u32(&mut w, t.shape().len() as u32)?;
        for &dim in t.shape() {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.len() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        let mut b = [0u8; N];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| ModelError::Checkpoint(format!("truncated file: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.exact()?))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.exact()?))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let len = self.u32()? as usize;
        let mut b = vec![0u8; len];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| ModelError::Checkpoint(format!("truncated file: {e}")))?;
        String::from_utf8(b).map_err(|_| ModelError::Checkpoint("invalid UTF-8".into()))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<WpmModel, ModelError> {
    let mut r = Reader { inner: r };
    if &r.exact::<8>()? != MAGIC {
        return Err(ModelError::Checkpoint("not a model checkpoint".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported format version {version}")));
    }
    let config = WpmConfig::from_header(&r.string()?)?;
    let mut params = super::WpmParameters::init(&config, 0);
    let count = r.u32()? as usize;
    let mut slots = params.named_tensors_mut();
    if count != slots.len() {
        return Err(ModelError::Checkpoint(format!(
            "expected {} tensors, found {count}",
            slots.len()
        )));
    }
    for (expected_name, slot) in slots.iter_mut() {
        let name = r.string()?;
        if &name != expected_name {
            return Err(ModelError::Checkpoint(format!("expected tensor {expected_name}, found {name}")));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if shape != slot.shape() {
            return Err(ModelError::Checkpoint(format!("shape mismatch for {name}")));
        }
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.inner
            .read_exact(&mut bytes)
            .map_err(|e| ModelError::Checkpoint(format!("truncated tensor {name}: {e}")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        **slot = Tensor::from_vec(&shape, data);
    }
    drop(slots);
    WpmModel::from_parts(config, params)
}

/// Writes to a temporary sibling and renames, so readers never see a
/// partial file.
pub fn save_checkpoint(model: &WpmModel, path: &Path) -> Result<(), ModelError> {
    let tmp = path.with_extension("tmp");
    {
        let f = fs::File::create(&tmp)?;
        write_checkpoint(model, io::BufWriter::new(f))?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<WpmModel, ModelError> {
    read_checkpoint(io::BufReader::new(fs::File::open(path)?))
}
