//! Binary checkpoint: a version byte, a little-endian header describing the
//! shape and frame settings, then every parameter matrix as row-major `f64`.

use std::path::Path;

use super::{ModelParams, ModelShape};
use crate::error::{Error, Result};
use crate::features::{Ablation, FrameConfig};

pub const CHECKPOINT_VERSION: u8 = 1;
const MAGIC: &[u8; 4] = b"NCEL";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub frame: FrameConfig,
    /// Embedding dimension the features were built with.
    pub dim: usize,
    pub seed: u64,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Data(format!(
                "{}: checkpoint truncated at byte {}",
                self.path.display(),
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit a checkpoint field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let shape = &self.params.shape;
        let mut out = vec![CHECKPOINT_VERSION];
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, shape.layers())?;
        put_u32(&mut out, shape.d0)?;
        for &w in &shape.widths {
            put_u32(&mut out, w)?;
        }
        put_u32(&mut out, self.frame.n)?;
        put_u32(&mut out, self.frame.q)?;
        put_u32(&mut out, self.frame.context_window)?;
        put_u32(&mut out, self.dim)?;
        out.push(self.frame.ablation.bits());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for m in self.params.matrices() {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        let version = r.u8()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        if r.take(4)? != MAGIC {
            return Err(Error::Data(format!("{}: not a checkpoint", path.display())));
        }
        let layers = r.u32()?;
        if layers == 0 || layers > 1024 {
            return Err(Error::Data(format!("{}: bad layer count {layers}", path.display())));
        }
        let d0 = r.u32()?;
        let widths = (0..=layers).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n = r.u32()?;
        let q = r.u32()?;
        let context_window = r.u32()?;
        let dim = r.u32()?;
        let ablation = Ablation::from_bits(r.u8()?);
        let seed = r.u64()?;
        let frame = FrameConfig {
            n,
            q,
            context_window,
            ablation,
        };
        if frame.feature_width(dim) != d0 {
            return Err(Error::Data(format!(
                "{}: feature width {d0} does not match n={n}, q={q}, d={dim}",
                path.display()
            )));
        }
        let shape = ModelShape { d0, widths };
        let template = ModelParams::init(&shape, 0)?;
        let mut mats = Vec::new();
        for m in template.matrices() {
            let data = (0..m.rows() * m.cols()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            mats.push(crate::numerics::Matrix::from_vec(m.rows(), m.cols(), data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Data(format!(
                "{}: {} trailing bytes in checkpoint",
                path.display(),
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            params: ModelParams::from_matrices(&shape, mats)?,
            frame,
            dim,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
