//! `XQC1` checkpoint files: little-endian reals preceded by a header that
//! carries the config hash and a layout table.
//!
//! ```text
//! magic      4  b"XQC1"
//! precision  1  4 (f32) | 8 (f64)
//! hash       8  u64, first 8 bytes of SHA-256 over the run config text
//! count      4  u32 number of layout records
//! record*       u16 name length, name (UTF-8), u8 role, u32 rows, u32 cols, u64 offset
//! n_values   8  u64
//! values        n_values reals at `precision`
//! ```

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::diffcore::{Layout, LayoutEntry, ParamRole, ParamVector};
use crate::error::{Result, XqcError};

pub const MAGIC: &[u8; 4] = b"XQC1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn code(self) -> u8 {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

pub fn config_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

/// Named tensors over one flat value buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub precision: Precision,
    pub entries: Vec<LayoutEntry>,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn new(config_hash: u64, precision: Precision) -> Self {
        Self {
            config_hash,
            precision,
            entries: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, role: ParamRole, rows: usize, cols: usize, data: &[f64]) {
        assert_eq!(data.len(), rows * cols);
        self.entries.push(LayoutEntry {
            layer_id: name.to_string(),
            role,
            rows,
            cols,
            offset: self.values.len(),
            projected: false,
        });
        self.values.extend_from_slice(data);
    }

    /// Store every layout entry of `p` as `<prefix>/<layer-id>`.
    pub fn push_params(&mut self, prefix: &str, p: &ParamVector) {
        for e in p.layout.entries() {
            self.push(&format!("{prefix}/{}", e.layer_id), e.role, e.rows, e.cols, p.slice(e));
        }
    }

    pub fn tensor(&self, name: &str, role: ParamRole) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|e| e.layer_id == name && e.role == role)
            .map(|e| &self.values[e.offset..e.offset + e.len()])
    }

    /// Rebuild a parameter vector stored under `prefix` with `layout`.
    pub fn params(&self, prefix: &str, layout: &Layout) -> Result<ParamVector> {
        let mut p = ParamVector::zeros(layout.clone());
        for e in layout.entries() {
            let name = format!("{prefix}/{}", e.layer_id);
            let src = self
                .tensor(&name, e.role)
                .ok_or_else(|| XqcError::Format(format!("missing tensor `{name}` ({:?})", e.role)))?;
            if src.len() != e.len() {
                return Err(XqcError::Format(format!("tensor `{name}` has wrong size")));
            }
            p.slice_mut(e).copy_from_slice(src);
        }
        Ok(p)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(self.precision.code());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            let name = e.layer_id.as_bytes();
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
            out.push(e.role.code());
            out.extend_from_slice(&(e.rows as u32).to_le_bytes());
            out.extend_from_slice(&(e.cols as u32).to_le_bytes());
            out.extend_from_slice(&(e.offset as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for &v in &self.values {
            match self.precision {
                Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
                Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(XqcError::Format("bad magic".into()));
        }
        let precision = match r.u8()? {
            4 => Precision::F32,
            8 => Precision::F64,
            p => return Err(XqcError::Format(format!("unknown precision {p}"))),
        };
        let config_hash = r.u64()?;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| XqcError::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let role = ParamRole::from_code(r.u8()?).ok_or_else(|| XqcError::Format("unknown role".into()))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let offset = r.u64()? as usize;
            entries.push(LayoutEntry {
                layer_id: name,
                role,
                rows,
                cols,
                offset,
                projected: false,
            });
        }
        let n = r.u64()? as usize;
        let mut values = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            values.push(match precision {
                Precision::F64 => f64::from_le_bytes(r.take(8)?.try_into().unwrap()),
                Precision::F32 => f32::from_le_bytes(r.take(4)?.try_into().unwrap()) as f64,
            });
        }
        if r.pos != bytes.len() {
            return Err(XqcError::Format("trailing bytes".into()));
        }
        for e in &entries {
            if e.offset + e.len() > values.len() {
                return Err(XqcError::Format(format!("tensor `{}` out of range", e.layer_id)));
            }
        }
        Ok(Self {
            config_hash,
            precision,
            entries,
            values,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(XqcError::Format("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
