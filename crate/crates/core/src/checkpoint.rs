//! Little-endian binary checkpoint container.
//!
//! A single-network file is
//!
//! ```text
//! "GANSER1\0" | version u32 | layer count u32 | dims u32[layers + 1]
//!             | hidden act u8 | output act u8 | f64 params
//! ```
//!
//! where parameters are written layer by layer, weights row-major then bias.
//! Composite models (auto-encoder, GAN, SVM) share the magic and version and
//! follow them with a four-byte kind tag before their own payload.

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, OutputActivation};

pub const MAGIC: &[u8; 8] = b"GANSER1\0";
pub const VERSION: u32 = 1;

pub const TAG_AAE: &[u8; 4] = b"AAE\0";
pub const TAG_GAN: &[u8; 4] = b"GAN\0";
pub const TAG_SVM: &[u8; 4] = b"SVM\0";

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn header(&mut self) -> &mut Self {
        self.buf.extend_from_slice(MAGIC);
        self.u32(VERSION)
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn len_u32(&mut self, n: usize) -> &mut Self {
        self.u32(u32::try_from(n).expect("length fits in u32"))
    }

    /// Length-prefixed UTF-8.
    pub fn str(&mut self, s: &str) -> &mut Self {
        self.len_u32(s.len());
        self.bytes(s.as_bytes())
    }

    /// Length-prefixed f64 vector.
    pub fn f64s(&mut self, values: &[f64]) -> &mut Self {
        self.len_u32(values.len());
        for &v in values {
            self.f64(v);
        }
        self
    }

    pub fn network(&mut self, net: &Mlp) -> &mut Self {
        self.len_u32(net.num_layers());
        for &d in net.layer_dims() {
            self.len_u32(d);
        }
        self.u8(net.hidden_activation().code());
        self.u8(net.output_activation().code());
        for (w, b) in net.weights().iter().zip(net.biases()) {
            for &v in w.iter() {
                self.f64(v);
            }
            for &v in b.iter() {
                self.f64(v);
            }
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn header(&mut self) -> Result<()> {
        if self.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        Ok(())
    }

    pub fn expect_tag(&mut self, tag: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != tag {
            return Err(Error::Checkpoint(format!(
                "expected {} block, found {:?}",
                String::from_utf8_lossy(&tag[..3]),
                got
            )));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        if n > (self.data.len() - self.pos) / 8 {
            return Err(Error::Checkpoint(format!("vector length {n} exceeds remaining data")));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn network(&mut self) -> Result<Mlp> {
        let layers = self.u32()? as usize;
        if layers == 0 || layers > 1024 {
            return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
        }
        let dims = (0..=layers).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let hidden = Activation::from_code(self.u8()?)?;
        let output = OutputActivation::from_code(self.u8()?)?;
        let needed: usize = dims.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        if needed > (self.data.len() - self.pos) / 8 {
            return Err(Error::Checkpoint("parameter block truncated".into()));
        }
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for p in dims.windows(2) {
            let w = (0..p[0] * p[1]).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
            let b = (0..p[1]).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
            weights.push(Array2::from_shape_vec((p[1], p[0]), w).expect("sized above"));
            biases.push(Array1::from(b));
        }
        Mlp::from_parts(weights, biases, hidden, output).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", self.data.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    Ok(std::fs::read(path)?)
}

impl Mlp {
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.header().network(self);
        w.finish()
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.header()?;
        let net = r.network()?;
        r.finish()?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path, &self.to_checkpoint_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint_bytes(&read_file(path)?)
    }
}
