//! Binary file formats: FEPT tensors, FEPM model checkpoints, and binary
//! (P5) PGM frames. All multi-byte integers are little-endian; payloads
//! are f64.
//!
//! FEPT: magic `FEPT`, u8 version=1, u8 rank, rank x u32 dims, then the
//! row-major f64 payload.
//!
//! FEPM: magic `FEPM`, u8 version=1, u8 kind (1 = template, 2 = tiny conv),
//! a shape header, then the f64 parameter payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{AnyModel, Model, TemplateModel, TinyConvModel};
use crate::tensor::{ClipShape, Tensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"FEPT";
pub const MODEL_MAGIC: &[u8; 4] = b"FEPM";
pub const FORMAT_VERSION: u8 = 1;

const MODEL_KIND_TEMPLATE: u8 = 1;
const MODEL_KIND_TINY_CONV: u8 = 2;

/// Byte-counting reader so malformed-file errors can name an offset.
pub(crate) struct CountingReader<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.offset
    }

    pub(crate) fn read_exact_at(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let start = self.offset;
        self.inner.read_exact(buf).map_err(|_| Error::Format {
            offset: start,
            message: format!("truncated while reading {}", what),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    pub(crate) fn read_u8(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact_at(&mut b, what)?;
        Ok(b[0])
    }

    pub(crate) fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_at(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn read_f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact_at(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }

    pub(crate) fn read_f64_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; n * 8];
        self.read_exact_at(&mut bytes, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let mut got = [0u8; 4];
        self.read_exact_at(&mut got, "magic bytes")?;
        if &got != magic {
            return Err(Error::Format {
                offset: 0,
                message: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&got),
                    String::from_utf8_lossy(magic)
                ),
            });
        }
        Ok(())
    }

    pub(crate) fn expect_version(&mut self) -> Result<()> {
        let v = self.read_u8("version")?;
        if v != FORMAT_VERSION {
            return Err(Error::Version {
                found: v,
                expected: FORMAT_VERSION,
            });
        }
        Ok(())
    }

    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Format {
                offset: self.offset,
                message: "trailing bytes after payload".into(),
            }),
            Err(e) => Err(Error::Io(e)),
        }
    }
}

pub(crate) fn write_tensor_bytes<W: Write>(w: &mut W, t: &Tensor<f64>) -> Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    let rank = u8::try_from(t.rank()).map_err(|_| {
        Error::InvalidArgument(format!("rank {} does not fit the format", t.rank()))
    })?;
    w.write_all(&[rank])?;
    for &d in t.shape() {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidArgument(format!("dimension {} too large", d)))?;
        w.write_all(&d.to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_tensor_bytes<R: Read>(r: &mut CountingReader<R>) -> Result<Tensor<f64>> {
    r.expect_magic(TENSOR_MAGIC)?;
    r.expect_version()?;
    let rank = r.read_u8("rank")? as usize;
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        shape.push(r.read_u32(&format!("dimension {}", i))? as usize);
    }
    let volume = shape.iter().product::<usize>();
    let start = r.offset();
    let data = r.read_f64_vec(volume, "tensor payload")?;
    Tensor::new(shape, data).map_err(|e| Error::Format {
        offset: start,
        message: e.to_string(),
    })
}

/// Writes one tensor as a FEPT file.
pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor_bytes(&mut w, t)?;
    w.flush()?;
    Ok(())
}

/// Reads one tensor from a FEPT file; the file must contain nothing else.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor<f64>> {
    let mut r = CountingReader::new(BufReader::new(File::open(path)?));
    let t = read_tensor_bytes(&mut r)?;
    r.expect_eof()?;
    Ok(t)
}

fn write_clip_shape<W: Write>(w: &mut W, s: &ClipShape) -> Result<()> {
    for d in s.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    Ok(())
}

fn read_clip_shape<R: Read>(r: &mut CountingReader<R>) -> Result<ClipShape> {
    let start = r.offset();
    let t = r.read_u32("clip t")? as usize;
    let c = r.read_u32("clip c")? as usize;
    let h = r.read_u32("clip h")? as usize;
    let w = r.read_u32("clip w")? as usize;
    ClipShape::new(t, c, h, w).map_err(|e| Error::Format {
        offset: start,
        message: e.to_string(),
    })
}

/// Saves either reference model as a FEPM checkpoint.
pub fn save_model(path: impl AsRef<Path>, model: &AnyModel<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    match model {
        AnyModel::Template(m) => {
            w.write_all(&[MODEL_KIND_TEMPLATE])?;
            let shape = m.clip_shape();
            w.write_all(&(m.num_classes() as u32).to_le_bytes())?;
            write_clip_shape(&mut w, &shape)?;
            w.write_all(&m.temperature().to_le_bytes())?;
            for &b in m.bias() {
                w.write_all(&b.to_le_bytes())?;
            }
            for t in m.templates() {
                for &v in t.data() {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        AnyModel::TinyConv(m) => {
            w.write_all(&[MODEL_KIND_TINY_CONV])?;
            let shape = m.clip_shape();
            w.write_all(&(m.num_classes() as u32).to_le_bytes())?;
            write_clip_shape(&mut w, &shape)?;
            let k = m.kernel().shape();
            w.write_all(&(k[0] as u32).to_le_bytes())?;
            w.write_all(&(k[2] as u32).to_le_bytes())?;
            w.write_all(&(k[3] as u32).to_le_bytes())?;
            w.write_all(&(k[4] as u32).to_le_bytes())?;
            for &v in m.kernel().data() {
                w.write_all(&v.to_le_bytes())?;
            }
            for &v in m.conv_bias() {
                w.write_all(&v.to_le_bytes())?;
            }
            for &v in m.head_weights() {
                w.write_all(&v.to_le_bytes())?;
            }
            for &v in m.head_bias() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a FEPM checkpoint.
pub fn load_model(path: impl AsRef<Path>) -> Result<AnyModel<f64>> {
    let mut r = CountingReader::new(BufReader::new(File::open(path)?));
    r.expect_magic(MODEL_MAGIC)?;
    r.expect_version()?;
    let kind = r.read_u8("model kind")?;
    let model = match kind {
        MODEL_KIND_TEMPLATE => {
            let classes = r.read_u32("class count")? as usize;
            let shape = read_clip_shape(&mut r)?;
            let temperature = r.read_f64("temperature")?;
            let bias = r.read_f64_vec(classes, "bias")?;
            let volume = shape.volume();
            let mut templates = Vec::with_capacity(classes);
            for i in 0..classes {
                let start = r.offset();
                let data = r.read_f64_vec(volume, &format!("template {}", i))?;
                templates.push(Tensor::new(shape.dims().to_vec(), data).map_err(|e| {
                    Error::Format {
                        offset: start,
                        message: e.to_string(),
                    }
                })?);
            }
            AnyModel::Template(
                TemplateModel::new(templates, bias, temperature).map_err(|e| Error::Format {
                    offset: r.offset(),
                    message: e.to_string(),
                })?,
            )
        }
        MODEL_KIND_TINY_CONV => {
            let classes = r.read_u32("class count")? as usize;
            let shape = read_clip_shape(&mut r)?;
            let c_out = r.read_u32("conv channels")? as usize;
            let kt = r.read_u32("kernel t")? as usize;
            let kh = r.read_u32("kernel h")? as usize;
            let kw = r.read_u32("kernel w")? as usize;
            let kshape = vec![c_out, shape.c, kt, kh, kw];
            let kvol = kshape.iter().product::<usize>();
            let start = r.offset();
            let kernel = Tensor::new(kshape, r.read_f64_vec(kvol, "conv kernel")?).map_err(|e| {
                Error::Format {
                    offset: start,
                    message: e.to_string(),
                }
            })?;
            let conv_bias = r.read_f64_vec(c_out, "conv bias")?;
            let head_w = r.read_f64_vec(classes * c_out, "head weights")?;
            let head_b = r.read_f64_vec(classes, "head bias")?;
            AnyModel::TinyConv(
                TinyConvModel::new(kernel, conv_bias, head_w, head_b, shape).map_err(|e| {
                    Error::Format {
                        offset: r.offset(),
                        message: e.to_string(),
                    }
                })?,
            )
        }
        other => {
            return Err(Error::Format {
                offset: 5,
                message: format!("unknown model kind {}", other),
            })
        }
    };
    r.expect_eof()?;
    Ok(model)
}

/// Writes one grayscale frame as binary PGM (P5), one byte per pixel.
pub fn save_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::InvalidArgument(format!(
            "PGM payload has {} bytes, {}x{} needs {}",
            pixels.len(),
            width,
            height,
            width * height
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", width, height)?;
    w.write_all(pixels)?;
    w.flush()?;
    Ok(())
}
