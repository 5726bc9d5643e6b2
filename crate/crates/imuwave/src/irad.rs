//! IRAD binary container.
//!
//! ```text
//! "IRAD" | version u8 (=1) | kind u8 | dtype u8 | ndim u8 | dims: ndim x u32 LE | payload
//! ```
//!
//! Payload is row-major little-endian. Checkpoints (kind 5) use dtype 0 and
//! ndim 0 with no payload, followed by a table:
//! `u32 count`, then per entry `u16 name_len | name | dtype | ndim | dims | payload`.

use std::path::Path;

use num_complex::Complex32;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IRAD";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Kinematic = 0,
    ImuTrace = 1,
    RadarCube = 2,
    Heatmap = 3,
    Spectrogram = 4,
    Checkpoint = 5,
    Mask = 6,
}

impl Kind {
    pub fn from_u8(v: u8) -> Option<Self> {
        use Kind::*;
        [Kinematic, ImuTrace, RadarCube, Heatmap, Spectrogram, Checkpoint, Mask].get(v as usize).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    F64 = 1,
    /// Interleaved re, im f32 pairs.
    C32 = 2,
    U8 = 3,
}

impl DType {
    pub fn from_u8(v: u8) -> Option<Self> {
        use DType::*;
        [F32, F64, C32, U8].get(v as usize).copied()
    }

    pub fn width(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
            Self::C32 => 8,
            Self::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    F32(Vec<f32>),
    F64(Vec<f64>),
    C32(Vec<Complex32>),
    U8(Vec<u8>),
}

impl Values {
    pub fn dtype(&self) -> DType {
        match self {
            Self::F32(_) => DType::F32,
            Self::F64(_) => DType::F64,
            Self::C32(_) => DType::C32,
            Self::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::F32(v) => v.len(),
            Self::F64(v) => v.len(),
            Self::C32(v) => v.len(),
            Self::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dims plus values.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub dims: Vec<usize>,
    pub values: Values,
}

impl Array {
    pub fn new(dims: Vec<usize>, values: Values) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != values.len() {
            return Err(Error::Invariant(format!("dims {dims:?} need {n} values, got {}", values.len())));
        }
        if dims.len() > u8::MAX as usize || dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::Invariant(format!("dims {dims:?} exceed the container limits")));
        }
        Ok(Self { dims, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Container {
    Array { kind: Kind, array: Array },
    Checkpoint(Vec<(String, Array)>),
}

impl Container {
    pub fn kind(&self) -> Kind {
        match self {
            Self::Array { kind, .. } => *kind,
            Self::Checkpoint(_) => Kind::Checkpoint,
        }
    }
}

fn put_array_body(out: &mut Vec<u8>, a: &Array) {
    out.push(a.values.dtype() as u8);
    out.push(a.dims.len() as u8);
    for &d in &a.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match &a.values {
        Values::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Values::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Values::C32(v) => v.iter().for_each(|z| {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }),
        Values::U8(v) => out.extend_from_slice(v),
    }
}

pub fn encode(c: &Container) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    match c {
        Container::Array { kind, array } => {
            if *kind == Kind::Checkpoint {
                return Err(Error::Invariant("checkpoint kind needs a named-tensor table".into()));
            }
            out.push(*kind as u8);
            put_array_body(&mut out, array);
        }
        Container::Checkpoint(entries) => {
            out.extend_from_slice(&[Kind::Checkpoint as u8, DType::F32 as u8, 0]);
            out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
            for (name, a) in entries {
                let len = u16::try_from(name.len()).map_err(|_| Error::Invariant(format!("tensor name too long: {name}")))?;
                out.extend_from_slice(&len.to_le_bytes());
                out.extend_from_slice(name.as_bytes());
                put_array_body(&mut out, a);
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let have = self.buf.len() - self.pos;
        if have < n {
            return Err(Error::Format {
                offset: self.pos,
                msg: format!("truncated {what}: expected {n} bytes, found {have}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn array(&mut self) -> Result<Array> {
        let at = self.pos;
        let dt = self.u8("dtype")?;
        let dtype = DType::from_u8(dt).ok_or(Error::Format { offset: at, msg: format!("unknown dtype {dt}") })?;
        let ndim = self.u8("ndim")? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(self.u32("dims")? as usize);
        }
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let bytes = n.and_then(|n| n.checked_mul(dtype.width())).ok_or(Error::Format {
            offset: at,
            msg: format!("dims {dims:?} overflow"),
        })?;
        let p = self.take(bytes, "payload")?;
        let values = match dtype {
            DType::F32 => Values::F32(p.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect()),
            DType::F64 => Values::F64(p.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()),
            DType::C32 => Values::C32(
                p.chunks_exact(8)
                    .map(|b| {
                        let re = f32::from_le_bytes(b[..4].try_into().unwrap());
                        let im = f32::from_le_bytes(b[4..].try_into().unwrap());
                        Complex32::new(re, im)
                    })
                    .collect(),
            ),
            DType::U8 => Values::U8(p.to_vec()),
        };
        Ok(Array { dims, values })
    }
}

pub fn decode(buf: &[u8]) -> Result<Container> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format { offset: 0, msg: format!("bad magic {magic:?}, expected \"IRAD\"") });
    }
    let v = r.u8("version")?;
    if v != VERSION {
        return Err(Error::Format { offset: 4, msg: format!("unsupported version {v}") });
    }
    let k = r.u8("kind")?;
    let kind = Kind::from_u8(k).ok_or(Error::Format { offset: 5, msg: format!("unknown kind {k}") })?;
    let c = if kind == Kind::Checkpoint {
        r.u8("dtype")?;
        if r.u8("ndim")? != 0 {
            return Err(Error::Format { offset: 7, msg: "checkpoint header must have ndim 0".into() });
        }
        let count = r.u32("entry count")? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u16("name length")? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(len, "name")?)
                .map_err(|_| Error::Format { offset: at, msg: "tensor name is not UTF-8".into() })?
                .to_string();
            entries.push((name, r.array()?));
        }
        Container::Checkpoint(entries)
    } else {
        Container::Array { kind, array: r.array()? }
    };
    if r.pos != buf.len() {
        return Err(Error::Format { offset: r.pos, msg: format!("{} trailing bytes", buf.len() - r.pos) });
    }
    Ok(c)
}

pub fn write_container(path: impl AsRef<Path>, c: &Container) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(c)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: impl AsRef<Path>) -> Result<Container> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
