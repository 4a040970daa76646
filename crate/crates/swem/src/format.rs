//! Binary feature-stream container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        8 bytes  "SWEMFSTR"
//! version      u32      1
//! frames       u32      T
//! pixels       u32      N
//! channels     u32      C
//! value_chans  u32      C' (0 when no value section)
//! objects      u32
//! flags        u32      bit 0: values present, bit 1: masks present
//! T frames, each:
//!   keys       N*C  f32, row-major
//!   values     N*C' f32, row-major          (if bit 0)
//!   masks      objects * N f32 in [0, 1]    (if bit 1)
//! ```
//!
//! Snapshots reuse the same header with bit 2 set; see [`crate::snapshot`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use swem_core::{FeatureMatrix, Matrix, SoftMask};

use crate::error::{format_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"SWEMFSTR";
pub const VERSION: u32 = 1;
pub const FLAG_VALUES: u32 = 1;
pub const FLAG_MASKS: u32 = 1 << 1;
pub const FLAG_SNAPSHOT: u32 = 1 << 2;

/// The seven header words following the magic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    pub frames: u32,
    pub pixels: u32,
    pub channels: u32,
    pub value_channels: u32,
    pub objects: u32,
    pub flags: u32,
}

impl Header {
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [
            self.version,
            self.frames,
            self.pixels,
            self.channels,
            self.value_channels,
            self.objects,
            self.flags,
        ] {
            w.write_u32::<LittleEndian>(v)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| format_err("truncated header"))?;
        if &magic != MAGIC {
            return Err(format_err("bad magic"));
        }
        let mut words = [0u32; 7];
        for w in &mut words {
            *w = r
                .read_u32::<LittleEndian>()
                .map_err(|_| format_err("truncated header"))?;
        }
        let h = Header {
            version: words[0],
            frames: words[1],
            pixels: words[2],
            channels: words[3],
            value_channels: words[4],
            objects: words[5],
            flags: words[6],
        };
        if h.version != VERSION {
            return Err(format_err(format!("unsupported version {}", h.version)));
        }
        Ok(h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// `N × C` keys.
    pub keys: Vec<f32>,
    /// `N × C'` values, present when the stream has a value section.
    pub values: Option<Vec<f32>>,
    /// One length-`N` foreground mask per object.
    pub masks: Vec<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamFile {
    pixels: usize,
    channels: usize,
    value_channels: usize,
    objects: usize,
    has_values: bool,
    has_masks: bool,
    frames: Vec<Frame>,
}

impl StreamFile {
    /// Checks every frame against the declared sizes, finiteness and mask
    /// range. `value_channels` is ignored unless frames carry values.
    pub fn new(
        pixels: usize,
        channels: usize,
        value_channels: usize,
        objects: usize,
        frames: Vec<Frame>,
    ) -> Result<Self> {
        if pixels == 0 || channels == 0 {
            return Err(Error::Config("pixels and channels must be positive".into()));
        }
        let has_values = frames.first().is_some_and(|f| f.values.is_some());
        let has_masks = objects > 0;
        let value_channels = if has_values { value_channels } else { 0 };
        if has_values && value_channels == 0 {
            return Err(Error::Config("value section needs C' > 0".into()));
        }
        for (t, f) in frames.iter().enumerate() {
            let bad = |what: &str| format_err(format!("frame {t}: {what}"));
            if f.keys.len() != pixels * channels {
                return Err(bad("key buffer size"));
            }
            match (&f.values, has_values) {
                (Some(v), true) if v.len() == pixels * value_channels => {}
                (None, false) => {}
                _ => return Err(bad("value buffer size")),
            }
            if f.masks.len() != objects || f.masks.iter().any(|m| m.len() != pixels) {
                return Err(bad("mask count or size"));
            }
            let all = f.keys.iter().chain(f.values.iter().flatten());
            if all.clone().any(|v| !v.is_finite()) {
                return Err(bad("non-finite feature"));
            }
            if f.masks.iter().flatten().any(|&m| !(0.0..=1.0).contains(&m)) {
                return Err(bad("mask outside [0, 1]"));
            }
        }
        Ok(Self {
            pixels,
            channels,
            value_channels,
            objects,
            has_values,
            has_masks,
            frames,
        })
    }

    pub fn header(&self) -> Header {
        let mut flags = 0;
        if self.has_values {
            flags |= FLAG_VALUES;
        }
        if self.has_masks {
            flags |= FLAG_MASKS;
        }
        Header {
            version: VERSION,
            frames: self.frames.len() as u32,
            pixels: self.pixels as u32,
            channels: self.channels as u32,
            value_channels: self.value_channels as u32,
            objects: self.objects as u32,
            flags,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn value_channels(&self) -> usize {
        self.value_channels
    }

    pub fn objects(&self) -> usize {
        self.objects
    }

    pub fn has_values(&self) -> bool {
        self.has_values
    }

    pub fn has_masks(&self) -> bool {
        self.has_masks
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// Keys of frame `t` promoted to `f64`.
    pub fn keys(&self, t: usize) -> Result<FeatureMatrix> {
        promote(&self.frames[t].keys, self.pixels, self.channels)
    }

    /// Values of frame `t`; the keys stand in when the stream has none.
    pub fn values(&self, t: usize) -> Result<FeatureMatrix> {
        match &self.frames[t].values {
            Some(v) => promote(v, self.pixels, self.value_channels),
            None => self.keys(t),
        }
    }

    pub fn mask(&self, t: usize, object: usize) -> Result<SoftMask> {
        let m = self.frames[t]
            .masks
            .get(object)
            .ok_or_else(|| Error::Config(format!("stream has no mask for object {object}")))?;
        Ok(SoftMask::new(m.iter().map(|&v| f64::from(v)).collect())?)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        self.header().write(w)?;
        for f in &self.frames {
            write_f32s(w, &f.keys)?;
            if let Some(v) = &f.values {
                write_f32s(w, v)?;
            }
            for m in &f.masks {
                write_f32s(w, m)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let h = Header::read(r)?;
        if h.flags & FLAG_SNAPSHOT != 0 {
            return Err(format_err("file is a memory snapshot, not a stream"));
        }
        if h.flags & !(FLAG_VALUES | FLAG_MASKS) != 0 {
            return Err(format_err(format!("unknown flags {:#x}", h.flags)));
        }
        let has_values = h.flags & FLAG_VALUES != 0;
        let has_masks = h.flags & FLAG_MASKS != 0;
        if has_masks != (h.objects > 0) {
            return Err(format_err("mask flag disagrees with object count"));
        }
        let n = h.pixels as usize;
        let key_len = checked_len(n, h.channels as usize)?;
        let value_len = checked_len(n, h.value_channels as usize)?;
        let mut frames = Vec::with_capacity((h.frames as usize).min(1 << 16));
        for _ in 0..h.frames {
            let keys = read_f32s(r, key_len)?;
            let values = if has_values {
                Some(read_f32s(r, value_len)?)
            } else {
                None
            };
            let masks = (0..h.objects)
                .map(|_| read_f32s(r, n))
                .collect::<Result<Vec<_>>>()?;
            frames.push(Frame {
                keys,
                values,
                masks,
            });
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(format_err("trailing bytes after last frame"));
        }
        StreamFile::new(
            n,
            h.channels as usize,
            h.value_channels as usize,
            h.objects as usize,
            frames,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn promote(buf: &[f32], rows: usize, cols: usize) -> Result<FeatureMatrix> {
    let data = buf.iter().map(|&v| f64::from(v)).collect();
    Ok(FeatureMatrix::new(Matrix::from_vec(rows, cols, data)?)?)
}

fn checked_len(a: usize, b: usize) -> Result<usize> {
    a.checked_mul(b)
        .filter(|&l| l <= (1 << 32))
        .ok_or_else(|| format_err("declared frame size too large"))
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, v: &[f32]) -> Result<()> {
    for &x in v {
        w.write_f32::<LittleEndian>(x)?;
    }
    Ok(())
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; len * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| format_err("truncated frame payload"))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}
