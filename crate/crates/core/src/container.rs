//! The `SCBS` bitstream container. See `FORMAT.md` for the byte layout.

use crate::error::{Error, Result};
use crate::nets::{ModelId, GROUPS};

pub const MAGIC: &[u8; 4] = b"SCBS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 30;
pub const COLOR_LEN: usize = 12;
pub const STREAMS: usize = 1 + GROUPS;
pub const FLAG_COLOR: u16 = 1;
pub const FLAG_TILED: u16 = 2;
const KNOWN_FLAGS: u16 = FLAG_COLOR | FLAG_TILED;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    /// Original (unpadded) image width.
    pub width: u32,
    pub height: u32,
    pub model_id: ModelId,
    pub timestep: u16,
    /// Decode the pixel-space stages tile by tile.
    pub tiled: bool,
}

/// Six 16-bit fixed-point statistics: means of R, G, B, then standard
/// deviations of R, G, B; each decodes to `k / 65535`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ColorPayload {
    pub mean: [u16; 3],
    pub std: [u16; 3],
}

impl ColorPayload {
    pub fn to_bytes(&self) -> [u8; COLOR_LEN] {
        let mut out = [0u8; COLOR_LEN];
        for (i, v) in self.mean.iter().chain(&self.std).enumerate() {
            out[2 * i..2 * i + 2].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8; COLOR_LEN]) -> Self {
        let v = |i: usize| u16::from_le_bytes([b[2 * i], b[2 * i + 1]]);
        Self {
            mean: [v(0), v(1), v(2)],
            std: [v(3), v(4), v(5)],
        }
    }
}

/// Hyper-latent stream, then the four group streams in coding order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Streams {
    pub z: Vec<u8>,
    pub groups: [Vec<u8>; GROUPS],
}

impl Streams {
    pub fn iter(&self) -> impl Iterator<Item = &Vec<u8>> {
        std::iter::once(&self.z).chain(self.groups.iter())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Container {
    pub header: Header,
    pub color: Option<ColorPayload>,
    pub streams: Streams,
}

impl Container {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let mut flags = 0u16;
        if self.color.is_some() {
            flags |= FLAG_COLOR;
        }
        if h.tiled {
            flags |= FLAG_TILED;
        }
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&h.width.to_le_bytes());
        out.extend_from_slice(&h.height.to_le_bytes());
        out.extend_from_slice(&h.model_id.0);
        out.extend_from_slice(&h.timestep.to_le_bytes());
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        if let Some(c) = &self.color {
            out.extend_from_slice(&c.to_bytes());
        }
        for s in self.streams.iter() {
            let len = u32::try_from(s.len())
                .map_err(|_| Error::config(format!("stream of {} bytes exceeds the u32 length field", s.len())))?;
            out.extend_from_slice(&len.to_le_bytes());
        }
        for s in self.streams.iter() {
            out.extend_from_slice(s);
        }
        Ok(out)
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + if self.color.is_some() { COLOR_LEN } else { 0 }
            + 4 * STREAMS
            + self.streams.iter().map(Vec::len).sum::<usize>()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let need = |at: usize, n: usize| -> Result<&[u8]> {
            bytes.get(at..at + n).ok_or_else(|| {
                Error::format(
                    at,
                    format!("truncated: need {n} bytes, file has {}", bytes.len()),
                )
            })
        };
        let u16_at = |at: usize| -> Result<u16> {
            let b = need(at, 2)?;
            Ok(u16::from_le_bytes([b[0], b[1]]))
        };
        let u32_at = |at: usize| -> Result<u32> {
            let b = need(at, 4)?;
            Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        };
        if need(0, 4)? != MAGIC {
            return Err(Error::format(0, "bad magic, expected \"SCBS\""));
        }
        let version = u16_at(4)?;
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported container version {version}")));
        }
        let width = u32_at(6)?;
        let height = u32_at(10)?;
        if width == 0 || height == 0 {
            return Err(Error::format(6, format!("empty image extent {width}x{height}")));
        }
        let mut model_id = [0u8; 8];
        model_id.copy_from_slice(need(14, 8)?);
        let timestep = u16_at(22)?;
        let flags = u16_at(24)?;
        if flags & !KNOWN_FLAGS != 0 {
            return Err(Error::format(24, format!("unknown flag bits {:#06x}", flags & !KNOWN_FLAGS)));
        }
        let reserved = u32_at(26)?;
        if reserved != 0 {
            return Err(Error::format(26, "reserved field must be zero"));
        }
        let mut at = HEADER_LEN;
        let color = if flags & FLAG_COLOR != 0 {
            let mut b = [0u8; COLOR_LEN];
            b.copy_from_slice(need(at, COLOR_LEN)?);
            at += COLOR_LEN;
            Some(ColorPayload::from_bytes(&b))
        } else {
            None
        };
        let mut lens = [0usize; STREAMS];
        for l in lens.iter_mut() {
            *l = u32_at(at)? as usize;
            at += 4;
        }
        let total: usize = lens.iter().sum();
        if bytes.len() - at != total {
            return Err(Error::format(
                at,
                format!(
                    "stream table declares {total} payload bytes, file has {}",
                    bytes.len() - at
                ),
            ));
        }
        let mut take = |n: usize| {
            let s = bytes[at..at + n].to_vec();
            at += n;
            s
        };
        let z = take(lens[0]);
        let groups = [take(lens[1]), take(lens[2]), take(lens[3]), take(lens[4])];
        Ok(Container {
            header: Header {
                width,
                height,
                model_id: ModelId(model_id),
                timestep,
                tiled: flags & FLAG_TILED != 0,
            },
            color,
            streams: Streams { z, groups },
        })
    }

    /// Bits per pixel of the whole file over the original extents.
    pub fn bpp(&self) -> f64 {
        bpp(self.encoded_len(), self.header.width, self.header.height)
    }
}

pub fn bpp(file_len: usize, width: u32, height: u32) -> f64 {
    8.0 * file_len as f64 / (width as f64 * height as f64)
}
