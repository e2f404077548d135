//! FDS1: one sample per file.
//!
//! ```text
//! "FDS1" | header_len: u32 LE | header: UTF-8 JSON
//!        | features: f32 LE * T*F (row-major)
//!        | glass:    f32 LE * T*G (only when G > 0)
//!        | valid:    u8 * T (0 or 1)
//!        | brightness: f32 LE * T
//! ```
//!
//! Header keys: `user_id`, `label`, `fps`, `T`, `F`, `glass_dim`, `flags`.

use serde::{Deserialize, Serialize};

use super::sample::Sample;
use crate::error::{format_err, Result};
use crate::numkernel::Mat;

pub const FDS_MAGIC: &[u8; 4] = b"FDS1";

/// Set when a glass payload follows the features.
pub const FLAG_GLASS: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    user_id: String,
    label: u8,
    fps: f64,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "F")]
    f: usize,
    glass_dim: usize,
    flags: u32,
}

pub fn write_fds(sample: &Sample) -> Vec<u8> {
    let glass_dim = sample.glass.as_ref().map_or(0, Mat::cols);
    let header = Header {
        user_id: sample.user_id.clone(),
        label: sample.label,
        fps: sample.fps,
        t: sample.seq_len(),
        f: sample.features.cols(),
        glass_dim,
        flags: if glass_dim > 0 { FLAG_GLASS } else { 0 },
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + header.len() + 4 * sample.features.as_slice().len());
    out.extend_from_slice(FDS_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    let mut put = |xs: &[f64]| {
        for &x in xs {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    };
    put(sample.features.as_slice());
    if let Some(g) = &sample.glass {
        put(g.as_slice());
    }
    out.extend(sample.valid.iter().map(|&v| u8::from(v)));
    for &b in &sample.brightness {
        out.extend_from_slice(&(b as f32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(format_err(
                self.bytes.len(),
                format!(
                    "truncated {what}: need {n} bytes at offset {}, {} available",
                    self.pos,
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(4 * n, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect())
    }
}

pub fn load_fds(bytes: &[u8]) -> Result<Sample> {
    if bytes.len() < 4 || &bytes[..4] != FDS_MAGIC {
        return Err(format_err(0, "bad FDS1 magic"));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let len = u32::from_le_bytes(cur.take(4, "header length")?.try_into().unwrap()) as usize;
    let header_at = cur.pos;
    let header: Header = serde_json::from_slice(cur.take(len, "header")?)
        .map_err(|e| format_err(header_at, format!("invalid header JSON: {e}")))?;
    if header.label > 1 {
        return Err(format_err(header_at, format!("label {} is not binary", header.label)));
    }
    if !(header.fps > 0.0) {
        return Err(format_err(header_at, "fps must be positive"));
    }
    if (header.flags & FLAG_GLASS != 0) != (header.glass_dim > 0) {
        return Err(format_err(header_at, "glass flag disagrees with glass_dim"));
    }
    let (t, f, g) = (header.t, header.f, header.glass_dim);
    let expected = t * f * 4 + t * g * 4 + t + t * 4;
    let remaining = bytes.len() - cur.pos;
    if remaining != expected {
        return Err(format_err(
            cur.pos,
            format!("header declares T={t}, F={f}, G={g}: payload must be {expected} bytes, found {remaining}"),
        ));
    }
    let features = Mat::new(t, f, cur.f32s(t * f, "features")?)?;
    let glass = if g > 0 {
        Some(Mat::new(t, g, cur.f32s(t * g, "glass features")?)?)
    } else {
        None
    };
    let valid_at = cur.pos;
    let valid = cur
        .take(t, "validity channel")?
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format_err(valid_at + i, format!("validity byte {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let bright_at = cur.pos;
    let brightness = cur.f32s(t, "brightness channel")?;
    if let Some(i) = brightness.iter().position(|b| !(0.0..=255.0).contains(b)) {
        return Err(format_err(bright_at + 4 * i, "brightness outside [0, 255]"));
    }
    Ok(Sample {
        user_id: header.user_id,
        label: header.label,
        features,
        glass,
        valid,
        brightness,
        fps: header.fps,
    })
}
