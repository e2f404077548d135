//! Flat parameter storage and the FLPV binary format.
//!
//! FLPV layout (all integers little-endian):
//!
//! ```text
//! "FLPV" | version: u16 | text_len: u32 | layout text (UTF-8) | values: f64 * n
//! ```
//!
//! The layout text has one `name rows cols` line per segment, in storage
//! order; `n` is the sum of `rows * cols`.

use std::fmt;
use std::sync::Arc;

use crate::error::{format_err, shape, Result};

pub const FLPV_MAGIC: &[u8; 4] = b"FLPV";
pub const FLPV_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered segments that tile a flat parameter array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    pub fn new<S: Into<String>>(shapes: impl IntoIterator<Item = (S, usize, usize)>) -> Self {
        let mut segments = Vec::new();
        let mut offset = 0;
        for (name, rows, cols) in shapes {
            segments.push(Segment {
                name: name.into(),
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        }
        Self {
            segments,
            total: offset,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn get(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn segment(&self, name: &str) -> Result<&Segment> {
        self.get(name)
            .ok_or_else(|| shape(format!("layout has no segment `{name}`")))
    }

    pub fn to_text(&self) -> String {
        self.segments
            .iter()
            .map(|s| format!("{} {} {}", s.name, s.rows, s.cols))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut shapes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(format!("layout line {} malformed: `{line}`", i + 1));
            }
            let rows = parts[1]
                .parse()
                .map_err(|_| format!("layout line {} bad row count", i + 1))?;
            let cols = parts[2]
                .parse()
                .map_err(|_| format!("layout line {} bad column count", i + 1))?;
            shapes.push((parts[0].to_owned(), rows, cols));
        }
        Ok(Self::new(shapes))
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Model parameters: a flat `f64` array plus its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        Self {
            values: vec![0.0; layout.total()],
            layout,
        }
    }

    pub fn from_values(layout: Arc<Layout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(shape(format!(
                "layout expects {} values, got {}",
                layout.total(),
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn segment(&self, name: &str) -> Result<&[f64]> {
        let seg = self.layout.segment(name)?;
        Ok(&self.values[seg.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        let range = self.layout.segment(name)?.range();
        Ok(&mut self.values[range])
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(shape("parameter layouts differ"))
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ParamVector) -> Result<()> {
        self.check_layout(other)?;
        crate::numkernel::axpy(a, &other.values, &mut self.values);
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_layout(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ParamVector {
            values,
            layout: self.layout.clone(),
        })
    }

    pub fn norm(&self) -> f64 {
        crate::numkernel::norm(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let text = self.layout.to_text();
        let mut out = Vec::with_capacity(10 + text.len() + 8 * self.values.len());
        out.extend_from_slice(FLPV_MAGIC);
        out.extend_from_slice(&FLPV_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses one FLPV block that must span all of `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (pv, used) = Self::read_block(bytes, 0)?;
        if used != bytes.len() {
            return Err(format_err(used, "trailing bytes after FLPV payload"));
        }
        Ok(pv)
    }

    /// Parses one FLPV block starting at `base` (used for error offsets).
    /// Returns the vector and the number of bytes consumed.
    pub fn read_block(bytes: &[u8], base: usize) -> Result<(Self, usize)> {
        if bytes.len() < 4 || &bytes[..4] != FLPV_MAGIC {
            return Err(format_err(base, "bad FLPV magic"));
        }
        if bytes.len() < 10 {
            return Err(format_err(base + bytes.len(), "truncated FLPV header"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FLPV_VERSION {
            return Err(format_err(base + 4, format!("unsupported FLPV version {version}")));
        }
        let text_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let text_end = 10 + text_len;
        if bytes.len() < text_end {
            return Err(format_err(base + bytes.len(), "truncated FLPV layout text"));
        }
        let text = std::str::from_utf8(&bytes[10..text_end])
            .map_err(|e| format_err(base + 10 + e.valid_up_to(), "layout text is not UTF-8"))?;
        let layout = Layout::from_text(text).map_err(|m| format_err(base + 10, m))?;
        let n = layout.total();
        let end = text_end + 8 * n;
        if bytes.len() < end {
            return Err(format_err(
                base + bytes.len(),
                format!("payload truncated: need {} bytes", 8 * n),
            ));
        }
        let values = bytes[text_end..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((
            Self {
                values,
                layout: Arc::new(layout),
            },
            end,
        ))
    }
}

/// Coordinate-wise `Σ w_i θ_i`, summed in the given order.
pub fn weighted_sum(items: &[&ParamVector], weights: &[f64]) -> Result<ParamVector> {
    let first = items
        .first()
        .ok_or_else(|| shape("weighted sum of zero vectors"))?;
    if items.len() != weights.len() {
        return Err(shape("weights and vectors differ in count"));
    }
    let mut out = first.zeros_like();
    for (p, &w) in items.iter().zip(weights) {
        out.axpy(w, p)?;
    }
    Ok(out)
}
