//! Binary masks and their uncompressed column-major run-length encoding.
//!
//! Runs alternate zero/one and always begin with a zero run, which may have
//! length 0 when the first pixel is set. Pixels are ordered column by column:
//! pixel `(x, y)` sits at flat position `x * height + y`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::BBox;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask dimensions must be at least 1x1, got {width}x{height}")]
    EmptyGrid { width: u32, height: u32 },
    #[error("run counts sum to {sum}, expected {expected} ({width}x{height})")]
    CountSum {
        sum: u64,
        expected: u64,
        width: u32,
        height: u32,
    },
    #[error("zero-length run at position {0}; only the leading run may be empty")]
    EmptyRun(usize),
    #[error("bitmap data length {len} does not match {width}x{height}")]
    DataLength { len: usize, width: u32, height: u32 },
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
}

/// Dense boolean grid stored column-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyGrid { width, height });
        }
        Ok(Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        })
    }

    /// Builds a bitmap from column-major pixel data.
    pub fn from_column_major(width: u32, height: u32, data: Vec<bool>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyGrid { width, height });
        }
        if data.len() != width as usize * height as usize {
            return Err(MaskError::DataLength {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[self.offset(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.offset(x, y);
        self.data[i] = value;
    }

    pub fn column_major(&self) -> &[bool] {
        &self.data
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x}, {y}) out of range"
        );
        x as usize * self.height as usize + y as usize
    }
}

/// Run-length encoded binary mask (`{"w","h","counts"}` on the wire).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRle", into = "RawRle")]
pub struct RleMask {
    width: u32,
    height: u32,
    counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawRle {
    w: u32,
    h: u32,
    counts: Vec<u64>,
}

impl TryFrom<RawRle> for RleMask {
    type Error = MaskError;

    fn try_from(raw: RawRle) -> Result<Self, Self::Error> {
        RleMask::new(raw.w, raw.h, raw.counts)
    }
}

impl From<RleMask> for RawRle {
    fn from(m: RleMask) -> Self {
        RawRle {
            w: m.width,
            h: m.height,
            counts: m.counts,
        }
    }
}

impl RleMask {
    pub fn new(width: u32, height: u32, counts: Vec<u64>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyGrid { width, height });
        }
        let expected = u64::from(width) * u64::from(height);
        let sum: u64 = counts.iter().sum();
        if sum != expected {
            return Err(MaskError::CountSum {
                sum,
                expected,
                width,
                height,
            });
        }
        if let Some(pos) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(MaskError::EmptyRun(pos + 1));
        }
        Ok(Self {
            width,
            height,
            counts,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Half-open rasterization of a box: pixel `(x, y)` is set when its
    /// centre `(x + 0.5, y + 0.5)` lies in `[x1, x2) x [y1, y2)`. For integer
    /// boxes this is exactly the pixel block `x1..x2, y1..y2`. The box is
    /// clipped to the canvas.
    pub fn from_box(bbox: &BBox, width: u32, height: u32) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyGrid { width, height });
        }
        let (x0, x1) = pixel_range(bbox.x1(), bbox.x2(), width);
        let (y0, y1) = pixel_range(bbox.y1(), bbox.y2(), height);
        let total = u64::from(width) * u64::from(height);
        if x0 >= x1 || y0 >= y1 {
            return Ok(Self {
                width,
                height,
                counts: vec![total],
            });
        }
        let h = u64::from(height);
        let (y0, y1) = (u64::from(y0), u64::from(y1));
        let mut runs = RunBuilder::default();
        runs.push(false, u64::from(x0) * h);
        for _ in x0..x1 {
            runs.push(false, y0);
            runs.push(true, y1 - y0);
            runs.push(false, h - y1);
        }
        runs.push(false, u64::from(width - x1) * h);
        Ok(Self {
            width,
            height,
            counts: runs.counts,
        })
    }

    /// Pixelwise union of two masks on the same canvas.
    pub fn union(&self, other: &RleMask) -> Result<RleMask, MaskError> {
        self.check_same_canvas(other)?;
        let a = rle_decode(self);
        let b = rle_decode(other);
        let data = a
            .column_major()
            .iter()
            .zip(b.column_major())
            .map(|(&p, &q)| p || q)
            .collect();
        Ok(rle_encode(&Bitmap::from_column_major(
            self.width,
            self.height,
            data,
        )?))
    }

    pub(crate) fn check_same_canvas(&self, other: &RleMask) -> Result<(), MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Iterates `(start, end)` flat offsets of the set-pixel runs.
    pub(crate) fn one_runs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c;
            (i % 2 == 1).then_some((start, pos))
        })
    }
}

/// Accumulates alternating runs, merging adjacent runs of the same value.
struct RunBuilder {
    counts: Vec<u64>,
}

impl Default for RunBuilder {
    fn default() -> Self {
        Self { counts: vec![0] }
    }
}

impl RunBuilder {
    fn push(&mut self, value: bool, len: u64) {
        if len == 0 {
            return;
        }
        let last_is_one = self.counts.len().is_multiple_of(2);
        if last_is_one == value {
            *self.counts.last_mut().expect("non-empty") += len;
        } else {
            self.counts.push(len);
        }
    }
}

fn pixel_range(lo: f64, hi: f64, limit: u32) -> (u32, u32) {
    // first pixel whose centre is >= lo, first pixel whose centre is >= hi
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).ceil().max(0.0);
    let clamp = |v: f64| v.min(f64::from(limit)) as u32;
    (clamp(first), clamp(last))
}

/// Encodes a bitmap as column-major runs starting with the zero run.
pub fn rle_encode(bitmap: &Bitmap) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for &px in bitmap.column_major() {
        if px != current {
            counts.push(run);
            run = 0;
            current = px;
        }
        run += 1;
    }
    counts.push(run);
    RleMask {
        width: bitmap.width(),
        height: bitmap.height(),
        counts,
    }
}

/// Expands runs back into a bitmap. `RleMask` values are validated at
/// construction, so decoding cannot fail.
pub fn rle_decode(mask: &RleMask) -> Bitmap {
    let mut data = Vec::with_capacity(mask.width as usize * mask.height as usize);
    for (i, &c) in mask.counts.iter().enumerate() {
        data.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
    }
    Bitmap {
        width: mask.width,
        height: mask.height,
        data,
    }
}
