//! `LTG1` dataset files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "LTG1"
//! u32 num_classes C
//! u32 image side S
//! C × u32 samples per class (all splits)
//! 3 × u32 samples per split (train, val, test)
//! per sample, in split order:
//!     u8 label
//!     S² × u8 pixels, round(255·v), row-major
//!     ⌈S²/8⌉ × u8 sketch bits, row-major, least-significant bit first
//! ```

use std::fs;
use std::path::Path;

use crate::data::shapes::{Dataset, ImageSample, Split};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"LTG1";

pub fn encode_dataset(d: &Dataset) -> Vec<u8> {
    let px = d.side * d.side;
    let sketch_bytes = px.div_ceil(8);
    let mut out = Vec::with_capacity(64 + d.samples.len() * (1 + px + sketch_bytes));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(d.num_classes as u32).to_le_bytes());
    out.extend_from_slice(&(d.side as u32).to_le_bytes());
    for &c in &d.class_counts {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    for split in Split::ALL {
        out.extend_from_slice(&(d.split_len(split) as u32).to_le_bytes());
    }
    for split in Split::ALL {
        for s in d.split(split) {
            out.push(s.label as u8);
            out.extend(
                s.pixels
                    .iter()
                    .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
            );
            let mut bits = vec![0u8; sketch_bytes];
            for (i, &b) in s.sketch.iter().enumerate() {
                if b != 0 {
                    bits[i / 8] |= 1 << (i % 8);
                }
            }
            out.extend_from_slice(&bits);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corruption(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 4 || &bytes[..4] != DATASET_MAGIC {
        return Err(Error::Format("missing LTG1 magic".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let num_classes = r.u32("class count")?;
    let side = r.u32("image side")?;
    if num_classes == 0 || num_classes > 256 || side == 0 || side > 1024 {
        return Err(Error::Corruption(format!(
            "implausible header: {num_classes} classes, side {side}"
        )));
    }
    let class_counts = (0..num_classes)
        .map(|_| r.u32("class counts"))
        .collect::<Result<Vec<_>>>()?;
    let split_counts = [
        r.u32("split counts")?,
        r.u32("split counts")?,
        r.u32("split counts")?,
    ];
    let total: usize = class_counts.iter().sum();
    if split_counts.iter().sum::<usize>() != total {
        return Err(Error::Corruption(format!(
            "split counts {split_counts:?} do not add up to {total}"
        )));
    }
    let px = side * side;
    let sketch_bytes = px.div_ceil(8);
    let record = 1 + px + sketch_bytes;
    let remaining = bytes.len() - r.pos;
    if remaining != total * record {
        return Err(Error::Corruption(format!(
            "payload has {remaining} bytes, header implies {}",
            total * record
        )));
    }

    let mut samples = Vec::with_capacity(total);
    let mut seen = vec![0usize; num_classes];
    for (split, &n) in Split::ALL.iter().zip(&split_counts) {
        for _ in 0..n {
            let rec = r.take(record, "sample")?;
            let label = rec[0] as usize;
            if label >= num_classes {
                return Err(Error::Corruption(format!("label {label} out of range")));
            }
            seen[label] += 1;
            let pixels = rec[1..1 + px].iter().map(|&b| b as f64 / 255.0).collect();
            let bits = &rec[1 + px..];
            let sketch = (0..px).map(|i| (bits[i / 8] >> (i % 8)) & 1).collect();
            samples.push(ImageSample {
                pixels,
                label,
                sketch,
                split: *split,
            });
        }
    }
    if seen != class_counts {
        return Err(Error::Corruption(format!(
            "label histogram {seen:?} disagrees with header {class_counts:?}"
        )));
    }
    Ok(Dataset {
        num_classes,
        side,
        class_counts,
        samples,
    })
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, encode_dataset(d))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&fs::read(path)?)
}
