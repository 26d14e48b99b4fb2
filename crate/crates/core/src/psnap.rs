//! PSNAP: the portable snapshot container.
//!
//! Layout (all integers and doubles little-endian):
//!
//! ```text
//! 0..8        magic "PSNAP\0v1"
//! 8..12       header length H (u32)
//! 12..12+H    UTF-8 header, one `key=value` per line
//! ...         n_dof * n_snap doubles, column-major
//! ...         n_dof doubles of quadrature weights, if has_weights=1
//! ```
//!
//! Required header keys: `n_dof`, `n_snap`, `parameter`, `dt_snap`, `t0`,
//! `field_layout`, `has_weights`. Unknown keys are preserved as extras.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, FormatError, Result};
use crate::export::fmt_f64;
use crate::snapshot::{FieldLayout, Quadrature, SnapshotSet};

pub const MAGIC: &[u8; 8] = b"PSNAP\0v1";
const PREAMBLE: usize = 12;

/// Parsed PSNAP header.
#[derive(Debug, Clone, PartialEq)]
pub struct PsnapHeader {
    pub n_dof: usize,
    pub n_snap: usize,
    pub parameter: f64,
    pub dt_snap: f64,
    pub t0: f64,
    pub field_layout: FieldLayout,
    pub has_weights: bool,
    /// Additional `key=value` lines, in file order.
    pub extras: Vec<(String, String)>,
}

impl PsnapHeader {
    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extras
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn to_text(&self) -> String {
        let mut text = format!(
            "n_dof={}\nn_snap={}\nparameter={}\ndt_snap={}\nt0={}\nfield_layout={}\nhas_weights={}\n",
            self.n_dof,
            self.n_snap,
            fmt_f64(self.parameter),
            fmt_f64(self.dt_snap),
            fmt_f64(self.t0),
            self.field_layout,
            u8::from(self.has_weights),
        );
        for (k, v) in &self.extras {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        text
    }

    fn parse(text: &str) -> std::result::Result<Self, FormatError> {
        let bad = |line_offset: usize, message: String| FormatError::BadHeader {
            offset: PREAMBLE + line_offset,
            message,
        };
        let mut fields: Vec<(usize, &str, &str)> = Vec::new();
        let mut pos = 0;
        for line in text.split_inclusive('\n') {
            let content = line.trim_end_matches(['\n', '\r']);
            if !content.is_empty() {
                let (k, v) = content
                    .split_once('=')
                    .ok_or_else(|| bad(pos, format!("line `{content}` is not key=value")))?;
                fields.push((pos, k.trim(), v.trim()));
            }
            pos += line.len();
        }
        let find = |key: &str| -> std::result::Result<(usize, &str), FormatError> {
            fields
                .iter()
                .find(|(_, k, _)| *k == key)
                .map(|(o, _, v)| (*o, *v))
                .ok_or_else(|| bad(text.len(), format!("missing key `{key}`")))
        };
        fn num<T: std::str::FromStr>(
            (offset, v): (usize, &str),
            key: &str,
        ) -> std::result::Result<T, FormatError> {
            v.parse().map_err(|_| FormatError::BadHeader {
                offset: PREAMBLE + offset,
                message: format!("`{key}` has unparsable value `{v}`"),
            })
        }
        let layout_at = find("field_layout")?;
        let field_layout: FieldLayout = layout_at.1.parse().map_err(|m| bad(layout_at.0, m))?;
        let has_weights_at = find("has_weights")?;
        let has_weights = match has_weights_at.1 {
            "0" => false,
            "1" => true,
            other => return Err(bad(has_weights_at.0, format!("has_weights must be 0 or 1, got `{other}`"))),
        };
        let header = PsnapHeader {
            n_dof: num(find("n_dof")?, "n_dof")?,
            n_snap: num(find("n_snap")?, "n_snap")?,
            parameter: num(find("parameter")?, "parameter")?,
            dt_snap: num(find("dt_snap")?, "dt_snap")?,
            t0: num(find("t0")?, "t0")?,
            field_layout,
            has_weights,
            extras: fields
                .iter()
                .filter(|(_, k, _)| {
                    !matches!(
                        *k,
                        "n_dof" | "n_snap" | "parameter" | "dt_snap" | "t0" | "field_layout" | "has_weights"
                    )
                })
                .map(|(_, k, v)| (k.to_string(), v.to_string()))
                .collect(),
        };
        if header.field_layout.n_dof() != header.n_dof {
            return Err(bad(layout_at.0, "field_layout does not sum to n_dof".into()));
        }
        Ok(header)
    }
}

fn check_magic(bytes: &[u8]) -> std::result::Result<(), FormatError> {
    for (i, expected) in MAGIC.iter().enumerate() {
        match bytes.get(i) {
            Some(b) if b == expected => {}
            _ => return Err(FormatError::BadMagic { offset: i }),
        }
    }
    Ok(())
}

fn header_len(bytes: &[u8]) -> std::result::Result<usize, FormatError> {
    let raw = bytes.get(8..12).ok_or(FormatError::Truncated {
        offset: 8,
        expected: 4,
        found: bytes.len().saturating_sub(8),
    })?;
    Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")) as usize)
}

fn header_text(bytes: &[u8], len: usize) -> std::result::Result<&str, FormatError> {
    let raw = bytes.get(PREAMBLE..PREAMBLE + len).ok_or(FormatError::Truncated {
        offset: PREAMBLE,
        expected: len,
        found: bytes.len().saturating_sub(PREAMBLE),
    })?;
    std::str::from_utf8(raw).map_err(|e| FormatError::BadHeader {
        offset: PREAMBLE + e.valid_up_to(),
        message: "header is not UTF-8".into(),
    })
}

fn read_doubles(
    bytes: &[u8],
    offset: usize,
    count: usize,
) -> std::result::Result<Vec<f64>, FormatError> {
    let expected = count * 8;
    let raw = bytes.get(offset..offset + expected).ok_or(FormatError::Truncated {
        offset,
        expected,
        found: bytes.len().saturating_sub(offset),
    })?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Writes a raw PSNAP file: header, column-major payload, optional weights.
pub fn write_psnap(
    path: &Path,
    header: &PsnapHeader,
    data: &DMatrix<f64>,
    weights: Option<&Quadrature>,
) -> Result<()> {
    if data.shape() != (header.n_dof, header.n_snap) || header.has_weights != weights.is_some() {
        return Err(Error::Dimension(format!(
            "header says {}x{} (weights: {}), payload is {}x{} (weights: {})",
            header.n_dof,
            header.n_snap,
            header.has_weights,
            data.nrows(),
            data.ncols(),
            weights.is_some()
        )));
    }
    if let Some(w) = weights {
        if w.len() != header.n_dof {
            return Err(Error::Dimension(format!("{} weights for {} rows", w.len(), header.n_dof)));
        }
    }
    let text = header.to_text();
    let mut buf = Vec::with_capacity(PREAMBLE + text.len() + 8 * (data.len() + header.n_dof));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    for x in data.as_slice() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    if let Some(w) = weights {
        for x in w.weights() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::storage(parent, e))?;
    }
    let mut file = File::create(path).map_err(|e| Error::storage(path, e))?;
    file.write_all(&buf).map_err(|e| Error::storage(path, e))?;
    file.flush().map_err(|e| Error::storage(path, e))
}

/// Reads a raw PSNAP file.
pub fn read_psnap(path: &Path) -> Result<(PsnapHeader, DMatrix<f64>, Option<Quadrature>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::storage(path, e))?;
    parse_psnap(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_psnap(
    bytes: &[u8],
) -> std::result::Result<(PsnapHeader, DMatrix<f64>, Option<Quadrature>), FormatError> {
    check_magic(bytes)?;
    let h = header_len(bytes)?;
    let header = PsnapHeader::parse(header_text(bytes, h)?)?;
    let mut offset = PREAMBLE + h;
    let payload = read_doubles(bytes, offset, header.n_dof * header.n_snap)?;
    offset += payload.len() * 8;
    let weights = if header.has_weights {
        let w = read_doubles(bytes, offset, header.n_dof)?;
        if let Some((index, &value)) = w.iter().enumerate().find(|(_, x)| !(**x > 0.0 && x.is_finite())) {
            return Err(FormatError::NonPositiveWeight {
                offset: offset + 8 * index,
                index,
                value,
            });
        }
        offset += w.len() * 8;
        Some(Quadrature::new(w).expect("weights validated above"))
    } else {
        None
    };
    if offset != bytes.len() {
        return Err(FormatError::BadHeader {
            offset,
            message: format!("{} trailing bytes after payload", bytes.len() - offset),
        });
    }
    let data = DMatrix::from_vec(header.n_dof, header.n_snap, payload);
    Ok((header, data, weights))
}

/// Reads only the header (the payload is never loaded).
pub fn read_header(path: &Path) -> Result<PsnapHeader> {
    let fmt = |source| Error::Format {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::open(path).map_err(|e| Error::storage(path, e))?;
    let mut pre = Vec::with_capacity(PREAMBLE);
    (&mut file)
        .take(PREAMBLE as u64)
        .read_to_end(&mut pre)
        .map_err(|e| Error::storage(path, e))?;
    check_magic(&pre).map_err(fmt)?;
    let h = header_len(&pre).map_err(fmt)?;
    let mut text = Vec::with_capacity(h);
    (&mut file)
        .take(h as u64)
        .read_to_end(&mut text)
        .map_err(|e| Error::storage(path, e))?;
    pre.extend_from_slice(&text);
    PsnapHeader::parse(header_text(&pre, h).map_err(fmt)?).map_err(fmt)
}

/// Writes a snapshot set (and optionally its quadrature) to `path`.
pub fn write_snapshots(s: &SnapshotSet, w: Option<&Quadrature>, path: &Path) -> Result<()> {
    let header = PsnapHeader {
        n_dof: s.n_dof(),
        n_snap: s.n_snap(),
        parameter: s.parameter(),
        dt_snap: s.dt_snap(),
        t0: s.t0(),
        field_layout: s.field_layout().clone(),
        has_weights: w.is_some(),
        extras: Vec::new(),
    };
    write_psnap(path, &header, s.data(), w)
}

/// Inverse of [`write_snapshots`].
pub fn read_snapshots(path: &Path) -> Result<(SnapshotSet, Option<Quadrature>)> {
    let (header, data, weights) = read_psnap(path)?;
    let set = SnapshotSet::new(data, header.parameter, header.t0, header.dt_snap, header.field_layout)?;
    Ok((set, weights))
}
