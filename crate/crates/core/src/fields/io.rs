//! VF01 container: one field per file.
//!
//! ```text
//! magic  "VF01"            4 bytes
//! D      u8                spatial dimensions
//! C      u8                components
//! -      u16 = 0           reserved
//! dims   D x u32 LE
//! h      f64 LE            spacing
//! data   C x prod(dims) x f32 LE, component-major, last axis fastest
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use super::grid::{GridShape, ScalarField, VectorField};
use crate::error::{Error, Result};

pub const VF_MAGIC: [u8; 4] = *b"VF01";
const VF_VERSION: u32 = 1;

/// Untyped VF01 contents, also used for dictionaries (`C = 1`, dims = `(rows, cols)`).
#[derive(Debug, Clone, PartialEq)]
pub struct RawField {
    pub dims: Vec<usize>,
    pub spacing: f64,
    pub components: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Scalar(ScalarField),
    Vector(VectorField),
}

impl From<ScalarField> for Field {
    fn from(f: ScalarField) -> Self {
        Field::Scalar(f)
    }
}

impl From<VectorField> for Field {
    fn from(f: VectorField) -> Self {
        Field::Vector(f)
    }
}

impl Field {
    pub fn into_vector(self) -> Result<VectorField> {
        match self {
            Field::Vector(v) => Ok(v),
            Field::Scalar(_) => Err(Error::DimensionMismatch(
                "expected a vector field, found a scalar field".into(),
            )),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        match self {
            Field::Scalar(s) => Ok(s),
            Field::Vector(_) => Err(Error::DimensionMismatch(
                "expected a scalar field, found a vector field".into(),
            )),
        }
    }
}

pub fn encode_raw(raw: &RawField) -> Vec<u8> {
    let count: usize = raw.dims.iter().product();
    let mut buf = Vec::with_capacity(16 + 4 * raw.dims.len() + 4 * count * raw.components.len());
    buf.extend_from_slice(&VF_MAGIC);
    buf.push(raw.dims.len() as u8);
    buf.push(raw.components.len() as u8);
    buf.extend_from_slice(&0u16.to_le_bytes());
    for &d in &raw.dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    buf.extend_from_slice(&raw.spacing.to_le_bytes());
    for comp in &raw.components {
        for &v in comp {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize, expected_total: usize) -> Result<&'a [u8]> {
    if *at + n > bytes.len() {
        return Err(Error::TruncatedPayload {
            expected: expected_total.max(*at + n),
            found: bytes.len(),
        });
    }
    let s = &bytes[*at..*at + n];
    *at += n;
    Ok(s)
}

pub fn decode_raw(bytes: &[u8]) -> Result<RawField> {
    let mut at = 0;
    let magic: [u8; 4] = take(bytes, &mut at, 4, 8)?.try_into().unwrap();
    check_magic(magic, VF_MAGIC, VF_VERSION)?;
    let head = take(bytes, &mut at, 4, 8)?;
    let (d, c, reserved) = (
        head[0] as usize,
        head[1] as usize,
        u16::from_le_bytes([head[2], head[3]]),
    );
    if reserved != 0 {
        return Err(Error::VersionMismatch {
            expected: VF_VERSION,
            found: reserved as u32,
        });
    }
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidShape(format!(
            "header declares {d} dimensions"
        )));
    }
    let header_len = 8 + 4 * d + 8;
    let mut dims = Vec::with_capacity(d);
    for _ in 0..d {
        let b = take(bytes, &mut at, 4, header_len)?;
        dims.push(u32::from_le_bytes(b.try_into().unwrap()) as usize);
    }
    let spacing = f64::from_le_bytes(take(bytes, &mut at, 8, header_len)?.try_into().unwrap());
    let count: usize = dims.iter().product();
    let expected = header_len + 4 * count * c;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    let mut components = Vec::with_capacity(c);
    for ci in 0..c {
        let mut comp = Vec::with_capacity(count);
        for k in 0..count {
            let b = &bytes[at..at + 4];
            at += 4;
            let v = f32::from_le_bytes(b.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    index: ci * count + k,
                });
            }
            comp.push(v as f64);
        }
        components.push(comp);
    }
    Ok(RawField {
        dims,
        spacing,
        components,
    })
}

/// Shared magic check: same family prefix with a different version is a
/// version mismatch, anything else is a bad magic.
pub(crate) fn check_magic(found: [u8; 4], expected: [u8; 4], version: u32) -> Result<()> {
    if found == expected {
        return Ok(());
    }
    if found[..2] == expected[..2] {
        let v = std::str::from_utf8(&found[2..])
            .ok()
            .and_then(|s| s.parse::<u32>().ok());
        if let Some(v) = v {
            return Err(Error::VersionMismatch {
                expected: version,
                found: v,
            });
        }
    }
    Err(Error::BadMagic { expected, found })
}

impl Field {
    pub fn to_raw(&self) -> RawField {
        match self {
            Field::Scalar(s) => RawField {
                dims: s.shape().dims().to_vec(),
                spacing: s.shape().spacing(),
                components: vec![s.values().to_vec()],
            },
            Field::Vector(v) => RawField {
                dims: v.shape().dims().to_vec(),
                spacing: v.shape().spacing(),
                components: v.components().to_vec(),
            },
        }
    }

    pub fn from_raw(raw: RawField) -> Result<Field> {
        let shape = GridShape::new(raw.dims, raw.spacing)?;
        let c = raw.components.len();
        if c == 1 {
            Ok(Field::Scalar(ScalarField::new(
                shape,
                raw.components.into_iter().next().unwrap(),
            )?))
        } else if c == shape.ndim() {
            Ok(Field::Vector(VectorField::new(shape, raw.components)?))
        } else {
            Err(Error::DimensionMismatch(format!(
                "{c} components on a {}-D grid",
                shape.ndim()
            )))
        }
    }
}

pub fn write_raw(raw: &RawField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_raw(raw)).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<RawField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes)
}

pub fn write_field(field: &Field, path: impl AsRef<Path>) -> Result<()> {
    write_raw(&field.to_raw(), path)
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field> {
    Field::from_raw(read_raw(path)?)
}

pub fn write_vector(f: &VectorField, path: impl AsRef<Path>) -> Result<()> {
    write_field(&Field::Vector(f.clone()), path)
}

pub fn write_scalar(f: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    write_field(&Field::Scalar(f.clone()), path)
}

pub fn read_vector(path: impl AsRef<Path>) -> Result<VectorField> {
    read_field(path)?.into_vector()
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarField> {
    read_field(path)?.into_scalar()
}

/// `dir/name.00042.vf`
pub fn frame_path(dir: impl AsRef<Path>, name: &str, frame: usize) -> PathBuf {
    dir.as_ref().join(format!("{name}.{frame:05}.vf"))
}

/// Number of consecutive frames `name.00000.vf, name.00001.vf, ...` in `dir`.
pub fn count_frames(dir: impl AsRef<Path>, name: &str) -> usize {
    let dir = dir.as_ref();
    (0..)
        .take_while(|&i| frame_path(dir, name, i).is_file())
        .count()
}

/// Sorted indices of every `name.NNNNN.vf` file in `dir`; empty if the
/// directory is missing.
pub fn list_frames(dir: impl AsRef<Path>, name: &str) -> Vec<usize> {
    let Ok(entries) = std::fs::read_dir(dir.as_ref()) else {
        return Vec::new();
    };
    let prefix = format!("{name}.");
    let mut out: Vec<usize> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let file = e.file_name().into_string().ok()?;
            let digits = file.strip_prefix(&prefix)?.strip_suffix(".vf")?;
            (digits.len() == 5).then(|| digits.parse().ok()).flatten()
        })
        .collect();
    out.sort_unstable();
    out
}
