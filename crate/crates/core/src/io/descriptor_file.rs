//! Binary descriptor container.
//!
//! ```text
//! offset  size  content
//! 0       4     magic "UAPR"
//! 4       2     format version, u16 LE (= 1)
//! 6       4     manifest length in bytes, u32 LE
//! 10      n     UTF-8 JSON manifest
//! 10+n    ...   descriptors  f32 LE  [member][entry][dim]
//!               variances    f32 LE  [entry][dim]       (if has_variances)
//!               poses        f64 LE  [entry][xyz]       (if has_poses)
//!               timestamps   f64 LE  [entry]            (if has_timestamps)
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_set, DescriptorSet, Pose, SetParts};

pub const MAGIC: &[u8; 4] = b"UAPR";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub count: usize,
    pub dim: usize,
    pub members: usize,
    pub has_variances: bool,
    pub has_poses: bool,
    pub has_timestamps: bool,
    #[serde(default)]
    pub label: String,
}

impl Manifest {
    pub fn for_set(set: &DescriptorSet) -> Self {
        let parts = set.parts();
        Self {
            count: parts.count,
            dim: parts.dim,
            members: parts.members.len(),
            has_variances: parts.variances.is_some(),
            has_poses: parts.poses.is_some(),
            has_timestamps: parts.timestamps.is_some(),
            label: parts.label.clone(),
        }
    }

    /// Payload size in bytes, or `None` on overflow.
    fn payload_len(&self) -> Option<usize> {
        let values = self.count.checked_mul(self.dim)?;
        let mut len = values.checked_mul(self.members)?.checked_mul(4)?;
        if self.has_variances {
            len = len.checked_add(values.checked_mul(4)?)?;
        }
        if self.has_poses {
            len = len.checked_add(self.count.checked_mul(24)?)?;
        }
        if self.has_timestamps {
            len = len.checked_add(self.count.checked_mul(8)?)?;
        }
        Some(len)
    }
}

pub fn encode_descriptor_set(set: &DescriptorSet) -> Vec<u8> {
    let manifest = serde_json::to_vec(&Manifest::for_set(set)).expect("manifest serializes");
    let parts = set.parts();
    let payload = Manifest::for_set(set).payload_len().unwrap_or(0);
    let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest);
    for member in &parts.members {
        out.extend(member.iter().flat_map(|v| v.to_le_bytes()));
    }
    if let Some(var) = &parts.variances {
        out.extend(var.iter().flat_map(|v| v.to_le_bytes()));
    }
    if let Some(poses) = &parts.poses {
        out.extend(poses.iter().flatten().flat_map(|v| v.to_le_bytes()));
    }
    if let Some(ts) = &parts.timestamps {
        out.extend(ts.iter().flat_map(|v| v.to_le_bytes()));
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    expected_total: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::TruncatedPayload { expected: self.expected_total, found: self.bytes.len() });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_descriptor_set(bytes: &[u8]) -> Result<DescriptorSet> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload { expected: HEADER_LEN, found: bytes.len() });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let manifest_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let manifest_end = HEADER_LEN + manifest_len;
    if bytes.len() < manifest_end {
        return Err(Error::TruncatedPayload { expected: manifest_end, found: bytes.len() });
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..manifest_end])
        .map_err(|e| Error::ManifestMismatch(format!("unreadable manifest: {e}")))?;
    let payload =
        manifest.payload_len().ok_or_else(|| Error::ManifestMismatch("declared sizes overflow".into()))?;
    let expected_total = manifest_end + payload;
    if bytes.len() > expected_total {
        return Err(Error::ManifestMismatch(format!(
            "{} trailing bytes after the declared payload",
            bytes.len() - expected_total
        )));
    }

    let mut cur = Cursor { bytes, pos: manifest_end, expected_total };
    let values = manifest.count * manifest.dim;
    let members = (0..manifest.members).map(|_| cur.f32s(values)).collect::<Result<Vec<_>>>()?;
    let variances = manifest.has_variances.then(|| cur.f32s(values)).transpose()?;
    let poses = manifest
        .has_poses
        .then(|| {
            cur.f64s(manifest.count * 3)
                .map(|flat| flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect::<Vec<Pose>>())
        })
        .transpose()?;
    let timestamps = manifest.has_timestamps.then(|| cur.f64s(manifest.count)).transpose()?;

    validate_set(SetParts {
        count: manifest.count,
        dim: manifest.dim,
        members,
        variances,
        poses,
        timestamps,
        label: manifest.label,
    })
}

pub fn write_descriptor_set<W: Write>(set: &DescriptorSet, mut writer: W) -> Result<()> {
    writer.write_all(&encode_descriptor_set(set))?;
    writer.flush()?;
    Ok(())
}

pub fn read_descriptor_set<R: Read>(mut reader: R) -> Result<DescriptorSet> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    decode_descriptor_set(&bytes)
}

pub fn write_descriptor_file(set: &DescriptorSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_descriptor_set(set))?;
    Ok(())
}

/// Reads a binary container, or a CSV fixture when the file lacks the magic
/// bytes and has a `.csv` extension.
pub fn read_descriptor_file(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        return decode_descriptor_set(&bytes);
    }
    let is_csv = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        return super::csv_fixture::read_csv_fixture(bytes.as_slice());
    }
    decode_descriptor_set(&bytes)
}
