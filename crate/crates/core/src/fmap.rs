//! FMAP v1: the binary interchange format for [`FeatureBundle`]s.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! "FMAP" | version u16 = 1
//! image_id   (u32 len + UTF-8)
//! class_name (u32 len + UTF-8)
//! layer_tag  (u32 len + UTF-8)
//! timestep u32 | source_height u32 | source_width u32 | h u32 | w u32 | d u32
//! appearance f32[h*w*d] | semantic f32[h*w*d] | class_token f32[d]
//! ```
//!
//! Tensors are row-major `(y, x, channel)`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::features::{validate_bundle, Diagnostic, FeatureBundle, FeatureMap};

pub const MAGIC: [u8; 4] = *b"FMAP";
pub const VERSION: u16 = 1;

/// Floats are read in chunks of this many values so a corrupt header cannot
/// trigger a huge up-front allocation.
const READ_CHUNK: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum FmapError {
    #[error("bad magic {0:?}, expected \"FMAP\"")]
    BadMagic([u8; 4]),
    #[error("unsupported FMAP version {0}")]
    UnsupportedVersion(u16),
    #[error("stream truncated while reading {0}")]
    Truncated(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
    #[error("bundle violates invariants: {}", join_diagnostics(.0))]
    InvalidBundle(Vec<Diagnostic>),
    #[error("{0} unexpected bytes after the end of the bundle")]
    TrailingData(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl FmapError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            FmapError::BadMagic(_) => "bad_magic",
            FmapError::UnsupportedVersion(_) => "unsupported_version",
            FmapError::Truncated(_) => "truncated",
            FmapError::ShapeMismatch(_) => "shape_mismatch",
            FmapError::InvalidUtf8(_) => "invalid_utf8",
            FmapError::InvalidBundle(_) => "invalid_bundle",
            FmapError::TrailingData(_) => "trailing_data",
            FmapError::Io(_) => "io",
        }
    }
}

/// Serializes a bundle to its FMAP byte representation.
pub fn encode_fmap(bundle: &FeatureBundle) -> Result<Vec<u8>, FmapError> {
    let diags = validate_bundle(bundle);
    if !diags.is_empty() {
        return Err(FmapError::InvalidBundle(diags));
    }
    let (h, w, d) = bundle.appearance.shape();
    let floats = 2 * h * w * d + d;
    let mut buf = Vec::with_capacity(64 + floats * 4);

    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for s in [&bundle.image_id, &bundle.class_name, &bundle.layer_tag] {
        put_str(&mut buf, s)?;
    }
    for v in [
        bundle.timestep,
        bundle.source_height,
        bundle.source_width,
        dim_u32(h)?,
        dim_u32(w)?,
        dim_u32(d)?,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in bundle
        .appearance
        .as_slice()
        .iter()
        .chain(bundle.semantic.as_slice())
        .chain(&bundle.class_token)
    {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

/// Writes `bundle` to `sink`. Nothing is written if the bundle is invalid.
pub fn write_fmap<W: Write>(bundle: &FeatureBundle, mut sink: W) -> Result<(), FmapError> {
    let bytes = encode_fmap(bundle)?;
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(())
}

pub fn save_fmap(bundle: &FeatureBundle, path: impl AsRef<Path>) -> Result<(), FmapError> {
    let bytes = encode_fmap(bundle)?;
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}

/// Reads one bundle from the front of `source`, leaving any following bytes unread.
pub fn read_fmap<R: Read>(mut source: R) -> Result<FeatureBundle, FmapError> {
    let mut magic = [0u8; 4];
    read_exact(&mut source, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(FmapError::BadMagic(magic));
    }
    let mut version = [0u8; 2];
    read_exact(&mut source, &mut version, "version")?;
    let version = u16::from_le_bytes(version);
    if version != VERSION {
        return Err(FmapError::UnsupportedVersion(version));
    }

    let image_id = get_str(&mut source, "image_id")?;
    let class_name = get_str(&mut source, "class_name")?;
    let layer_tag = get_str(&mut source, "layer_tag")?;
    let timestep = get_u32(&mut source, "timestep")?;
    let source_height = get_u32(&mut source, "source_height")?;
    let source_width = get_u32(&mut source, "source_width")?;
    let h = get_u32(&mut source, "h")? as usize;
    let w = get_u32(&mut source, "w")? as usize;
    let d = get_u32(&mut source, "d")? as usize;

    if h == 0 || w == 0 || d == 0 {
        return Err(FmapError::ShapeMismatch(format!(
            "dimensions must be positive, got {h}x{w}x{d}"
        )));
    }
    if h > source_height as usize || w > source_width as usize {
        return Err(FmapError::ShapeMismatch(format!(
            "feature resolution {h}x{w} exceeds source size {source_height}x{source_width}"
        )));
    }
    let n = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(d))
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| FmapError::ShapeMismatch(format!("{h}x{w}x{d} overflows")))?;

    let appearance = get_f32s(&mut source, n, "appearance")?;
    let semantic = get_f32s(&mut source, n, "semantic")?;
    let class_token = get_f32s(&mut source, d, "class_token")?;

    let bundle = FeatureBundle {
        image_id,
        class_name,
        appearance: FeatureMap::new(h, w, d, appearance)
            .map_err(|e| FmapError::ShapeMismatch(e.to_string()))?,
        semantic: FeatureMap::new(h, w, d, semantic)
            .map_err(|e| FmapError::ShapeMismatch(e.to_string()))?,
        class_token,
        timestep,
        layer_tag,
        source_height,
        source_width,
    };
    let diags = validate_bundle(&bundle);
    if !diags.is_empty() {
        return Err(FmapError::InvalidBundle(diags));
    }
    Ok(bundle)
}

/// Decodes a complete FMAP buffer; trailing bytes are an error.
pub fn decode_fmap(bytes: &[u8]) -> Result<FeatureBundle, FmapError> {
    let mut cursor = bytes;
    let bundle = read_fmap(&mut cursor)?;
    if !cursor.is_empty() {
        return Err(FmapError::TrailingData(cursor.len()));
    }
    Ok(bundle)
}

pub fn load_fmap(path: impl AsRef<Path>) -> Result<FeatureBundle, FmapError> {
    let mut reader = BufReader::new(File::open(path)?);
    let bundle = read_fmap(&mut reader)?;
    let mut probe = [0u8; 1];
    match reader.read(&mut probe)? {
        0 => Ok(bundle),
        _ => {
            let rest = 1 + io::copy(&mut reader, &mut io::sink())? as usize;
            Err(FmapError::TrailingData(rest))
        }
    }
}

fn dim_u32(v: usize) -> Result<u32, FmapError> {
    u32::try_from(v).map_err(|_| FmapError::ShapeMismatch(format!("dimension {v} exceeds u32")))
}

fn put_str(buf: &mut Vec<u8>, s: &str) -> Result<(), FmapError> {
    let len = u32::try_from(s.len())
        .map_err(|_| FmapError::ShapeMismatch("string longer than u32::MAX bytes".into()))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<(), FmapError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FmapError::Truncated(what),
        _ => FmapError::Io(e),
    })
}

fn get_u32<R: Read>(r: &mut R, what: &'static str) -> Result<u32, FmapError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R, what: &'static str) -> Result<String, FmapError> {
    let len = get_u32(r, what)? as u64;
    let mut bytes = Vec::new();
    let got = r.take(len).read_to_end(&mut bytes)?;
    if (got as u64) < len {
        return Err(FmapError::Truncated(what));
    }
    String::from_utf8(bytes).map_err(|_| FmapError::InvalidUtf8(what))
}

fn get_f32s<R: Read>(r: &mut R, n: usize, what: &'static str) -> Result<Vec<f32>, FmapError> {
    let mut out = Vec::with_capacity(n.min(READ_CHUNK));
    let mut chunk = vec![0u8; 4 * n.min(READ_CHUNK)];
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(READ_CHUNK);
        let bytes = &mut chunk[..4 * take];
        read_exact(r, bytes, what)?;
        out.extend(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        remaining -= take;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> FeatureBundle {
        FeatureBundle {
            image_id: String::new(),
            class_name: String::new(),
            appearance: FeatureMap::zeros(1, 1, 1),
            semantic: FeatureMap::zeros(1, 1, 1),
            class_token: vec![0.0],
            timestep: 0,
            layer_tag: String::new(),
            source_height: 1,
            source_width: 1,
        }
    }

    #[test]
    fn minimal_bundle_has_fixed_layout() {
        let bytes = encode_fmap(&minimal()).unwrap();
        // magic + version + 3 empty strings + 6 u32 + 3 floats
        assert_eq!(bytes.len(), 4 + 2 + 3 * 4 + 6 * 4 + 3 * 4);
        let mut expected = b"FMAP".to_vec();
        expected.extend_from_slice(&[1, 0]);
        expected.extend_from_slice(&[0; 12]);
        expected.extend_from_slice(&[0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        expected.extend_from_slice(&[0; 12]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn writes_are_deterministic() {
        let b = minimal();
        assert_eq!(encode_fmap(&b).unwrap(), encode_fmap(&b).unwrap());
    }

    #[test]
    fn nan_bundle_writes_nothing() {
        let mut b = minimal();
        b.appearance.as_mut_slice()[0] = f32::NAN;
        let mut sink = Vec::new();
        let err = write_fmap(&b, &mut sink).unwrap_err();
        assert_eq!(err.code(), "invalid_bundle");
        assert!(sink.is_empty());
    }

    #[test]
    fn error_codes_are_distinct() {
        let good = encode_fmap(&minimal()).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[..4].copy_from_slice(b"XXXX");
        assert_eq!(decode_fmap(&bad_magic).unwrap_err().code(), "bad_magic");

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert_eq!(
            decode_fmap(&bad_version).unwrap_err().code(),
            "unsupported_version"
        );

        let truncated = &good[..good.len() - 2];
        assert!(matches!(
            decode_fmap(truncated).unwrap_err(),
            FmapError::Truncated("class_token")
        ));

        let mut zero_dim = good.clone();
        // h lives after magic, version, three empty strings and three u32s
        let h_at = 4 + 2 + 12 + 12;
        zero_dim[h_at] = 0;
        assert_eq!(decode_fmap(&zero_dim).unwrap_err().code(), "shape_mismatch");

        let mut trailing = good;
        trailing.push(7);
        assert_eq!(decode_fmap(&trailing).unwrap_err().code(), "trailing_data");
    }

    #[test]
    fn invalid_utf8_is_reported() {
        let mut b = minimal();
        b.image_id = "a".into();
        let mut bytes = encode_fmap(&b).unwrap();
        bytes[10] = 0xff;
        assert_eq!(decode_fmap(&bytes).unwrap_err().code(), "invalid_utf8");
    }

    #[test]
    fn huge_declared_size_fails_as_truncation() {
        let mut bytes = encode_fmap(&minimal()).unwrap();
        let h_at = 4 + 2 + 12 + 12;
        // source size first so the resolution check passes
        bytes[h_at - 8..h_at - 4].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[h_at - 4..h_at].copy_from_slice(&u32::MAX.to_le_bytes());
        bytes[h_at..h_at + 4].copy_from_slice(&60_000u32.to_le_bytes());
        bytes[h_at + 4..h_at + 8].copy_from_slice(&60_000u32.to_le_bytes());
        assert_eq!(decode_fmap(&bytes).unwrap_err().code(), "truncated");
    }
}
