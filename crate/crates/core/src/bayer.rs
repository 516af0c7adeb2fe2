//! RGGB Bayer mosaics: binary PGM + JSON sidecar I/O, packing into
//! normalized four-plane images, and the green sampling-frequency
//! reduction transform.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Color filter array layout. Only RGGB is supported: per 2×2 tile,
/// red top-left, greens on the anti-diagonal, blue bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CfaPattern {
    #[serde(rename = "RGGB")]
    Rggb,
}

/// A full-resolution 16-bit sensor mosaic with its digitization levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BayerFrame {
    width: usize,
    height: usize,
    samples: Vec<u16>,
    pattern: CfaPattern,
    black_level: u16,
    white_level: u16,
}

#[derive(Debug, Serialize, Deserialize)]
struct BayerMeta {
    pattern: String,
    black_level: u16,
    white_level: u16,
}

impl BayerFrame {
    pub fn new(
        width: usize,
        height: usize,
        samples: Vec<u16>,
        pattern: CfaPattern,
        black_level: u16,
        white_level: u16,
    ) -> Result<Self> {
        if width == 0 || height == 0 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
            return Err(Error::OddDimensions { width, height });
        }
        if samples.len() != width * height {
            return Err(Error::Truncated {
                expected: width * height,
                actual: samples.len(),
            });
        }
        if black_level >= white_level {
            return Err(Error::Config(format!(
                "black level {black_level} must be below white level {white_level}"
            )));
        }
        Ok(Self { width, height, samples, pattern, black_level, white_level })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn black_level(&self) -> u16 {
        self.black_level
    }

    pub fn white_level(&self) -> u16 {
        self.white_level
    }

    pub fn sample(&self, y: usize, x: usize) -> u16 {
        self.samples[y * self.width + x]
    }
}

// ── PGM + sidecar I/O ──────────────────────────────────────────────

/// Load a binary PGM (`P5`, maxval 65535, big-endian samples) plus its
/// JSON sidecar carrying the CFA pattern and digitization levels.
pub fn load_bayer(pgm_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<BayerFrame> {
    let mut bytes = Vec::new();
    std::fs::File::open(pgm_path)?.read_to_end(&mut bytes)?;
    let meta_text = std::fs::read_to_string(meta_path)?;
    parse_bayer(&bytes, &meta_text)
}

/// Parse in-memory PGM bytes and sidecar JSON text.
pub fn parse_bayer(pgm_bytes: &[u8], meta_json: &str) -> Result<BayerFrame> {
    let meta: BayerMeta = serde_json::from_str(meta_json)?;
    if meta.pattern != "RGGB" {
        return Err(Error::UnknownPattern(meta.pattern));
    }
    let (width, height, payload) = parse_pgm(pgm_bytes)?;
    if !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(Error::OddDimensions { width, height });
    }
    let expected = width * height * 2;
    if payload.len() != expected {
        return Err(Error::Truncated { expected, actual: payload.len() });
    }
    let samples: Vec<u16> = payload
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    BayerFrame::new(width, height, samples, CfaPattern::Rggb, meta.black_level, meta.white_level)
}

/// Write the frame as a binary PGM plus JSON sidecar. The output is
/// byte-stable: loading and saving reproduces identical files.
pub fn save_bayer(
    frame: &BayerFrame,
    pgm_path: impl AsRef<Path>,
    meta_path: impl AsRef<Path>,
) -> Result<()> {
    let mut file = std::fs::File::create(pgm_path)?;
    file.write_all(&pgm_bytes(frame))?;
    let mut meta = std::fs::File::create(meta_path)?;
    meta.write_all(meta_json(frame).as_bytes())?;
    Ok(())
}

pub fn pgm_bytes(frame: &BayerFrame) -> Vec<u8> {
    let header = format!("P5\n{} {}\n65535\n", frame.width, frame.height);
    let mut out = Vec::with_capacity(header.len() + frame.samples.len() * 2);
    out.extend_from_slice(header.as_bytes());
    for &s in &frame.samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn meta_json(frame: &BayerFrame) -> String {
    let meta = BayerMeta {
        pattern: "RGGB".to_string(),
        black_level: frame.black_level,
        white_level: frame.white_level,
    };
    let mut text = serde_json::to_string(&meta).expect("meta serializes");
    text.push('\n');
    text
}

/// Returns `(width, height, payload)` for a binary `P5` stream,
/// validating the maxval is exactly 65535.
fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, &[u8])> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(Error::Parse("not a binary PGM (missing P5 magic)".into()));
    }
    let mut pos = 2;
    let width = next_int(bytes, &mut pos)?;
    let height = next_int(bytes, &mut pos)?;
    let maxval = next_int(bytes, &mut pos)?;
    if maxval != 65535 {
        return Err(Error::UnsupportedMaxval(maxval as u32));
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Parse("missing separator after PGM header".into()));
    }
    pos += 1;
    if width == 0 || height == 0 {
        return Err(Error::OddDimensions { width, height });
    }
    Ok((width, height, &bytes[pos..]))
}

/// Read the next ASCII integer, skipping whitespace and `#` comments.
fn next_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(Error::Parse("expected integer in PGM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse("invalid integer in PGM header".into()))
}

// ── Packing ────────────────────────────────────────────────────────

/// Half-resolution four-plane image, planes ordered `(R, G1, G2, B)`,
/// values normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedRaw {
    h: usize,
    w: usize,
    /// Plane-major buffer: 4 contiguous `h·w` planes.
    data: Vec<f32>,
}

/// Plane order within [`PackedRaw`] and all four-channel tensors.
pub const PLANE_R: usize = 0;
pub const PLANE_G1: usize = 1;
pub const PLANE_G2: usize = 2;
pub const PLANE_B: usize = 3;

impl PackedRaw {
    pub fn new(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != 4 * h * w {
            return Err(Error::Shape(format!(
                "packed buffer must hold 4·{h}·{w} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Parse("packed values must lie in [0, 1]".into()));
        }
        Ok(Self { h, w, data })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn plane(&self, idx: usize) -> &[f32] {
        let n = self.h * self.w;
        &self.data[idx * n..(idx + 1) * n]
    }

    pub fn plane_mut(&mut self, idx: usize) -> &mut [f32] {
        let n = self.h * self.w;
        &mut self.data[idx * n..(idx + 1) * n]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// View as a `[4, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(&[4, self.h, self.w], self.data.clone()).expect("packed layout")
    }

    /// Rebuild from a `[4, H, W]` tensor, revalidating the value range.
    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        if t.ndim() != 3 || t.dim(0) != 4 {
            return Err(Error::Shape(format!(
                "packed tensor must be [4, H, W], got {:?}",
                t.shape()
            )));
        }
        Self::new(t.dim(1), t.dim(2), t.data().to_vec())
    }
}

/// Rearrange the mosaic into `(R, G1, G2, B)` planes, normalizing each
/// sample as `clamp((s − black) / (white − black), 0, 1)`.
pub fn pack(frame: &BayerFrame) -> PackedRaw {
    let h = frame.height / 2;
    let w = frame.width / 2;
    let black = frame.black_level as f32;
    let span = (frame.white_level - frame.black_level) as f32;
    let n = h * w;
    let mut data = vec![0.0f32; 4 * n];
    for ty in 0..h {
        for tx in 0..w {
            let norm = |dy: usize, dx: usize| {
                let s = frame.sample(2 * ty + dy, 2 * tx + dx) as f32;
                ((s - black) / span).clamp(0.0, 1.0)
            };
            let at = ty * w + tx;
            data[PLANE_R * n + at] = norm(0, 0);
            data[PLANE_G1 * n + at] = norm(0, 1);
            data[PLANE_G2 * n + at] = norm(1, 0);
            data[PLANE_B * n + at] = norm(1, 1);
        }
    }
    PackedRaw { h, w, data }
}

/// Invert [`pack`]: integer-exact for samples that were inside
/// `[black, white]` (round-to-nearest undoes the normalization).
pub fn unpack(packed: &PackedRaw, black_level: u16, white_level: u16) -> Result<BayerFrame> {
    if black_level >= white_level {
        return Err(Error::Config(format!(
            "black level {black_level} must be below white level {white_level}"
        )));
    }
    let span = (white_level - black_level) as f32;
    let (h, w) = (packed.h, packed.w);
    let mut samples = vec![0u16; 4 * h * w];
    let width = 2 * w;
    let denorm = |v: f32| -> u16 {
        let code = (v * span).round().min(span) as u16;
        black_level + code
    };
    let n = h * w;
    for ty in 0..h {
        for tx in 0..w {
            let at = ty * w + tx;
            samples[(2 * ty) * width + 2 * tx] = denorm(packed.data[PLANE_R * n + at]);
            samples[(2 * ty) * width + 2 * tx + 1] = denorm(packed.data[PLANE_G1 * n + at]);
            samples[(2 * ty + 1) * width + 2 * tx] = denorm(packed.data[PLANE_G2 * n + at]);
            samples[(2 * ty + 1) * width + 2 * tx + 1] = denorm(packed.data[PLANE_B * n + at]);
        }
    }
    BayerFrame::new(width, 2 * h, samples, CfaPattern::Rggb, black_level, white_level)
}

/// Halve the green information: returns a copy whose G2 plane is
/// replaced by G1. Shapes stay fixed so downstream networks are
/// unchanged across sampling-frequency configurations.
pub fn reduce_green_sampling(packed: &PackedRaw) -> PackedRaw {
    let mut out = packed.clone();
    let g1 = packed.plane(PLANE_G1).to_vec();
    out.plane_mut(PLANE_G2).copy_from_slice(&g1);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_frame() -> BayerFrame {
        // 2×2 mosaic [[black, white], [white, black]]
        BayerFrame::new(2, 2, vec![100, 900, 900, 100], CfaPattern::Rggb, 100, 900).unwrap()
    }

    #[test]
    fn parse_p5_header_and_payload() {
        let mut bytes = b"P5\n4 4\n65535\n".to_vec();
        bytes.extend_from_slice(&[0u8; 32]);
        let meta = r#"{"pattern":"RGGB","black_level":0,"white_level":65535}"#;
        let frame = parse_bayer(&bytes, meta).unwrap();
        assert_eq!((frame.width(), frame.height()), (4, 4));
    }

    #[test]
    fn maxval_255_is_unsupported_depth() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0u8; 4]);
        let meta = r#"{"pattern":"RGGB","black_level":0,"white_level":65535}"#;
        assert!(matches!(
            parse_bayer(&bytes, meta).unwrap_err(),
            Error::UnsupportedMaxval(255)
        ));
    }

    #[test]
    fn odd_dimensions_are_rejected() {
        let mut bytes = b"P5\n3 2\n65535\n".to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        let meta = r#"{"pattern":"RGGB","black_level":0,"white_level":65535}"#;
        assert!(matches!(
            parse_bayer(&bytes, meta).unwrap_err(),
            Error::OddDimensions { width: 3, height: 2 }
        ));
    }

    #[test]
    fn truncated_payload_is_distinct_error() {
        let mut bytes = b"P5\n2 2\n65535\n".to_vec();
        bytes.extend_from_slice(&[0u8; 7]);
        let meta = r#"{"pattern":"RGGB","black_level":0,"white_level":65535}"#;
        assert!(matches!(
            parse_bayer(&bytes, meta).unwrap_err(),
            Error::Truncated { expected: 8, actual: 7 }
        ));
    }

    #[test]
    fn unknown_pattern_is_rejected() {
        let mut bytes = b"P5\n2 2\n65535\n".to_vec();
        bytes.extend_from_slice(&[0u8; 8]);
        let meta = r#"{"pattern":"BGGR","black_level":0,"white_level":65535}"#;
        assert!(matches!(
            parse_bayer(&bytes, meta).unwrap_err(),
            Error::UnknownPattern(p) if p == "BGGR"
        ));
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let mut bytes = b"P5\n# camera dump\n2 2\n# depth\n65535\n".to_vec();
        bytes.extend_from_slice(&[0u8; 8]);
        let meta = r#"{"pattern":"RGGB","black_level":0,"white_level":65535}"#;
        assert!(parse_bayer(&bytes, meta).is_ok());
    }

    #[test]
    fn save_load_roundtrip_is_byte_identical() {
        let frame = tiny_frame();
        let first_pgm = pgm_bytes(&frame);
        let first_meta = meta_json(&frame);
        let reloaded = parse_bayer(&first_pgm, &first_meta).unwrap();
        assert_eq!(reloaded, frame);
        assert_eq!(pgm_bytes(&reloaded), first_pgm);
        assert_eq!(meta_json(&reloaded), first_meta);
    }

    #[test]
    fn pack_extremes_map_to_unit_range() {
        let packed = pack(&tiny_frame());
        assert_eq!(packed.plane(PLANE_R), &[0.0]);
        assert_eq!(packed.plane(PLANE_G1), &[1.0]);
        assert_eq!(packed.plane(PLANE_G2), &[1.0]);
        assert_eq!(packed.plane(PLANE_B), &[0.0]);
    }

    #[test]
    fn pack_shape_is_half_resolution() {
        let frame =
            BayerFrame::new(4, 4, vec![0; 16], CfaPattern::Rggb, 0, 65535).unwrap();
        let packed = pack(&frame);
        assert_eq!((packed.h(), packed.w()), (2, 2));
        assert_eq!(packed.to_tensor().shape(), [4, 2, 2]);
    }

    #[test]
    fn midpoint_sample_normalizes_to_half() {
        let frame =
            BayerFrame::new(2, 2, vec![500, 500, 500, 500], CfaPattern::Rggb, 100, 900).unwrap();
        let packed = pack(&frame);
        assert_eq!(packed.plane(PLANE_R)[0], 0.5);
    }

    #[test]
    fn below_black_samples_clamp_to_zero() {
        let frame =
            BayerFrame::new(2, 2, vec![10, 10, 10, 10], CfaPattern::Rggb, 100, 900).unwrap();
        let packed = pack(&frame);
        assert!(packed.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unpack_extremes_hit_levels() {
        let zeros = PackedRaw::new(1, 1, vec![0.0; 4]).unwrap();
        let frame = unpack(&zeros, 100, 900).unwrap();
        assert!(frame.samples().iter().all(|&s| s == 100));
        let ones = PackedRaw::new(1, 1, vec![1.0; 4]).unwrap();
        let frame = unpack(&ones, 100, 900).unwrap();
        assert!(frame.samples().iter().all(|&s| s == 900));
    }

    #[test]
    fn reduce_green_duplicates_g1_into_g2() {
        let data = vec![
            0.1, // R
            0.4, // G1
            0.7, // G2
            0.9, // B
        ];
        let packed = PackedRaw::new(1, 1, data).unwrap();
        let reduced = reduce_green_sampling(&packed);
        assert_eq!(reduced.plane(PLANE_G1), reduced.plane(PLANE_G2));
        assert_eq!(reduced.plane(PLANE_R), packed.plane(PLANE_R));
        assert_eq!(reduced.plane(PLANE_B), packed.plane(PLANE_B));
        // idempotent
        assert_eq!(reduce_green_sampling(&reduced), reduced);
        // no-op when the planes already agree
        let same = PackedRaw::new(1, 1, vec![0.1, 0.4, 0.4, 0.9]).unwrap();
        assert_eq!(reduce_green_sampling(&same), same);
    }

    #[test]
    fn pack_audits_tile_provenance() {
        // every packed value must equal the normalization of exactly one
        // mosaic sample, checked by brute-force index audit
        let samples: Vec<u16> = (0..36).map(|i| 100 + i * 20).collect();
        let frame = BayerFrame::new(6, 6, samples, CfaPattern::Rggb, 100, 900).unwrap();
        let packed = pack(&frame);
        let norm = |s: u16| (((s as f32) - 100.0) / 800.0).clamp(0.0, 1.0);
        for ty in 0..3 {
            for tx in 0..3 {
                let at = ty * 3 + tx;
                assert_eq!(packed.plane(PLANE_R)[at], norm(frame.sample(2 * ty, 2 * tx)));
                assert_eq!(packed.plane(PLANE_G1)[at], norm(frame.sample(2 * ty, 2 * tx + 1)));
                assert_eq!(packed.plane(PLANE_G2)[at], norm(frame.sample(2 * ty + 1, 2 * tx)));
                assert_eq!(packed.plane(PLANE_B)[at], norm(frame.sample(2 * ty + 1, 2 * tx + 1)));
            }
        }
    }
}
