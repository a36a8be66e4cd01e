//! Raw planar YUV 4:2:0 ingestion/emission and YUV-PSNR measurement.
//!
//! Frames are stored at dimensions padded up to the coding-tree size (16)
//! by edge replication; the original (crop) size is kept on the frame so
//! quality is always measured on the source pixels only.
//!
//! Sequence PSNR averages the per-frame MSE over the whole sequence for
//! each plane and converts the pooled MSE to dB once. It does **not**
//! average per-frame PSNR values.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

/// Coding-tree size; frame dimensions are padded to multiples of this.
pub const CTU_SIZE: usize = 16;

#[derive(Debug)]
pub enum FrameError {
    Io(std::io::Error),
    /// Zero or odd width/height (4:2:0 requires even dimensions).
    BadDimensions { width: usize, height: usize },
    /// Frames in one call do not share dimensions.
    DimensionMismatch,
    EmptyFrameList,
}

impl fmt::Display for FrameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameError::Io(e) => write!(f, "i/o error: {e}"),
            FrameError::BadDimensions { width, height } => {
                write!(f, "invalid 4:2:0 dimensions: {width}x{height}")
            }
            FrameError::DimensionMismatch => write!(f, "frame dimensions do not match"),
            FrameError::EmptyFrameList => write!(f, "empty frame list"),
        }
    }
}

impl std::error::Error for FrameError {}

impl From<std::io::Error> for FrameError {
    fn from(e: std::io::Error) -> Self {
        FrameError::Io(e)
    }
}

/// One planar 8-bit 4:2:0 picture, padded to multiples of [`CTU_SIZE`].
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    /// Padded luma width (multiple of 16).
    pub width: usize,
    /// Padded luma height (multiple of 16).
    pub height: usize,
    /// Original luma width before padding.
    pub crop_width: usize,
    /// Original luma height before padding.
    pub crop_height: usize,
    pub y: Vec<u8>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Frame({}x{} crop {}x{})",
            self.width, self.height, self.crop_width, self.crop_height
        )
    }
}

fn pad_to_ctu(v: usize) -> usize {
    v.div_ceil(CTU_SIZE) * CTU_SIZE
}

impl Frame {
    /// Allocates a mid-gray frame for the given source size.
    pub fn new(crop_width: usize, crop_height: usize) -> Result<Self, FrameError> {
        if crop_width == 0 || crop_height == 0 || crop_width % 2 != 0 || crop_height % 2 != 0 {
            return Err(FrameError::BadDimensions {
                width: crop_width,
                height: crop_height,
            });
        }
        let width = pad_to_ctu(crop_width);
        let height = pad_to_ctu(crop_height);
        Ok(Frame {
            width,
            height,
            crop_width,
            crop_height,
            y: vec![128; width * height],
            u: vec![128; width * height / 4],
            v: vec![128; width * height / 4],
        })
    }

    /// Builds a frame from crop-sized planes, padding by edge replication.
    pub fn from_planes(
        crop_width: usize,
        crop_height: usize,
        y: &[u8],
        u: &[u8],
        v: &[u8],
    ) -> Result<Self, FrameError> {
        let mut frame = Frame::new(crop_width, crop_height)?;
        let (cw, ch) = (crop_width, crop_height);
        assert_eq!(y.len(), cw * ch, "luma plane size");
        assert_eq!(u.len(), cw * ch / 4, "chroma plane size");
        assert_eq!(v.len(), cw * ch / 4, "chroma plane size");
        replicate_pad(y, cw, ch, &mut frame.y, frame.width, frame.height);
        replicate_pad(u, cw / 2, ch / 2, &mut frame.u, frame.width / 2, frame.height / 2);
        replicate_pad(v, cw / 2, ch / 2, &mut frame.v, frame.width / 2, frame.height / 2);
        Ok(frame)
    }

    pub fn chroma_width(&self) -> usize {
        self.width / 2
    }

    pub fn chroma_height(&self) -> usize {
        self.height / 2
    }

    /// Bytes of one crop-sized 4:2:0 frame.
    pub fn crop_frame_bytes(&self) -> usize {
        self.crop_width * self.crop_height * 3 / 2
    }
}

fn replicate_pad(src: &[u8], sw: usize, sh: usize, dst: &mut [u8], dw: usize, dh: usize) {
    for y in 0..dh {
        let sy = y.min(sh - 1);
        for x in 0..dw {
            let sx = x.min(sw - 1);
            dst[y * dw + x] = src[sy * sw + sx];
        }
    }
}

/// Loads up to `max_frames` frames of planar 4:2:0 8-bit video.
///
/// A trailing partial frame in the file is dropped. Returns fewer frames
/// than requested when the file is shorter.
pub fn load_yuv(
    path: &Path,
    width: usize,
    height: usize,
    max_frames: usize,
) -> Result<Vec<Frame>, FrameError> {
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(FrameError::BadDimensions { width, height });
    }
    let data = fs::read(path)?;
    let frame_bytes = width * height * 3 / 2;
    let complete = data.len() / frame_bytes;
    let n = complete.min(max_frames);
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let base = i * frame_bytes;
        let luma = width * height;
        let chroma = luma / 4;
        frames.push(Frame::from_planes(
            width,
            height,
            &data[base..base + luma],
            &data[base + luma..base + luma + chroma],
            &data[base + luma + chroma..base + frame_bytes],
        )?);
    }
    Ok(frames)
}

/// Writes frames as planar 4:2:0 bytes cropped to `(crop_width, crop_height)`.
///
/// Returns the number of bytes written: `frames * 1.5 * crop_w * crop_h`.
pub fn save_yuv(
    frames: &[Frame],
    path: &Path,
    crop_width: usize,
    crop_height: usize,
) -> Result<usize, FrameError> {
    if frames.is_empty() {
        return Err(FrameError::EmptyFrameList);
    }
    if crop_width == 0 || crop_height == 0 || crop_width % 2 != 0 || crop_height % 2 != 0 {
        return Err(FrameError::BadDimensions {
            width: crop_width,
            height: crop_height,
        });
    }
    let (w, h) = (frames[0].width, frames[0].height);
    if frames.iter().any(|f| f.width != w || f.height != h) {
        return Err(FrameError::DimensionMismatch);
    }
    if crop_width > w || crop_height > h {
        return Err(FrameError::DimensionMismatch);
    }
    let mut out = fs::File::create(path)?;
    let mut written = 0usize;
    for f in frames {
        for row in 0..crop_height {
            out.write_all(&f.y[row * f.width..row * f.width + crop_width])?;
        }
        let (cw, ch) = (crop_width / 2, crop_height / 2);
        for plane in [&f.u, &f.v] {
            for row in 0..ch {
                out.write_all(&plane[row * f.chroma_width()..row * f.chroma_width() + cw])?;
            }
        }
        written += crop_width * crop_height * 3 / 2;
    }
    Ok(written)
}

/// Per-plane and combined PSNR in dB. Identical planes report
/// `f64::INFINITY`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    pub psnr_y: f64,
    pub psnr_u: f64,
    pub psnr_v: f64,
    /// Weighted combination `(6*Y + U + V) / 8`.
    pub psnr_yuv: f64,
}

impl QualityReport {
    fn from_mse(mse_y: f64, mse_u: f64, mse_v: f64) -> Self {
        let psnr_y = mse_to_psnr(mse_y);
        let psnr_u = mse_to_psnr(mse_u);
        let psnr_v = mse_to_psnr(mse_v);
        QualityReport {
            psnr_y,
            psnr_u,
            psnr_v,
            psnr_yuv: (6.0 * psnr_y + psnr_u + psnr_v) / 8.0,
        }
    }
}

fn mse_to_psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

fn plane_sse(a: &[u8], b: &[u8], stride: usize, w: usize, h: usize) -> u64 {
    let mut sse = 0u64;
    for y in 0..h {
        let ra = &a[y * stride..y * stride + w];
        let rb = &b[y * stride..y * stride + w];
        for (&pa, &pb) in ra.iter().zip(rb) {
            let d = i64::from(pa) - i64::from(pb);
            sse += (d * d) as u64;
        }
    }
    sse
}

/// PSNR of a single frame pair over the crop region.
pub fn yuv_psnr(
    reference: &Frame,
    test: &Frame,
    crop_width: usize,
    crop_height: usize,
) -> Result<QualityReport, FrameError> {
    sequence_psnr(
        std::slice::from_ref(reference),
        std::slice::from_ref(test),
        crop_width,
        crop_height,
    )
}

/// Sequence PSNR: pools MSE per plane over all frames, then converts to dB.
pub fn sequence_psnr(
    reference: &[Frame],
    test: &[Frame],
    crop_width: usize,
    crop_height: usize,
) -> Result<QualityReport, FrameError> {
    if reference.is_empty() || reference.len() != test.len() {
        return Err(FrameError::DimensionMismatch);
    }
    let (w, h) = (reference[0].width, reference[0].height);
    if crop_width > w || crop_height > h || crop_width % 2 != 0 || crop_height % 2 != 0 {
        return Err(FrameError::BadDimensions {
            width: crop_width,
            height: crop_height,
        });
    }
    let mut sse = [0u64; 3];
    for (a, b) in reference.iter().zip(test) {
        if a.width != w || a.height != h || b.width != w || b.height != h {
            return Err(FrameError::DimensionMismatch);
        }
        sse[0] += plane_sse(&a.y, &b.y, w, crop_width, crop_height);
        sse[1] += plane_sse(&a.u, &b.u, w / 2, crop_width / 2, crop_height / 2);
        sse[2] += plane_sse(&a.v, &b.v, w / 2, crop_width / 2, crop_height / 2);
    }
    let n = reference.len() as f64;
    let luma_px = (crop_width * crop_height) as f64 * n;
    let chroma_px = luma_px / 4.0;
    Ok(QualityReport::from_mse(
        sse[0] as f64 / luma_px,
        sse[1] as f64 / chroma_px,
        sse[2] as f64 / chroma_px,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    fn deterministic_bytes(n: usize, seed: u8) -> Vec<u8> {
        let mut state = (seed as u32).wrapping_mul(2654435761).wrapping_add(1);
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(1664525).wrapping_add(1013904223);
                (state >> 24) as u8
            })
            .collect()
    }

    #[test]
    fn load_returns_fewer_frames_than_requested() {
        let bytes = deterministic_bytes(16 * 16 * 3 / 2, 1);
        let f = write_temp(&bytes);
        let frames = load_yuv(f.path(), 16, 16, 4).unwrap();
        assert_eq!(frames.len(), 1);
    }

    #[test]
    fn load_drops_partial_trailing_frame() {
        let mut bytes = deterministic_bytes(16 * 16 * 3 / 2, 2);
        bytes.extend_from_slice(&bytes.clone()[..100]);
        let f = write_temp(&bytes);
        let frames = load_yuv(f.path(), 16, 16, 4).unwrap();
        assert_eq!(frames.len(), 1);
    }

    #[test]
    fn aligned_dimensions_need_no_padding() {
        let bytes = deterministic_bytes(176 * 144 * 3 / 2 * 2, 3);
        let f = write_temp(&bytes);
        let frames = load_yuv(f.path(), 176, 144, 2).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].width, 176);
        assert_eq!(frames[0].height, 144);
        assert_eq!(frames[0].crop_width, 176);
    }

    #[test]
    fn padded_round_trip_restores_original_bytes() {
        // 20x20 input pads to 32x32; cropped save must reproduce the input.
        let bytes = deterministic_bytes(20 * 20 * 3 / 2, 4);
        let f = write_temp(&bytes);
        let frames = load_yuv(f.path(), 20, 20, 1).unwrap();
        assert_eq!(frames[0].width, 32);
        assert_eq!(frames[0].height, 32);
        assert_eq!(frames[0].crop_width, 20);
        let out = tempfile::NamedTempFile::new().unwrap();
        let n = save_yuv(&frames, out.path(), 20, 20).unwrap();
        assert_eq!(n, bytes.len());
        assert_eq!(std::fs::read(out.path()).unwrap(), bytes);
    }

    #[test]
    fn save_load_identity_for_aligned_input() {
        let bytes = deterministic_bytes(32 * 16 * 3 / 2 * 3, 5);
        let f = write_temp(&bytes);
        let frames = load_yuv(f.path(), 32, 16, 3).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        let n = save_yuv(&frames, out.path(), 32, 16).unwrap();
        assert_eq!(n, 32 * 16 * 3 / 2 * 3);
        assert_eq!(std::fs::read(out.path()).unwrap(), bytes);
    }

    #[test]
    fn save_byte_count_is_exact() {
        let frames = vec![Frame::new(176, 144).unwrap()];
        let out = tempfile::NamedTempFile::new().unwrap();
        let n = save_yuv(&frames, out.path(), 176, 144).unwrap();
        assert_eq!(n, 38016);
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(load_yuv(Path::new("/nonexistent/clip.yuv"), 16, 16, 1).is_err());
        let f = write_temp(&[0u8; 600]);
        assert!(matches!(
            load_yuv(f.path(), 0, 16, 1),
            Err(FrameError::BadDimensions { .. })
        ));
        let out = tempfile::NamedTempFile::new().unwrap();
        assert!(matches!(
            save_yuv(&[], out.path(), 16, 16),
            Err(FrameError::EmptyFrameList)
        ));
    }

    #[test]
    fn identical_frames_report_infinite_psnr() {
        let a = Frame::new(32, 32).unwrap();
        let r = yuv_psnr(&a, &a, 32, 32).unwrap();
        assert_eq!(r.psnr_y, f64::INFINITY);
        assert_eq!(r.psnr_yuv, f64::INFINITY);
    }

    #[test]
    fn yuv_weighting_is_six_one_one() {
        // Equal plane PSNRs combine to the same value.
        let r = QualityReport::from_mse(6.5025, 6.5025, 6.5025);
        assert!((r.psnr_y - 40.0).abs() < 1e-12);
        assert!((r.psnr_yuv - 40.0).abs() < 1e-12);
        // 42, 44, 46 -> (6*42 + 44 + 46) / 8 = 42.75.
        let q = QualityReport {
            psnr_y: 42.0,
            psnr_u: 44.0,
            psnr_v: 46.0,
            psnr_yuv: (6.0 * 42.0 + 44.0 + 46.0) / 8.0,
        };
        assert!((q.psnr_yuv - 42.75).abs() < 1e-12);
    }

    #[test]
    fn psnr_is_symmetric_and_shift_invariant() {
        let mut a = Frame::new(32, 32).unwrap();
        let mut b = Frame::new(32, 32).unwrap();
        let noise = deterministic_bytes(a.y.len(), 6);
        for (p, n) in a.y.iter_mut().zip(&noise) {
            *p = 100 + (n % 40);
        }
        for (p, n) in b.y.iter_mut().zip(noise.iter().rev()) {
            *p = 100 + (n % 40);
        }
        let fwd = yuv_psnr(&a, &b, 32, 32).unwrap();
        let rev = yuv_psnr(&b, &a, 32, 32).unwrap();
        assert_eq!(fwd, rev);

        // Adding the same constant (no clipping) leaves PSNR unchanged.
        let mut a2 = a.clone();
        let mut b2 = b.clone();
        for p in a2.y.iter_mut().chain(b2.y.iter_mut()) {
            *p += 10;
        }
        let shifted = yuv_psnr(&a2, &b2, 32, 32).unwrap();
        assert!((shifted.psnr_y - fwd.psnr_y).abs() < 1e-12);
    }

    #[test]
    fn psnr_uses_crop_region_only() {
        let bytes = deterministic_bytes(20 * 20 * 3 / 2, 7);
        let f = write_temp(&bytes);
        let a = load_yuv(f.path(), 20, 20, 1).unwrap().remove(0);
        let mut b = a.clone();
        // Corrupt a padded-region sample; PSNR over the crop is unaffected.
        b.y[31 * 32 + 31] = b.y[31 * 32 + 31].wrapping_add(50);
        let r = yuv_psnr(&a, &b, 20, 20).unwrap();
        assert_eq!(r.psnr_y, f64::INFINITY);
    }
}
