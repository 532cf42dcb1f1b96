//! Grayscale raster type, PGM/PNG codecs, quantization, padding and resizing.
//!
//! Every pixel is a normalized intensity in `[0, 1]` stored as `f64`.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// A row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image, rejecting wrong lengths and values that are not finite or fall outside `[0, 1]`.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!("{} pixels for a {width}x{height} image", pixels.len())));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Image { width, height, pixels })
    }

    /// Evaluates `f(x, y)` for every pixel and clamps the result into `[0, 1]`.
    ///
    /// Panics if `f` produces a NaN.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(!v.is_nan(), "pixel ({x}, {y}) is NaN");
                pixels.push(v.clamp(0.0, 1.0));
            }
        }
        Image { width, height, pixels }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with mirror reflection outside the image (edge pixel not repeated).
    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize) -> f64 {
        self.get(reflect_index(x, self.width), reflect_index(y, self.height))
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }
}

/// Maps an out-of-range coordinate back into `0..n` by mirroring about the
/// edge pixels. Extents of one pixel map everything to 0.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    if i >= 0 && (i as usize) < n {
        return i as usize;
    }
    let period = 2 * (n as isize - 1);
    let r = i.rem_euclid(period);
    if r >= n as isize {
        (period - r) as usize
    } else {
        r as usize
    }
}

pub(crate) fn check_same_dims(a: &Image, b: &Image, what: &str) -> Result<()> {
    if a.same_dims(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{what}: {}x{} vs {}x{}", a.width, a.height, b.width, b.height)))
    }
}

/// 8-bit codes produced by [`quantize8`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedImage {
    pub width: usize,
    pub height: usize,
    pub codes: Vec<u8>,
}

impl QuantizedImage {
    pub const LEVELS: usize = 256;
}

/// Round-half-up quantization of a unit intensity to `0..=maxval`.
#[inline]
pub fn quantize_value(p: f64, maxval: u32) -> u32 {
    let m = f64::from(maxval);
    (p * m + 0.5).floor().clamp(0.0, m) as u32
}

pub fn quantize8(img: &Image) -> QuantizedImage {
    QuantizedImage {
        width: img.width,
        height: img.height,
        codes: img.pixels.iter().map(|&p| quantize_value(p, 255) as u8).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
}

impl ImageFormat {
    /// Picks the format from a file extension (`.pgm` or `.png`, case-insensitive).
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).unwrap_or_default();
        match ext.as_str() {
            "pgm" => Ok(ImageFormat::Pgm),
            "png" => Ok(ImageFormat::Png),
            _ => Err(Error::Unsupported(format!("unknown image extension for {}", path.display()))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

pub fn load_image(bytes: &[u8], format: ImageFormat) -> Result<Image> {
    match format {
        ImageFormat::Pgm => decode_pgm(bytes),
        ImageFormat::Png => decode_png(bytes),
    }
}

pub fn save_image(img: &Image, format: ImageFormat, depth: BitDepth) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Pgm => Ok(encode_pgm(img, depth)),
        ImageFormat::Png => {
            if depth != BitDepth::Eight {
                return Err(Error::Unsupported("only 8-bit grayscale PNG is written".into()));
            }
            encode_png(img)
        }
    }
}

/// Reads an image file, choosing the codec from its extension.
pub fn read_image_file(path: &Path) -> Result<Image> {
    let format = ImageFormat::from_path(path)?;
    let bytes = std::fs::read(path)?;
    load_image(&bytes, format)
}

pub fn write_image_file(path: &Path, img: &Image, depth: BitDepth) -> Result<()> {
    let format = ImageFormat::from_path(path)?;
    let bytes = save_image(img, format, depth)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&c) = self.bytes.get(self.pos) {
            if c == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("{what} out of range")))
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::MalformedHeader("missing P5 magic".into()));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 && maxval != 65535 {
        return Err(Error::Unsupported(format!("PGM maxval {maxval} (expected 255 or 65535)")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::MalformedHeader("no whitespace after maxval".into())),
    }
    let sample_bytes = if maxval > 255 { 2 } else { 1 };
    let expected = width * height * sample_bytes;
    let raster = &bytes[cur.pos..];
    if raster.len() < expected {
        return Err(Error::Truncated { expected, found: raster.len() });
    }
    let m = f64::from(maxval);
    let pixels = if sample_bytes == 1 {
        raster[..expected].iter().map(|&b| f64::from(b) / m).collect()
    } else {
        raster[..expected].chunks_exact(2).map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / m).collect()
    };
    Ok(Image { width, height, pixels })
}

fn encode_pgm(img: &Image, depth: BitDepth) -> Vec<u8> {
    let maxval = depth.maxval();
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    match depth {
        BitDepth::Eight => out.extend(img.pixels.iter().map(|&p| quantize_value(p, maxval) as u8)),
        BitDepth::Sixteen => {
            for &p in &img.pixels {
                out.extend_from_slice(&(quantize_value(p, maxval) as u16).to_be_bytes());
            }
        }
    }
    out
}

fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Unsupported(format!(
            "PNG {:?} at {:?} bits (only 8-bit grayscale is accepted)",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let size = reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    let stride = frame.line_size;
    let mut pixels = Vec::with_capacity(width * height);
    for row in buf.chunks(stride).take(height) {
        pixels.extend(row[..width].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok(Image { width, height, pixels })
}

fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| Error::Png(e.to_string()))?;
        let codes = quantize8(img).codes;
        writer.write_image_data(&codes).map_err(|e| Error::Png(e.to_string()))?;
        writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

/// Original dimensions of an image before [`pad_reflect_to_multiple`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRecord {
    pub width: usize,
    pub height: usize,
}

/// Grows the image at the right and bottom edges by mirror reflection until
/// both dimensions are multiples of `m`.
pub fn pad_reflect_to_multiple(img: &Image, m: usize) -> Result<(Image, CropRecord)> {
    if m == 0 {
        return Err(Error::InvalidArgument("padding multiple must be positive".into()));
    }
    let record = CropRecord { width: img.width, height: img.height };
    let w = img.width.div_ceil(m) * m;
    let h = img.height.div_ceil(m) * m;
    if (w != img.width && img.width < 2) || (h != img.height && img.height < 2) {
        return Err(Error::InvalidArgument(format!("cannot reflect-pad a {}x{} image", img.width, img.height)));
    }
    if (w, h) == img.dims() {
        return Ok((img.clone(), record));
    }
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            pixels.push(img.get_reflect(x as isize, y as isize));
        }
    }
    Ok((Image { width: w, height: h, pixels }, record))
}

/// Cuts the top-left `record.width x record.height` region back out.
pub fn crop(img: &Image, record: CropRecord) -> Result<Image> {
    if record.width > img.width || record.height > img.height || record.width == 0 || record.height == 0 {
        return Err(Error::DimensionMismatch(format!(
            "crop {}x{} from {}x{}",
            record.width, record.height, img.width, img.height
        )));
    }
    let mut pixels = Vec::with_capacity(record.width * record.height);
    for y in 0..record.height {
        let row = y * img.width;
        pixels.extend_from_slice(&img.pixels[row..row + record.width]);
    }
    Ok(Image { width: record.width, height: record.height, pixels })
}

/// Interpolation taps `(i0, i1, frac)` for each output sample of a 1-D
/// half-pixel-centred bilinear resampling from `n_in` to `n_out` samples.
pub(crate) fn bilinear_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

#[inline]
fn lerp_bounded(a: f64, b: f64, t: f64) -> f64 {
    (a + t * (b - a)).clamp(a.min(b), a.max(b))
}

/// Bilinear resize with half-pixel centre alignment.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!("resize target {width}x{height}")));
    }
    let xt = bilinear_taps(img.width, width);
    let yt = bilinear_taps(img.height, height);
    let mut rows = Vec::with_capacity(width * img.height);
    for y in 0..img.height {
        let src = &img.pixels[y * img.width..(y + 1) * img.width];
        rows.extend(xt.iter().map(|&(i0, i1, t)| lerp_bounded(src[i0], src[i1], t)));
    }
    let mut pixels = Vec::with_capacity(width * height);
    for &(j0, j1, t) in &yt {
        let (r0, r1) = (&rows[j0 * width..(j0 + 1) * width], &rows[j1 * width..(j1 + 1) * width]);
        pixels.extend(r0.iter().zip(r1).map(|(&a, &b)| lerp_bounded(a, b, t)));
    }
    Ok(Image { width, height, pixels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pgm(header: &str, data: &[u8]) -> Vec<u8> {
        let mut v = header.as_bytes().to_vec();
        v.extend_from_slice(data);
        v
    }

    #[test]
    fn loads_8bit_pgm() {
        let img = load_image(&pgm("P5 2 2 255\n", &[0, 255, 128, 64]), ImageFormat::Pgm).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.pixels(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn loads_16bit_pgm_big_endian() {
        let img = load_image(&pgm("P5 1 1 65535\n", &[0x80, 0x00]), ImageFormat::Pgm).unwrap();
        assert_eq!(img.pixels(), &[32768.0 / 65535.0]);
    }

    #[test]
    fn truncated_pgm() {
        let err = load_image(&pgm("P5 2 2 255\n", &[1, 2, 3]), ImageFormat::Pgm).unwrap_err();
        assert!(matches!(err, Error::Truncated { expected: 4, found: 3 }));
    }

    #[test]
    fn pgm_header_comments_and_whitespace() {
        let bytes = pgm("P5\n# made by hand\n 2\t# width\n2\r\n#max\n255\n", &[1, 2, 3, 4]);
        let img = load_image(&bytes, ImageFormat::Pgm).unwrap();
        assert_eq!(quantize8(&img).codes, vec![1, 2, 3, 4]);
    }

    #[test]
    fn pgm_rejects_bad_headers() {
        assert!(matches!(load_image(b"P2 1 1 255\n\x00", ImageFormat::Pgm), Err(Error::MalformedHeader(_))));
        assert!(matches!(load_image(&pgm("P5 1 1 100\n", &[0]), ImageFormat::Pgm), Err(Error::Unsupported(_))));
        assert!(matches!(load_image(b"P5 1 x", ImageFormat::Pgm), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn save_rounds_half_up() {
        let img = Image::new(1, 1, vec![0.5]).unwrap();
        let bytes = save_image(&img, ImageFormat::Pgm, BitDepth::Eight).unwrap();
        assert_eq!(bytes, b"P5\n1 1\n255\n\x80");
    }

    #[test]
    fn save_endpoints() {
        let img = Image::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let bytes = save_image(&img, ImageFormat::Pgm, BitDepth::Eight).unwrap();
        assert_eq!(bytes, b"P5\n2 2\n255\n\x00\xff\x00\xff");
    }

    #[test]
    fn quantize8_levels() {
        let img = Image::new(4, 1, vec![0.0, 1.0, 0.5, 1.0 / 255.0]).unwrap();
        assert_eq!(quantize8(&img).codes, vec![0, 255, 128, 1]);
    }

    #[test]
    fn png_round_trip_and_rejects_color() {
        let img = Image::from_fn(5, 3, |x, y| (x * 3 + y) as f64 / 20.0);
        let bytes = save_image(&img, ImageFormat::Png, BitDepth::Eight).unwrap();
        let back = load_image(&bytes, ImageFormat::Png).unwrap();
        assert_eq!(quantize8(&back), quantize8(&img));
        assert!(save_image(&img, ImageFormat::Png, BitDepth::Sixteen).is_err());

        let mut rgb = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut rgb, 1, 1);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[1, 2, 3]).unwrap();
        }
        assert!(matches!(load_image(&rgb, ImageFormat::Png), Err(Error::Unsupported(_))));
    }

    #[test]
    fn padding_already_multiple() {
        let img = Image::filled(64, 64, 0.3);
        let (p, rec) = pad_reflect_to_multiple(&img, 32).unwrap();
        assert_eq!(p, img);
        assert_eq!(rec, CropRecord { width: 64, height: 64 });
    }

    #[test]
    fn padding_reflects_rows() {
        let img = Image::from_fn(64, 60, |x, y| (y * 64 + x) as f64 / 4096.0);
        let (p, rec) = pad_reflect_to_multiple(&img, 32).unwrap();
        assert_eq!(p.dims(), (64, 64));
        assert_eq!(rec, CropRecord { width: 64, height: 60 });
        for (row, src) in [(60, 58), (61, 57), (62, 56), (63, 55)] {
            for x in 0..64 {
                assert_eq!(p.get(x, row), img.get(x, src));
            }
        }
    }

    #[test]
    fn padding_one_pixel_extent_fails() {
        let img = Image::filled(1, 32, 0.5);
        assert!(pad_reflect_to_multiple(&img, 32).is_err());
    }

    #[test]
    fn resize_examples() {
        let img = Image::from_fn(7, 5, |x, y| ((x * 5 + y) % 11) as f64 / 10.0);
        assert_eq!(resize_bilinear(&img, 7, 5).unwrap(), img);

        let flat = Image::filled(3, 4, 0.37);
        let big = resize_bilinear(&flat, 13, 9).unwrap();
        assert!(big.pixels().iter().all(|&p| p == 0.37));

        let ramp = Image::new(2, 1, vec![0.0, 1.0]).unwrap();
        let out = resize_bilinear(&ramp, 4, 1).unwrap();
        assert_eq!(out.pixels(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn reflect_index_wraps_repeatedly() {
        let n = 3;
        let got: Vec<usize> = (-5..9).map(|i| reflect_index(i, n)).collect();
        assert_eq!(got, vec![1, 0, 1, 2, 1, 0, 1, 2, 1, 0, 1, 2, 1, 0]);
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (2usize..40, 2usize..40).prop_flat_map(|(w, h)| {
            proptest::collection::vec(0.0f64..=1.0, w * h).prop_map(move |px| Image::new(w, h, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn pgm_round_trip_is_byte_exact(img in arb_image(), sixteen in any::<bool>()) {
            let depth = if sixteen { BitDepth::Sixteen } else { BitDepth::Eight };
            let first = save_image(&img, ImageFormat::Pgm, depth).unwrap();
            let back = load_image(&first, ImageFormat::Pgm).unwrap();
            let second = save_image(&back, ImageFormat::Pgm, depth).unwrap();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn quantize_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize_value(lo, 255) <= quantize_value(hi, 255));
        }

        #[test]
        fn pad_then_crop_is_identity(img in arb_image(), m in 1usize..40) {
            let (padded, rec) = pad_reflect_to_multiple(&img, m).unwrap();
            prop_assert_eq!(padded.width() % m, 0);
            prop_assert_eq!(padded.height() % m, 0);
            prop_assert_eq!(crop(&padded, rec).unwrap(), img);
        }

        #[test]
        fn resize_preserves_range(img in arb_image(), w in 1usize..50, h in 1usize..50) {
            let out = resize_bilinear(&img, w, h).unwrap();
            let (lo, hi) = img.pixels().iter().fold((1.0f64, 0.0f64), |(l, u), &p| (l.min(p), u.max(p)));
            prop_assert!(out.pixels().iter().all(|&p| p >= lo && p <= hi));
        }
    }
}
