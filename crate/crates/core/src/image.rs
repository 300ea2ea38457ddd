//! Rasters, binary PGM/PPM I/O and the power-of-two ingestion policy.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An unconstrained real-valued H×W×C raster, row-major and channel-interleaved.
///
/// Inverse transforms and network outputs produce fields; they become an
/// [`Image`] once clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty raster {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("unsupported channel count {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} raster needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Field {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Field {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    /// Copies one channel out as a dense row-major plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn set_plane(&mut self, c: usize, plane: &[f64]) {
        debug_assert_eq!(plane.len(), self.height * self.width);
        for (i, v) in plane.iter().enumerate() {
            self.data[i * self.channels + c] = *v;
        }
    }

    pub fn same_dims(&self, other: &Field) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Clamps into `[0, 1]`, returning the image and how many values moved.
    pub fn clamp_to_image(&self) -> (Image, usize) {
        let mut clamped = 0;
        let data = self
            .data
            .iter()
            .map(|&v| {
                let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
                if c != v {
                    clamped += 1;
                }
                c
            })
            .collect();
        let field = Field {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        };
        (Image { field }, clamped)
    }
}

/// A raster with every value in `[0, 1]` and power-of-two sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    field: Field,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Image::from_field(Field::new(height, width, channels, data)?)
    }

    pub fn from_field(field: Field) -> Result<Self> {
        if !field.height.is_power_of_two() || !field.width.is_power_of_two() {
            return Err(Error::Shape(format!(
                "image sides must be powers of two, got {}x{}",
                field.height, field.width
            )));
        }
        if let Some(v) = field.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        Ok(Image { field })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.field.height
    }

    pub fn width(&self) -> usize {
        self.field.width
    }

    pub fn channels(&self) -> usize {
        self.field.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.field.data
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn into_field(self) -> Field {
        self.field
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.field.get(y, x, c)
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.field.same_dims(&other.field)
    }
}

impl AsRef<Field> for Image {
    fn as_ref(&self) -> &Field {
        &self.field
    }
}

impl AsRef<Field> for Field {
    fn as_ref(&self) -> &Field {
        self
    }
}

/// Reflect-101 index mapping (`-1 -> 1`, `n -> n-2`), folded repeatedly so
/// pads wider than the source still resolve.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Applies the ingestion policy to an arbitrary raster.
///
/// Power-of-two sides pass through. Otherwise, when the shorter side is within
/// 25% above the largest power of two it contains, the raster is center-cropped
/// to that square; else it is reflect-padded up to the square whose side is the
/// next power of two above the longer side.
pub fn normalize_dimensions(field: Field) -> Field {
    let (h, w) = (field.height, field.width);
    if h.is_power_of_two() && w.is_power_of_two() {
        return field;
    }
    let short = h.min(w);
    let inscribed = 1usize << (usize::BITS - 1 - short.leading_zeros());
    if 4 * (short - inscribed) <= inscribed {
        center_crop(&field, inscribed)
    } else {
        reflect_pad(&field, h.max(w).next_power_of_two())
    }
}

fn center_crop(field: &Field, side: usize) -> Field {
    let y0 = (field.height - side) / 2;
    let x0 = (field.width - side) / 2;
    let mut out = Field::zeros(side, side, field.channels);
    for y in 0..side {
        for x in 0..side {
            for c in 0..field.channels {
                let i = out.index(y, x, c);
                out.data[i] = field.get(y0 + y, x0 + x, c);
            }
        }
    }
    out
}

fn reflect_pad(field: &Field, side: usize) -> Field {
    let top = ((side - field.height) / 2) as isize;
    let left = ((side - field.width) / 2) as isize;
    let mut out = Field::zeros(side, side, field.channels);
    for y in 0..side {
        let sy = reflect_index(y as isize - top, field.height);
        for x in 0..side {
            let sx = reflect_index(x as isize - left, field.width);
            for c in 0..field.channels {
                let i = out.index(y, x, c);
                out.data[i] = field.get(sy, sx, c);
            }
        }
    }
    out
}

/// Reads a binary PGM (`P5`) or PPM (`P6`) with maxval 255.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let field = decode_pnm(&bytes).map_err(|reason| Error::format(path, reason))?;
    Image::from_field(normalize_dimensions(field))
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Parses PNM bytes into a field without applying the dimension policy.
pub fn decode_pnm(bytes: &[u8]) -> std::result::Result<Field, String> {
    let mut pos = 0usize;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the payload
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("missing whitespace after header".into());
    }
    pos += 1;

    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(format!("unsupported magic {other:?}")),
    };
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| format!("malformed {what} {s:?}"))
    };
    let width = parse(&tokens[1], "width")?;
    let height = parse(&tokens[2], "height")?;
    let maxval = parse(&tokens[3], "maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    if width == 0 || height == 0 {
        return Err("zero-sized raster".into());
    }
    let n = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < n {
        return Err(format!(
            "payload has {} bytes, expected {n}",
            payload.len()
        ));
    }
    let data = payload[..n].iter().map(|&b| b as f64 / 255.0).collect();
    Field::new(height, width, channels, data).map_err(|e| e.to_string())
}

/// Quantizes a pixel to a byte: `round(255 p)` with halves rounded up.
#[inline]
pub fn quantize(p: f64) -> u8 {
    (255.0 * p + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode_pnm(image: &Image) -> Vec<u8> {
    let magic = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.pixels().iter().map(|&p| quantize(p)));
    out
}

pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(image)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pgm(w: usize, h: usize, payload: &[u8]) -> Vec<u8> {
        let mut v = format!("P5\n{w} {h}\n255\n").into_bytes();
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn decodes_scaled_bytes() {
        let f = decode_pnm(&pgm(2, 2, &[0, 255, 128, 64])).unwrap();
        assert_eq!(f.data, vec![0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn header_errors_are_reported() {
        assert!(decode_pnm(b"P2\n2 2\n255\n....").unwrap_err().contains("magic"));
        assert!(decode_pnm(b"P5\n2 2\n65535\n........")
            .unwrap_err()
            .contains("maxval"));
        assert!(decode_pnm(b"P5\n2 x\n255\n....").unwrap_err().contains("height"));
        assert!(decode_pnm(b"P5\n2 2\n255\n..").unwrap_err().contains("payload"));
        assert!(decode_pnm(b"P5\n2").unwrap_err().contains("truncated"));
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let f = decode_pnm(b"P5\n# made by hand\n1 1\n255\n\x80").unwrap();
        assert_eq!(f.data, vec![128.0 / 255.0]);
    }

    #[test]
    fn load_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pgm");
        fs::write(&p, b"P5\n2 2\n15\n....").unwrap();
        let msg = load_image(&p).unwrap_err().to_string();
        assert!(msg.contains("bad.pgm") && msg.contains("maxval"), "{msg}");
        let missing = load_image(dir.path().join("nope.pgm")).unwrap_err();
        assert!(matches!(missing, Error::Io { .. }));
    }

    #[test]
    fn zero_and_one_images_encode_to_extreme_bytes() {
        let zero = Image::filled(4, 4, 1, 0.0).unwrap();
        let bytes = encode_pnm(&zero);
        assert_eq!(&bytes[bytes.len() - 16..], &[0u8; 16]);
        assert_eq!(bytes.len(), b"P5\n4 4\n255\n".len() + 16);
        let one = Image::filled(2, 2, 3, 1.0).unwrap();
        let bytes = encode_pnm(&one);
        assert!(bytes[bytes.len() - 12..].iter().all(|&b| b == 255));
    }

    #[test]
    fn quantization_rounds_half_up_and_round_trips_every_level() {
        assert_eq!(quantize(0.5), 128);
        for level in 0..=255u8 {
            let p = level as f64 / 255.0;
            assert_eq!(quantize(p), level);
        }
    }

    /// Straightforward padding oracle: mirror rows, then mirror columns.
    fn hand_padded(src: &[f64], n: usize, side: usize) -> Vec<f64> {
        let pad = (side - n) / 2;
        let mirror = |i: isize| -> usize {
            let mut i = i;
            loop {
                if i < 0 {
                    i = -i;
                } else if i >= n as isize {
                    i = 2 * (n as isize - 1) - i;
                } else {
                    return i as usize;
                }
            }
        };
        let rows: Vec<Vec<f64>> = (0..side)
            .map(|y| {
                let sy = mirror(y as isize - pad as isize);
                src[sy * n..(sy + 1) * n].to_vec()
            })
            .collect();
        rows.iter()
            .flat_map(|row| (0..side).map(move |x| row[mirror(x as isize - pad as isize)]))
            .collect()
    }

    #[test]
    fn non_power_of_two_input_is_reflect_padded() {
        let n = 100;
        let src: Vec<f64> = (0..n * n).map(|i| ((i * 7919) % 251) as f64 / 250.0).collect();
        let out = normalize_dimensions(Field::new(n, n, 1, src.clone()).unwrap());
        assert_eq!((out.height, out.width), (128, 128));
        assert_eq!(out.data, hand_padded(&src, n, 128));
    }

    #[test]
    fn near_power_of_two_input_is_center_cropped() {
        let src: Vec<f64> = (0..70 * 72).map(|i| (i % 13) as f64 / 12.0).collect();
        let f = Field::new(70, 72, 1, src).unwrap();
        let out = normalize_dimensions(f.clone());
        assert_eq!((out.height, out.width), (64, 64));
        assert_eq!(out.get(0, 0, 0), f.get(3, 4, 0));
        assert_eq!(out.get(63, 63, 0), f.get(66, 67, 0));
    }

    #[test]
    fn power_of_two_input_is_untouched() {
        let f = Field::new(8, 16, 3, vec![0.25; 8 * 16 * 3]).unwrap();
        assert_eq!(normalize_dimensions(f.clone()), f);
    }

    #[test]
    fn image_rejects_out_of_range_and_odd_sides() {
        assert!(Image::new(2, 2, 1, vec![0.0, 1.1, 0.0, 0.0]).is_err());
        assert!(Image::new(3, 2, 1, vec![0.0; 6]).is_err());
        assert!(Image::new(2, 2, 2, vec![0.0; 8]).is_err());
    }

    proptest! {
        #[test]
        fn save_load_round_trip_within_half_level(
            pixels in proptest::collection::vec(0.0f64..=1.0, 4 * 8 * 3)
        ) {
            let img = Image::new(4, 8, 3, pixels).unwrap();
            let back = decode_pnm(&encode_pnm(&img)).unwrap();
            for (a, b) in img.pixels().iter().zip(&back.data) {
                prop_assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}
