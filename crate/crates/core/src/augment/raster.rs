use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point2;

use super::AffineTransform;

/// 8-bit raster with 1 or 3 interleaved channels, row-major. Pixel `(i, j)`
/// has its center at coordinates `(i, j)`, matching landmark coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidArgument(format!(
                "buffer of {} bytes does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, value: &[u8]) {
        let i = (y * self.width + x) * self.channels;
        self.data[i..i + self.channels].copy_from_slice(value);
    }

    pub fn center(&self) -> Point2 {
        Point2::new(
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }

    /// Binary PGM (`P5`) or PPM (`P6`) with maxval 255.
    pub fn read_pnm<R: Read>(mut reader: R) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::parse(0, "truncated PNM header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let channels = match token()?.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(Error::parse(0, format!("unsupported PNM magic `{other}`"))),
        };
        let mut number = |what: &str| -> Result<usize> {
            let t = token()?;
            t.parse()
                .map_err(|_| Error::parse(0, format!("invalid PNM {what} `{t}`")))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval != 255 {
            return Err(Error::parse(0, format!("unsupported maxval {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the samples.
        let start = pos + 1;
        let len = width * height * channels;
        if bytes.len() < start + len {
            return Err(Error::parse(0, "truncated PNM sample data"));
        }
        Self::new(width, height, channels, bytes[start..start + len].to_vec())
    }

    pub fn write_pnm<W: Write>(&self, mut writer: W) -> Result<()> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        write!(writer, "{magic}\n{} {}\n255\n", self.width, self.height)?;
        writer.write_all(&self.data)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::read_pnm(std::io::BufReader::new(file)).map_err(|e| e.in_file(path))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::from(e).in_file(path))?;
        self.write_pnm(std::io::BufWriter::new(file))
    }
}

/// Resamples `img` so that output pixel `p` shows input location `t⁻¹(p)`.
/// Samples outside the input take `fill`.
pub fn warp_raster(
    t: &AffineTransform,
    img: &RasterImage,
    fill: u8,
    interpolation: Interpolation,
) -> Result<RasterImage> {
    let inv = t.inverse()?;
    let (w, h, ch) = (img.width, img.height, img.channels);
    let mut out = vec![fill; img.data.len()];
    const EDGE: f64 = 1e-9;
    let max_x = w as f64 - 1.0;
    let max_y = h as f64 - 1.0;
    for oy in 0..h {
        for ox in 0..w {
            let src = inv.apply(Point2::new(ox as f64, oy as f64));
            let dst = &mut out[(oy * w + ox) * ch..(oy * w + ox + 1) * ch];
            match interpolation {
                Interpolation::Nearest => {
                    let (sx, sy) = (src.x.round(), src.y.round());
                    if sx >= 0.0 && sy >= 0.0 && sx <= max_x && sy <= max_y {
                        dst.copy_from_slice(img.pixel(sx as usize, sy as usize));
                    }
                }
                Interpolation::Bilinear => {
                    if src.x < -EDGE
                        || src.y < -EDGE
                        || src.x > max_x + EDGE
                        || src.y > max_y + EDGE
                    {
                        continue;
                    }
                    let x = src.x.clamp(0.0, max_x);
                    let y = src.y.clamp(0.0, max_y);
                    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
                    for (c, out) in dst.iter_mut().enumerate() {
                        let v = |px: usize, py: usize| img.data[(py * w + px) * ch + c] as f64;
                        let top = v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx;
                        let bottom = v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx;
                        *out = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
        }
    }
    RasterImage::new(w, h, ch, out)
}

/// Rec. 601 luma replicated over three channels.
pub fn grayscale(img: &RasterImage) -> Result<RasterImage> {
    if img.channels != 3 {
        return Err(Error::InvalidArgument(
            "grayscale expects a 3-channel image".to_string(),
        ));
    }
    let data = img
        .data
        .chunks_exact(3)
        .flat_map(|px| {
            let luma = (0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64)
                .round()
                .clamp(0.0, 255.0) as u8;
            [luma; 3]
        })
        .collect();
    RasterImage::new(img.width, img.height, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{make_transform, TransformKind};

    fn gradient(w: usize, h: usize) -> RasterImage {
        let data = (0..w * h * 3).map(|i| (i * 37 % 251) as u8).collect();
        RasterImage::new(w, h, 3, data).unwrap()
    }

    fn brightest(img: &RasterImage) -> (usize, usize) {
        let mut best = (0, 0);
        for y in 0..img.height() {
            for x in 0..img.width() {
                if img.pixel(x, y)[0] > img.pixel(best.0, best.1)[0] {
                    best = (x, y);
                }
            }
        }
        best
    }

    #[test]
    fn identity_warp_is_byte_identical() {
        let img = gradient(17, 11);
        for interp in [Interpolation::Bilinear, Interpolation::Nearest] {
            assert_eq!(
                warp_raster(&AffineTransform::IDENTITY, &img, 0, interp).unwrap(),
                img
            );
        }
    }

    #[test]
    fn quarter_turn_moves_marker() {
        for (w, h) in [(21, 21), (32, 24)] {
            let mut img = RasterImage::filled(w, h, 1, 0).unwrap();
            let marker = Point2::new(14.0, 9.0);
            img.set_pixel(14, 9, &[255]);
            let t =
                make_transform(TransformKind::Rotation { degrees: 90.0 }, img.center()).unwrap();
            let out = warp_raster(&t, &img, 0, Interpolation::Bilinear).unwrap();
            let expected = t.apply(marker);
            let (bx, by) = brightest(&out);
            assert!(out.pixel(bx, by)[0] > 0);
            assert!((bx as f64 - expected.x).abs() <= 1.0 && (by as f64 - expected.y).abs() <= 1.0);
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = RasterImage::filled(19, 13, 3, 77).unwrap();
        for deg in [17.0, 90.0, -133.0] {
            let t = make_transform(TransformKind::Rotation { degrees: deg }, img.center()).unwrap();
            let out = warp_raster(&t, &img, 77, Interpolation::Bilinear).unwrap();
            assert!(out.data().iter().all(|&v| v == 77));
        }
    }

    #[test]
    fn out_of_bounds_takes_fill() {
        let img = RasterImage::filled(8, 8, 1, 200).unwrap();
        let shift = AffineTransform {
            m: [[1.0, 0.0, 100.0], [0.0, 1.0, 0.0]],
        };
        let out = warp_raster(&shift, &img, 9, Interpolation::Bilinear).unwrap();
        assert!(out.data().iter().all(|&v| v == 9));
    }

    #[test]
    fn singular_warp_rejected() {
        let img = RasterImage::filled(4, 4, 1, 0).unwrap();
        let t = AffineTransform {
            m: [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
        };
        assert!(matches!(
            warp_raster(&t, &img, 0, Interpolation::Bilinear),
            Err(Error::SingularTransform(_))
        ));
    }

    #[test]
    fn grayscale_examples() {
        let img =
            RasterImage::new(4, 1, 3, vec![255, 255, 255, 255, 0, 0, 90, 90, 90, 0, 0, 0]).unwrap();
        let g = grayscale(&img).unwrap();
        assert_eq!(g.pixel(0, 0), &[255, 255, 255]);
        assert_eq!(g.pixel(1, 0), &[76, 76, 76]);
        assert_eq!(g.pixel(2, 0), &[90, 90, 90]);
        assert_eq!(g.pixel(3, 0), &[0, 0, 0]);
        assert!(grayscale(&RasterImage::filled(2, 2, 1, 3).unwrap()).is_err());
    }

    #[test]
    fn pnm_round_trip() {
        for ch in [1, 3] {
            let data = (0..5 * 3 * ch).map(|i| (i * 13) as u8).collect();
            let img = RasterImage::new(5, 3, ch, data).unwrap();
            let mut buf = Vec::new();
            img.write_pnm(&mut buf).unwrap();
            assert_eq!(RasterImage::read_pnm(buf.as_slice()).unwrap(), img);
        }
        let with_comment = b"P5\n# made by hand\n2 1\n255\n\x07\x08";
        let img = RasterImage::read_pnm(&with_comment[..]).unwrap();
        assert_eq!(img.data(), &[7, 8]);
        assert!(RasterImage::read_pnm(&b"P3\n1 1\n255\n0 0 0"[..]).is_err());
        assert!(RasterImage::read_pnm(&b"P5\n4 4\n255\n\x00"[..]).is_err());
    }
}
