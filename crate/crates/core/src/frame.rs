//! 8-bit camera images and bilinear sampling.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFrame {
    pub width: u32,
    pub height: u32,
    /// 1 (gray) or 3 (RGB), interleaved row-major samples.
    pub channels: u8,
    pub data: Vec<u8>,
    pub camera_name: String,
    pub timestamp_ns: u64,
}

impl ImageFrame {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::validation("frame.channels", format!("{channels} channels unsupported")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::validation(
                "frame.data",
                format!("buffer holds {} samples, expected {expected}", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            camera_name: String::new(),
            timestamp_ns: 0,
        })
    }

    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let data = color.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Self {
            width,
            height,
            channels: 3,
            data,
            camera_name: String::new(),
            timestamp_ns: 0,
        }
    }

    pub fn with_camera(mut self, name: impl Into<String>) -> Self {
        self.camera_name = name.into();
        self
    }

    pub fn with_timestamp(mut self, timestamp_ns: u64) -> Self {
        self.timestamp_ns = timestamp_ns;
        self
    }

    /// Pixel at integer coordinates, gray replicated to RGB.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * self.channels as usize;
        if self.channels == 1 {
            let g = self.data[i];
            [g, g, g]
        } else {
            [self.data[i], self.data[i + 1], self.data[i + 2]]
        }
    }

    /// Bilinear interpolation at continuous coordinates, `(0, 0)` being the
    /// center of the top-left pixel. Neighbors past the last row/column are
    /// clamped to the border.
    #[inline]
    pub fn sample_bilinear(&self, u: f32, v: f32) -> [f32; 3] {
        let (w, h) = (self.width as usize, self.height as usize);
        let u = u.clamp(0.0, (w - 1) as f32);
        let v = v.clamp(0.0, (h - 1) as f32);
        let x0 = u.floor() as usize;
        let y0 = v.floor() as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = u - x0 as f32;
        let fy = v - y0 as f32;
        let c = self.channels as usize;
        let idx = |x: usize, y: usize| (y * w + x) * c;
        let (i00, i10, i01, i11) = (idx(x0, y0), idx(x1, y0), idx(x0, y1), idx(x1, y1));
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let d = &self.data;
        let mut out = [0.0f32; 3];
        for (ch, o) in out.iter_mut().enumerate().take(c) {
            *o = w00 * f32::from(d[i00 + ch])
                + w10 * f32::from(d[i10 + ch])
                + w01 * f32::from(d[i01 + ch])
                + w11 * f32::from(d[i11 + ch]);
        }
        if c == 1 {
            out[1] = out[0];
            out[2] = out[0];
        }
        out
    }

    /// Bilinear sample rounded to 8 bits (half rounds up).
    #[inline]
    pub fn sample_rgb8(&self, u: f32, v: f32) -> [u8; 3] {
        let s = self.sample_bilinear(u, v);
        [quantize(s[0]), quantize(s[1]), quantize(s[2])]
    }

    pub fn to_rgb(&self) -> ImageFrame {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&g| [g, g, g]).collect();
        ImageFrame {
            channels: 3,
            data,
            ..self.clone()
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        match self.channels {
            1 => DynamicImage::ImageLuma8(
                GrayImage::from_raw(self.width, self.height, self.data.clone()).expect("buffer length checked"),
            ),
            _ => DynamicImage::ImageRgb8(
                RgbImage::from_raw(self.width, self.height, self.data.clone()).expect("buffer length checked"),
            ),
        }
    }

    pub fn from_dynamic(img: DynamicImage) -> ImageFrame {
        let (width, height) = (img.width(), img.height());
        let (channels, data) = match img {
            DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
            other => (3, other.into_rgb8().into_raw()),
        };
        ImageFrame {
            width,
            height,
            channels,
            data,
            camera_name: String::new(),
            timestamp_ns: 0,
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<ImageFrame> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Image {
                path: path.to_owned(),
                source,
            },
        })?;
        Ok(ImageFrame::from_dynamic(img))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_dynamic()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| match source {
                image::ImageError::IoError(e) => Error::io(path, e),
                source => Error::Image {
                    path: path.to_owned(),
                    source,
                },
            })
    }
}

#[inline]
pub(crate) fn quantize(x: f32) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}
