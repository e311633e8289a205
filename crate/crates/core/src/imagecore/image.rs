use crate::error::{Error, Result};

/// Planar raster with real-valued samples in `[0, 255]`.
///
/// Samples are stored plane after plane, each plane row-major. Values are
/// only rounded to integers at file boundaries and before classification.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Black image.
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        check_layout(width, height, channels)?;
        if !(0.0..=255.0).contains(&value) {
            return Err(Error::Parameter(format!(
                "fill value {value} outside [0, 255]"
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        })
    }

    /// Wraps plane-major sample data, rejecting out-of-range or non-finite values.
    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_layout(width, height, channels)?;
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::Parameter(format!("sample {bad} outside [0, 255]")));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    /// Like [`Image::from_data`] but clamps every sample into range first.
    /// NaN maps to 0.
    pub fn from_data_clamped(
        width: usize,
        height: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 255.0) };
        }
        Self::from_data(width, height, channels, data)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_layout(width, height, channels)?;
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        Self::from_data_clamped(width, height, channels, data)
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

    /// Samples per plane.
    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.plane_len())
    }

    #[inline]
    pub fn get(&self, channel: usize, x: usize, y: usize) -> f64 {
        self.data[channel * self.plane_len() + y * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Rounds every sample to the nearest integer (half away from zero).
    pub fn quantized(&self) -> Image {
        Image {
            data: self.data.iter().map(|v| v.round()).collect(),
            ..self.clone()
        }
    }

    pub fn is_integral(&self) -> bool {
        self.data.iter().all(|v| v.fract() == 0.0)
    }

    /// Builds an image from separate planes of equal size.
    pub fn from_planes(width: usize, height: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
        let channels = planes.len();
        let mut data = Vec::with_capacity(width * height * channels);
        for p in planes {
            if p.len() != width * height {
                return Err(Error::Shape(format!(
                    "plane of {} samples for {width}x{height}",
                    p.len()
                )));
            }
            data.extend(p);
        }
        Self::from_data_clamped(width, height, channels, data)
    }

    /// Top-left `width`x`height` region.
    pub fn crop(&self, width: usize, height: usize) -> Result<Image> {
        if width == 0 || height == 0 || width > self.width || height > self.height {
            return Err(Error::Shape(format!(
                "cannot crop {}x{} to {width}x{height}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * self.channels);
        for plane in self.planes() {
            for row in plane.chunks_exact(self.width).take(height) {
                data.extend_from_slice(&row[..width]);
            }
        }
        Ok(Image {
            width,
            height,
            channels: self.channels,
            data,
        })
    }

    /// Largest absolute per-sample difference.
    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::Shape("images differ in shape".into()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

fn check_layout(width: usize, height: usize, channels: usize) -> Result<()> {
    if channels != 1 && channels != 3 {
        return Err(Error::Channel(format!(
            "{channels} channels (expected 1 or 3)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Shape(format!("empty image {width}x{height}")));
    }
    Ok(())
}

/// An image padded by edge replication, remembering its original size.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded {
    pub image: Image,
    pub width: usize,
    pub height: usize,
}

impl Padded {
    pub fn crop(&self) -> Image {
        self.image
            .crop(self.width, self.height)
            .expect("padded image is at least the original size")
    }
}

/// Rounds width and height up to multiples of `n`, replicating the last
/// row and column.
pub fn pad_to_multiple(img: &Image, n: usize) -> Result<Padded> {
    if n == 0 {
        return Err(Error::Parameter("padding multiple must be >= 1".into()));
    }
    let pw = img.width.div_ceil(n) * n;
    let ph = img.height.div_ceil(n) * n;
    let mut data = Vec::with_capacity(pw * ph * img.channels);
    for plane in img.planes() {
        for y in 0..ph {
            let row = &plane[y.min(img.height - 1) * img.width..][..img.width];
            data.extend_from_slice(row);
            let last = row[img.width - 1];
            data.extend(std::iter::repeat_n(last, pw - img.width));
        }
    }
    Ok(Padded {
        image: Image {
            width: pw,
            height: ph,
            channels: img.channels,
            data,
        },
        width: img.width,
        height: img.height,
    })
}
