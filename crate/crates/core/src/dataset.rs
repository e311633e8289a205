//! Labelled image sets, their on-disk layout, and the two synthetic
//! corpora the experiments run on.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imagecore::{read_labels, read_pnm, write_labels, write_pnm, Image};

pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// File name per image, used when writing and in manifests.
    pub names: Vec<String>,
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let ext = match images.first().map(Image::channels) {
            Some(3) => "ppm",
            _ => "pgm",
        };
        let names = (0..images.len()).map(|i| format!("{i:05}.{ext}")).collect();
        Self::with_names(images, labels, classes, names)
    }

    pub fn with_names(
        images: Vec<Image>,
        labels: Vec<usize>,
        classes: usize,
        names: Vec<String>,
    ) -> Result<Self> {
        if images.len() != labels.len() || images.len() != names.len() {
            return Err(Error::Shape(format!(
                "{} images, {} labels, {} names",
                images.len(),
                labels.len(),
                names.len()
            )));
        }
        if classes < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Parameter(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if let Some(first) = images.first() {
            if let Some(odd) = images.iter().find(|i| !i.same_shape(first)) {
                return Err(Error::Shape(format!(
                    "mixed image shapes: {}x{}x{} and {}x{}x{}",
                    first.width(),
                    first.height(),
                    first.channels(),
                    odd.width(),
                    odd.height(),
                    odd.channels()
                )));
            }
        }
        Ok(Dataset {
            images,
            labels,
            classes,
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Reads `labels.csv` and the images it names. The class count is one
    /// more than the largest label (at least 2).
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let rows = read_labels(dir.join(LABELS_FILE))?;
        let classes = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0).max(2);
        let mut images = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        let mut names = Vec::with_capacity(rows.len());
        for (name, label) in rows {
            images.push(read_pnm(dir.join(&name))?);
            labels.push(label);
            names.push(name);
        }
        Self::with_names(images, labels, classes, names)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (img, name) in self.images.iter().zip(&self.names) {
            write_pnm(dir.join(name), img)?;
        }
        let rows: Vec<(String, usize)> = self
            .names
            .iter()
            .cloned()
            .zip(self.labels.clone())
            .collect();
        write_labels(dir.join(LABELS_FILE), &rows)
    }

    /// SHA-256 over shapes, labels and 8-bit samples.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.classes as u64).to_le_bytes());
        for (img, label) in self.images.iter().zip(&self.labels) {
            for d in [img.width(), img.height(), img.channels(), *label] {
                h.update((d as u64).to_le_bytes());
            }
            let bytes: Vec<u8> = img.data().iter().map(|v| v.round() as u8).collect();
            h.update(&bytes);
        }
        hex::encode(h.finalize())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::with_names(
            indices.iter().map(|&i| self.images[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.classes,
            indices.iter().map(|&i| self.names[i].clone()).collect(),
        )
    }
}

pub const DESK_CLASSES: usize = 10;
pub const DESK_SIZE: usize = 32;

/// Class names of the desk dataset, by label.
pub const DESK_CLASS_NAMES: [&str; DESK_CLASSES] = [
    "horizontal",
    "vertical",
    "diagonal",
    "antidiagonal",
    "disc",
    "ring",
    "square",
    "cross",
    "checker",
    "triangle",
];

/// Balanced 32x32 grayscale shapes, `per_class` images of each class,
/// interleaved by class. Each image draws its pose and contrast from a
/// stream seeded by `(seed, index)`.
pub fn desk_dataset(seed: u64, per_class: usize) -> Dataset {
    let n = per_class * DESK_CLASSES;
    let images: Vec<Image> = (0..n)
        .map(|i| desk_image(seed, i as u64, i % DESK_CLASSES))
        .collect();
    let labels = (0..n).map(|i| i % DESK_CLASSES).collect();
    Dataset::new(images, labels, DESK_CLASSES).expect("generated dataset is consistent")
}

fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn desk_image(seed: u64, index: u64, class: usize) -> Image {
    let mut rng = item_rng(seed, index);
    let s = DESK_SIZE as f64;
    let cx = s / 2.0 + rng.random_range(-4.0..4.0);
    let cy = s / 2.0 + rng.random_range(-4.0..4.0);
    let r = rng.random_range(7.0..11.0);
    let period = rng.random_range(7.0..11.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let width = rng.random_range(2.5..4.0);
    let background = rng.random_range(40.0..110.0);
    let contrast = rng.random_range(90.0..140.0) * if rng.random_bool(0.5) { 1.0 } else { -0.6 };
    let noise = Normal::new(0.0, 6.0).unwrap();
    let wave = |t: f64| 0.5 + 0.5 * (std::f64::consts::TAU * t / period + phase).sin();
    let shape = |x: f64, y: f64| -> f64 {
        let (dx, dy) = (x - cx, y - cy);
        let d = dx.hypot(dy);
        match class {
            0 => wave(y),
            1 => wave(x),
            2 => wave((x + y) / std::f64::consts::SQRT_2),
            3 => wave((x - y) / std::f64::consts::SQRT_2),
            4 => f64::from(d <= r),
            5 => f64::from((d - r).abs() <= width / 2.0 + 0.5),
            6 => {
                let m = dx.abs().max(dy.abs());
                f64::from((m - r).abs() <= width / 2.0 + 0.5)
            }
            7 => f64::from(
                (dx.abs() <= width && dy.abs() <= r) || (dy.abs() <= width && dx.abs() <= r),
            ),
            8 => {
                let cell = period.round();
                f64::from((((x / cell).floor() + (y / cell).floor()) as i64).rem_euclid(2) == 0)
            }
            _ => f64::from(dy <= r * 0.8 && dy >= -r && dx.abs() <= (dy + r) * 0.6),
        }
    };
    let mut out = vec![0.0; DESK_SIZE * DESK_SIZE];
    for y in 0..DESK_SIZE {
        for x in 0..DESK_SIZE {
            let v = background
                + contrast * shape(x as f64 + 0.5, y as f64 + 0.5)
                + noise.sample(&mut rng);
            out[y * DESK_SIZE + x] = v.round().clamp(0.0, 255.0);
        }
    }
    Image::from_data(DESK_SIZE, DESK_SIZE, 1, out).expect("values clamped")
}

/// Natural-looking test images: multi-octave value noise with a 1/f-like
/// spectrum, a few hard-edged shapes, and film grain. Every fifth image is
/// color, so the corpus is a plain list rather than a [`Dataset`].
pub fn natural_corpus(seed: u64, count: usize, size: usize) -> Vec<Image> {
    (0..count)
        .map(|i| natural_image(seed, i as u64, size, if i % 5 == 4 { 3 } else { 1 }))
        .collect()
}

/// One natural-looking image of side `size` with 1 or 3 channels.
pub fn natural_image(seed: u64, index: u64, size: usize, channels: usize) -> Image {
    let mut rng = item_rng(seed ^ 0x6e61_7475_7261_6c00, index);
    let base: Vec<f64> = value_noise(&mut rng, size);
    let tints: Vec<(f64, f64)> = (0..channels)
        .map(|_| (rng.random_range(0.7..1.3), rng.random_range(-25.0..25.0)))
        .collect();
    let mut planes: Vec<Vec<f64>> = tints
        .iter()
        .map(|(gain, off)| base.iter().map(|v| 128.0 + off + gain * v).collect())
        .collect();
    for _ in 0..rng.random_range(10..25) {
        let (cx, cy) = (
            rng.random_range(0.0..size as f64),
            rng.random_range(0.0..size as f64),
        );
        let (rx, ry) = (
            rng.random_range(0.05..0.25) * size as f64,
            rng.random_range(0.05..0.25) * size as f64,
        );
        let ellipse = rng.random_bool(0.5);
        let level: Vec<f64> = (0..channels)
            .map(|_| rng.random_range(20.0..235.0))
            .collect();
        let alpha = rng.random_range(0.5..0.9);
        let texture = rng.random_range(0.0..0.6);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                let inside = if ellipse {
                    dx * dx + dy * dy <= 1.0
                } else {
                    dx.abs() <= 1.0 && dy.abs() <= 1.0
                };
                if inside {
                    for (p, l) in planes.iter_mut().zip(&level) {
                        let v = &mut p[y * size + x];
                        *v = (1.0 - alpha) * *v + alpha * (l + texture * (*v - 128.0));
                    }
                }
            }
        }
    }
    let grain = Normal::new(0.0, rng.random_range(2.0..5.0)).unwrap();
    for p in &mut planes {
        for v in p.iter_mut() {
            *v = (*v + grain.sample(&mut rng)).round().clamp(0.0, 255.0);
        }
    }
    Image::from_planes(size, size, planes).expect("planes match size")
}

/// Sum of bilinearly interpolated random lattices from 4 cells up to pixel
/// scale, amplitude halving per octave.
fn value_noise(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let mut out = vec![0.0; size * size];
    let mut cells = 4usize;
    let mut amp = 50.0;
    while cells <= size {
        let n = cells + 1;
        let lattice: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scale = cells as f64 / size as f64;
        for y in 0..size {
            let fy = y as f64 * scale;
            let (y0, ty) = (fy.floor() as usize, fy.fract());
            for x in 0..size {
                let fx = x as f64 * scale;
                let (x0, tx) = (fx.floor() as usize, fx.fract());
                let at = |i: usize, j: usize| lattice[j.min(cells) * n + i.min(cells)];
                let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
                let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
                out[y * size + x] += amp * (top * (1.0 - ty) + bottom * ty);
            }
        }
        cells *= 2;
        amp *= 0.75;
    }
    out
}
