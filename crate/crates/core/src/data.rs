//! Labeled image datasets and a synthetic generator for desk-scale runs.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{arg_err, Result};

/// Images stored contiguously as `(channels, height, width)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    channels: usize,
    height: usize,
    width: usize,
    classes: usize,
    images: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        classes: usize,
        images: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let per = channels * height * width;
        if per == 0 {
            return Err(arg_err!("image extents must be positive"));
        }
        if images.len() != per * labels.len() {
            return Err(arg_err!(
                "{} labels need {} pixel values, got {}",
                labels.len(),
                per * labels.len(),
                images.len()
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(arg_err!("label {bad} out of range for {classes} classes"));
        }
        Ok(Self {
            channels,
            height,
            width,
            classes,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn images(&self) -> &[f64] {
        &self.images
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Dataset {
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..*self
        }
    }
}

/// Shape of the synthetic blob task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobParams {
    pub classes: usize,
    pub per_class: usize,
    pub image_size: usize,
    pub channels: usize,
    /// Expected distance between class centroids, in units of `noise`.
    pub separation: f64,
    /// Per-pixel Gaussian noise standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl BlobParams {
    pub fn new(classes: usize, per_class: usize, image_size: usize, seed: u64) -> Self {
        Self {
            classes,
            per_class,
            image_size,
            channels: 1,
            separation: 3.0,
            noise: 1.0,
            seed,
        }
    }
}

pub fn synth_blobs(classes: usize, per_class: usize, image_size: usize, seed: u64) -> Result<Dataset> {
    synth_blobs_with(&BlobParams::new(classes, per_class, image_size, seed))
}

/// Gaussian clouds around random centroid images. Sample `i` belongs to
/// class `i % classes`, so every prefix is close to class-balanced.
pub fn synth_blobs_with(p: &BlobParams) -> Result<Dataset> {
    if p.classes < 2 {
        return Err(arg_err!("need at least 2 classes, got {}", p.classes));
    }
    let dim = p.channels * p.image_size * p.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    // independent random directions sit ~sqrt(2) * radius apart
    let radius = p.separation * p.noise / core::f64::consts::SQRT_2;
    let centroids: Vec<Vec<f64>> = (0..p.classes)
        .map(|_| {
            let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = libm::sqrt(z.iter().map(|v| v * v).sum::<f64>());
            z.into_iter().map(|v| v * radius / norm).collect()
        })
        .collect();
    let total = p.classes * p.per_class;
    let mut images = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let class = i % p.classes;
        for &c in &centroids[class] {
            let e: f64 = StandardNormal.sample(&mut rng);
            images.push(c + p.noise * e);
        }
        labels.push(class);
    }
    Dataset::new(p.channels, p.image_size, p.image_size, p.classes, images, labels)
}

/// Class centroids estimated from the data; used to build a nearest-centroid
/// linear separator.
pub fn class_means(data: &Dataset) -> Vec<Vec<f64>> {
    let n = data.sample_len();
    let mut sums = alloc::vec![alloc::vec![0.0; n]; data.classes()];
    let mut counts = alloc::vec![0usize; data.classes()];
    for i in 0..data.len() {
        let l = data.label(i);
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(data.image(i)) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}
