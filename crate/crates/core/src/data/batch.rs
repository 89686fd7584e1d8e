//! In-memory image sets and seeded mini-batching.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::image::load_image;
use super::manifest::SampleRecord;
use super::substream;
use crate::error::{Error, Result};
use crate::labels::Label;
use crate::tensor::Tensor;

/// Record order for one epoch: a pure function of `(n, seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, 0x1_0000 + epoch as u64));
    order
}

/// Index batches covering every record once; the last batch may be short.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    Ok(epoch_order(n, seed, epoch)
        .chunks(batch_size)
        .map(|c| c.to_vec())
        .collect())
}

/// Decoded images of one shape with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    /// `(H, W, C)` of each image.
    pub shape: [usize; 3],
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn new(shape: [usize; 3], data: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if data.len() != labels.len() * shape.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "{} values for {} images of shape {shape:?}",
                data.len(),
                labels.len()
            )));
        }
        Ok(ImageSet { shape, data, labels })
    }

    /// Decodes and resizes `records` (in order) using up to `workers` threads.
    /// `label_of` maps a class to its training index; records mapped to
    /// `None` are skipped.
    pub fn load(
        records: &[SampleRecord],
        size: (usize, usize),
        workers: usize,
        label_of: impl Fn(Label) -> Option<usize> + Sync,
    ) -> Result<Self> {
        let kept: Vec<(&Path, usize)> = records
            .iter()
            .filter_map(|r| label_of(r.label).map(|l| (r.path.as_path(), l)))
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Data(format!("cannot start worker pool: {e}")))?;
        let images: Vec<Tensor<f32>> =
            pool.install(|| kept.par_iter().map(|(p, _)| load_image(p, size)).collect::<Result<_>>())?;
        let mut data = Vec::with_capacity(images.len() * size.0 * size.1 * 3);
        for img in images {
            data.extend_from_slice(img.data());
        }
        ImageSet::new([size.0, size.1, 3], data, kept.iter().map(|k| k.1).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn image_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let k = self.image_len();
        &self.data[i * k..(i + 1) * k]
    }

    /// `(B, H, W, C)` tensor and labels for the given indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, Vec<usize>)> {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let [h, w, c] = self.shape;
        let t = Tensor::new(vec![indices.len(), h, w, c], data)?;
        Ok((t, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    pub fn subset(&self, indices: &[usize]) -> ImageSet {
        let mut data = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        ImageSet {
            shape: self.shape,
            data,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keeps the images whose label maps to `Some`, relabelled.
    pub fn remap(&self, f: impl Fn(usize) -> Option<usize>) -> ImageSet {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| f(self.labels[i]).is_some()).collect();
        let mut s = self.subset(&keep);
        for l in &mut s.labels {
            *l = f(*l).expect("filtered");
        }
        s
    }
}
