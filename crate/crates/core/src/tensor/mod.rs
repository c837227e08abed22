//! Dense row-major `f64` tensors and a reverse-mode autodiff tape.
//!
//! `Tensor` is an immutable value: data lives behind an `Arc` so parameters
//! can be shared read-only across worker tapes. Gradients are computed by
//! recording ops on a [`Tape`] and calling [`Tape::backward`] on a scalar.

mod linalg;
mod tape;

pub use tape::{Mode, Tape, Tid};

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

/// Dense multi-dimensional array of `f64`, row-major.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    pub requires_grad: bool,
    /// Populated from a tape after `backward` via [`Tape::write_grad`].
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if numel_of(&shape) != data.len() {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match shape {:?} (= {} elements)",
                data.len(),
                shape,
                numel_of(&shape)
            )));
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            data: Arc::new(vec![0.0; numel_of(shape)]),
            shape: shape.to_vec(),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            data: Arc::new(vec![value; numel_of(shape)]),
            shape: shape.to_vec(),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: Arc::new(vec![value]),
            requires_grad: false,
            grad: None,
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = numel_of(shape);
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new((0..n).map(|i| f(i)).collect()),
            requires_grad: false,
            grad: None,
        }
    }

    /// i.i.d. uniform entries in `[lo, hi)`.
    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
    }

    /// Fan-in scaled init: uniform in [-1/sqrt(d), 1/sqrt(d)].
    pub fn rand_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        Tensor::rand_uniform(shape, -bound, bound, rng)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable view of the data; clones the buffer if it is shared.
    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element at a full multi-index. Panics on rank/bounds mismatch.
    pub fn at(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let strides = strides_of(&self.shape);
        let off: usize = index
            .iter()
            .zip(&strides)
            .map(|(i, s)| {
                assert!(*i < usize::MAX);
                i * s
            })
            .sum();
        self.data[off]
    }

    pub(crate) fn shared_data(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.data)
    }

    pub(crate) fn from_shared(shape: Vec<usize>, data: Arc<Vec<f64>>) -> Self {
        debug_assert_eq!(numel_of(&shape), data.len());
        Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    /// Pad the trailing axis from `t` to `t_total` by repeating the last slot.
    pub fn pad_repeat_last(&self, t_total: usize) -> Result<Tensor> {
        let t = *self
            .shape
            .last()
            .ok_or_else(|| Error::invalid("pad_repeat_last needs rank >= 1"))?;
        if t == 0 || t > t_total {
            return Err(Error::invalid(format!(
                "pad_repeat_last: cannot pad trailing extent {t} to {t_total}"
            )));
        }
        let rows = self.numel() / t;
        let mut out = vec![0.0; rows * t_total];
        for r in 0..rows {
            let src = &self.data[r * t..(r + 1) * t];
            let dst = &mut out[r * t_total..(r + 1) * t_total];
            dst[..t].copy_from_slice(src);
            for slot in t..t_total {
                dst[slot] = src[t - 1];
            }
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = t_total;
        Tensor::new(shape, out)
    }
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_length_mismatch() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn scalar_has_empty_shape_and_one_element() {
        let s = Tensor::scalar(4.25);
        assert!(s.shape().is_empty());
        assert_eq!(s.numel(), 1);
        assert_eq!(s.data()[0], 4.25);
    }

    #[test]
    fn pad_repeat_last_identity_when_full() {
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = x.pad_repeat_last(3).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn pad_repeat_last_repeats_final_slot() {
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = x.pad_repeat_last(5).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn pad_repeat_last_rejects_shrink_and_empty() {
        let x = Tensor::new(vec![4], vec![0.0; 4]).unwrap();
        assert!(x.pad_repeat_last(3).is_err());
        let empty = Tensor::new(vec![2, 0], vec![]).unwrap();
        assert!(empty.pad_repeat_last(4).is_err());
    }

    #[test]
    fn at_indexes_row_major() {
        let x = Tensor::from_fn(&[2, 3, 4], |i| i as f64);
        assert_eq!(x.at(&[0, 0, 0]), 0.0);
        assert_eq!(x.at(&[1, 2, 3]), 23.0);
        assert_eq!(x.at(&[1, 0, 2]), 14.0);
    }
}
