//! Orthonormal DCT-II matrices applied along the temporal (trailing) axis.
//!
//! The transform is a right-multiplication: for a trajectory x of length T,
//! coefficient k is sum_j x[j] * c_k * cos(pi*(2j+1)*k / (2T)) with
//! c_0 = sqrt(1/T) and c_k = sqrt(2/T) otherwise. The inverse matrix is the
//! transpose, so encode/decode round-trips are exact up to rounding.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Tid};

/// A T x T forward/inverse transform pair over the time axis.
#[derive(Debug, Clone)]
pub struct DctPair {
    m_dct: Tensor,
    m_idct: Tensor,
    size: usize,
}

/// Build the orthonormal DCT-II pair for sequences of length `t`.
pub fn make_dct_pair(t: usize) -> Result<DctPair> {
    if t == 0 {
        return Err(Error::invalid("make_dct_pair: size must be >= 1"));
    }
    let tf = t as f64;
    // m_dct[j][k]: time index j (row) to frequency k (column), so that
    // x . m_dct yields DCT coefficients.
    let mut fwd = vec![0.0; t * t];
    for j in 0..t {
        for k in 0..t {
            let c = if k == 0 {
                (1.0 / tf).sqrt()
            } else {
                (2.0 / tf).sqrt()
            };
            fwd[j * t + k] = c * (PI * (2 * j + 1) as f64 * k as f64 / (2.0 * tf)).cos();
        }
    }
    let mut inv = vec![0.0; t * t];
    for j in 0..t {
        for k in 0..t {
            inv[k * t + j] = fwd[j * t + k];
        }
    }
    Ok(DctPair {
        m_dct: Tensor::new(vec![t, t], fwd)?,
        m_idct: Tensor::new(vec![t, t], inv)?,
        size: t,
    })
}

impl DctPair {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn matrix(&self) -> &Tensor {
        &self.m_dct
    }

    pub fn inverse_matrix(&self) -> &Tensor {
        &self.m_idct
    }

    fn check_extent(&self, trailing: Option<&usize>, op: &str) -> Result<()> {
        match trailing {
            Some(&t) if t == self.size => Ok(()),
            other => Err(Error::invalid(format!(
                "{op}: trailing extent {other:?} does not match transform size {}",
                self.size
            ))),
        }
    }

    /// Transform the trailing axis of a value tensor to DCT coefficients.
    pub fn dct_time(&self, x: &Tensor) -> Result<Tensor> {
        self.check_extent(x.shape().last(), "dct_time")?;
        right_multiply(x, &self.m_dct)
    }

    /// Inverse-transform the trailing axis back to the time domain.
    pub fn idct_time(&self, y: &Tensor) -> Result<Tensor> {
        self.check_extent(y.shape().last(), "idct_time")?;
        right_multiply(y, &self.m_idct)
    }

    /// Tape variants: record the transform so gradients flow through it.
    pub fn dct_time_on(&self, tape: &mut Tape, x: Tid) -> Result<Tid> {
        self.check_extent(tape.shape(x).last(), "dct_time")?;
        let m = tape.constant(&self.m_dct);
        tape.matmul(x, m)
    }

    pub fn idct_time_on(&self, tape: &mut Tape, y: Tid) -> Result<Tid> {
        self.check_extent(tape.shape(y).last(), "idct_time")?;
        let m = tape.constant(&self.m_idct);
        tape.matmul(y, m)
    }
}

fn right_multiply(x: &Tensor, m: &Tensor) -> Result<Tensor> {
    // rank-1 sequences are a single row
    let rank1 = x.ndim() == 1;
    let mut tape = Tape::new();
    let mut xi = tape.constant(x);
    if rank1 {
        xi = tape.reshape(xi, &[1, x.numel()])?;
    }
    let mi = tape.constant(m);
    let mut out = tape.matmul(xi, mi)?;
    if rank1 {
        out = tape.reshape(out, &[x.numel()])?;
    }
    Ok(tape.tensor(out))
}
