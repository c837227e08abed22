//! Scalar matmul kernels shared by the tape's forward and backward passes.
//!
//! Loop orders are chosen so the inner loop runs over contiguous rows.

/// out[m,n] = a[m,k] . b[k,n]
pub(crate) fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (l, &a_il) in a_row.iter().enumerate() {
            if a_il == 0.0 {
                continue;
            }
            let b_row = &b[l * n..(l + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += a_il * bv;
            }
        }
    }
}

/// out[m,n] = a[m,k] . transpose(b[n,k])
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (av, bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
}

/// out[p,q] += transpose(a[i,p]) . b[i,q]  (accumulating)
pub(crate) fn matmul_tn_acc(a: &[f64], b: &[f64], i_dim: usize, p: usize, q: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), i_dim * p);
    debug_assert_eq!(b.len(), i_dim * q);
    debug_assert_eq!(out.len(), p * q);
    for i in 0..i_dim {
        let a_row = &a[i * p..(i + 1) * p];
        let b_row = &b[i * q..(i + 1) * q];
        for (l, &a_il) in a_row.iter().enumerate() {
            if a_il == 0.0 {
                continue;
            }
            let out_row = &mut out[l * q..(l + 1) * q];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += a_il * bv;
            }
        }
    }
}
