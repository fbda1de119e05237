//! Dense row-major f64 arrays, the value type carried on the tape.

use crate::error::{Error, Result};
use rand::Rng;

/// N-dimensional array of `f64`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![n],
                got: vec![data.len()],
                context: "Array::new data length vs shape product",
            });
        }
        Ok(Array { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Array {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Array {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Array {
            shape: vec![],
            data: vec![value],
        }
    }

    /// Uniform random entries in `[-half_width, half_width]`.
    pub fn uniform<R: Rng>(shape: Vec<usize>, half_width: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| rng.gen_range(-half_width..=half_width))
            .collect();
        Array { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows and columns of a 2-D array.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::ShapeMismatch {
                expected: vec![2],
                got: s.to_vec(),
                context: "expected rank-2 array",
            }),
        }
    }

    /// Channels, height, width of a 3-D array.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            s => Err(Error::ShapeMismatch {
                expected: vec![3],
                got: s.to_vec(),
                context: "expected rank-3 array",
            }),
        }
    }

    pub fn same_shape(&self, other: &Array) -> bool {
        self.shape == other.shape
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Array {
        Array {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// In-place `self += other` (same shape required).
    pub fn accumulate(&mut self, other: &Array) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// C = A(m×k) · B(k×n), ikj order over contiguous rows.
pub fn matmul(a: &Array, b: &Array) -> Result<Array> {
    let (m, k) = a.dims2()?;
    let (kb, n) = b.dims2()?;
    if k != kb {
        return Err(Error::ShapeMismatch {
            expected: vec![m, k],
            got: vec![kb, n],
            context: "matmul inner dimensions",
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Array::new(vec![m, n], out)
}

/// C = Aᵀ(k×m becomes m-rows view) · B — computes `a.transpose() * b` without materializing the transpose.
pub fn matmul_tn(a: &Array, b: &Array) -> Result<Array> {
    let (k, m) = a.dims2()?;
    let (kb, n) = b.dims2()?;
    if k != kb {
        return Err(Error::ShapeMismatch {
            expected: vec![k, m],
            got: vec![kb, n],
            context: "matmul_tn inner dimensions",
        });
    }
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a.data[p * m..(p + 1) * m];
        let brow = &b.data[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Array::new(vec![m, n], out)
}

/// C = A(m×k) · Bᵀ(n×k) — computes `a * b.transpose()` without materializing the transpose.
pub fn matmul_nt(a: &Array, b: &Array) -> Result<Array> {
    let (m, k) = a.dims2()?;
    let (n, kb) = b.dims2()?;
    if k != kb {
        return Err(Error::ShapeMismatch {
            expected: vec![m, k],
            got: vec![n, kb],
            context: "matmul_nt inner dimensions",
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
    Array::new(vec![m, n], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Array::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn matmul_small() {
        let a = Array::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Array::new(vec![3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn transposed_variants_agree_with_plain() {
        let a = Array::new(vec![3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Array::new(vec![3, 4], (0..12).map(|i| i as f64).collect()).unwrap();
        // aᵀ b via matmul_tn vs explicit transpose
        let at = Array::new(vec![2, 3], vec![1., 3., 5., 2., 4., 6.]).unwrap();
        assert_eq!(matmul_tn(&a, &b).unwrap(), matmul(&at, &b).unwrap());

        // at (2×3) · cᵀ where c is 4×3
        let c = Array::new(vec![4, 3], (0..12).map(|i| i as f64).collect()).unwrap();
        let ct = Array::new(
            vec![3, 4],
            vec![0., 3., 6., 9., 1., 4., 7., 10., 2., 5., 8., 11.],
        )
        .unwrap();
        assert_eq!(matmul_nt(&at, &c).unwrap(), matmul(&at, &ct).unwrap());
    }
}
