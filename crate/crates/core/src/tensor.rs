//! Dense complex tensors and the multilinear algebra used throughout the
//! estimator: Khatri-Rao and Kronecker products, mode-n unfolding, CP
//! (sum-of-rank-one) reconstruction and vectorization.
//!
//! Storage is a flat buffer with the FIRST index fastest, so a matrix
//! (order-2 tensor) is column-major and `vec` of a matrix is plain
//! column stacking. This order is fixed globally and all unfoldings are
//! defined against it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Dense complex multiway array.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::EmptyDimension { shape });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeDataMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::EmptyDimension { shape });
        }
        let len: usize = shape.iter().product();
        Ok(Self {
            shape,
            data: vec![C64::new(0.0, 0.0); len],
        })
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> C64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        let order = t.order();
        let mut idx = vec![0usize; order];
        for lin in 0..t.data.len() {
            t.data[lin] = f(&idx);
            // odometer increment, first index fastest
            for d in 0..order {
                idx[d] += 1;
                if idx[d] < t.shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order());
        let mut lin = 0;
        let mut stride = 1;
        for (d, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[d]);
            lin += i * stride;
            stride *= self.shape[d];
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: C64) {
        let lin = self.linear_index(idx);
        self.data[lin] = value;
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Mode-n unfolding (n is 1-based). The result has one column per index
    /// of mode n; rows run over the remaining modes with the lowest-numbered
    /// mode fastest, matching the Khatri-Rao factor ordering
    /// A(N) ⊙ … ⊙ A(n+1) ⊙ A(n-1) ⊙ … ⊙ A(1).
    pub fn mode_n_unfold(&self, n: usize) -> Result<CMat> {
        let order = self.order();
        if n == 0 || n > order {
            return Err(Error::ModeOutOfRange { mode: n, order });
        }
        let mode = n - 1;
        let cols = self.shape[mode];
        let rows = self.len() / cols;
        let mut out = CMat::zeros(rows, cols);

        let mut idx = vec![0usize; order];
        for &z in &self.data {
            let mut row = 0;
            let mut stride = 1;
            for d in 0..order {
                if d == mode {
                    continue;
                }
                row += idx[d] * stride;
                stride *= self.shape[d];
            }
            out[(row, idx[mode])] = z;
            for d in 0..order {
                idx[d] += 1;
                if idx[d] < self.shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(out)
    }

    /// Inverse of [`mode_n_unfold`]: rebuild a tensor of `shape` from its
    /// mode-n unfolding.
    pub fn from_mode_n_unfolding(mat: &CMat, shape: Vec<usize>, n: usize) -> Result<Self> {
        let order = shape.len();
        if n == 0 || n > order {
            return Err(Error::ModeOutOfRange { mode: n, order });
        }
        let mode = n - 1;
        let total: usize = shape.iter().product();
        if mat.ncols() != shape[mode] || mat.nrows() * mat.ncols() != total {
            return Err(Error::DimensionMismatch(format!(
                "unfolding {}x{} does not match shape {:?} at mode {}",
                mat.nrows(),
                mat.ncols(),
                shape,
                n
            )));
        }
        let mut t = Self::zeros(shape)?;
        let mut idx = vec![0usize; order];
        for lin in 0..total {
            let mut row = 0;
            let mut stride = 1;
            for d in 0..order {
                if d == mode {
                    continue;
                }
                row += idx[d] * stride;
                stride *= t.shape[d];
            }
            t.data[lin] = mat[(row, idx[mode])];
            for d in 0..order {
                idx[d] += 1;
                if idx[d] < t.shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(t)
    }
}

/// Relative Frobenius distance ‖a − b‖ / max(‖b‖, ε), for test assertions.
pub fn rel_frobenius_distance(a: &DenseTensor, b: &DenseTensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in tensor comparison");
    let num: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    num / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

/// Kronecker product of two column vectors; the second factor varies fastest.
pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    let mut out = CVec::zeros(a.len() * b.len());
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

/// Khatri-Rao (column-wise Kronecker) product. Column r of the result is
/// the Kronecker product of column r of `a` with column r of `b`.
pub fn khatri_rao(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.ncols() != b.ncols() {
        return Err(Error::ColumnCountMismatch {
            left: a.ncols(),
            right: b.ncols(),
        });
    }
    let (ia, jb, r) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = CMat::zeros(ia * jb, r);
    for c in 0..r {
        for i in 0..ia {
            let av = a[(i, c)];
            for j in 0..jb {
                out[(i * jb + j, c)] = av * b[(j, c)];
            }
        }
    }
    Ok(out)
}

/// CP model: an ordered list of factor matrices sharing one column count.
#[derive(Debug, Clone)]
pub struct CpModel {
    factors: Vec<CMat>,
}

impl CpModel {
    pub fn new(factors: Vec<CMat>) -> Result<Self> {
        if factors.len() < 3 {
            return Err(Error::WrongOrder {
                expected: 3,
                got: factors.len(),
            });
        }
        let r = factors[0].ncols();
        for f in &factors {
            if f.ncols() != r {
                return Err(Error::ColumnCountMismatch {
                    left: r,
                    right: f.ncols(),
                });
            }
            if f.nrows() == 0 || r == 0 {
                return Err(Error::EmptyDimension {
                    shape: vec![f.nrows(), r],
                });
            }
        }
        Ok(Self { factors })
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    pub fn factors(&self) -> &[CMat] {
        &self.factors
    }

    pub fn factor(&self, n: usize) -> &CMat {
        &self.factors[n]
    }
}

/// Materialize the CP model as a dense tensor:
/// entry (i1,…,iN) = Σ_r Π_n A(n)[i_n, r].
pub fn cp_reconstruct(model: &CpModel) -> DenseTensor {
    let shape = model.shape();
    let order = model.order();
    let rank = model.rank();
    let total: usize = shape.iter().product();
    let mut data = vec![C64::new(0.0, 0.0); total];
    let mut idx = vec![0usize; order];
    for entry in data.iter_mut() {
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..rank {
            let mut prod = C64::new(1.0, 0.0);
            for (n, f) in model.factors.iter().enumerate() {
                prod *= f[(idx[n], r)];
            }
            acc += prod;
        }
        *entry = acc;
        for d in 0..order {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    DenseTensor { shape, data }
}

/// Vectorized mode-1 unfolding of an order-4 model with factors A, B, C, D:
/// Σ_l a_l ⊗ d_l ⊗ c_l ⊗ b_l.
pub fn vectorize_mode1(model: &CpModel) -> Result<CVec> {
    if model.order() != 4 {
        return Err(Error::WrongOrder {
            expected: 4,
            got: model.order(),
        });
    }
    let (a, b, c, d) = (
        model.factor(0),
        model.factor(1),
        model.factor(2),
        model.factor(3),
    );
    let len = a.nrows() * b.nrows() * c.nrows() * d.nrows();
    let mut z = CVec::zeros(len);
    for l in 0..model.rank() {
        let al: CVec = a.column(l).into();
        let bl: CVec = b.column(l).into();
        let cl: CVec = c.column(l).into();
        let dl: CVec = d.column(l).into();
        z += kron_vec(&kron_vec(&kron_vec(&al, &dl), &cl), &bl);
    }
    Ok(z)
}
