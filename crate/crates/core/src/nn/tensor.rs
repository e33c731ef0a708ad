//! Dense row-major tensors of rank 1 or 2.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Storage is shared copy-on-write, so cloning a tensor (every parameter leaf
/// of every forward pass) costs a reference count until someone writes to it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 || shape.iter().any(|&e| e == 0) {
            return Err(Error::dim(
                "tensor",
                format!("unsupported shape {shape:?} (rank 1 or 2, positive extents)"),
            ));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data: Arc::new(data) })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; n]),
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; n]),
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data: Arc::new(data),
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn scalar(value: f64) -> Self {
        Self::vector(vec![value])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data_mut()[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dim("tensor", "ragged rows"));
        }
        Self::new(vec![r, c], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Rows when viewed as a matrix (a vector is a single row).
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_data(self) -> Vec<f64> {
        Arc::unwrap_or_clone(self.data)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::dim(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&x| f(x)).collect()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self {
            shape: vec![c, r],
            data: Arc::new(out),
        }
    }

    /// Matrix made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let c = self.cols();
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= self.rows() {
                return Err(Error::dim("select_rows", format!("row {r} of {}", self.rows())));
            }
            data.extend_from_slice(self.row(r));
        }
        Self::matrix(rows.len(), c, data)
    }

    /// Column `j` as a `[rows, 1]` matrix.
    pub fn column(&self, j: usize) -> Result<Self> {
        if j >= self.cols() {
            return Err(Error::dim("column", format!("column {j} of {}", self.cols())));
        }
        Self::matrix(self.rows(), 1, (0..self.rows()).map(|r| self.get(r, j)).collect())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in Arc::make_mut(&mut self.data).iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers; `ta`/`tb`
/// read the operand as its transpose through strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m <= SMALL_ROWS {
        return gemm_small(m, k, n, a, ta, b, tb, c, beta);
    }
    // a is stored m×k (or k×m when transposed); likewise b.
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Below this many output rows packing costs more than it saves.
const SMALL_ROWS: usize = 8;

#[allow(clippy::too_many_arguments)]
fn gemm_small(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    let transposed;
    let a: &[f64] = if ta {
        transposed = (0..m * k).map(|idx| a[(idx % k) * m + idx / k]).collect::<Vec<_>>();
        &transposed
    } else {
        a
    };
    if beta == 0.0 {
        c.fill(0.0);
    } else if beta != 1.0 {
        c.iter_mut().for_each(|v| *v *= beta);
    }
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // Same code with wider vectors; no contraction, so results are identical.
        unsafe { small_kernel_avx2(m, k, n, a, b, tb, c) };
        return;
    }
    small_kernel(m, k, n, a, b, tb, c);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn small_kernel_avx2(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], tb: bool, c: &mut [f64]) {
    small_kernel(m, k, n, a, b, tb, c)
}

#[inline(always)]
fn small_kernel(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], tb: bool, c: &mut [f64]) {
    if tb {
        // each row of b is read once and reused for all m rows of a
        for (j, bj) in b.chunks_exact(k).enumerate() {
            for i in 0..m {
                c[i * n + j] += dot(&a[i * k..(i + 1) * k], bj);
            }
        }
    } else {
        for i in 0..m {
            let row = &mut c[i * n..(i + 1) * n];
            for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
                for (out, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                    *out += aip * bv;
                }
            }
        }
    }
}

/// Dot product with eight independent partial sums.
#[inline(always)]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (xc, yc) = (x.chunks_exact(8), y.chunks_exact(8));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] += a[l] * b[l];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}
