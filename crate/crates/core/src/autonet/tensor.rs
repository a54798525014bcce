//! Real-valued 2-D tensors: `channels` rows by `cols` columns.
//!
//! A column is one symbol position; batches are laid out as consecutive
//! blocks of columns, so every position-wise layer is a plain matrix
//! product over the whole batch.

/// Channel-major dense tensor (`data[c * cols + l]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    channels: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(channels: usize, cols: usize) -> Self {
        Self {
            channels,
            cols,
            data: vec![0.0; channels * cols],
        }
    }

    pub fn from_vec(channels: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * cols);
        Self {
            channels,
            cols,
            data,
        }
    }

    pub fn from_fn(channels: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * cols);
        for c in 0..channels {
            for l in 0..cols {
                data.push(f(c, l));
            }
        }
        Self {
            channels,
            cols,
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cols(&self) -> usize {
        self.cols
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
        &mut self.data
    }

    pub fn get(&self, c: usize, l: usize) -> f64 {
        self.data[c * self.cols + l]
    }

    pub fn set(&mut self, c: usize, l: usize, v: f64) {
        self.data[c * self.cols + l] = v;
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.cols..(c + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled_add(&mut self, k: f64, other: &Tensor2) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Column `l` of the tensor as a fresh vector.
    pub fn col(&self, l: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, l)).collect()
    }

    /// Argmax over channels per column; ties break toward the lowest index.
    pub fn argmax_per_col(&self) -> Vec<usize> {
        (0..self.cols)
            .map(|l| {
                let mut best = 0usize;
                let mut bv = self.get(0, l);
                for c in 1..self.channels {
                    let v = self.get(c, l);
                    if v > bv {
                        bv = v;
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// `c = alpha * op(a) * op(b) + beta * c`, with `ta`/`tb` selecting
/// transposition. Dimensions refer to the operated (post-transpose) shapes.
pub fn gemm(ta: bool, tb: bool, alpha: f64, a: &Tensor2, b: &Tensor2, beta: f64, c: &mut Tensor2) {
    let (m, k) = if ta {
        (a.cols, a.channels)
    } else {
        (a.channels, a.cols)
    };
    let (kb, n) = if tb {
        (b.cols, b.channels)
    } else {
        (b.channels, b.cols)
    };
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    assert_eq!((c.channels, c.cols), (m, n), "gemm output shape mismatch");
    let (rsa, csa) = if ta {
        (1isize, a.cols as isize)
    } else {
        (a.cols as isize, 1isize)
    };
    let (rsb, csb) = if tb {
        (1isize, b.cols as isize)
    } else {
        (b.cols as isize, 1isize)
    };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}
