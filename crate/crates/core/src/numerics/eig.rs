//! Hermitian eigendecomposition, matrix square roots, and least squares.
//!
//! Eigendecomposition uses cyclic complex Jacobi rotations. The matrices
//! in this codebase are spatial correlation matrices and small Gram
//! matrices (dimension <= a few hundred), where Jacobi is both accurate and
//! fast enough, and needs no pivoting or balancing machinery.

use num_complex::Complex64;

use super::matrix::ComplexMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum NumericsError {
    /// Input violated the Hermitian-symmetry tolerance; carries the defect.
    NonHermitian(f64),
    /// Least-squares normal equations failed even after ridge regularization.
    RankDeficient,
    NonFinite,
}

impl std::fmt::Display for NumericsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NumericsError::NonHermitian(d) => {
                write!(f, "matrix is not Hermitian (defect {d:.3e})")
            }
            NumericsError::RankDeficient => write!(f, "system is rank deficient"),
            NumericsError::NonFinite => write!(f, "non-finite values encountered"),
        }
    }
}

impl std::error::Error for NumericsError {}

const HERMITIAN_TOL: f64 = 1e-10;

/// Eigendecomposition of a Hermitian matrix: eigenvalues ascending, with
/// the unitary eigenvector matrix `V` such that `A = V diag(w) V^H`.
pub fn hermitian_eig(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), NumericsError> {
    assert!(a.is_square(), "eigendecomposition needs a square matrix");
    let defect = a.hermitian_defect();
    if defect > HERMITIAN_TOL {
        return Err(NumericsError::NonHermitian(defect));
    }
    if !a.all_finite() {
        return Err(NumericsError::NonFinite);
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = ComplexMatrix::identity(n);
    if n > 1 {
        let scale = m.frobenius_norm().max(1e-300);
        let tol = 1e-15 * scale;
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[(p, q)].norm_sqr();
                }
            }
            if off.sqrt() <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    rotate(&mut m, &mut v, p, q);
                }
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m[(i, i)].re, i)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let w: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let vec = ComplexMatrix::from_fn(n, n, |r, c| v[(r, pairs[c].1)]);
    Ok((w, vec))
}

/// One complex Jacobi rotation annihilating `m[p,q]`.
fn rotate(m: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let g = m[(p, q)];
    let absg = g.norm();
    if absg < 1e-300 {
        m[(p, q)] = Complex64::new(0.0, 0.0);
        m[(q, p)] = Complex64::new(0.0, 0.0);
        return;
    }
    let phase = g / absg;
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    let tau = (aqq - app) / (2.0 * absg);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    // Unitary U = [[c, s*phase], [-s*conj(phase)... ]] folded into row and
    // column updates: rows first (U^H A), then columns (A U), then V U.
    let n = m.rows();
    let sp = Complex64::new(s, 0.0) * phase;
    for j in 0..n {
        let mp = m[(p, j)];
        let mq = m[(q, j)];
        m[(p, j)] = mp * c - sp * mq;
        m[(q, j)] = mp * sp.conj() + mq * c;
    }
    for i in 0..n {
        let mp = m[(i, p)];
        let mq = m[(i, q)];
        m[(i, p)] = mp * c - sp.conj() * mq;
        m[(i, q)] = mp * sp + mq * c;
        let vp = v[(i, p)];
        let vq = v[(i, q)];
        v[(i, p)] = vp * c - sp.conj() * vq;
        v[(i, q)] = vp * sp + vq * c;
    }
    m[(p, q)] = Complex64::new(0.0, 0.0);
    m[(q, p)] = Complex64::new(0.0, 0.0);
    // Diagonal stays real by construction; scrub rounding residue.
    m[(p, p)] = Complex64::new(m[(p, p)].re, 0.0);
    m[(q, q)] = Complex64::new(m[(q, q)].re, 0.0);
}

/// Hermitian PSD square root with its clamping diagnostic.
#[derive(Debug, Clone)]
pub struct HermitianSqrt {
    pub matrix: ComplexMatrix,
    /// Number of negative eigenvalues clamped to zero. Spatial correlation
    /// matrices are indefinite at roundoff level; anything beyond a few
    /// counts here signals a modeling bug upstream.
    pub clamped: usize,
}

/// `Q` Hermitian PSD with `Q * Q ~= r`, via eigendecomposition with
/// negative eigenvalues clamped to zero.
pub fn hermitian_sqrt(r: &ComplexMatrix) -> Result<HermitianSqrt, NumericsError> {
    let (w, v) = hermitian_eig(r)?;
    let n = r.rows();
    let clamped = w.iter().filter(|&&x| x < 0.0).count();
    let roots: Vec<f64> = w.iter().map(|&x| x.max(0.0).sqrt()).collect();
    // Q = V diag(sqrt(w)) V^H, assembled directly and re-hermitianized.
    let mut q = ComplexMatrix::zeros(n, n);
    for r_i in 0..n {
        for c_i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                acc += v[(r_i, k)] * roots[k] * v[(c_i, k)].conj();
            }
            q[(r_i, c_i)] = acc;
        }
    }
    let qh = q.hermitian();
    let sym = q.add(&qh).scale_re(0.5);
    if !sym.all_finite() {
        return Err(NumericsError::NonFinite);
    }
    Ok(HermitianSqrt {
        matrix: sym,
        clamped,
    })
}

/// Minimum-residual solution of `C x ~= rhs` via normal equations,
/// `x = (C^H C)^{-1} C^H rhs`, with a ridge fallback when the Gram matrix
/// is ill-conditioned (estimate above 1e12).
pub fn least_squares_solve(
    c: &ComplexMatrix,
    rhs: &[Complex64],
) -> Result<Vec<Complex64>, NumericsError> {
    assert!(
        c.rows() >= c.cols(),
        "least squares needs rows >= cols, got {}x{}",
        c.rows(),
        c.cols()
    );
    assert_eq!(c.rows(), rhs.len());
    let ch = c.hermitian();
    let gram = ch.mul(c);
    let b = ch.matvec(rhs);

    let needs_ridge = match hermitian_eig(&gram) {
        Ok((w, _)) => {
            let wmax = w.last().copied().unwrap_or(0.0);
            let wmin = w.first().copied().unwrap_or(0.0);
            wmin <= 0.0 || wmax / wmin > 1e12
        }
        Err(_) => true,
    };

    let solve = |g: &ComplexMatrix| cholesky_solve(g, &b);
    let x = if needs_ridge {
        let lambda = 1e-10 * gram.trace().re / gram.cols() as f64;
        let mut ridged = gram.clone();
        for i in 0..ridged.rows() {
            ridged[(i, i)] += Complex64::new(lambda, 0.0);
        }
        solve(&ridged).ok_or(NumericsError::RankDeficient)?
    } else {
        match solve(&gram) {
            Some(x) => x,
            None => {
                let lambda = 1e-10 * gram.trace().re / gram.cols() as f64;
                let mut ridged = gram.clone();
                for i in 0..ridged.rows() {
                    ridged[(i, i)] += Complex64::new(lambda, 0.0);
                }
                solve(&ridged).ok_or(NumericsError::RankDeficient)?
            }
        }
    };
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(NumericsError::RankDeficient);
    }
    Ok(x)
}

/// Cholesky solve of a Hermitian positive-definite system.
fn cholesky_solve(g: &ComplexMatrix, b: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = g.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[(j, j)] = Complex64::new(dj, 0.0);
        for i in (j + 1)..n {
            let mut acc = g[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / dj;
        }
    }
    // Forward L y = b, then backward L^H x = y.
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l[(i, k)] * y[k];
        }
        y[i] = acc / l[(i, i)];
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut acc = y[i];
        for k in (i + 1)..n {
            acc -= l[(k, i)].conj() * x[k];
        }
        x[i] = acc / l[(i, i)];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix::{inner, norm_sqr};
    use crate::numerics::rng::{complex_gaussian, RngStream};

    fn random_hermitian_psd(rng: &mut RngStream, n: usize) -> ComplexMatrix {
        let a = complex_gaussian(rng, n, n);
        a.mul(&a.hermitian())
    }

    #[test]
    fn eig_reconstructs_input() {
        let mut rng = RngStream::new(3, 1);
        for n in [2usize, 4, 8, 16] {
            let a = random_hermitian_psd(&mut rng, n);
            let (w, v) = hermitian_eig(&a).unwrap();
            let recon = ComplexMatrix::from_fn(n, n, |r, c| {
                (0..n)
                    .map(|k| v[(r, k)] * w[k] * v[(c, k)].conj())
                    .sum()
            });
            let err = recon.sub(&a).frobenius_norm() / a.frobenius_norm();
            assert!(err < 1e-12, "n={n} reconstruction error {err}");
            // V unitary
            let vhv = v.hermitian().mul(&v);
            let id = ComplexMatrix::identity(n);
            assert!(vhv.sub(&id).max_abs() < 1e-12);
        }
    }

    #[test]
    fn sqrt_of_identity_is_identity() {
        let id = ComplexMatrix::identity(4);
        let q = hermitian_sqrt(&id).unwrap();
        assert!(q.matrix.sub(&id).max_abs() < 1e-13);
        assert_eq!(q.clamped, 0);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let d = ComplexMatrix::diagonal(&[Complex64::new(4.0, 0.0), Complex64::new(9.0, 0.0)]);
        let q = hermitian_sqrt(&d).unwrap().matrix;
        assert!((q[(0, 0)].re - 2.0).abs() < 1e-13);
        assert!((q[(1, 1)].re - 3.0).abs() < 1e-13);
        assert!(q[(0, 1)].norm() < 1e-13);
    }

    #[test]
    fn sqrt_reconstruction_oracle() {
        let mut rng = RngStream::new(5, 2);
        let r = random_hermitian_psd(&mut rng, 8);
        let q = hermitian_sqrt(&r).unwrap();
        let qq = q.matrix.mul(&q.matrix);
        let rel = qq.sub(&r).frobenius_norm() / r.frobenius_norm();
        assert!(rel < 1e-9, "relative reconstruction error {rel}");
        // output Hermitian and PSD
        assert!(q.matrix.hermitian_defect() < 1e-10);
        let (w, _) = hermitian_eig(&q.matrix).unwrap();
        assert!(w[0] >= -1e-10);
    }

    #[test]
    fn sqrt_rejects_non_hermitian() {
        let mut a = ComplexMatrix::identity(3);
        a[(0, 1)] = Complex64::new(0.5, 0.0);
        match hermitian_sqrt(&a) {
            Err(NumericsError::NonHermitian(d)) => assert!(d > 0.4),
            other => panic!("expected NonHermitian, got {other:?}"),
        }
    }

    #[test]
    fn sqrt_clamps_negative_eigenvalues() {
        let d = ComplexMatrix::diagonal(&[Complex64::new(1.0, 0.0), Complex64::new(-1e-13, 0.0)]);
        let q = hermitian_sqrt(&d).unwrap();
        assert_eq!(q.clamped, 1);
        assert!(q.matrix[(1, 1)].re.abs() < 1e-12);
    }

    #[test]
    fn lstsq_identity_returns_rhs() {
        let c = ComplexMatrix::identity(4);
        let rhs: Vec<Complex64> = (0..4).map(|i| Complex64::new(i as f64, -1.0)).collect();
        let x = least_squares_solve(&c, &rhs).unwrap();
        for (a, b) in x.iter().zip(&rhs) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn lstsq_unitary_returns_adjoint_action() {
        // 2x2 unitary, so the solution is C^H rhs.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let c = ComplexMatrix::from_vec(
            2,
            2,
            vec![
                Complex64::new(s, 0.0),
                Complex64::new(0.0, s),
                Complex64::new(0.0, s),
                Complex64::new(s, 0.0),
            ],
        );
        let rhs = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)];
        let x = least_squares_solve(&c, &rhs).unwrap();
        let want = c.hermitian().matvec(&rhs);
        for (a, b) in x.iter().zip(&want) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn lstsq_matches_gram_schmidt_projection_oracle() {
        // C x must equal the orthogonal projection of rhs onto col(C).
        let mut rng = RngStream::new(9, 4);
        let c = complex_gaussian(&mut rng, 6, 4);
        let rhs: Vec<Complex64> = complex_gaussian(&mut rng, 6, 1).data().to_vec();
        let x = least_squares_solve(&c, &rhs).unwrap();
        let cx = c.matvec(&x);

        // Gram-Schmidt orthonormal basis of col(C).
        let mut basis: Vec<Vec<Complex64>> = Vec::new();
        for j in 0..c.cols() {
            let mut v = c.col_vec(j);
            for b in &basis {
                let coef = inner(b, &v);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= coef * bi;
                }
            }
            let n = norm_sqr(&v).sqrt();
            for vi in v.iter_mut() {
                *vi /= n;
            }
            basis.push(v);
        }
        let mut proj = vec![Complex64::new(0.0, 0.0); 6];
        for b in &basis {
            let coef = inner(b, &rhs);
            for (pi, bi) in proj.iter_mut().zip(b) {
                *pi += coef * bi;
            }
        }
        let err: f64 = cx
            .iter()
            .zip(&proj)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-9, "projection mismatch {err}");
    }

    #[test]
    fn lstsq_residual_orthogonal_to_columns() {
        let mut rng = RngStream::new(21, 0);
        for n in [8usize, 16, 32] {
            let c = complex_gaussian(&mut rng, n, n / 2);
            let rhs: Vec<Complex64> = complex_gaussian(&mut rng, n, 1).data().to_vec();
            let x = least_squares_solve(&c, &rhs).unwrap();
            let cx = c.matvec(&x);
            let resid: Vec<Complex64> = cx.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            let scale = norm_sqr(&rhs).sqrt().max(1e-30);
            for j in 0..c.cols() {
                let col = c.col_vec(j);
                let dot = inner(&col, &resid).norm();
                let rel = dot / (norm_sqr(&col).sqrt() * scale);
                assert!(rel < 1e-8, "residual not orthogonal: {rel}");
            }
        }
    }

    #[test]
    fn lstsq_rank_deficient_keyhole_does_not_blow_up() {
        // Rank-1 "keyhole" matrix: ridge path must still produce a finite
        // least-squares solution.
        let mut rng = RngStream::new(23, 0);
        let u = complex_gaussian(&mut rng, 6, 1);
        let v = complex_gaussian(&mut rng, 1, 3);
        let c = u.mul(&v);
        let rhs: Vec<Complex64> = complex_gaussian(&mut rng, 6, 1).data().to_vec();
        let x = least_squares_solve(&c, &rhs).unwrap();
        assert!(x.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }
}
