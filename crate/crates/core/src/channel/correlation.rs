//! Spatial correlation matrices of the double-scattering model.
//!
//! All three families share the same kernel: a uniform sum over an odd
//! number of scatterer directions with angles `t * spread / (1 - SC)`,
//! `t = -q..q`, `q = (SC-1)/2`. An even scatterer count has no integer
//! `q` and is rejected.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::numerics::ComplexMatrix;

use super::arrays::ArrayGeometry;
use super::ChannelError;
use crate::numerics::kronecker;

/// Correlation of a linear array: `[R]_{i,j} = (1/SC) sum_t
/// exp(j 2 pi d (i-j) sin(t psi / (1-SC)))`. `spacing` in wavelengths.
pub fn linear_array_correlation(
    sc: usize,
    spacing: f64,
    spread: f64,
    size: usize,
) -> Result<ComplexMatrix, ChannelError> {
    if sc % 2 == 0 {
        return Err(ChannelError::EvenScatterers(sc));
    }
    if sc == 1 {
        // Keyhole: a single scatterer direction makes the array fully
        // coherent (all-ones, rank 1).
        return Ok(ComplexMatrix::from_fn(size, size, |_, _| {
            Complex64::new(1.0, 0.0)
        }));
    }
    let q = (sc as i64 - 1) / 2;
    let denom = 1.0 - sc as f64;
    // Toeplitz: only the lag matters.
    let lags: Vec<Complex64> = (0..size)
        .map(|lag| {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in -q..=q {
                let angle = (t as f64) * spread / denom;
                let phase = 2.0 * PI * spacing * lag as f64 * angle.sin();
                acc += Complex64::from_polar(1.0, phase);
            }
            acc / sc as f64
        })
        .collect();
    Ok(ComplexMatrix::from_fn(size, size, |i, j| {
        if i >= j {
            lags[i - j]
        } else {
            lags[j - i].conj()
        }
    }))
}

/// RIS panel correlation `R_v (x) R_h`, horizontal and vertical factors
/// built from the panel spacings (converted to wavelengths).
pub fn ris_correlation(
    sc: usize,
    geom: &ArrayGeometry,
    spread: f64,
) -> Result<ComplexMatrix, ChannelError> {
    let dh = geom.ris_h_spacing / geom.wavelength;
    let dv = geom.ris_v_spacing / geom.wavelength;
    let rh = linear_array_correlation(sc, dh, spread, geom.n_horizontal)?;
    let rv = linear_array_correlation(sc, dv, spread, geom.n_vertical)?;
    Ok(kronecker(&rv, &rh))
}

/// Correlation among the scatterers themselves (SC x SC).
pub fn scatterer_correlation(
    sc: usize,
    spacing: f64,
    spread: f64,
) -> Result<ComplexMatrix, ChannelError> {
    linear_array_correlation(sc, spacing, spread, sc)
}
