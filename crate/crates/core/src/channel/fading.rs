//! Double-scattering Rician fading: per-link factor caches, NLOS draws,
//! path loss, and the Doppler evolution of mobile links.

use num_complex::Complex64;

use crate::numerics::{
    bessel_j0, complex_gaussian, hermitian_sqrt, ComplexMatrix, RngStream,
};

use super::arrays::{los_component, ArrayGeometry, LinkSide};
use super::correlation::{linear_array_correlation, ris_correlation, scatterer_correlation};
use super::ChannelError;

/// Everything that parameterizes one channel link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub distance: f64,
    pub rician_factor: f64,
    pub path_loss_db: f64,
    pub aoa_elevation: f64,
    pub aoa_azimuth: f64,
    pub aod_elevation: f64,
    pub aod_azimuth: f64,
    pub scatterer_count: usize,
    pub spread_transceiver: f64,
    pub spread_ris: f64,
    pub spread_scatterer: f64,
    /// Transceiver antenna spacing in wavelengths (correlation model).
    pub transceiver_spacing: f64,
    /// Scatterer spacing in wavelengths.
    pub scatterer_spacing: f64,
}

impl LinkSpec {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.scatterer_count % 2 == 0 {
            return Err(ChannelError::EvenScatterers(self.scatterer_count));
        }
        if !(self.distance > 0.0) {
            return Err(ChannelError::InvalidLink(format!(
                "distance must be positive, got {}",
                self.distance
            )));
        }
        if self.path_loss_db < 0.0 {
            return Err(ChannelError::InvalidLink(format!(
                "path loss must be >= 0 dB, got {}",
                self.path_loss_db
            )));
        }
        if self.rician_factor < 0.0 {
            return Err(ChannelError::InvalidLink(format!(
                "Rician factor must be >= 0, got {}",
                self.rician_factor
            )));
        }
        Ok(())
    }

    /// Linear-scale large-scale gain `10^(-gamma_pl/10)`.
    pub fn linear_gain(&self) -> f64 {
        10f64.powf(-self.path_loss_db / 10.0)
    }
}

/// 3GPP UMi NLOS path loss in dB for a distance in meters.
pub fn path_loss_db(distance: f64) -> f64 {
    assert!(distance >= 1.0, "path-loss model domain is distance >= 1 m");
    35.6 + 22.0 * distance.log10()
}

/// Per-link factor cache: correlation square roots, the LOS component and
/// the scalar weights of the Rician mixture. Built once per link, shared
/// read-only by every realization.
#[derive(Debug, Clone)]
pub struct LinkFactors {
    pub rows: usize,
    pub cols: usize,
    pub scatterers: usize,
    row_sqrt: ComplexMatrix,
    scatter_sqrt: ComplexMatrix,
    col_sqrt: ComplexMatrix,
    los: ComplexMatrix,
    /// sqrt(omega * upsilon / (upsilon+1))
    los_weight: f64,
    /// sqrt(omega / (upsilon+1))
    nlos_weight: f64,
    /// Extra unit-system scaling applied multiplicatively (see system).
    pub unit_scale: f64,
}

impl LinkFactors {
    pub fn build(
        link: &LinkSpec,
        geom: &ArrayGeometry,
        side: LinkSide,
        ula_elements: usize,
    ) -> Result<Self, ChannelError> {
        link.validate()?;
        let sc = link.scatterer_count;
        let ris_corr = ris_correlation(sc, geom, link.spread_ris)?;
        let ula_corr = linear_array_correlation(
            sc,
            link.transceiver_spacing,
            link.spread_transceiver,
            ula_elements,
        )?;
        let (row_corr, col_corr) = match side {
            LinkSide::EncoderToRis => (ris_corr, ula_corr),
            LinkSide::RisToDecoder => (ula_corr, ris_corr),
        };
        let scatter = scatterer_correlation(sc, link.scatterer_spacing, link.spread_scatterer)?;
        let row_sqrt = hermitian_sqrt(&row_corr)?.matrix;
        let scatter_sqrt = hermitian_sqrt(&scatter)?.matrix;
        let col_sqrt = hermitian_sqrt(&col_corr)?.matrix;
        let los = los_component(link, geom, side, ula_elements);
        let omega = link.linear_gain();
        let v = link.rician_factor;
        Ok(Self {
            rows: row_sqrt.rows(),
            cols: col_sqrt.rows(),
            scatterers: sc,
            row_sqrt,
            scatter_sqrt,
            col_sqrt,
            los,
            los_weight: (omega * v / (v + 1.0)).sqrt(),
            nlos_weight: (omega / (v + 1.0)).sqrt(),
            unit_scale: 1.0,
        })
    }

    pub fn with_unit_scale(mut self, scale: f64) -> Self {
        self.unit_scale = scale;
        self
    }

    /// Mean per-entry power of a realized link, `unit_scale^2 * omega`
    /// (LOS entries are unit modulus and the NLOS has unit per-entry
    /// variance, so the Rician mixture preserves it).
    pub fn mean_entry_power(&self) -> f64 {
        self.unit_scale * self.unit_scale
            * (self.los_weight * self.los_weight + self.nlos_weight * self.nlos_weight)
    }

    /// Fresh NLOS draw: `sqrt(1/SC) R_row^0.5 T S^0.5 E R_col^0.5`.
    pub fn nlos(&self, rng: &mut RngStream) -> ComplexMatrix {
        let t = complex_gaussian(rng, self.rows, self.scatterers);
        let e = complex_gaussian(rng, self.scatterers, self.cols);
        let inner = self.row_sqrt.mul(&t).mul(&self.scatter_sqrt);
        inner
            .mul(&e)
            .mul(&self.col_sqrt)
            .scale_re(1.0 / (self.scatterers as f64).sqrt())
    }

    /// Full Rician draw with path gain and unit scaling applied.
    pub fn realize(&self, rng: &mut RngStream) -> ComplexMatrix {
        let nlos = self.nlos(rng);
        let mut out = ComplexMatrix::zeros(self.rows, self.cols);
        let lw = self.unit_scale * self.los_weight;
        let nw = self.unit_scale * self.nlos_weight;
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(r, c)] = self.los[(r, c)] * lw + nlos[(r, c)] * nw;
            }
        }
        out
    }
}

/// Standalone NLOS realization from a link spec (the cached
/// [`LinkFactors`] path is what the simulator uses per symbol).
pub fn nlos_realization(
    link: &LinkSpec,
    geom: &ArrayGeometry,
    side: LinkSide,
    ula_elements: usize,
    rng: &mut RngStream,
) -> Result<ComplexMatrix, ChannelError> {
    Ok(LinkFactors::build(link, geom, side, ula_elements)?.nlos(rng))
}

/// Rician assembly `sqrt(omega) (sqrt(v/(v+1)) los + sqrt(1/(v+1)) nlos)`.
pub fn rician_link(
    rician_factor: f64,
    linear_gain: f64,
    los: &ComplexMatrix,
    nlos: &ComplexMatrix,
) -> ComplexMatrix {
    let v = rician_factor;
    let lw = (linear_gain * v / (v + 1.0)).sqrt();
    let nw = (linear_gain / (v + 1.0)).sqrt();
    los.scale_re(lw).add(&nlos.scale_re(nw))
}

/// Decoder-mobility model.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityConfig {
    pub velocity: f64,
    pub carrier: f64,
    pub light_speed: f64,
    pub symbol_interval: f64,
}

pub const LIGHT_SPEED: f64 = 2.997_924_58e8;

impl MobilityConfig {
    pub fn new(velocity: f64, carrier: f64, symbol_interval: f64) -> Self {
        Self {
            velocity,
            carrier,
            light_speed: LIGHT_SPEED,
            symbol_interval,
        }
    }

    pub fn is_static(&self) -> bool {
        self.velocity == 0.0
    }

    /// Doppler frequency `V f0 / c` in Hz.
    pub fn doppler_frequency(&self) -> f64 {
        self.velocity * self.carrier / self.light_speed
    }

    /// Temporal correlation `J0(2 pi f_D T_b)^2`.
    pub fn zeta(&self) -> f64 {
        let j = bessel_j0(2.0 * std::f64::consts::PI * self.doppler_frequency() * self.symbol_interval);
        j * j
    }
}

/// One Doppler step: `zeta * link + sqrt(1 - zeta^2) * xi` with
/// `xi ~ CN(0, sigma^2)` per entry. `V = 0` reproduces the input exactly.
pub fn doppler_evolve(
    static_link: &ComplexMatrix,
    mobility: &MobilityConfig,
    rng: &mut RngStream,
    noise_scale: f64,
) -> ComplexMatrix {
    let zeta = mobility.zeta();
    assert!((0.0..=1.0).contains(&zeta));
    if zeta == 1.0 {
        return static_link.clone();
    }
    let innovation = (1.0 - zeta * zeta).sqrt() * noise_scale;
    let xi = complex_gaussian(rng, static_link.rows(), static_link.cols());
    static_link
        .scale_re(zeta)
        .add(&xi.scale_re(innovation))
}
