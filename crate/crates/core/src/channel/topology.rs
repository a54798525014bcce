//! Deployment geometry, the per-RIS link tables it induces, per-symbol
//! channel realization, and cascade aggregation.
//!
//! The layout is the four-RIS rectangle used throughout the evaluation:
//! encoder at `(d1, 0, d3)`, decoder at `(d1, d1, 0)`, adversary at
//! `(d1, 0, 0)`, RIS panels at the rectangle corners. Link distances and
//! arrival/departure angles follow from the geometry in closed form; the
//! coordinates are kept so tests can cross-check those closed forms.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::numerics::{ComplexMatrix, RngStream};

use super::fading::{path_loss_db, LinkFactors, LinkSpec};
use super::ChannelError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RisSite {
    pub position: Vec3,
    pub azimuth: f64,
}

/// 3-D deployment with up to four RIS panels at the canonical positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub encoder: Vec3,
    pub decoder: Vec3,
    pub adversary: Vec3,
    pub ris: Vec<RisSite>,
}

impl Topology {
    /// The canonical layout; `ris_count` selects the first 1..=4 panels.
    pub fn canonical(d1: f64, d2: f64, d3: f64, ris_count: usize) -> Self {
        assert!((1..=4).contains(&ris_count), "layout defines 4 RIS sites");
        let sites = [
            RisSite {
                position: Vec3::new(d2, 0.0, d3),
                azimuth: 3.0 * FRAC_PI_4,
            },
            RisSite {
                position: Vec3::new(0.0, 0.0, d3),
                azimuth: FRAC_PI_4,
            },
            RisSite {
                position: Vec3::new(0.0, d1, d3),
                azimuth: -FRAC_PI_4,
            },
            RisSite {
                position: Vec3::new(d2, d1, d3),
                azimuth: -3.0 * FRAC_PI_4,
            },
        ];
        Self {
            d1,
            d2,
            d3,
            encoder: Vec3::new(d1, 0.0, d3),
            decoder: Vec3::new(d1, d1, 0.0),
            adversary: Vec3::new(d1, 0.0, 0.0),
            ris: sites[..ris_count].to_vec(),
        }
    }

    pub fn ris_count(&self) -> usize {
        self.ris.len()
    }
}

/// Angle/distance rows of the legitimate and adversary link tables,
/// expressed in the closed forms induced by the canonical layout.
#[derive(Debug, Clone, Copy)]
pub struct LinkAngles {
    pub distance: f64,
    pub aoa_elevation: f64,
    pub aoa_azimuth: f64,
    pub aod_elevation: f64,
    pub aod_azimuth: f64,
}

pub fn encoder_ris_angles(topo: &Topology, m: usize) -> LinkAngles {
    let (d1, d2) = (topo.d1, topo.d2);
    match m {
        0 => LinkAngles {
            distance: d2 - d1,
            aoa_elevation: FRAC_PI_4,
            aoa_azimuth: 0.0,
            aod_elevation: FRAC_PI_2,
            aod_azimuth: 0.0,
        },
        1 => LinkAngles {
            distance: d1,
            aoa_elevation: FRAC_PI_4,
            aoa_azimuth: 0.0,
            aod_elevation: FRAC_PI_2,
            aod_azimuth: 0.0,
        },
        2 => LinkAngles {
            distance: (2.0 * d1 * d1).sqrt(),
            aoa_elevation: FRAC_PI_2,
            aoa_azimuth: 0.0,
            aod_elevation: FRAC_PI_4,
            aod_azimuth: 0.0,
        },
        3 => LinkAngles {
            distance: ((d2 - d1) * (d2 - d1) + d1 * d1).sqrt(),
            aoa_elevation: FRAC_PI_4 + ((d2 - d1) / d1).atan(),
            aoa_azimuth: 0.0,
            aod_elevation: (d1 / (d2 - d1)).atan(),
            aod_azimuth: 0.0,
        },
        _ => panic!("layout defines 4 RIS sites"),
    }
}

pub fn ris_decoder_angles(topo: &Topology, m: usize) -> LinkAngles {
    let (d1, d2, d3) = (topo.d1, topo.d2, topo.d3);
    match m {
        0 => LinkAngles {
            distance: ((d2 - d1) * (d2 - d1) + d1 * d1 + d3 * d3).sqrt(),
            aoa_elevation: ((d2 - d1) / d1).atan(),
            aoa_azimuth: 0.0,
            aod_elevation: FRAC_PI_4 + ((d2 - d1) / d1).atan(),
            aod_azimuth: (d3 / d1).atan(),
        },
        1 => LinkAngles {
            distance: (2.0 * d1 * d1 + d3 * d3).sqrt(),
            aoa_elevation: FRAC_PI_4,
            aoa_azimuth: 0.0,
            aod_elevation: FRAC_PI_2,
            aod_azimuth: (d3 / (2f64.sqrt() * d1)).atan(),
        },
        2 => LinkAngles {
            distance: (d1 * d1 + d3 * d3).sqrt(),
            aoa_elevation: FRAC_PI_2,
            aoa_azimuth: 0.0,
            aod_elevation: FRAC_PI_4,
            aod_azimuth: (d3 / d1).atan(),
        },
        3 => LinkAngles {
            distance: ((d2 - d1) * (d2 - d1) + d3 * d3).sqrt(),
            aoa_elevation: FRAC_PI_2,
            aoa_azimuth: 0.0,
            aod_elevation: FRAC_PI_4,
            aod_azimuth: (d3 / d1).atan(),
        },
        _ => panic!("layout defines 4 RIS sites"),
    }
}

pub fn adversary_ris_angles(topo: &Topology, m: usize) -> LinkAngles {
    let (d1, d2, d3) = (topo.d1, topo.d2, topo.d3);
    match m {
        0 => LinkAngles {
            distance: ((d2 - d1) * (d2 - d1) + d3 * d3).sqrt(),
            aoa_elevation: FRAC_PI_4,
            aoa_azimuth: (d3 / (d2 - d1)).atan(),
            aod_elevation: FRAC_PI_2,
            aod_azimuth: 0.0,
        },
        1 => LinkAngles {
            distance: (d1 * d1 + d3 * d3).sqrt(),
            aoa_elevation: FRAC_PI_4,
            aoa_azimuth: (d3 / d1).atan(),
            aod_elevation: (d3 / (2f64.sqrt() * d1)).atan(),
            aod_azimuth: 0.0,
        },
        2 => LinkAngles {
            distance: (2.0 * d1 * d1 + d3 * d3).sqrt(),
            aoa_elevation: FRAC_PI_2,
            aoa_azimuth: (d3 / (2f64.sqrt() * d1)).atan(),
            aod_elevation: FRAC_PI_4,
            aod_azimuth: 0.0,
        },
        3 => LinkAngles {
            distance: ((d2 - d1) * (d2 - d1) + d1 * d1 + d3 * d3).sqrt(),
            aoa_elevation: FRAC_PI_4 + ((d2 - d1) / d1).atan(),
            aoa_azimuth: (d3 / (d1 * d1 + (d2 - d1) * (d2 - d1)).sqrt()).atan(),
            aod_elevation: (d1 / (d2 - d1)).atan(),
            aod_azimuth: 0.0,
        },
        _ => panic!("layout defines 4 RIS sites"),
    }
}

/// Fills a [`LinkSpec`] from a table row plus the scattering parameters.
pub fn link_from_angles(
    angles: &LinkAngles,
    rician_factor: f64,
    scatterer_count: usize,
    spread: f64,
    transceiver_spacing: f64,
    scatterer_spacing: f64,
) -> LinkSpec {
    LinkSpec {
        distance: angles.distance,
        rician_factor,
        path_loss_db: path_loss_db(angles.distance),
        aoa_elevation: angles.aoa_elevation,
        aoa_azimuth: angles.aoa_azimuth,
        aod_elevation: angles.aod_elevation,
        aod_azimuth: angles.aod_azimuth,
        scatterer_count,
        spread_transceiver: spread,
        spread_ris: spread,
        spread_scatterer: spread,
        transceiver_spacing,
        scatterer_spacing,
    }
}

/// Precomputed factors of every link in the configuration.
#[derive(Debug, Clone)]
pub struct LinkSet {
    pub d: Vec<LinkFactors>,
    pub h: Vec<LinkFactors>,
    pub d_adv: Option<Vec<LinkFactors>>,
    pub h_adv: Option<Vec<LinkFactors>>,
}

impl LinkSet {
    pub fn ris_count(&self) -> usize {
        self.d.len()
    }

    pub fn has_adversary(&self) -> bool {
        self.d_adv.is_some()
    }
}

/// All per-symbol link matrices for one symbol slot.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub d: Vec<ComplexMatrix>,
    pub h: Vec<ComplexMatrix>,
    pub d_adv: Option<Vec<ComplexMatrix>>,
    pub h_adv: Option<Vec<ComplexMatrix>>,
    pub symbol_index: usize,
}

/// Fresh independent draws of all links for one symbol slot. Draw order
/// is fixed (legitimate D then H per RIS, then the adversary pair), so a
/// given stream always yields the same realization.
pub fn realize_symbol_channels(
    links: &LinkSet,
    symbol_index: usize,
    rng: &mut RngStream,
) -> ChannelRealization {
    let n = links.ris_count();
    let mut d = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for m in 0..n {
        d.push(links.d[m].realize(rng));
        h.push(links.h[m].realize(rng));
    }
    let (d_adv, h_adv) = match (&links.d_adv, &links.h_adv) {
        (Some(da), Some(ha)) => {
            let mut dv = Vec::with_capacity(n);
            let mut hv = Vec::with_capacity(n);
            for m in 0..n {
                dv.push(da[m].realize(rng));
                hv.push(ha[m].realize(rng));
            }
            (Some(dv), Some(hv))
        }
        _ => (None, None),
    };
    ChannelRealization {
        d,
        h,
        d_adv,
        h_adv,
        symbol_index,
    }
}

/// Aggregated cascades for one symbol with the phases that produced them.
#[derive(Debug, Clone)]
pub struct CascadeSet {
    /// `O = sum_m H_m diag(c_m) D_m`, decoder antennas x encoder antennas.
    pub legitimate: ComplexMatrix,
    /// `C = sum_m H'_m diag(c_m) D'_m` when the adversary is configured.
    pub adversary: Option<ComplexMatrix>,
    pub phases: Vec<Vec<Complex64>>,
}

const UNIT_MODULUS_TOL: f64 = 1e-9;

/// Builds the cascades from a realization and per-RIS reflection
/// coefficients (unit modulus enforced).
pub fn aggregate(
    realization: &ChannelRealization,
    phases: &[Vec<Complex64>],
) -> Result<CascadeSet, ChannelError> {
    assert_eq!(phases.len(), realization.d.len());
    for (m, c) in phases.iter().enumerate() {
        assert_eq!(c.len(), realization.d[m].rows(), "phase vector length");
        for z in c {
            let dev = (z.norm() - 1.0).abs();
            if dev > UNIT_MODULUS_TOL {
                return Err(ChannelError::NonUnitModulus(dev));
            }
        }
    }
    let legitimate = cascade_sum(&realization.h, &realization.d, phases);
    let adversary = match (&realization.h_adv, &realization.d_adv) {
        (Some(h), Some(d)) => Some(cascade_sum(h, d, phases)),
        _ => None,
    };
    Ok(CascadeSet {
        legitimate,
        adversary,
        phases: phases.to_vec(),
    })
}

fn cascade_sum(
    h: &[ComplexMatrix],
    d: &[ComplexMatrix],
    phases: &[Vec<Complex64>],
) -> ComplexMatrix {
    let rows = h[0].rows();
    let cols = d[0].cols();
    let mut out = ComplexMatrix::zeros(rows, cols);
    for m in 0..h.len() {
        let hm = &h[m];
        let dm = &d[m];
        let c = &phases[m];
        // H diag(c) D accumulated without forming the diagonal matrix.
        for r in 0..rows {
            for q in 0..cols {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..c.len() {
                    acc += hm[(r, n)] * c[n] * dm[(n, q)];
                }
                out[(r, q)] += acc;
            }
        }
    }
    out
}
