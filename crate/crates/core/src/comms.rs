//! Link-level radio model: bearing offsets, array gain, SINR and the
//! communication predicate.
//!
//! A link is a transmitter at `p_t` with boresight `phi`, a receiver at
//! `p_r` and an optional jammer. Receivers are always isotropic; the
//! transmitter gain comes from the steering vector of a uniform linear array
//! with half-wavelength spacing. Path loss is `1/d²`, and jamming scales the
//! denominator by `1 + c_jam / ‖p_r − p_j‖²`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_signed, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommsError {
    #[error("transmitter and receiver coincide at ({x}, {y})")]
    CoincidentLink { x: f64, y: f64 },
    #[error("antenna needs at least 2 elements, got {0}")]
    TooFewElements(usize),
    #[error("directivity coefficient {0} outside [0, 1]")]
    InvalidDirectivity(f64),
    #[error("antenna orientation {0} is not finite")]
    NonFiniteOrientation(f64),
}

/// Transmit antenna: directivity coefficient and element count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaModel {
    pub c_dir: f64,
    pub elements: usize,
}

impl AntennaModel {
    pub const ISOTROPIC: AntennaModel = AntennaModel {
        c_dir: 0.0,
        elements: 2,
    };
    pub const DIRECTIONAL: AntennaModel = AntennaModel {
        c_dir: 1.0,
        elements: 2,
    };

    pub fn new(c_dir: f64, elements: usize) -> Result<Self, CommsError> {
        if elements < 2 {
            return Err(CommsError::TooFewElements(elements));
        }
        if !(0.0..=1.0).contains(&c_dir) {
            return Err(CommsError::InvalidDirectivity(c_dir));
        }
        Ok(Self { c_dir, elements })
    }

    /// Largest gain of the array, reached on boresight.
    pub fn peak_gain(&self) -> f64 {
        1.0 + self.c_dir * (self.elements as f64 - 1.0)
    }

    /// Steering vector `a(θ)`: element `m` has phase `2π m sin θ / L`, and
    /// every element after the first is weighted by `c_dir`.
    pub fn steering_vector(&self, theta: f64) -> Vec<Complex64> {
        let l = self.elements as f64;
        let s = theta.sin();
        (0..self.elements)
            .map(|m| {
                if m == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::from_polar(self.c_dir, 2.0 * PI * m as f64 * s / l)
                }
            })
            .collect()
    }
}

impl Default for AntennaModel {
    fn default() -> Self {
        Self::ISOTROPIC
    }
}

/// One transmitter-receiver pair plus the jammer geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub p_t: Vec2,
    pub p_r: Vec2,
    pub phi: f64,
    pub jammer: Option<Vec2>,
    pub c_jam: f64,
    pub antenna: AntennaModel,
}

impl Link {
    /// Isotropic, unjammed link.
    pub fn plain(p_t: Vec2, p_r: Vec2) -> Self {
        Self {
            p_t,
            p_r,
            phi: 0.0,
            jammer: None,
            c_jam: 0.0,
            antenna: AntennaModel::ISOTROPIC,
        }
    }
}

/// SINR value of a link. `receiver_on_jammer` marks the degenerate case
/// where the receiver sits exactly on the jammer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrReading {
    pub value: f64,
    pub receiver_on_jammer: bool,
}

/// Angle between the transmitter boresight and the transmitter→receiver
/// line, in `[−π, π)`.
pub fn bearing_offset(p_t: Vec2, p_r: Vec2, phi: f64) -> Result<f64, CommsError> {
    if !phi.is_finite() {
        return Err(CommsError::NonFiniteOrientation(phi));
    }
    let delta = p_r - p_t;
    if delta == Vec2::ZERO {
        return Err(CommsError::CoincidentLink { x: p_t.x, y: p_t.y });
    }
    Ok(wrap_signed(delta.angle() - phi))
}

/// `|a(0)ᴴ a(θ)|` with `a(0)` the all-ones vector.
pub fn array_gain(theta: f64, antenna: &AntennaModel) -> f64 {
    antenna
        .steering_vector(theta)
        .into_iter()
        .sum::<Complex64>()
        .norm()
}

pub fn sinr(link: &Link) -> Result<SinrReading, CommsError> {
    let theta = bearing_offset(link.p_t, link.p_r, link.phi)?;
    if (theta * link.antenna.c_dir).abs() > FRAC_PI_2 {
        return Ok(SinrReading {
            value: 0.0,
            receiver_on_jammer: false,
        });
    }
    let gain = array_gain(theta, &link.antenna);
    let path = (link.p_r - link.p_t).norm_sq();
    let interference = match link.jammer {
        Some(p_j) if link.c_jam > 0.0 => {
            let dj = (link.p_r - p_j).norm_sq();
            if dj == 0.0 {
                return Ok(SinrReading {
                    value: 0.0,
                    receiver_on_jammer: true,
                });
            }
            1.0 + link.c_jam / dj
        }
        _ => 1.0,
    };
    Ok(SinrReading {
        value: gain / (path * interference),
        receiver_on_jammer: false,
    })
}

/// Relative slack of the threshold test. Positions built from repeated
/// full-speed steps drift by a few ulps, which would otherwise break links
/// planned at exactly the communication range.
pub const THRESHOLD_TOLERANCE: f64 = 1e-12;

/// Inclusive threshold test `SINR ≥ threshold`, up to [`THRESHOLD_TOLERANCE`].
pub fn meets_threshold(value: f64, sinr_threshold: f64) -> bool {
    value >= sinr_threshold * (1.0 - THRESHOLD_TOLERANCE)
}

pub fn can_communicate(link: &Link, sinr_threshold: f64) -> Result<bool, CommsError> {
    Ok(meets_threshold(sinr(link)?.value, sinr_threshold))
}

/// Isotropic communication radius for a receiver at distance `d_jam` from
/// the jammer: `r_com / sqrt(1 + c_jam / d_jam²)`.
pub fn jammed_radius(r_com: f64, c_jam: f64, d_jam: f64) -> f64 {
    if c_jam == 0.0 {
        r_com
    } else if d_jam == 0.0 {
        0.0
    } else {
        r_com / (1.0 + c_jam / (d_jam * d_jam)).sqrt()
    }
}
