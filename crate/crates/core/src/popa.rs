//! Privacy of Personalized Avatar (PoPA) and the per-change privacy gain.
//!
//! PoPA measures how hard it is to link an avatar pseudonym back to its owner:
//! the pseudonym carries an attribute part (a fraction of the avatar's shape
//! and texture points) and a random part of `r_l` symbols drawn from an
//! alphabet of size `r_n`. Smaller attribute fractions and a smaller collision
//! probability give a larger value, in bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvatarAttributeProfile {
    /// Attribute-related 3D shape points.
    pub s_attr: u64,
    /// All 3D shape points.
    pub s_total: u64,
    /// Attribute-related texture points.
    pub t_attr: u64,
    /// All texture points.
    pub t_total: u64,
    /// Size of the random-part alphabet.
    pub r_n: u32,
    /// Number of random symbols.
    pub r_l: u32,
}

impl Default for AvatarAttributeProfile {
    /// Eye attributes with the default shape/texture totals.
    fn default() -> Self {
        Self {
            s_attr: 100_000,
            s_total: 500_000,
            t_attr: 400,
            t_total: 262_144,
            r_n: 9,
            r_l: 4,
        }
    }
}

impl AvatarAttributeProfile {
    pub fn validate(&self) -> Result<()> {
        if self.s_attr == 0 || self.s_total == 0 || self.t_attr == 0 || self.t_total == 0 {
            return Err(Error::domain("point counts must be nonzero"));
        }
        if self.s_attr > self.s_total {
            return Err(Error::domain("s_attr exceeds s_total"));
        }
        if self.t_attr > self.t_total {
            return Err(Error::domain("t_attr exceeds t_total"));
        }
        if self.r_n < 2 {
            return Err(Error::domain("r_n must be at least 2"));
        }
        if self.r_l < 1 {
            return Err(Error::domain("r_l must be at least 1"));
        }
        Ok(())
    }

    /// Probability that two uniformly drawn random parts coincide.
    pub fn collision_probability(&self) -> f64 {
        f64::from(self.r_n).powi(-(self.r_l as i32))
    }
}

/// PoPA in bits. Negative when the linkage sum exceeds one.
pub fn compute_popa(profile: &AvatarAttributeProfile) -> Result<f64> {
    profile.validate()?;
    let shape = profile.s_attr as f64 / profile.s_total as f64;
    let texture = profile.t_attr as f64 / profile.t_total as f64;
    Ok(-(shape + texture + profile.collision_probability()).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyGainParams {
    /// Pseudonym change frequency.
    pub lambda: f64,
    /// Reciprocal of the largest crowd at the hotspot.
    pub a: f64,
    /// Reciprocal of the smallest crowd at the hotspot.
    pub b: f64,
}

impl Default for PrivacyGainParams {
    fn default() -> Self {
        Self {
            lambda: 1.5,
            a: 1.0 / 160.0,
            b: 1.0 / 10.0,
        }
    }
}

/// Expected privacy increase (bits) per collective pseudonym change.
///
/// `λ/(λ+1) · (1 + 1/ln 2 − (b log₂ b − a log₂ a)/(b − a)) − 1`
pub fn privacy_gain(params: &PrivacyGainParams) -> Result<f64> {
    let PrivacyGainParams { lambda, a, b } = *params;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::domain("lambda must be positive"));
    }
    if !(a > 0.0 && a < b && b <= 1.0) {
        return Err(Error::domain("require 0 < a < b <= 1"));
    }
    Ok(gain_unchecked(lambda, a, b))
}

fn gain_unchecked(lambda: f64, a: f64, b: f64) -> f64 {
    let entropy_slope = (b * b.log2() - a * a.log2()) / (b - a);
    lambda / (lambda + 1.0) * (1.0 + std::f64::consts::LOG2_E - entropy_slope) - 1.0
}
