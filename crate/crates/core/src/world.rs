//! Spherical-world geometry: random placement, distances, angular jitter and
//! neighborhood queries.
//!
//! The world is the closed unit ball. Agent positions are kept in polar form
//! `(r, phi, theta)` with the Cartesian image cached so distance checks stay
//! cheap in the per-round hot loops.

use std::f64::consts::{PI, TAU};

use rand::RngExt;

use crate::SimRng;

/// World radius; distances therefore live in [0, 2].
pub const WORLD_RADIUS: f64 = 1.0;

/// Geometry parameters shared by all agents in a run.
///
/// The radius of operation doubles as the provider's undegraded delivery
/// range; beyond it quality falls off linearly at `degradation_slope` UG per
/// world unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldParams {
    pub radius_of_operation: f64,
    pub degradation_slope: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            radius_of_operation: 0.5,
            degradation_slope: 10.0,
        }
    }
}

/// A point in the unit ball.
///
/// Invariants: `r ∈ [0, 1]`, `phi ∈ [0, 2π)`, `theta ∈ [0, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    r: f64,
    phi: f64,
    theta: f64,
    cart: [f64; 3],
}

impl Location {
    /// Builds a location, normalizing the azimuth into `[0, 2π)` and
    /// reflecting the inclination at the poles.
    ///
    /// Panics if `r` is outside `[0, 1]`.
    pub fn new(r: f64, phi: f64, theta: f64) -> Self {
        assert!(
            (0.0..=WORLD_RADIUS).contains(&r),
            "radial distance {r} outside the world"
        );
        let phi = normalize_phi(phi);
        let theta = reflect_theta(theta);
        Self {
            r,
            phi,
            theta,
            cart: to_cartesian(r, phi, theta),
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Cartesian image of the polar coordinates.
    pub fn cartesian(&self) -> [f64; 3] {
        self.cart
    }
}

fn to_cartesian(r: f64, phi: f64, theta: f64) -> [f64; 3] {
    let (sin_t, cos_t) = theta.sin_cos();
    let (sin_p, cos_p) = phi.sin_cos();
    [r * sin_t * cos_p, r * sin_t * sin_p, r * cos_t]
}

fn normalize_phi(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    // rem_euclid can return the modulus itself for tiny negative inputs.
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Out-of-range inclination reflects at the poles instead of clamping so
/// jittered agents do not pile up there.
fn reflect_theta(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    let t = if t > PI { TAU - t } else { t };
    t.clamp(0.0, PI)
}

/// Uniform-over-volume placement: `r` as `U^(1/3)`, inclination as
/// `arccos(1 − 2U)`, azimuth uniform.
pub fn random_location(rng: &mut SimRng) -> Location {
    let r = rng.random::<f64>().cbrt() * WORLD_RADIUS;
    let theta = (1.0 - 2.0 * rng.random::<f64>()).acos();
    let phi = TAU * rng.random::<f64>();
    Location::new(r, phi, theta)
}

/// Euclidean distance between the Cartesian images of the two points.
pub fn distance(a: &Location, b: &Location) -> f64 {
    distance_sq(a, b).sqrt()
}

/// Squared distance; avoids the square root in radius comparisons.
pub fn distance_sq(a: &Location, b: &Location) -> f64 {
    let pa = a.cart;
    let pb = b.cart;
    let dx = pa[0] - pb[0];
    let dy = pa[1] - pb[1];
    let dz = pa[2] - pb[2];
    dx * dx + dy * dy + dz * dz
}

/// Adds independent offsets drawn from `[-delta_phi_max, +delta_phi_max]` to
/// the azimuth and inclination; the radial distance never changes.
pub fn apply_angular_jitter(loc: &Location, delta_phi_max: f64, rng: &mut SimRng) -> Location {
    assert!(delta_phi_max >= 0.0, "jitter bound must be non-negative");
    if delta_phi_max == 0.0 {
        return *loc;
    }
    let d_phi = rng.random_range(-delta_phi_max..=delta_phi_max);
    let d_theta = rng.random_range(-delta_phi_max..=delta_phi_max);
    Location::new(loc.r, loc.phi + d_phi, loc.theta + d_theta)
}

/// Indices of `candidates` within `radius` of `center`, excluding
/// `exclude` (the querying agent itself when it is in the candidate list).
pub fn nearby_indices(
    center: &Location,
    candidates: &[Location],
    radius: f64,
    exclude: Option<usize>,
) -> Vec<usize> {
    assert!(radius >= 0.0, "radius of operation must be non-negative");
    let r_sq = radius * radius;
    candidates
        .iter()
        .enumerate()
        .filter(|&(i, loc)| Some(i) != exclude && distance_sq(center, loc) <= r_sq)
        .map(|(i, _)| i)
        .collect()
}
