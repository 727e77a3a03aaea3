//! Closed-form gravitational quantities for uniform balls.
//!
//! `interaction(a, b)` is the Coulomb-kernel overlap `∬ ρa(x) ρb(y) / |x - y|`
//! with G stripped. Disjoint balls interact as point masses. Overlapping
//! pairs are integrated shell by shell: the average of ball b's kernel
//! profile over a sphere of radius s has an exact antiderivative, leaving a
//! one-dimensional integral over s that is piecewise polynomial and
//! therefore exact under Gauss-Legendre on each piece.

use std::cmp::Ordering;
use std::f64::consts::PI;

use crate::massdist::UniformSphere;

// 8-point Gauss-Legendre on [-1, 1]; exact for polynomials up to degree 15.
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `-Φ / (G m)` of a unit-mass uniform ball of radius `radius` at distance `r`.
#[inline]
pub fn kernel_profile(radius: f64, r: f64) -> f64 {
    if r < radius {
        (3.0 * radius * radius - r * r) / (2.0 * radius * radius * radius)
    } else {
        1.0 / r
    }
}

/// Potential of a uniform ball: interior `-Gm(3R² - r²)/(2R³)`, exterior `-Gm/r`.
#[inline]
pub fn ball_potential(g: f64, mass: f64, radius: f64, r: f64) -> f64 {
    -g * mass * kernel_profile(radius, r)
}

/// `∫_0^r profile(t) t dt` for the unit-mass ball.
#[inline]
fn profile_moment(radius: f64, r: f64) -> f64 {
    if r <= radius {
        (3.0 * radius * radius * r * r - 0.5 * r.powi(4)) / (4.0 * radius.powi(3))
    } else {
        0.625 * radius + (r - radius)
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn canonical_order(a: &UniformSphere, b: &UniformSphere) -> Ordering {
    a.radius
        .total_cmp(&b.radius)
        .then(a.mass.total_cmp(&b.mass))
        .then(a.center[0].total_cmp(&b.center[0]))
        .then(a.center[1].total_cmp(&b.center[1]))
        .then(a.center[2].total_cmp(&b.center[2]))
}

/// Self-interaction `(6/5) m² / R`.
pub fn self_interaction(a: &UniformSphere) -> f64 {
    1.2 * a.mass * a.mass / a.radius
}

/// Symmetric in its arguments bit for bit.
pub fn interaction(a: &UniformSphere, b: &UniformSphere) -> f64 {
    let (a, b) = if canonical_order(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
    if a.mass == 0.0 || b.mass == 0.0 {
        return 0.0;
    }
    let d = distance(a.center, b.center);
    if d >= a.radius + b.radius {
        return a.mass * b.mass / d;
    }
    if d == 0.0 && a.radius == b.radius {
        return self_interaction(a);
    }
    let rho_a = a.mass / (4.0 / 3.0 * PI * a.radius.powi(3));
    let rb = b.radius;
    let integrand = |s: f64| -> f64 {
        if d == 0.0 {
            4.0 * PI * s * s * kernel_profile(rb, s)
        } else {
            2.0 * PI * s * (profile_moment(rb, d + s) - profile_moment(rb, (d - s).abs())) / d
        }
    };
    let mut breaks = vec![0.0, a.radius];
    for p in [d, d - rb, rb - d, d + rb, rb] {
        if p > 0.0 && p < a.radius {
            breaks.push(p);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let piece: f64 = GL_NODES.iter().zip(GL_WEIGHTS).map(|(x, wt)| wt * integrand(mid + half * x)).sum();
        total += half * piece;
    }
    rho_a * b.mass * total
}

/// Sum of `interaction` over all ordered pairs `(a ∈ xs, b ∈ ys)`, with terms
/// sorted before summation so the result does not depend on list order.
pub fn set_interaction(xs: &[UniformSphere], ys: &[UniformSphere]) -> f64 {
    let mut terms: Vec<f64> = xs.iter().flat_map(|a| ys.iter().map(move |b| interaction(a, b))).collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}
