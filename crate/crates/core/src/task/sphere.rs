//! Points on the sphere and their real spherical-harmonic power spectrum.

use std::f64::consts::PI;

use super::pattern::{Pattern, N_INPUTS};

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn normalize(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// The twelve input locations on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoints {
    points: Vec<Vec3>,
}

impl SpherePoints {
    /// Vertices of the regular icosahedron, `(0, ±1, ±φ)` and its cyclic
    /// permutations, scaled to unit norm.
    pub fn icosahedron() -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut points = Vec::with_capacity(N_INPUTS);
        for &(s1, s2) in &[(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            points.push(normalize([0.0, s1, s2 * phi]));
        }
        for &(s1, s2) in &[(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            points.push(normalize([s1, s2 * phi, 0.0]));
        }
        for &(s1, s2) in &[(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            points.push(normalize([s2 * phi, 0.0, s1]));
        }
        SpherePoints { points }
    }

    /// Arbitrary points; they are normalized onto the sphere.
    pub fn from_points(points: Vec<Vec3>) -> Self {
        SpherePoints {
            points: points.into_iter().map(normalize).collect(),
        }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn factorial_ratio(l: usize, m: usize) -> f64 {
    // (l - m)! / (l + m)!
    ((l - m + 1)..=(l + m)).fold(1.0, |acc, k| acc / k as f64)
}

/// Associated Legendre function `P_l^m(x)` for `m >= 0`, without the
/// Condon-Shortley phase.
pub fn associated_legendre(l: usize, m: usize, x: f64) -> f64 {
    assert!(m <= l, "m must not exceed l");
    let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= fact * somx2;
        fact += 2.0;
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = ((2 * ll - 1) as f64 * x * pmmp1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

/// Orthonormal real spherical harmonic `Y_l^m` evaluated at a unit vector.
pub fn real_spherical_harmonic(l: usize, m: i64, dir: Vec3) -> f64 {
    let am = m.unsigned_abs() as usize;
    assert!(am <= l, "|m| must not exceed l");
    let cos_theta = dir[2].clamp(-1.0, 1.0);
    let phi = dir[1].atan2(dir[0]);
    let norm = ((2 * l + 1) as f64 / (4.0 * PI) * factorial_ratio(l, am)).sqrt();
    let p = associated_legendre(l, am, cos_theta);
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => norm * p,
        std::cmp::Ordering::Greater => std::f64::consts::SQRT_2 * norm * p * (am as f64 * phi).cos(),
        std::cmp::Ordering::Less => std::f64::consts::SQRT_2 * norm * p * (am as f64 * phi).sin(),
    }
}

/// Spherical harmonics of every degree `0..=max_degree` sampled at a fixed
/// point set.
#[derive(Debug, Clone)]
pub struct HarmonicBasis {
    max_degree: usize,
    // values[l][m + l][i] = Y_l^m(p_i)
    values: Vec<Vec<Vec<f64>>>,
}

impl HarmonicBasis {
    pub fn new(points: &SpherePoints, max_degree: usize) -> Self {
        let values = (0..=max_degree)
            .map(|l| {
                (-(l as i64)..=l as i64)
                    .map(|m| {
                        points
                            .points()
                            .iter()
                            .map(|&p| real_spherical_harmonic(l, m, p))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        HarmonicBasis { max_degree, values }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Energy per degree, `E_l = sum_m |sum_i v_i Y_l^m(p_i)|^2`.
    pub fn power_spectrum(&self, values: &[f64]) -> Vec<f64> {
        self.values
            .iter()
            .map(|degree| {
                degree
                    .iter()
                    .map(|ylm| {
                        let a: f64 = ylm.iter().zip(values).map(|(y, v)| y * v).sum();
                        a * a
                    })
                    .sum()
            })
            .collect()
    }

    /// `sum_l w_l E_l(x)` for every pattern, with `x` in `{0,1}`.
    pub fn weighted_power(&self, weights: &[f64]) -> Vec<f64> {
        Pattern::all()
            .map(|p| {
                let spectrum = self.power_spectrum(&p.inputs());
                spectrum.iter().zip(weights).map(|(e, w)| e * w).sum()
            })
            .collect()
    }
}
