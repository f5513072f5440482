//! Product quadrature on the unit sphere: Gauss-Legendre in the polar
//! cosine times a uniform azimuthal grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionQuadrature {
    pub degree: usize,
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl DirectionQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node `-theta_j`. The product grid is closed under
    /// negation.
    pub fn antipode(&self, j: usize) -> usize {
        let (n_pol, n_az) = (self.degree + 1, 2 * self.degree + 2);
        let (p, a) = (j / n_az, j % n_az);
        (n_pol - 1 - p) * n_az + (a + n_az / 2) % n_az
    }

    /// Index of the node reflected through the plane `x_axis = 0`.
    pub fn reflect(&self, j: usize, axis: usize) -> usize {
        let (n_pol, n_az) = (self.degree + 1, 2 * self.degree + 2);
        let (p, a) = (j / n_az, j % n_az);
        match axis {
            0 => p * n_az + (n_az / 2 + n_az - 1 - a) % n_az,
            1 => p * n_az + (n_az - 1 - a),
            _ => (n_pol - 1 - p) * n_az + a,
        }
    }

    /// Integrates `f` over the sphere.
    pub fn integrate<F: Fn([f64; 3]) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&n, &w)| w * f(n))
            .sum()
    }
}

/// Builds the product rule of the given degree: `degree + 1` Gauss-Legendre
/// nodes in `cos(polar)` and `2 degree + 2` azimuths. It integrates every
/// spherical polynomial of degree `<= 2 degree + 1` exactly.
pub fn build_direction_quadrature(degree: usize) -> Result<DirectionQuadrature> {
    if degree < 2 {
        return Err(Error::InvalidArgument(format!(
            "quadrature degree must be >= 2 (got {degree})"
        )));
    }
    let (mu, wmu) = gauss_legendre(degree + 1);
    let n_az = 2 * degree + 2;
    let daz = 2.0 * PI / n_az as f64;
    let mut nodes = Vec::with_capacity(mu.len() * n_az);
    let mut weights = Vec::with_capacity(mu.len() * n_az);
    for (&c, &w) in mu.iter().zip(&wmu) {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for a in 0..n_az {
            let phi = (a as f64 + 0.5) * daz;
            let v = [s * phi.cos(), s * phi.sin(), c];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            nodes.push([v[0] / norm, v[1] / norm, v[2] / norm]);
            weights.push(w * daz);
        }
    }
    Ok(DirectionQuadrature {
        degree,
        nodes,
        weights,
    })
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}
