//! Discrete inner products and Sobolev norms.

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::field::{CauchyData, KineticField, RayData, ScalarField};
use crate::lattice::Lattice;
use crate::scalar::{pairwise_map_sum, Scalar, C64};

/// Riemann-sum L2 pairing, conjugate-linear in the first slot.
pub trait L2Inner {
    type Value: Scalar;

    fn l2_inner(&self, other: &Self) -> Result<Self::Value>;

    fn l2_norm(&self) -> f64 {
        self.l2_inner(self).map(|v| v.re().max(0.0).sqrt()).unwrap_or(0.0)
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    pairwise_map_sum(a.len(), &|i| a[i].conj() * b[i])
}

impl<S: Scalar> L2Inner for ScalarField<S> {
    type Value = S;

    fn l2_inner(&self, other: &Self) -> Result<S> {
        self.same_grid(other)?;
        let lat = &self.lattice;
        Ok(dot(&self.values, &other.values) * (lat.dt() * lat.dx().powi(3)))
    }
}

impl<S: Scalar> L2Inner for KineticField<S> {
    type Value = S;

    fn l2_inner(&self, other: &Self) -> Result<S> {
        self.same_grid(other)?;
        let lat = &self.lattice;
        let b = self.block();
        let w = &self.quadrature.weights;
        let per_dir: Vec<S> = (0..w.len())
            .map(|j| dot(&self.values[j * b..(j + 1) * b], &other.values[j * b..(j + 1) * b]) * w[j])
            .collect();
        Ok(crate::scalar::pairwise_sum(&per_dir) * (lat.dt() * lat.dx().powi(3)))
    }
}

impl<S: Scalar> L2Inner for RayData<S> {
    type Value = S;

    fn l2_inner(&self, other: &Self) -> Result<S> {
        self.same_grid(other)?;
        let lat = &self.lattice;
        let ns = lat.n_space();
        let w = &self.quadrature.weights;
        let per_dir: Vec<S> = (0..w.len())
            .map(|j| {
                dot(&self.values[j * ns..(j + 1) * ns], &other.values[j * ns..(j + 1) * ns]) * w[j]
            })
            .collect();
        Ok(crate::scalar::pairwise_sum(&per_dir) * lat.dx().powi(3))
    }
}

impl<S: Scalar> L2Inner for CauchyData<S> {
    type Value = S;

    fn l2_inner(&self, other: &Self) -> Result<S> {
        if *self.lattice != *other.lattice {
            return Err(Error::ShapeMismatch("Cauchy data on different lattices".into()));
        }
        let dv = self.lattice.dx().powi(3);
        Ok((dot(&self.f1, &other.f1) + dot(&self.f2, &other.f2)) * dv)
    }
}

/// `l2_inner` as a free function.
pub fn l2_inner<T: L2Inner>(a: &T, b: &T) -> Result<T::Value> {
    a.l2_inner(b)
}

/// Relative L2 distance `|a - b| / |b|`.
pub fn rel_l2<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    let num: f64 = pairwise_map_sum(a.len(), &|i| (a[i] - b[i]).norm_sqr());
    let den: f64 = pairwise_map_sum(b.len(), &|i| b[i].norm_sqr());
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

/// Discrete `H^s` norm on the padded periodic embedding:
/// `(sum_zeta (1 + |zeta|^2)^s |f^(zeta)|^2 dV / N)^(1/2)`, which reduces to the
/// L2 norm at `s = 0` by Parseval.
pub fn sobolev_norm<S: Scalar>(field: &ScalarField<S>, s: f64) -> f64 {
    let lat = &field.lattice;
    let padded = field.padded();
    let mut data: Vec<C64> = padded.values.iter().map(|v| v.to_complex()).collect();
    let nt = lat.n_total();
    let n = lat.n_x;
    FftNd::new(&[nt, n, n, n]).forward(&mut data);
    let ns = lat.n_space();
    let xi2 = spatial_freq_sq(lat);
    let tau: Vec<f64> = (0..nt).map(|k| lat.temporal_freq(k)).collect();
    let total: f64 = pairwise_map_sum(data.len(), &|i| {
        let k = i / ns;
        let w = (1.0 + tau[k] * tau[k] + xi2[i % ns]).powf(s);
        w * data[i].norm_sqr()
    });
    (total * lat.dt() * lat.dx().powi(3) / data.len() as f64).sqrt()
}

/// Spatial `H^s` norm on each direction slice of ray data, combined in
/// L2 over the sphere with the quadrature weights.
pub fn sobolev_norm_mixed<S: Scalar>(g: &RayData<S>, s: f64) -> f64 {
    let lat = &g.lattice;
    let n = lat.n_x;
    let ns = lat.n_space();
    let plan = FftNd::new(&[n, n, n]);
    let xi2 = spatial_freq_sq(lat);
    let mut per_dir = Vec::with_capacity(g.quadrature.len());
    for j in 0..g.quadrature.len() {
        let mut data: Vec<C64> = g.dir(j).iter().map(|v| v.to_complex()).collect();
        plan.forward(&mut data);
        let t: f64 = pairwise_map_sum(ns, &|i| (1.0 + xi2[i]).powf(s) * data[i].norm_sqr());
        per_dir.push(t * g.quadrature.weights[j]);
    }
    let total = crate::scalar::pairwise_sum(&per_dir);
    (total * lat.dx().powi(3) / ns as f64).sqrt()
}

/// `|xi|^2` for every spatial DFT index.
pub fn spatial_freq_sq(lat: &Lattice) -> Vec<f64> {
    let n = lat.n_x;
    let k: Vec<f64> = (0..n).map(|i| lat.spatial_freq(i)).collect();
    let mut out = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                out.push(k[a] * k[a] + k[b] * k[b] + k[c] * k[c]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::TimeAxis;
    use std::sync::Arc;

    fn lat() -> Arc<Lattice> {
        Arc::new(Lattice::new(1.0, 5, 4.0, 8, 1.0).unwrap())
    }

    #[test]
    fn parseval_at_s_zero() {
        let l = lat();
        let f = ScalarField::from_fn(l, TimeAxis::Window, |t, x| (t * 3.0).sin() + x[0] * x[1] - x[2]);
        let a = sobolev_norm(&f, 0.0);
        let b = f.l2_norm();
        assert!((a - b).abs() < 1e-10 * b);
        assert!(sobolev_norm(&f, 2.0) >= a);
    }

    #[test]
    fn single_mode_weight() {
        let l = lat();
        let p = l.period();
        let (kt, kx) = (3.0, 2.0);
        let tau = 2.0 * std::f64::consts::PI * kt / p;
        let xi = 2.0 * std::f64::consts::PI * kx / l.box_len;
        let f = ScalarField::from_fn(l, TimeAxis::Padded, |t, x| C64::from_polar(1.0, tau * t + xi * x[1]));
        let s = 1.5;
        let want = (1.0 + tau * tau + xi * xi).powf(s / 2.0) * f.l2_norm();
        let got = sobolev_norm(&f, s);
        assert!((got - want).abs() < 1e-10 * want);
    }

    #[test]
    fn inner_product_properties() {
        let l = lat();
        let f = ScalarField::from_fn(l.clone(), TimeAxis::Window, |t, x| C64::new(t + x[0], x[1] - t));
        let g = ScalarField::from_fn(l.clone(), TimeAxis::Window, |t, x| C64::new(x[2] * t, 1.0 + x[0]));
        let fg = f.l2_inner(&g).unwrap();
        let gf = g.l2_inner(&f).unwrap();
        assert!((fg - gf.conj()).norm() < 1e-12 * fg.norm());
        assert!(f.l2_inner(&f).unwrap().re > 0.0);
        let a = ScalarField::from_fn(l.clone(), TimeAxis::Window, |_, x| if x[0] < 2.0 { 1.0 } else { 0.0 });
        let b = ScalarField::from_fn(l, TimeAxis::Window, |_, x| if x[0] >= 2.0 { 1.0 } else { 0.0 });
        assert_eq!(a.l2_inner(&b).unwrap(), 0.0);
    }
}
