//! Spacetime DFT on the padded lattice and the cone-geometry multipliers:
//! the projector `phi(D)`, the normal-operator multiplier
//! `c_conv phi / |xi|` and its inverse `Q = phi |xi| / c_conv`.
//!
//! Convention: `f^(tau, xi) = sum f(t, x) exp(-i (t tau + x . xi))` with
//! angular frequencies `tau = 2 pi k / period`, `xi = 2 pi m / box_len`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::field::ScalarField;
use crate::lattice::{Lattice, TimeAxis};
use crate::scalar::{Scalar, C64};

/// Normal-operator constant for the angular-frequency convention.
pub const DEFAULT_C_CONV: f64 = 4.0 * PI * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeLabel {
    Spacelike,
    Timelike,
    LightlikeBand,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeClassifier {
    /// Relative width of the light-like band.
    pub eta: f64,
}

impl Default for ConeClassifier {
    fn default() -> Self {
        ConeClassifier { eta: 0.0 }
    }
}

impl ConeClassifier {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(Error::InvalidArgument(format!("eta must be >= 0 (got {eta})")));
        }
        Ok(ConeClassifier { eta })
    }

    pub fn classify(&self, tau: f64, xi: f64) -> ConeLabel {
        let tau = tau.abs();
        let norm = (tau * tau + xi * xi).sqrt();
        if norm == 0.0 {
            ConeLabel::Zero
        } else if xi - tau > self.eta * norm {
            ConeLabel::Spacelike
        } else if tau - xi > self.eta * norm {
            ConeLabel::Timelike
        } else {
            ConeLabel::LightlikeBand
        }
    }

    /// `phi(tau, xi)`: 0 on time-like frequencies, 1 elsewhere.
    pub fn phi(&self, tau: f64, xi: f64) -> f64 {
        if self.classify(tau, xi) == ConeLabel::Timelike {
            0.0
        } else {
            1.0
        }
    }
}

/// DFT coefficients on the padded lattice, layout `[tau][xi_x][xi_y][xi_z]`.
#[derive(Clone, Debug)]
pub struct SpectralField {
    pub lattice: Arc<Lattice>,
    pub coeffs: Vec<C64>,
}

impl SpectralField {
    pub fn tau(&self, k: usize) -> f64 {
        self.lattice.temporal_freq(k)
    }

    /// `|xi|` for spatial index `s`.
    pub fn xi_abs(&self, s: usize) -> f64 {
        xi_vec(&self.lattice, s).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn xi_vec(lat: &Lattice, s: usize) -> [f64; 3] {
    let n = lat.n_x;
    [
        lat.spatial_freq(s / (n * n)),
        lat.spatial_freq((s / n) % n),
        lat.spatial_freq(s % n),
    ]
}

/// Converts back from complex; real scalars keep the real part.
fn from_c<S: Scalar>(z: C64) -> S {
    if S::IS_COMPLEX {
        S::from_complex(z).unwrap()
    } else {
        S::from_re(z.re)
    }
}

/// Precomputed plan and frequency tables for one lattice.
pub struct Spectral {
    pub lattice: Arc<Lattice>,
    plan: FftNd,
    tau: Vec<f64>,
    xi: Vec<[f64; 3]>,
    xi_abs: Vec<f64>,
    pub classifier: ConeClassifier,
    pub c_conv: f64,
}

impl Spectral {
    pub fn new(lattice: Arc<Lattice>, classifier: ConeClassifier) -> Self {
        let n = lattice.n_x;
        let nt = lattice.n_total();
        let plan = FftNd::new(&[nt, n, n, n]);
        let tau = (0..nt).map(|k| lattice.temporal_freq(k)).collect();
        let xi: Vec<[f64; 3]> = (0..lattice.n_space()).map(|s| xi_vec(&lattice, s)).collect();
        let xi_abs = xi.iter().map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).collect();
        Spectral {
            lattice,
            plan,
            tau,
            xi,
            xi_abs,
            classifier,
            c_conv: DEFAULT_C_CONV,
        }
    }

    pub fn with_c_conv(mut self, c: f64) -> Self {
        self.c_conv = c;
        self
    }

    pub fn label(&self, k: usize, s: usize) -> ConeLabel {
        self.classifier.classify(self.tau[k], self.xi_abs[s])
    }

    pub fn dft<S: Scalar>(&self, f: &ScalarField<S>) -> Result<SpectralField> {
        if *f.lattice != *self.lattice {
            return Err(Error::ShapeMismatch("field on another lattice".into()));
        }
        let p = f.padded();
        let mut data: Vec<C64> = p.values.iter().map(|v| v.to_complex()).collect();
        self.plan.forward(&mut data);
        Ok(SpectralField {
            lattice: self.lattice.clone(),
            coeffs: data,
        })
    }

    pub fn idft(&self, g: &SpectralField) -> ScalarField<C64> {
        let mut data = g.coeffs.clone();
        self.plan.inverse(&mut data);
        ScalarField {
            lattice: self.lattice.clone(),
            axis: TimeAxis::Padded,
            values: data,
            support_tag: None,
        }
    }

    /// Multiplies every coefficient by `m(k, s)` (temporal index, spatial index).
    pub fn multiply<F>(&self, g: &mut SpectralField, m: F)
    where
        F: Fn(usize, usize) -> C64 + Sync,
    {
        let ns = self.lattice.n_space();
        g.coeffs.par_chunks_mut(ns).enumerate().for_each(|(k, row)| {
            for (s, v) in row.iter_mut().enumerate() {
                *v *= m(k, s);
            }
        });
    }

    /// Applies a real multiplier symmetric under `zeta -> -zeta`, so real
    /// input stays real. The result lives on the padded axis.
    fn apply_real<S: Scalar, F>(&self, f: &ScalarField<S>, m: F) -> Result<ScalarField<S>>
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let mut g = self.dft(f)?;
        self.multiply(&mut g, |k, s| C64::new(m(k, s), 0.0));
        let out = self.idft(&g);
        Ok(ScalarField {
            lattice: self.lattice.clone(),
            axis: TimeAxis::Padded,
            values: out.values.into_iter().map(from_c).collect(),
            support_tag: None,
        })
    }

    pub fn phi(&self, k: usize, s: usize) -> f64 {
        self.classifier.phi(self.tau[k], self.xi_abs[s])
    }

    pub fn phi_apply<S: Scalar>(&self, f: &ScalarField<S>) -> Result<ScalarField<S>> {
        self.apply_real(f, |k, s| self.phi(k, s))
    }

    /// Symbol `c_conv phi / |xi|`, zero at `xi = 0`.
    pub fn n_symbol(&self, k: usize, s: usize) -> f64 {
        let x = self.xi_abs[s];
        if x == 0.0 {
            0.0
        } else {
            self.c_conv * self.phi(k, s) / x
        }
    }

    /// Symbol `phi |xi| / c_conv`.
    pub fn q_symbol(&self, k: usize, s: usize) -> f64 {
        self.phi(k, s) * self.xi_abs[s] / self.c_conv
    }

    pub fn n_multiplier_apply<S: Scalar>(&self, f: &ScalarField<S>) -> Result<ScalarField<S>> {
        self.apply_real(f, |k, s| self.n_symbol(k, s))
    }

    pub fn q_apply<S: Scalar>(&self, f: &ScalarField<S>) -> Result<ScalarField<S>> {
        self.apply_real(f, |k, s| self.q_symbol(k, s))
    }

    /// `Q phi`, the back-projection filter, in a single transform.
    pub fn q_phi_apply<S: Scalar>(&self, f: &ScalarField<S>) -> Result<ScalarField<S>> {
        self.apply_real(f, |k, s| self.q_symbol(k, s) * self.phi(k, s))
    }

    /// Removes the `xi = 0` (spatial mean) mode of every time slice.
    pub fn remove_spatial_mean<S: Scalar>(&self, f: &ScalarField<S>) -> ScalarField<S> {
        let mut out = f.clone();
        let ns = self.lattice.n_space() as f64;
        for k in 0..out.n_time() {
            let sl = out.slice_mut(k);
            let mut m = S::zero();
            for &v in sl.iter() {
                m += v;
            }
            let m = m * (1.0 / ns);
            sl.iter_mut().for_each(|v| *v -= m);
        }
        out
    }

    /// Temporal angular frequency of index `k`.
    pub fn tau(&self, k: usize) -> f64 {
        self.tau[k]
    }

    pub fn xi(&self, s: usize) -> [f64; 3] {
        self.xi[s]
    }

    pub fn xi_abs(&self, s: usize) -> f64 {
        self.xi_abs[s]
    }

    /// Energy fractions (spacelike, timelike, band + zero) of a field.
    pub fn cone_energy(&self, f: &ScalarField<f64>) -> Result<[f64; 3]> {
        let g = self.dft(f)?;
        let ns = self.lattice.n_space();
        let mut e = [0.0; 3];
        for (i, v) in g.coeffs.iter().enumerate() {
            let idx = match self.label(i / ns, i % ns) {
                ConeLabel::Spacelike => 0,
                ConeLabel::Timelike => 1,
                _ => 2,
            };
            e[idx] += v.norm_sqr();
        }
        let tot: f64 = e.iter().sum();
        if tot > 0.0 {
            e.iter_mut().for_each(|v| *v /= tot);
        }
        Ok(e)
    }
}

pub fn dft<S: Scalar>(f: &ScalarField<S>) -> Result<SpectralField> {
    Spectral::new(f.lattice.clone(), ConeClassifier::default()).dft(f)
}

pub fn idft(g: &SpectralField) -> ScalarField<C64> {
    Spectral::new(g.lattice.clone(), ConeClassifier::default()).idft(g)
}

pub fn phi_apply<S: Scalar>(f: &ScalarField<S>, cls: &ConeClassifier) -> Result<ScalarField<S>> {
    Spectral::new(f.lattice.clone(), *cls).phi_apply(f)
}

pub fn n_multiplier_apply<S: Scalar>(
    f: &ScalarField<S>,
    cls: &ConeClassifier,
    c_conv: f64,
) -> Result<ScalarField<S>> {
    Spectral::new(f.lattice.clone(), *cls)
        .with_c_conv(c_conv)
        .n_multiplier_apply(f)
}

pub fn q_apply<S: Scalar>(
    f: &ScalarField<S>,
    cls: &ConeClassifier,
    c_conv: f64,
) -> Result<ScalarField<S>> {
    Spectral::new(f.lattice.clone(), *cls).with_c_conv(c_conv).q_apply(f)
}

/// Surface area of the unit sphere `S^{m}` in `R^{m+1}`.
pub fn sphere_area(m: usize) -> f64 {
    // |S^m| = 2 pi^{(m+1)/2} / Gamma((m+1)/2)
    let a = (m + 1) as f64 / 2.0;
    2.0 * PI.powf(a) / gamma_half_integer(m + 1)
}

/// `Gamma(n / 2)` for a positive integer `n`.
fn gamma_half_integer(n: usize) -> f64 {
    if n % 2 == 0 {
        (1..n / 2).map(|k| k as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x < n as f64 / 2.0 - 1e-12 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// `C_n (|xi|^2 - tau^2)_+^{(n-3)/2} / |xi|^{n-2}` with `C_n = 2 pi |S^{n-2}|`.
pub fn general_n_multiplier(tau: f64, xi: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("dimension n must be >= 2 (got {n})")));
    }
    if xi == 0.0 {
        return Err(Error::InvalidArgument("multiplier undefined at xi = 0".into()));
    }
    let xi = xi.abs();
    let d = xi * xi - tau * tau;
    if d <= 0.0 {
        return Ok(0.0);
    }
    let c = 2.0 * PI * sphere_area(n - 2);
    Ok(c * d.powf((n as f64 - 3.0) / 2.0) / xi.powf(n as f64 - 2.0))
}
