//! Field containers sampled on a [`Lattice`] (and a [`DirectionQuadrature`]
//! for kinetic and ray-space fields).
//!
//! Layouts are row-major with `z` fastest:
//! * scalar: `[t][x][y][z]`
//! * kinetic: `[dir][t][x][y][z]`
//! * ray data: `[dir][x][y][z]`

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, TimeAxis};
use crate::quadrature::DirectionQuadrature;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ScalarField<S: Scalar = f64> {
    pub lattice: Arc<Lattice>,
    pub axis: TimeAxis,
    pub values: Vec<S>,
    pub support_tag: Option<String>,
}

#[derive(Clone, Debug)]
pub struct KineticField<S: Scalar = f64> {
    pub lattice: Arc<Lattice>,
    pub quadrature: Arc<DirectionQuadrature>,
    pub values: Vec<S>,
}

/// Values of a (weighted) light ray transform on `R^3 x S^2`. Rays are
/// parametrised by the point `x` where they cross the slice
/// `t = base_time`, i.e. the ray is `s -> (s, x + (s - base_time) theta)`.
#[derive(Clone, Debug)]
pub struct RayData<S: Scalar = f64> {
    pub lattice: Arc<Lattice>,
    pub quadrature: Arc<DirectionQuadrature>,
    pub base_time: f64,
    pub values: Vec<S>,
}

/// Measurement slice `u(T, x, theta)`; same container as ray data with
/// `base_time = t_final`.
pub type RaySlice<S = f64> = RayData<S>;

/// Cauchy data `(f1, f2) = (u, du/dt)` on `t = 0`.
#[derive(Clone, Debug)]
pub struct CauchyData<S: Scalar = f64> {
    pub lattice: Arc<Lattice>,
    pub f1: Vec<S>,
    pub f2: Vec<S>,
    /// Radius (about the box centre) of the declared support.
    pub support_radius: Option<f64>,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {got} values, lattice expects {want}"
        )));
    }
    Ok(())
}

fn check_finite<S: Scalar>(what: &str, v: &[S]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

macro_rules! linear_ops {
    ($t:ident) => {
        impl<S: Scalar> $t<S> {
            pub fn scale(&mut self, a: S) {
                for v in &mut self.values {
                    *v = *v * a;
                }
            }

            pub fn scaled(&self, a: S) -> Self {
                let mut out = self.clone();
                out.scale(a);
                out
            }

            /// `self += a * other`
            pub fn axpy(&mut self, a: S, other: &Self) -> Result<()> {
                check_len(stringify!($t), other.values.len(), self.values.len())?;
                for (v, &o) in self.values.iter_mut().zip(&other.values) {
                    *v += a * o;
                }
                Ok(())
            }

            pub fn max_abs(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            pub fn check_finite(&self) -> Result<()> {
                check_finite(stringify!($t), &self.values)
            }

            pub fn zeros_like(&self) -> Self {
                let mut out = self.clone();
                out.values.iter_mut().for_each(|v| *v = S::zero());
                out
            }
        }
    };
}

linear_ops!(ScalarField);
linear_ops!(KineticField);
linear_ops!(RayData);

impl<S: Scalar> ScalarField<S> {
    pub fn zeros(lattice: Arc<Lattice>, axis: TimeAxis) -> Self {
        let n = lattice.n_time(axis) * lattice.n_space();
        ScalarField {
            lattice,
            axis,
            values: vec![S::zero(); n],
            support_tag: None,
        }
    }

    pub fn from_values(lattice: Arc<Lattice>, axis: TimeAxis, values: Vec<S>) -> Result<Self> {
        check_len("scalar field", values.len(), lattice.n_time(axis) * lattice.n_space())?;
        check_finite("scalar field", &values)?;
        Ok(ScalarField {
            lattice,
            axis,
            values,
            support_tag: None,
        })
    }

    /// Samples `f(t, x)` at every lattice point.
    pub fn from_fn<F>(lattice: Arc<Lattice>, axis: TimeAxis, f: F) -> Self
    where
        F: Fn(f64, [f64; 3]) -> S,
    {
        let nt = lattice.n_time(axis);
        let ns = lattice.n_space();
        let mut values = Vec::with_capacity(nt * ns);
        for k in 0..nt {
            let t = lattice.time_of(axis, k);
            for s in 0..ns {
                values.push(f(t, lattice.point(s)));
            }
        }
        ScalarField {
            lattice,
            axis,
            values,
            support_tag: None,
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.support_tag = Some(tag.into());
        self
    }

    pub fn n_time(&self) -> usize {
        self.lattice.n_time(self.axis)
    }

    pub fn slice(&self, k: usize) -> &[S] {
        let ns = self.lattice.n_space();
        &self.values[k * ns..(k + 1) * ns]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [S] {
        let ns = self.lattice.n_space();
        &mut self.values[k * ns..(k + 1) * ns]
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.axis != other.axis || *self.lattice != *other.lattice {
            return Err(Error::ShapeMismatch(
                "scalar fields live on different lattices or time axes".into(),
            ));
        }
        Ok(())
    }

    /// Zero-extends a window field onto the padded periodic axis.
    pub fn padded(&self) -> Self {
        match self.axis {
            TimeAxis::Padded => self.clone(),
            TimeAxis::Window => {
                let mut out = ScalarField::zeros(self.lattice.clone(), TimeAxis::Padded);
                out.values[..self.values.len()].copy_from_slice(&self.values);
                out.support_tag = self.support_tag.clone();
                out
            }
        }
    }

    /// Restriction to the `[0, t_final]` window.
    pub fn window(&self) -> Self {
        match self.axis {
            TimeAxis::Window => self.clone(),
            TimeAxis::Padded => {
                let n = self.lattice.n_t * self.lattice.n_space();
                ScalarField {
                    lattice: self.lattice.clone(),
                    axis: TimeAxis::Window,
                    values: self.values[..n].to_vec(),
                    support_tag: self.support_tag.clone(),
                }
            }
        }
    }

    pub fn map<T: Scalar, F: Fn(S) -> T>(&self, f: F) -> ScalarField<T> {
        ScalarField {
            lattice: self.lattice.clone(),
            axis: self.axis,
            values: self.values.iter().map(|&v| f(v)).collect(),
            support_tag: self.support_tag.clone(),
        }
    }

    /// Pointwise multiplication by a function of time.
    pub fn mul_time<F: Fn(f64) -> S>(&mut self, f: F) {
        let ns = self.lattice.n_space();
        for k in 0..self.n_time() {
            let w = f(self.lattice.time_of(self.axis, k));
            for v in &mut self.values[k * ns..(k + 1) * ns] {
                *v = *v * w;
            }
        }
    }

    /// Fails if the field carries mass outside the declared support ball,
    /// or (on the padded axis) outside `[0, t_final]`.
    pub fn check_support(&self) -> Result<()> {
        let lat = &self.lattice;
        let tol = 1e-12 * self.max_abs().max(f64::MIN_POSITIVE);
        let r = lat.support_radius() + 1e-9 * lat.box_len;
        let ns = lat.n_space();
        for k in 0..self.n_time() {
            let t = lat.time_of(self.axis, k);
            let in_time = t >= -1e-12 && t <= lat.t_final + 1e-12;
            for s in 0..ns {
                let v = self.values[k * ns + s];
                if v.abs() > tol && (!in_time || lat.dist_from_center(lat.point(s)) > r) {
                    return Err(Error::SupportViolation(format!(
                        "value {:.3e} at t = {t:.4}, x = {:?} lies outside the declared support (radius {:.4})",
                        v.abs(),
                        lat.point(s),
                        lat.support_radius()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl ScalarField<f64> {
    pub fn to_complex(&self) -> ScalarField<crate::scalar::C64> {
        self.map(|v| crate::scalar::C64::new(v, 0.0))
    }
}

impl<S: Scalar> KineticField<S> {
    pub fn zeros(lattice: Arc<Lattice>, quadrature: Arc<DirectionQuadrature>) -> Self {
        let n = quadrature.len() * lattice.n_t * lattice.n_space();
        KineticField {
            lattice,
            quadrature,
            values: vec![S::zero(); n],
        }
    }

    pub fn from_values(
        lattice: Arc<Lattice>,
        quadrature: Arc<DirectionQuadrature>,
        values: Vec<S>,
    ) -> Result<Self> {
        check_len(
            "kinetic field",
            values.len(),
            quadrature.len() * lattice.n_t * lattice.n_space(),
        )?;
        check_finite("kinetic field", &values)?;
        Ok(KineticField {
            lattice,
            quadrature,
            values,
        })
    }

    pub fn from_fn<F>(lattice: Arc<Lattice>, quadrature: Arc<DirectionQuadrature>, f: F) -> Self
    where
        F: Fn(f64, [f64; 3], [f64; 3]) -> S,
    {
        let mut out = Self::zeros(lattice.clone(), quadrature.clone());
        let (nt, ns) = (lattice.n_t, lattice.n_space());
        for j in 0..quadrature.len() {
            let th = quadrature.nodes[j];
            for k in 0..nt {
                let t = k as f64 * lattice.dt();
                for s in 0..ns {
                    out.values[(j * nt + k) * ns + s] = f(t, lattice.point(s), th);
                }
            }
        }
        out
    }

    /// Lifts a scalar field to a direction-independent kinetic field.
    pub fn from_scalar(f: &ScalarField<S>, quadrature: Arc<DirectionQuadrature>) -> Result<Self> {
        if f.axis != TimeAxis::Window {
            return Err(Error::ShapeMismatch(
                "kinetic fields live on the time window".into(),
            ));
        }
        let mut values = Vec::with_capacity(quadrature.len() * f.values.len());
        for _ in 0..quadrature.len() {
            values.extend_from_slice(&f.values);
        }
        Ok(KineticField {
            lattice: f.lattice.clone(),
            quadrature,
            values,
        })
    }

    #[inline]
    pub fn block(&self) -> usize {
        self.lattice.n_t * self.lattice.n_space()
    }

    pub fn dir(&self, j: usize) -> &[S] {
        let b = self.block();
        &self.values[j * b..(j + 1) * b]
    }

    pub fn dir_mut(&mut self, j: usize) -> &mut [S] {
        let b = self.block();
        &mut self.values[j * b..(j + 1) * b]
    }

    pub fn slice(&self, j: usize, k: usize) -> &[S] {
        let ns = self.lattice.n_space();
        let off = (j * self.lattice.n_t + k) * ns;
        &self.values[off..off + ns]
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if *self.lattice != *other.lattice || *self.quadrature != *other.quadrature {
            return Err(Error::ShapeMismatch(
                "kinetic fields live on different grids".into(),
            ));
        }
        Ok(())
    }
}

impl<S: Scalar> RayData<S> {
    pub fn zeros(
        lattice: Arc<Lattice>,
        quadrature: Arc<DirectionQuadrature>,
        base_time: f64,
    ) -> Self {
        let n = quadrature.len() * lattice.n_space();
        RayData {
            lattice,
            quadrature,
            base_time,
            values: vec![S::zero(); n],
        }
    }

    pub fn from_values(
        lattice: Arc<Lattice>,
        quadrature: Arc<DirectionQuadrature>,
        base_time: f64,
        values: Vec<S>,
    ) -> Result<Self> {
        check_len("ray data", values.len(), quadrature.len() * lattice.n_space())?;
        check_finite("ray data", &values)?;
        Ok(RayData {
            lattice,
            quadrature,
            base_time,
            values,
        })
    }

    pub fn from_fn<F>(
        lattice: Arc<Lattice>,
        quadrature: Arc<DirectionQuadrature>,
        base_time: f64,
        f: F,
    ) -> Self
    where
        F: Fn([f64; 3], [f64; 3]) -> S,
    {
        let mut out = Self::zeros(lattice.clone(), quadrature.clone(), base_time);
        let ns = lattice.n_space();
        for j in 0..quadrature.len() {
            for s in 0..ns {
                out.values[j * ns + s] = f(lattice.point(s), quadrature.nodes[j]);
            }
        }
        out
    }

    pub fn dir(&self, j: usize) -> &[S] {
        let ns = self.lattice.n_space();
        &self.values[j * ns..(j + 1) * ns]
    }

    pub fn dir_mut(&mut self, j: usize) -> &mut [S] {
        let ns = self.lattice.n_space();
        &mut self.values[j * ns..(j + 1) * ns]
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if *self.lattice != *other.lattice
            || *self.quadrature != *other.quadrature
            || (self.base_time - other.base_time).abs() > 1e-12
        {
            return Err(Error::ShapeMismatch(
                "ray data on different grids or ray parametrisations".into(),
            ));
        }
        Ok(())
    }
}

impl<S: Scalar> CauchyData<S> {
    pub fn zeros(lattice: Arc<Lattice>) -> Self {
        let n = lattice.n_space();
        CauchyData {
            lattice,
            f1: vec![S::zero(); n],
            f2: vec![S::zero(); n],
            support_radius: None,
        }
    }

    pub fn new(lattice: Arc<Lattice>, f1: Vec<S>, f2: Vec<S>) -> Result<Self> {
        let n = lattice.n_space();
        check_len("cauchy f1", f1.len(), n)?;
        check_len("cauchy f2", f2.len(), n)?;
        check_finite("cauchy f1", &f1)?;
        check_finite("cauchy f2", &f2)?;
        Ok(CauchyData {
            lattice,
            f1,
            f2,
            support_radius: None,
        })
    }

    pub fn from_fn<F1, F2>(lattice: Arc<Lattice>, f1: F1, f2: F2) -> Self
    where
        F1: Fn([f64; 3]) -> S,
        F2: Fn([f64; 3]) -> S,
    {
        let ns = lattice.n_space();
        let a = (0..ns).map(|s| f1(lattice.point(s))).collect();
        let b = (0..ns).map(|s| f2(lattice.point(s))).collect();
        CauchyData {
            lattice,
            f1: a,
            f2: b,
            support_radius: None,
        }
    }

    pub fn with_support(mut self, radius: f64) -> Self {
        self.support_radius = Some(radius);
        self
    }

    /// Cauchy data must sit far enough inside the support ball that the
    /// wave it launches stays inside for the whole window.
    pub fn check_support(&self) -> Result<()> {
        let lat = &self.lattice;
        let allowed = lat.support_radius() - lat.t_final;
        if let Some(r) = self.support_radius {
            if r > allowed + 1e-12 {
                return Err(Error::SupportViolation(format!(
                    "Cauchy support radius {r} exceeds {allowed} (support radius minus t_final)"
                )));
            }
        }
        let scale = self
            .f1
            .iter()
            .chain(&self.f2)
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let rmax = self.support_radius.unwrap_or(allowed).min(allowed) + 1e-9 * lat.box_len;
        for s in 0..lat.n_space() {
            let big = self.f1[s].abs().max(self.f2[s].abs()) > 1e-12 * scale;
            if big && lat.dist_from_center(lat.point(s)) > rmax {
                return Err(Error::SupportViolation(format!(
                    "Cauchy data nonzero at {:?}, outside radius {rmax:.4}",
                    lat.point(s)
                )));
            }
        }
        Ok(())
    }

    pub fn axpy(&mut self, a: S, other: &Self) {
        for (v, &o) in self.f1.iter_mut().zip(&other.f1) {
            *v += a * o;
        }
        for (v, &o) in self.f2.iter_mut().zip(&other.f2) {
            *v += a * o;
        }
    }

    pub fn scale(&mut self, a: S) {
        self.f1.iter_mut().chain(self.f2.iter_mut()).for_each(|v| *v = *v * a);
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.lattice.clone());
        z.support_radius = self.support_radius;
        z
    }
}
