//! Forward transport: explicit integration along characteristics, the
//! scattering operator, Neumann iteration for the full Boltzmann source
//! problem, and the measurement `u(T, ., .)`.
//!
//! Characteristics are discretised on the time grid: the value at
//! `(t_i, x, theta)` collects the source at `(t_j, x - (t_i - t_j) theta)`
//! for `j <= i` with trapezoid weights. The absorption factor is split as
//! `exp(-A_i(x)) * exp(A_j(y))` where `A_i(x)` is the accumulated
//! absorption along the characteristic ending at `(t_i, x)`; for
//! time-only absorption this is exact, in general it is a second-order
//! approximation that keeps every operator an exact discrete transpose of
//! its adjoint.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{KineticField, RayData, RaySlice, ScalarField};
use crate::interp::{interp_spacetime, shift_add, SpacetimeSample};
use crate::lattice::{Lattice, TimeAxis};
use crate::norm::L2Inner;
use crate::quadrature::DirectionQuadrature;
use crate::scalar::{Scalar, C64};

pub(crate) fn lambda_as<S: Scalar>(lambda: C64, what: &str) -> Result<S> {
    S::from_complex(lambda).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "complex multiplier {what} = {lambda} needs complex-valued fields"
        ))
    })
}

fn exp_scaled<S: Scalar>(lambda: C64, a: f64) -> S {
    if S::IS_COMPLEX {
        S::from_complex((lambda * a).exp()).unwrap()
    } else {
        S::from_re((lambda.re * a).exp())
    }
}

/// Trapezoid weight of node `j` on `[0, t_i]`.
#[inline]
pub(crate) fn trap(dt: f64, i: usize, j: usize) -> f64 {
    if i == 0 {
        0.0
    } else if j == 0 || j == i {
        0.5 * dt
    } else {
        dt
    }
}

#[derive(Clone, Debug)]
pub enum AbsorptionKind {
    /// `sigma(t_k)` for each window sample; constant in space and direction.
    TimeOnly(Vec<f64>),
    /// `sigma(t, x, theta)` on the lattice times the quadrature.
    Full(KineticField<f64>),
}

#[derive(Clone, Debug)]
pub struct AbsorptionField {
    pub lattice: Arc<Lattice>,
    pub kind: AbsorptionKind,
    /// Scalar multiplier `lambda_sigma`; the effective absorption is `lambda * sigma`.
    pub lambda: C64,
}

impl AbsorptionField {
    pub fn zero(lattice: Arc<Lattice>) -> Self {
        let n = lattice.n_t;
        Self::time_only(lattice, vec![0.0; n]).unwrap()
    }

    pub fn time_only(lattice: Arc<Lattice>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.n_t {
            return Err(Error::ShapeMismatch(format!(
                "time-only absorption has {} samples, lattice has n_t = {}",
                values.len(),
                lattice.n_t
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("absorption".into()));
        }
        Ok(AbsorptionField {
            lattice,
            kind: AbsorptionKind::TimeOnly(values),
            lambda: C64::new(1.0, 0.0),
        })
    }

    pub fn time_fn<F: Fn(f64) -> f64>(lattice: Arc<Lattice>, f: F) -> Result<Self> {
        let v = (0..lattice.n_t).map(|k| f(k as f64 * lattice.dt())).collect();
        Self::time_only(lattice, v)
    }

    pub fn constant(lattice: Arc<Lattice>, c: f64) -> Result<Self> {
        Self::time_fn(lattice, |_| c)
    }

    /// Space- and direction-dependent absorption; must vanish outside the
    /// support ball.
    pub fn full(sigma: KineticField<f64>) -> Result<Self> {
        sigma.check_finite()?;
        check_kinetic_support(&sigma, "absorption")?;
        Ok(AbsorptionField {
            lattice: sigma.lattice.clone(),
            kind: AbsorptionKind::Full(sigma),
            lambda: C64::new(1.0, 0.0),
        })
    }

    pub fn with_lambda(mut self, lambda: C64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn is_time_only(&self) -> bool {
        matches!(self.kind, AbsorptionKind::TimeOnly(_))
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == C64::new(0.0, 0.0)
            || match &self.kind {
                AbsorptionKind::TimeOnly(v) => v.iter().all(|&x| x == 0.0),
                AbsorptionKind::Full(s) => s.values.iter().all(|&x| x == 0.0),
            }
    }

    fn check_grid(&self, lat: &Lattice, q: Option<&DirectionQuadrature>) -> Result<()> {
        if *self.lattice != *lat {
            return Err(Error::ShapeMismatch("absorption lives on another lattice".into()));
        }
        if let (AbsorptionKind::Full(s), Some(q)) = (&self.kind, q) {
            if *s.quadrature != *q {
                return Err(Error::ShapeMismatch(
                    "absorption uses another direction quadrature".into(),
                ));
            }
        }
        Ok(())
    }

    /// Cumulative trapezoid integral `A(t_i) = int_0^{t_i} sigma` for the
    /// time-only case.
    fn cumulative_time(&self) -> Option<Vec<f64>> {
        match &self.kind {
            AbsorptionKind::TimeOnly(v) => {
                let dt = self.lattice.dt();
                let mut a = vec![0.0; v.len()];
                for i in 1..v.len() {
                    a[i] = a[i - 1] + 0.5 * dt * (v[i - 1] + v[i]);
                }
                Some(a)
            }
            AbsorptionKind::Full(_) => None,
        }
    }

    /// Characteristic weights `exp(lambda A)` / `exp(-lambda A)` for direction `j`.
    pub(crate) fn dir_weights<S: Scalar>(&self, j: usize) -> Result<DirWeights<S>> {
        lambda_as::<S>(self.lambda, "lambda_sigma")?;
        if self.is_zero() {
            return Ok(DirWeights::Unit);
        }
        let lam = self.lambda;
        match &self.kind {
            AbsorptionKind::TimeOnly(_) => {
                let a = self.cumulative_time().unwrap();
                Ok(DirWeights::Time {
                    pre: a.iter().map(|&x| exp_scaled(lam, x)).collect(),
                    post: a.iter().map(|&x| exp_scaled(lam, -x)).collect(),
                })
            }
            AbsorptionKind::Full(sigma) => {
                let a = accumulate_along(sigma, j);
                Ok(DirWeights::Field {
                    pre: a.iter().map(|&x| exp_scaled(lam, x)).collect(),
                    post: a.iter().map(|&x| exp_scaled(lam, -x)).collect(),
                })
            }
        }
    }

    /// Effective `lambda * sigma` at a lattice point.
    fn value_at<S: Scalar>(&self, dir: usize, k: usize, s: usize) -> S {
        let raw = match &self.kind {
            AbsorptionKind::TimeOnly(v) => v[k],
            AbsorptionKind::Full(f) => f.slice(dir, k)[s],
        };
        S::from_complex(self.lambda * raw).unwrap_or_else(|| S::from_re(self.lambda.re * raw))
    }
}

/// `A_i(x) = sum_{m <= i} c_im sigma_m(x - (t_i - t_m) theta)` for one direction.
fn accumulate_along(sigma: &KineticField<f64>, j: usize) -> Vec<f64> {
    let lat = &sigma.lattice;
    let (nt, ns, n) = (lat.n_t, lat.n_space(), lat.n_x);
    let (dt, dx) = (lat.dt(), lat.dx());
    let th = sigma.quadrature.nodes[j];
    let mut a = vec![0.0; nt * ns];
    for i in 1..nt {
        let out = &mut a[i * ns..(i + 1) * ns];
        for m in 0..=i {
            let lag = (i - m) as f64 * dt;
            let d = [-lag * th[0] / dx, -lag * th[1] / dx, -lag * th[2] / dx];
            shift_add(out, sigma.slice(j, m), n, d, trap(dt, i, m));
        }
    }
    a
}

fn check_kinetic_support<S: Scalar>(u: &KineticField<S>, what: &str) -> Result<()> {
    let lat = &u.lattice;
    let ns = lat.n_space();
    let tol = 1e-12 * u.max_abs().max(f64::MIN_POSITIVE);
    let r = lat.support_radius() + 1e-9 * lat.box_len;
    let outside: Vec<bool> = (0..ns).map(|s| lat.dist_from_center(lat.point(s)) > r).collect();
    for (i, v) in u.values.iter().enumerate() {
        if outside[i % ns] && v.abs() > tol {
            return Err(Error::SupportViolation(format!(
                "{what} is nonzero at {:?}, outside the support ball of radius {:.4}",
                lat.point(i % ns),
                lat.support_radius()
            )));
        }
    }
    Ok(())
}

/// Per-direction characteristic weights.
pub(crate) enum DirWeights<S: Scalar> {
    Unit,
    Time { pre: Vec<S>, post: Vec<S> },
    Field { pre: Vec<S>, post: Vec<S> },
}

impl<S: Scalar> DirWeights<S> {
    /// `dst *= pre_k` (or its conjugate).
    pub(crate) fn apply_pre(&self, k: usize, dst: &mut [S], conj: bool) {
        match self {
            DirWeights::Unit => {}
            DirWeights::Time { pre, .. } => scale_by(dst, pre[k], conj),
            DirWeights::Field { pre, .. } => {
                let ns = dst.len();
                mul_by(dst, &pre[k * ns..(k + 1) * ns], conj)
            }
        }
    }

    pub(crate) fn apply_post(&self, k: usize, dst: &mut [S], conj: bool) {
        match self {
            DirWeights::Unit => {}
            DirWeights::Time { post, .. } => scale_by(dst, post[k], conj),
            DirWeights::Field { post, .. } => {
                let ns = dst.len();
                mul_by(dst, &post[k * ns..(k + 1) * ns], conj)
            }
        }
    }
}

fn scale_by<S: Scalar>(dst: &mut [S], w: S, conj: bool) {
    let w = if conj { w.conj() } else { w };
    dst.iter_mut().for_each(|v| *v *= w);
}

fn mul_by<S: Scalar>(dst: &mut [S], w: &[S], conj: bool) {
    if conj {
        dst.iter_mut().zip(w).for_each(|(v, &w)| *v *= w.conj());
    } else {
        dst.iter_mut().zip(w).for_each(|(v, &w)| *v *= w);
    }
}

/// Grid displacement (in grid units) for a time lag along `theta`.
#[inline]
pub(crate) fn disp(th: [f64; 3], lag: f64, dx: f64) -> [f64; 3] {
    [lag * th[0] / dx, lag * th[1] / dx, lag * th[2] / dx]
}

/// `exp(-lambda int_s^t sigma(r, x0 + r theta, theta) dr)` with `x0 = x - t theta`,
/// trapezoid rule at step `<= dt`. For a space-dependent absorption `theta`
/// must be one of the quadrature nodes.
pub fn integrating_factor(
    sigma: &AbsorptionField,
    t: f64,
    s: f64,
    x: [f64; 3],
    theta: [f64; 3],
) -> Result<C64> {
    if s > t {
        return Err(Error::InvalidArgument(format!("s = {s} > t = {t}")));
    }
    let lat = &sigma.lattice;
    let eps = 1e-12 * lat.t_final;
    if s < -eps || t > lat.t_final + eps {
        return Err(Error::OutOfRange(format!(
            "[{s}, {t}] not inside [0, {}]",
            lat.t_final
        )));
    }
    if t - s <= 0.0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let steps = ((t - s) / lat.dt() - 1e-9).ceil().max(1.0) as usize;
    let h = (t - s) / steps as f64;
    let x0 = [x[0] - t * theta[0], x[1] - t * theta[1], x[2] - t * theta[2]];
    let eval = |r: f64| -> Result<f64> {
        let r = r.clamp(0.0, lat.t_final);
        match &sigma.kind {
            AbsorptionKind::TimeOnly(v) => {
                let tau = r / lat.dt();
                let k0 = (tau.floor() as usize).min(v.len() - 2);
                let a = tau - k0 as f64;
                Ok(v[k0] * (1.0 - a) + v[k0 + 1] * a)
            }
            AbsorptionKind::Full(f) => {
                let j = f
                    .quadrature
                    .nodes
                    .iter()
                    .position(|n| (0..3).all(|a| (n[a] - theta[a]).abs() < 1e-12))
                    .ok_or_else(|| {
                        Error::InvalidArgument(
                            "theta is not a node of the absorption's quadrature".into(),
                        )
                    })?;
                let p = [x0[0] + r * theta[0], x0[1] + r * theta[1], x0[2] + r * theta[2]];
                interp_spacetime(SpacetimeSample::Kinetic(f, j), r, p)
            }
        }
    };
    let mut acc = 0.5 * (eval(s)? + eval(t)?);
    for m in 1..steps {
        acc += eval(s + m as f64 * h)?;
    }
    Ok((-sigma.lambda * (acc * h)).exp())
}

#[derive(Clone, Debug)]
pub enum SourceKind<S: Scalar> {
    /// Direction-independent `f(t, x)` on the time window.
    Scalar(ScalarField<S>),
    /// `f(t, x, theta)`.
    Kinetic(KineticField<S>),
}

#[derive(Clone, Debug)]
pub struct SourceTerm<S: Scalar = f64> {
    pub kind: SourceKind<S>,
    pub quadrature: Arc<DirectionQuadrature>,
    /// Optional temporal cutoff `chi0(t_k)` multiplying the source.
    pub chi0: Option<Vec<f64>>,
}

impl<S: Scalar> SourceTerm<S> {
    pub fn scalar(f: ScalarField<S>, quadrature: Arc<DirectionQuadrature>) -> Result<Self> {
        if f.axis != TimeAxis::Window {
            return Err(Error::ShapeMismatch(
                "sources live on the time window, not the padded axis".into(),
            ));
        }
        Ok(SourceTerm {
            kind: SourceKind::Scalar(f),
            quadrature,
            chi0: None,
        })
    }

    pub fn kinetic(f: KineticField<S>) -> Self {
        let quadrature = f.quadrature.clone();
        SourceTerm {
            kind: SourceKind::Kinetic(f),
            quadrature,
            chi0: None,
        }
    }

    pub fn with_cutoff(mut self, chi0: Vec<f64>) -> Result<Self> {
        let lat = self.lattice();
        if chi0.len() != lat.n_t {
            return Err(Error::ShapeMismatch(format!(
                "cutoff has {} samples, n_t = {}",
                chi0.len(),
                lat.n_t
            )));
        }
        let peak = chi0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if chi0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cutoff".into()));
        }
        if peak == 0.0 {
            return Err(Error::InvalidArgument("cutoff is identically zero".into()));
        }
        if chi0[0].abs() > 1e-12 * peak || chi0[chi0.len() - 1].abs() > 1e-12 * peak {
            return Err(Error::SupportViolation(
                "cutoff must vanish at t = 0 and t = t_final".into(),
            ));
        }
        self.chi0 = Some(chi0);
        Ok(self)
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        match &self.kind {
            SourceKind::Scalar(f) => &f.lattice,
            SourceKind::Kinetic(f) => &f.lattice,
        }
    }

    pub fn check_support(&self) -> Result<()> {
        match &self.kind {
            SourceKind::Scalar(f) => f.check_support(),
            SourceKind::Kinetic(f) => check_kinetic_support(f, "source"),
        }
    }

    /// Writes the (cut-off) source slice for direction `dir`, time `k`.
    pub(crate) fn fill(&self, dir: usize, k: usize, out: &mut [S]) {
        let src = match &self.kind {
            SourceKind::Scalar(f) => f.slice(k),
            SourceKind::Kinetic(f) => f.slice(dir, k),
        };
        out.copy_from_slice(src);
        if let Some(c) = &self.chi0 {
            let w = c[k];
            out.iter_mut().for_each(|v| *v = *v * w);
        }
    }

    /// The source as a kinetic field (cutoff applied).
    pub fn to_kinetic(&self) -> KineticField<S> {
        let lat = self.lattice().clone();
        let mut out = KineticField::zeros(lat.clone(), self.quadrature.clone());
        let ns = lat.n_space();
        let nt = lat.n_t;
        for j in 0..self.quadrature.len() {
            for k in 0..nt {
                let off = (j * nt + k) * ns;
                self.fill(j, k, &mut out.values[off..off + ns]);
            }
        }
        out
    }
}

/// Smooth plateau cutoff: 1 on `[0.15 T, 0.85 T]`, 0 outside `(0.05 T, 0.95 T)`.
pub fn default_chi0(lat: &Lattice) -> Vec<f64> {
    let t_f = lat.t_final;
    (0..lat.n_t)
        .map(|k| {
            let t = k as f64 * lat.dt();
            let up = smooth_step((t - 0.05 * t_f) / (0.1 * t_f));
            let down = smooth_step((0.95 * t_f - t) / (0.1 * t_f));
            up * down
        })
        .collect()
}

/// `C^inf` step: 0 for `x <= 0`, 1 for `x >= 1`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

fn check_source_grid<S: Scalar>(f: &SourceTerm<S>, sigma: &AbsorptionField) -> Result<()> {
    sigma.check_grid(f.lattice(), Some(&f.quadrature))?;
    f.check_support()
}

/// One direction of the characteristic integral at all output times.
fn t1_dir<S: Scalar>(
    lat: &Lattice,
    th: [f64; 3],
    w: &DirWeights<S>,
    fill: &dyn Fn(usize, &mut [S]),
    out: &mut [S],
) {
    let (nt, ns, n) = (lat.n_t, lat.n_space(), lat.n_x);
    let (dt, dx) = (lat.dt(), lat.dx());
    let mut g = vec![S::zero(); nt * ns];
    for k in 0..nt {
        let gk = &mut g[k * ns..(k + 1) * ns];
        fill(k, gk);
        w.apply_pre(k, gk, false);
    }
    out.iter_mut().for_each(|v| *v = S::zero());
    for i in 1..nt {
        let oi = &mut out[i * ns..(i + 1) * ns];
        for j in 0..=i {
            let d = disp(th, -((i - j) as f64) * dt, dx);
            shift_add(oi, &g[j * ns..(j + 1) * ns], n, d, S::from_re(trap(dt, i, j)));
        }
        w.apply_post(i, oi, false);
    }
}

/// Transpose of [`t1_dir`] with respect to the kinetic inner product.
fn t1_dir_adjoint<S: Scalar>(
    lat: &Lattice,
    th: [f64; 3],
    w: &DirWeights<S>,
    v: &[S],
    out: &mut [S],
) {
    let (nt, ns, n) = (lat.n_t, lat.n_space(), lat.n_x);
    let (dt, dx) = (lat.dt(), lat.dx());
    let mut h = v.to_vec();
    for i in 0..nt {
        w.apply_post(i, &mut h[i * ns..(i + 1) * ns], true);
    }
    out.iter_mut().for_each(|x| *x = S::zero());
    for j in 0..nt {
        let oj = &mut out[j * ns..(j + 1) * ns];
        for i in j.max(1)..nt {
            let d = disp(th, ((i - j) as f64) * dt, dx);
            shift_add(oj, &h[i * ns..(i + 1) * ns], n, d, S::from_re(trap(dt, i, j)));
        }
        w.apply_pre(j, oj, true);
    }
}

/// Characteristic integral evaluated only at `t = t_final`.
fn t1_dir_final<S: Scalar>(
    lat: &Lattice,
    th: [f64; 3],
    w: &DirWeights<S>,
    fill: &dyn Fn(usize, &mut [S]),
    out: &mut [S],
) {
    let (nt, ns, n) = (lat.n_t, lat.n_space(), lat.n_x);
    let (dt, dx) = (lat.dt(), lat.dx());
    let last = nt - 1;
    let mut g = vec![S::zero(); ns];
    out.iter_mut().for_each(|v| *v = S::zero());
    for j in 0..nt {
        fill(j, &mut g);
        w.apply_pre(j, &mut g, false);
        let d = disp(th, -((last - j) as f64) * dt, dx);
        shift_add(out, &g, n, d, S::from_re(trap(dt, last, j)));
    }
    w.apply_post(last, out, false);
}

/// Adjoint of [`t1_dir_final`] from ray-slice space (inner product without
/// `dt`) to kinetic space.
fn t1_dir_final_adjoint<S: Scalar>(
    lat: &Lattice,
    th: [f64; 3],
    w: &DirWeights<S>,
    g: &[S],
    out: &mut [S],
) {
    let (nt, ns, n) = (lat.n_t, lat.n_space(), lat.n_x);
    let (dt, dx) = (lat.dt(), lat.dx());
    let last = nt - 1;
    let mut h = g.to_vec();
    w.apply_post(last, &mut h, true);
    for j in 0..nt {
        let oj = &mut out[j * ns..(j + 1) * ns];
        oj.iter_mut().for_each(|v| *v = S::zero());
        let d = disp(th, ((last - j) as f64) * dt, dx);
        shift_add(oj, &h, n, d, S::from_re(trap(dt, last, j) / dt));
        w.apply_pre(j, oj, true);
    }
}

/// `u = T1^{-1} f`: solves `du/dt + theta . grad u + sigma u = f`, `u(0) = 0`,
/// along characteristics.
pub fn t1_inverse<S: Scalar>(f: &SourceTerm<S>, sigma: &AbsorptionField) -> Result<KineticField<S>> {
    check_source_grid(f, sigma)?;
    t1_inverse_unchecked(f, sigma)
}

fn t1_inverse_unchecked<S: Scalar>(
    f: &SourceTerm<S>,
    sigma: &AbsorptionField,
) -> Result<KineticField<S>> {
    let lat = f.lattice().clone();
    let q = f.quadrature.clone();
    let mut out = KineticField::zeros(lat.clone(), q.clone());
    let block = out.block();
    out.values
        .par_chunks_mut(block)
        .enumerate()
        .try_for_each(|(j, o)| -> Result<()> {
            let w = sigma.dir_weights::<S>(j)?;
            t1_dir(&lat, q.nodes[j], &w, &|k, buf| f.fill(j, k, buf), o);
            Ok(())
        })?;
    Ok(out)
}

/// Kinetic-field variant used inside the Neumann iteration.
fn t1_apply<S: Scalar>(src: &KineticField<S>, sigma: &AbsorptionField) -> Result<KineticField<S>> {
    let f = SourceTerm::kinetic(src.clone());
    t1_inverse_unchecked(&f, sigma)
}

/// Adjoint of `T1^{-1}` on kinetic fields.
pub fn t1_inverse_adjoint<S: Scalar>(
    v: &KineticField<S>,
    sigma: &AbsorptionField,
) -> Result<KineticField<S>> {
    sigma.check_grid(&v.lattice, Some(&v.quadrature))?;
    let lat = v.lattice.clone();
    let q = v.quadrature.clone();
    let mut out = KineticField::zeros(lat.clone(), q.clone());
    let block = out.block();
    out.values
        .par_chunks_mut(block)
        .enumerate()
        .try_for_each(|(j, o)| -> Result<()> {
            let w = sigma.dir_weights::<S>(j)?;
            t1_dir_adjoint(&lat, q.nodes[j], &w, v.dir(j), o);
            Ok(())
        })?;
    Ok(out)
}

/// `measure_ut(t1_inverse(f, sigma))` without forming the full kinetic field.
pub fn t1_inverse_final<S: Scalar>(f: &SourceTerm<S>, sigma: &AbsorptionField) -> Result<RaySlice<S>> {
    check_source_grid(f, sigma)?;
    let lat = f.lattice().clone();
    let q = f.quadrature.clone();
    let mut out = RayData::zeros(lat.clone(), q.clone(), lat.t_final);
    let ns = lat.n_space();
    out.values
        .par_chunks_mut(ns)
        .enumerate()
        .try_for_each(|(j, o)| -> Result<()> {
            let w = sigma.dir_weights::<S>(j)?;
            t1_dir_final(&lat, q.nodes[j], &w, &|k, buf| f.fill(j, k, buf), o);
            Ok(())
        })?;
    Ok(out)
}

/// Adjoint of [`t1_inverse_final`] into kinetic source space.
pub fn t1_inverse_final_adjoint<S: Scalar>(
    g: &RaySlice<S>,
    sigma: &AbsorptionField,
) -> Result<KineticField<S>> {
    check_slice(g)?;
    sigma.check_grid(&g.lattice, Some(&g.quadrature))?;
    let lat = g.lattice.clone();
    let q = g.quadrature.clone();
    let mut out = KineticField::zeros(lat.clone(), q.clone());
    let block = out.block();
    out.values
        .par_chunks_mut(block)
        .enumerate()
        .try_for_each(|(j, o)| -> Result<()> {
            let w = sigma.dir_weights::<S>(j)?;
            t1_dir_final_adjoint(&lat, q.nodes[j], &w, g.dir(j), o);
            Ok(())
        })?;
    Ok(out)
}

fn check_slice<S: Scalar>(g: &RaySlice<S>) -> Result<()> {
    if (g.base_time - g.lattice.t_final).abs() > 1e-12 * g.lattice.t_final {
        return Err(Error::ShapeMismatch(format!(
            "expected a measurement slice at t = {}, got ray data based at {}",
            g.lattice.t_final, g.base_time
        )));
    }
    Ok(())
}

/// Adjoint of lifting a scalar source to all directions: `sum_j w_j v_j`.
pub fn sum_directions<S: Scalar>(v: &KineticField<S>) -> ScalarField<S> {
    let lat = v.lattice.clone();
    let mut out = ScalarField::zeros(lat, TimeAxis::Window);
    for (j, &w) in v.quadrature.weights.iter().enumerate() {
        for (o, &x) in out.values.iter_mut().zip(v.dir(j)) {
            *o += x * w;
        }
    }
    out
}

/// Restriction `u(t_final, ., .)`.
pub fn measure_ut<S: Scalar>(u: &KineticField<S>) -> RaySlice<S> {
    let lat = u.lattice.clone();
    let q = u.quadrature.clone();
    let last = lat.n_t - 1;
    let mut out = RayData::zeros(lat.clone(), q.clone(), lat.t_final);
    let ns = lat.n_space();
    for j in 0..q.len() {
        out.values[j * ns..(j + 1) * ns].copy_from_slice(u.slice(j, last));
    }
    out
}

/// Adjoint of [`measure_ut`]: `g / dt` on the last slice.
pub fn measure_ut_adjoint<S: Scalar>(g: &RaySlice<S>) -> KineticField<S> {
    let lat = g.lattice.clone();
    let mut out = KineticField::zeros(lat.clone(), g.quadrature.clone());
    let (nt, ns) = (lat.n_t, lat.n_space());
    let s = 1.0 / lat.dt();
    for j in 0..g.quadrature.len() {
        let off = (j * nt + nt - 1) * ns;
        for (o, &v) in out.values[off..off + ns].iter_mut().zip(g.dir(j)) {
            *o = v * s;
        }
    }
    out
}

/// Angular redistribution `p(theta_a . theta_b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PhaseFunction {
    /// `1 / 4 pi`
    Isotropic,
    /// Henyey-Greenstein with asymmetry `g` in `(-1, 1)`.
    HenyeyGreenstein { g: f64 },
    /// `(1 + b mu) / 4 pi`
    Linear { b: f64 },
}

impl PhaseFunction {
    pub fn eval(&self, mu: f64) -> f64 {
        let fpi = 4.0 * std::f64::consts::PI;
        match *self {
            PhaseFunction::Isotropic => 1.0 / fpi,
            PhaseFunction::HenyeyGreenstein { g } => {
                (1.0 - g * g) / (fpi * (1.0 + g * g - 2.0 * g * mu).powf(1.5))
            }
            PhaseFunction::Linear { b } => (1.0 + b * mu) / fpi,
        }
    }
}

#[derive(Clone, Debug)]
pub enum ScatteringRepr {
    /// `k(t, x, theta_a, theta_b)` stored as `[t][x][a][b]`.
    Dense(Vec<f64>),
    /// `c(t, x) p(theta_a . theta_b)`.
    Factorized {
        c: ScalarField<f64>,
        phase: PhaseFunction,
        /// `p(theta_a . theta_b)`, row-major `J x J`.
        table: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
pub struct ScatteringKernelField {
    pub lattice: Arc<Lattice>,
    pub quadrature: Arc<DirectionQuadrature>,
    pub repr: ScatteringRepr,
    /// Scalar multiplier `lambda_k`.
    pub lambda: C64,
}

impl ScatteringKernelField {
    pub fn zero(lattice: Arc<Lattice>, quadrature: Arc<DirectionQuadrature>) -> Self {
        let c = ScalarField::zeros(lattice.clone(), TimeAxis::Window);
        Self::factorized(c, PhaseFunction::Isotropic, quadrature)
            .unwrap()
            .with_lambda(C64::new(0.0, 0.0))
    }

    pub fn factorized(
        c: ScalarField<f64>,
        phase: PhaseFunction,
        quadrature: Arc<DirectionQuadrature>,
    ) -> Result<Self> {
        if c.axis != TimeAxis::Window {
            return Err(Error::ShapeMismatch("scattering strength must be a window field".into()));
        }
        c.check_finite()?;
        c.check_support()?;
        let nodes = &quadrature.nodes;
        let j = nodes.len();
        let mut table = Vec::with_capacity(j * j);
        for a in nodes {
            for b in nodes {
                let mu = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
                table.push(phase.eval(mu));
            }
        }
        Ok(ScatteringKernelField {
            lattice: c.lattice.clone(),
            quadrature,
            repr: ScatteringRepr::Factorized { c, phase, table },
            lambda: C64::new(1.0, 0.0),
        })
    }

    pub fn dense(
        lattice: Arc<Lattice>,
        quadrature: Arc<DirectionQuadrature>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let j = quadrature.len();
        let want = lattice.n_t * lattice.n_space() * j * j;
        if values.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "dense kernel has {} values, expected {want}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scattering kernel".into()));
        }
        let ns = lattice.n_space();
        let r = lattice.support_radius() + 1e-9 * lattice.box_len;
        let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for (p, chunk) in values.chunks_exact(j * j).enumerate() {
            let x = lattice.point(p % ns);
            if lattice.dist_from_center(x) > r && chunk.iter().any(|v| v.abs() > 1e-12 * peak) {
                return Err(Error::SupportViolation(format!(
                    "scattering kernel nonzero at {x:?}, outside the support ball"
                )));
            }
        }
        Ok(ScatteringKernelField {
            lattice,
            quadrature,
            repr: ScatteringRepr::Dense(values),
            lambda: C64::new(1.0, 0.0),
        })
    }

    pub fn with_lambda(mut self, lambda: C64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Expands a factorized kernel into the dense layout.
    pub fn to_dense(&self) -> Self {
        match &self.repr {
            ScatteringRepr::Dense(_) => self.clone(),
            ScatteringRepr::Factorized { c, table, .. } => {
                let jj = table.len();
                let mut values = Vec::with_capacity(c.values.len() * jj);
                for &cv in &c.values {
                    values.extend(table.iter().map(|&p| cv * p));
                }
                ScatteringKernelField {
                    lattice: self.lattice.clone(),
                    quadrature: self.quadrature.clone(),
                    repr: ScatteringRepr::Dense(values),
                    lambda: self.lambda,
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == C64::new(0.0, 0.0)
            || match &self.repr {
                ScatteringRepr::Dense(v) => v.iter().all(|&x| x == 0.0),
                ScatteringRepr::Factorized { c, .. } => c.values.iter().all(|&x| x == 0.0),
            }
    }

    /// The conservative absorption `sigma(t, x, theta_b) = sum_a w_a k(t, x, theta_a, theta_b)`
    /// (carrying the same multiplier).
    pub fn column_sums(&self) -> Result<AbsorptionField> {
        let lat = self.lattice.clone();
        let q = self.quadrature.clone();
        let (nt, ns, jn) = (lat.n_t, lat.n_space(), q.len());
        let mut sigma = KineticField::<f64>::zeros(lat.clone(), q.clone());
        let w = &q.weights;
        match &self.repr {
            ScatteringRepr::Factorized { c, table, .. } => {
                for b in 0..jn {
                    let col: f64 = (0..jn).map(|a| w[a] * table[a * jn + b]).sum();
                    let blk = sigma.dir_mut(b);
                    for (o, &cv) in blk.iter_mut().zip(&c.values) {
                        *o = cv * col;
                    }
                }
            }
            ScatteringRepr::Dense(v) => {
                for p in 0..nt * ns {
                    let m = &v[p * jn * jn..(p + 1) * jn * jn];
                    for b in 0..jn {
                        let col: f64 = (0..jn).map(|a| w[a] * m[a * jn + b]).sum();
                        sigma.values[b * nt * ns + p] = col;
                    }
                }
            }
        }
        Ok(AbsorptionField::full(sigma)?.with_lambda(self.lambda))
    }

    fn check_grid<S: Scalar>(&self, u: &KineticField<S>) -> Result<()> {
        if *self.lattice != *u.lattice || *self.quadrature != *u.quadrature {
            return Err(Error::ShapeMismatch(
                "scattering kernel and kinetic field use different grids".into(),
            ));
        }
        Ok(())
    }
}

/// `C = M U` with `M` a real `J x J` matrix and `U` a `J x N` block of scalars.
fn mix_directions<S: Scalar>(m: &[f64], jn: usize, u: &[S], out: &mut [S]) {
    let n = u.len() / jn;
    let width = if S::IS_COMPLEX { 2 * n } else { n };
    // SAFETY: `S` is `f64` or `Complex64`, which is `#[repr(C)]` over two
    // `f64`s, so both slices are valid `f64` arrays of `jn * width` entries.
    let (ur, or) = unsafe {
        (
            std::slice::from_raw_parts(u.as_ptr() as *const f64, jn * width),
            std::slice::from_raw_parts_mut(out.as_mut_ptr() as *mut f64, jn * width),
        )
    };
    unsafe {
        matrixmultiply::dgemm(
            jn,
            jn,
            width,
            1.0,
            m.as_ptr(),
            jn as isize,
            1,
            ur.as_ptr(),
            width as isize,
            1,
            0.0,
            or.as_mut_ptr(),
            width as isize,
            1,
        );
    }
}

fn scatter<S: Scalar>(k: &ScatteringKernelField, u: &KineticField<S>, adjoint: bool) -> Result<KineticField<S>> {
    k.check_grid(u)?;
    let lam = lambda_as::<S>(k.lambda, "lambda_k")?;
    let lam = if adjoint { lam.conj() } else { lam };
    let lat = &u.lattice;
    let w = &u.quadrature.weights;
    let jn = w.len();
    let np = lat.n_t * lat.n_space();
    let mut out = u.zeros_like();
    if k.is_zero() {
        return Ok(out);
    }
    match &k.repr {
        ScatteringRepr::Factorized { c, table, .. } => {
            // forward: M_ab = p_ab w_b; adjoint: M_ba = p_ab w_a
            let mut m = vec![0.0; jn * jn];
            for a in 0..jn {
                for b in 0..jn {
                    if adjoint {
                        m[b * jn + a] = table[a * jn + b] * w[a];
                    } else {
                        m[a * jn + b] = table[a * jn + b] * w[b];
                    }
                }
            }
            mix_directions(&m, jn, &u.values, &mut out.values);
            out.values.par_chunks_mut(np).for_each(|blk| {
                for (o, &cv) in blk.iter_mut().zip(&c.values) {
                    *o = *o * lam * cv;
                }
            });
        }
        ScatteringRepr::Dense(v) => {
            let mut ub = vec![S::zero(); jn];
            for p in 0..np {
                let m = &v[p * jn * jn..(p + 1) * jn * jn];
                for b in 0..jn {
                    ub[b] = u.values[b * np + p];
                }
                for a in 0..jn {
                    let mut acc = S::zero();
                    for b in 0..jn {
                        let kab = if adjoint {
                            m[b * jn + a] * w[b]
                        } else {
                            m[a * jn + b] * w[b]
                        };
                        acc += ub[b] * kab;
                    }
                    out.values[a * np + p] = acc * lam;
                }
            }
        }
    }
    Ok(out)
}

/// `(K u)(t, x, theta_a) = lambda_k sum_b w_b k(t, x, theta_a, theta_b) u(t, x, theta_b)`.
pub fn scattering_apply<S: Scalar>(k: &ScatteringKernelField, u: &KineticField<S>) -> Result<KineticField<S>> {
    scatter(k, u, false)
}

/// Adjoint of [`scattering_apply`] for the weighted kinetic inner product.
pub fn scattering_adjoint<S: Scalar>(k: &ScatteringKernelField, v: &KineticField<S>) -> Result<KineticField<S>> {
    scatter(k, v, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl SolveReport {
    pub fn last_residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&0.0)
    }
}

fn neumann<S: Scalar, F>(u0: KineticField<S>, tol: f64, max_iter: usize, step: F) -> Result<(KineticField<S>, SolveReport)>
where
    F: Fn(&KineticField<S>) -> Result<KineticField<S>>,
{
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument("need tol > 0 and max_iter >= 1".into()));
    }
    let n0 = u0.l2_norm();
    let mut history = Vec::new();
    if n0 == 0.0 {
        return Ok((
            u0,
            SolveReport {
                iterations: 1,
                residual_history: vec![0.0],
                converged: true,
            },
        ));
    }
    let mut u = u0.clone();
    for it in 1..=max_iter {
        let mut next = step(&u)?;
        next.axpy(S::one(), &u0)?;
        let mut diff = next.clone();
        diff.axpy(-S::one(), &u)?;
        let r = diff.l2_norm() / n0;
        history.push(r);
        u = next;
        if !r.is_finite() || r > 1e8 {
            return Err(Error::Divergence {
                iterations: it,
                last: r,
                history,
            });
        }
        if r <= tol {
            return Ok((
                u,
                SolveReport {
                    iterations: it,
                    residual_history: history,
                    converged: true,
                },
            ));
        }
    }
    Err(Error::Divergence {
        iterations: max_iter,
        last: *history.last().unwrap(),
        history,
    })
}

/// Solves `u = T1^{-1}(f + K u)` by Neumann iteration.
pub fn boltzmann_solve<S: Scalar>(
    f: &SourceTerm<S>,
    sigma: &AbsorptionField,
    k: &ScatteringKernelField,
    tol: f64,
    max_iter: usize,
) -> Result<(KineticField<S>, SolveReport)> {
    let u0 = t1_inverse(f, sigma)?;
    if k.is_zero() {
        if !(tol > 0.0) || max_iter == 0 {
            return Err(Error::InvalidArgument("need tol > 0 and max_iter >= 1".into()));
        }
        return Ok((
            u0,
            SolveReport {
                iterations: 1,
                residual_history: vec![0.0],
                converged: true,
            },
        ));
    }
    k.check_grid(&u0)?;
    neumann(u0, tol, max_iter, |u| t1_apply(&scattering_apply(k, u)?, sigma))
}

/// `X f = u(T)` for the forward problem; skips the full kinetic field when
/// there is no scattering.
pub fn boltzmann_measure<S: Scalar>(
    f: &SourceTerm<S>,
    sigma: &AbsorptionField,
    k: &ScatteringKernelField,
    tol: f64,
    max_iter: usize,
) -> Result<(RaySlice<S>, SolveReport)> {
    if k.is_zero() {
        let g = t1_inverse_final(f, sigma)?;
        return Ok((
            g,
            SolveReport {
                iterations: 1,
                residual_history: vec![0.0],
                converged: true,
            },
        ));
    }
    let (u, rep) = boltzmann_solve(f, sigma, k, tol, max_iter)?;
    Ok((measure_ut(&u), rep))
}

/// Adjoint of `f -> u(T)` into kinetic source space: `z = T1^{-*} rho^* g + T1^{-*} K^* z`.
pub fn boltzmann_measure_adjoint<S: Scalar>(
    g: &RaySlice<S>,
    sigma: &AbsorptionField,
    k: &ScatteringKernelField,
    tol: f64,
    max_iter: usize,
) -> Result<(KineticField<S>, SolveReport)> {
    let z0 = t1_inverse_final_adjoint(g, sigma)?;
    if k.is_zero() {
        return Ok((
            z0,
            SolveReport {
                iterations: 1,
                residual_history: vec![0.0],
                converged: true,
            },
        ));
    }
    k.check_grid(&z0)?;
    neumann(z0, tol, max_iter, |z| t1_inverse_adjoint(&scattering_adjoint(k, z)?, sigma))
}

/// Total mass `sum_j w_j sum_x u(t_k, x, theta_j) dx^3` at each time sample.
pub fn mass_history<S: Scalar>(u: &KineticField<S>) -> Vec<S> {
    let lat = &u.lattice;
    let nt = lat.n_t;
    let dv = lat.dx().powi(3);
    (0..nt)
        .map(|k| {
            let per_dir: Vec<S> = (0..u.quadrature.len())
                .map(|j| crate::scalar::pairwise_sum(u.slice(j, k)) * u.quadrature.weights[j])
                .collect();
            crate::scalar::pairwise_sum(&per_dir) * dv
        })
        .collect()
}

/// `|du/dt + theta . grad u + sigma u - K u - f| / |f|` with centred
/// differences, over interior time samples.
pub fn pde_residual<S: Scalar>(
    u: &KineticField<S>,
    f: &SourceTerm<S>,
    sigma: &AbsorptionField,
    k: &ScatteringKernelField,
) -> Result<f64> {
    let lat = u.lattice.clone();
    let fk = f.to_kinetic();
    u.same_grid(&fk)?;
    sigma.check_grid(&lat, Some(&u.quadrature))?;
    let ku = scattering_apply(k, u)?;
    let (nt, ns, n) = (lat.n_t, lat.n_space(), lat.n_x);
    let (dt, dx) = (lat.dt(), lat.dx());
    if nt < 3 {
        return Err(Error::InvalidArgument("need n_t >= 3 for centred differences".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..u.quadrature.len() {
        let th = u.quadrature.nodes[j];
        let w = u.quadrature.weights[j];
        for kt in 1..nt - 1 {
            let (prev, cur, next) = (u.slice(j, kt - 1), u.slice(j, kt), u.slice(j, kt + 1));
            for ix in 0..n {
                for iy in 0..n {
                    for iz in 0..n {
                        let s = lat.sidx(ix, iy, iz);
                        let nb = |a: usize, plus: bool| -> usize {
                            let mut id = [ix, iy, iz];
                            id[a] = if plus { (id[a] + 1) % n } else { (id[a] + n - 1) % n };
                            lat.sidx(id[0], id[1], id[2])
                        };
                        let mut r = (next[s] - prev[s]) * (0.5 / dt);
                        for (a, &tha) in th.iter().enumerate() {
                            r += (cur[nb(a, true)] - cur[nb(a, false)]) * (0.5 * tha / dx);
                        }
                        r += cur[s] * sigma.value_at::<S>(j, kt, s);
                        let off = (j * nt + kt) * ns + s;
                        r -= ku.values[off];
                        r -= fk.values[off];
                        num += w * r.norm_sqr();
                        den += w * fk.values[off].norm_sqr();
                    }
                }
            }
        }
    }
    if den == 0.0 {
        return Ok(num.sqrt() * (dt * dx.powi(3)).sqrt());
    }
    Ok((num / den).sqrt())
}
