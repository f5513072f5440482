//! Weighted light ray transform `L_kappa f(x, theta) = int kappa f(s, x + (s - b) theta) ds`,
//! its adjoint and the normal operator `L*_kappa L_kappa`.
//!
//! Each direction is a sum over time samples of shifted spatial slices, so
//! the adjoint is the same sum with the opposite shifts (see
//! [`crate::interp::shift_add`]). On a window field the time rule is the
//! trapezoid on `[0, t_final]`; on a padded field it is the periodic
//! rectangle rule over one period with unwrapped times.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::field::{KineticField, RayData, ScalarField};
use crate::interp::{interp_spacetime, shift_add, SpacetimeSample};
use crate::lattice::{Lattice, TimeAxis};
use crate::quadrature::DirectionQuadrature;
use crate::scalar::{Scalar, C64};
use crate::transport::{disp, trap, AbsorptionField, AbsorptionKind, DirWeights};

/// Weight `kappa(t, x, theta)` in the transform.
#[derive(Clone, Debug)]
pub enum WeightFunction<S: Scalar = f64> {
    Unit,
    /// `kappa(t_k)` on the window; held constant outside `[0, t_final]`.
    Time(Vec<S>),
    /// `kappa(t, x, theta)` sampled on the window times the quadrature.
    Sampled(KineticField<S>),
    /// `exp(-int_s^{t_e} sigma)` along each ray, where `t_e` is the time
    /// sample `endpoint`. Rays are based at `t_e`.
    Measurement { sigma: AbsorptionField, endpoint: usize },
}

impl<S: Scalar> WeightFunction<S> {
    /// The attenuation seen by a measurement at `t_final`.
    pub fn measurement(sigma: AbsorptionField) -> Self {
        let e = sigma.lattice.n_t - 1;
        WeightFunction::Measurement { sigma, endpoint: e }
    }

    /// `kappa_T(s) = exp(-int_s^T sigma)` sampled on the window, for
    /// time-only absorption with a real multiplier.
    pub fn time_from_absorption(sigma: &AbsorptionField) -> Result<Self> {
        if !sigma.is_time_only() {
            return Err(Error::InvalidArgument(
                "time weight needs time-only absorption".into(),
            ));
        }
        match sigma.dir_weights::<S>(0)? {
            DirWeights::Unit => Ok(WeightFunction::Time(vec![S::one(); sigma.lattice.n_t])),
            DirWeights::Time { pre, post } => {
                let last = *post.last().unwrap();
                Ok(WeightFunction::Time(pre.iter().map(|&p| p * last).collect()))
            }
            DirWeights::Field { .. } => unreachable!(),
        }
    }

    /// Base time of the ray parametrisation this weight is naturally paired with.
    pub fn natural_base(&self, lat: &Lattice) -> f64 {
        match self {
            WeightFunction::Measurement { endpoint, .. } => *endpoint as f64 * lat.dt(),
            _ => 0.0,
        }
    }

    /// Pointwise values on the window for the time-only and unit cases.
    pub fn time_values(&self, lat: &Lattice) -> Option<Vec<S>> {
        match self {
            WeightFunction::Unit => Some(vec![S::one(); lat.n_t]),
            WeightFunction::Time(v) => Some(v.clone()),
            _ => None,
        }
    }

    /// Fails when any weight sample is not strictly positive and real.
    pub fn check_positive(&self) -> Result<()> {
        let bad = |v: S| v.to_complex().im != 0.0 || !(v.re() > 0.0);
        let ok = match self {
            WeightFunction::Unit => true,
            WeightFunction::Time(v) => !v.iter().any(|&x| bad(x)),
            WeightFunction::Sampled(k) => !k.values.iter().any(|&x| bad(x)),
            WeightFunction::Measurement { sigma, .. } => sigma.lambda.im == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidWeight(
                "weight must be real and strictly positive".into(),
            ))
        }
    }

    fn check(&self, lat: &Lattice, q: &DirectionQuadrature, axis: TimeAxis, base: f64) -> Result<()> {
        match self {
            WeightFunction::Unit => Ok(()),
            WeightFunction::Time(v) => {
                if v.len() != lat.n_t {
                    return Err(Error::ShapeMismatch(format!(
                        "time weight has {} samples, n_t = {}",
                        v.len(),
                        lat.n_t
                    )));
                }
                Ok(())
            }
            WeightFunction::Sampled(k) => {
                if axis != TimeAxis::Window {
                    return Err(Error::InvalidArgument(
                        "sampled weights are defined on the time window only".into(),
                    ));
                }
                if *k.lattice != *lat || *k.quadrature != *q {
                    return Err(Error::ShapeMismatch("weight lives on another grid".into()));
                }
                Ok(())
            }
            WeightFunction::Measurement { sigma, endpoint } => {
                if axis != TimeAxis::Window {
                    return Err(Error::InvalidArgument(
                        "measurement weights are defined on the time window only".into(),
                    ));
                }
                if *sigma.lattice != *lat || *endpoint >= lat.n_t {
                    return Err(Error::ShapeMismatch("measurement weight grid mismatch".into()));
                }
                if let AbsorptionKind::Full(s) = &sigma.kind {
                    if *s.quadrature != *q {
                        return Err(Error::ShapeMismatch(
                            "absorption uses another direction quadrature".into(),
                        ));
                    }
                }
                let tb = *endpoint as f64 * lat.dt();
                if (tb - base).abs() > 1e-12 * lat.t_final {
                    return Err(Error::InvalidArgument(format!(
                        "measurement weight ends at t = {tb}, rays are based at {base}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// The function being transformed.
#[derive(Clone, Copy)]
pub enum Integrand<'a, S: Scalar> {
    Scalar(&'a ScalarField<S>),
    Kinetic(&'a KineticField<S>),
}

impl<'a, S: Scalar> From<&'a ScalarField<S>> for Integrand<'a, S> {
    fn from(f: &'a ScalarField<S>) -> Self {
        Integrand::Scalar(f)
    }
}

impl<'a, S: Scalar> From<&'a KineticField<S>> for Integrand<'a, S> {
    fn from(f: &'a KineticField<S>) -> Self {
        Integrand::Kinetic(f)
    }
}

impl<S: Scalar> Integrand<'_, S> {
    fn lattice(&self) -> &Arc<Lattice> {
        match self {
            Integrand::Scalar(f) => &f.lattice,
            Integrand::Kinetic(f) => &f.lattice,
        }
    }

    fn axis(&self) -> TimeAxis {
        match self {
            Integrand::Scalar(f) => f.axis,
            Integrand::Kinetic(_) => TimeAxis::Window,
        }
    }

    fn slice(&self, j: usize, k: usize) -> &[S] {
        match self {
            Integrand::Scalar(f) => f.slice(k),
            Integrand::Kinetic(f) => f.slice(j, k),
        }
    }
}

/// Time samples and quadrature weights along a ray on the given axis.
pub(crate) fn ray_times(lat: &Lattice, axis: TimeAxis) -> Vec<(usize, f64, f64)> {
    let dt = lat.dt();
    match axis {
        TimeAxis::Window => (0..lat.n_t)
            .map(|k| (k, k as f64 * dt, trap(dt, lat.n_t - 1, k)))
            .collect(),
        TimeAxis::Padded => (0..lat.n_total())
            .map(|k| (k, lat.time_of(TimeAxis::Padded, k), dt))
            .collect(),
    }
}

/// Per-direction view of a weight.
enum DirKappa<'a, S: Scalar> {
    Unit,
    Time(&'a [S]),
    Grid(&'a KineticField<S>, usize),
    Char(DirWeights<S>, usize),
}

impl<S: Scalar> DirKappa<'_, S> {
    /// `dst *= kappa(t_k, ., theta_j)` (conjugated if asked). `k` indexes
    /// the axis the integrand lives on.
    fn apply(&self, lat: &Lattice, axis: TimeAxis, k: usize, dst: &mut [S], conj: bool) {
        let cj = |v: S| if conj { v.conj() } else { v };
        match self {
            DirKappa::Unit => {}
            DirKappa::Time(v) => {
                let kk = match axis {
                    TimeAxis::Window => k,
                    TimeAxis::Padded => {
                        let t = lat.time_of(axis, k);
                        if t <= 0.0 {
                            0
                        } else {
                            k.min(lat.n_t - 1)
                        }
                    }
                };
                let w = cj(v[kk]);
                dst.iter_mut().for_each(|x| *x *= w);
            }
            DirKappa::Grid(f, j) => {
                for (x, &w) in dst.iter_mut().zip(f.slice(*j, k)) {
                    *x *= cj(w);
                }
            }
            DirKappa::Char(w, _) => w.apply_pre(k, dst, conj),
        }
    }

    fn apply_post(&self, dst: &mut [S], conj: bool) {
        if let DirKappa::Char(w, e) = self {
            w.apply_post(*e, dst, conj);
        }
    }
}

fn dir_kappa<S: Scalar>(k: &WeightFunction<S>, j: usize) -> Result<DirKappa<'_, S>> {
    Ok(match k {
        WeightFunction::Unit => DirKappa::Unit,
        WeightFunction::Time(v) => DirKappa::Time(v),
        WeightFunction::Sampled(f) => DirKappa::Grid(f, j),
        WeightFunction::Measurement { sigma, endpoint } => {
            DirKappa::Char(sigma.dir_weights::<S>(j)?, *endpoint)
        }
    })
}

/// Unweighted transform with rays based at `t = 0`.
pub fn lray<S: Scalar>(f: &ScalarField<S>) -> Result<RayData<S>> {
    lray_at(f, &WeightFunction::Unit, 0.0, None)
}

/// Weighted transform with the weight's natural ray parametrisation
/// (`t = 0` in general, the endpoint for measurement weights).
pub fn lray_weighted<'a, S: Scalar, F: Into<Integrand<'a, S>>>(
    f: F,
    kappa: &WeightFunction<S>,
) -> Result<RayData<S>> {
    let f = f.into();
    let base = kappa.natural_base(f.lattice());
    lray_at(f, kappa, base, None)
}

/// Weighted transform with rays based at `t = base`. `quadrature` is
/// needed for scalar integrands (defaults to degree 8 otherwise it is taken
/// from the kinetic field or sampled weight).
pub fn lray_at<'a, S: Scalar, F: Into<Integrand<'a, S>>>(
    f: F,
    kappa: &WeightFunction<S>,
    base: f64,
    quadrature: Option<Arc<DirectionQuadrature>>,
) -> Result<RayData<S>> {
    let f = f.into();
    let q = match (&f, kappa, quadrature) {
        (_, _, Some(q)) => q,
        (Integrand::Kinetic(k), _, None) => k.quadrature.clone(),
        (_, WeightFunction::Sampled(k), None) => k.quadrature.clone(),
        (_, WeightFunction::Measurement { sigma, .. }, None) => match &sigma.kind {
            AbsorptionKind::Full(s) => s.quadrature.clone(),
            AbsorptionKind::TimeOnly(_) => default_quadrature()?,
        },
        _ => default_quadrature()?,
    };
    lray_with(f, kappa, base, q)
}

fn default_quadrature() -> Result<Arc<DirectionQuadrature>> {
    Ok(Arc::new(crate::quadrature::build_direction_quadrature(8)?))
}

/// Transform over the directions of `q`.
pub fn lray_with<'a, S: Scalar, F: Into<Integrand<'a, S>>>(
    f: F,
    kappa: &WeightFunction<S>,
    base: f64,
    q: Arc<DirectionQuadrature>,
) -> Result<RayData<S>> {
    let f = f.into();
    let lat = f.lattice().clone();
    let axis = f.axis();
    if let Integrand::Kinetic(k) = &f {
        if *k.quadrature != *q {
            return Err(Error::ShapeMismatch("kinetic integrand uses another quadrature".into()));
        }
    }
    kappa.check(&lat, &q, axis, base)?;
    if let Integrand::Scalar(s) = &f {
        if axis == TimeAxis::Window {
            s.check_support()?;
        }
    }
    let (ns, n, dx) = (lat.n_space(), lat.n_x, lat.dx());
    let times = ray_times(&lat, axis);
    // skip slices that are identically zero (padded fields are mostly empty)
    let live: Vec<bool> = match &f {
        Integrand::Scalar(s) => (0..s.n_time())
            .map(|k| s.slice(k).iter().any(|v| *v != S::zero()))
            .collect(),
        Integrand::Kinetic(_) => vec![true; lat.n_t],
    };
    let mut out = RayData::zeros(lat.clone(), q.clone(), base);
    out.values
        .par_chunks_mut(ns)
        .enumerate()
        .try_for_each(|(j, o)| -> Result<()> {
            let th = q.nodes[j];
            let kap = dir_kappa(kappa, j)?;
            let mut buf = vec![S::zero(); ns];
            for &(k, t, c) in &times {
                if !live[k] {
                    continue;
                }
                buf.copy_from_slice(f.slice(j, k));
                kap.apply(&lat, axis, k, &mut buf, false);
                shift_add(o, &buf, n, disp(th, t - base, dx), S::from_re(c));
            }
            kap.apply_post(o, false);
            Ok(())
        })?;
    Ok(out)
}

/// Adjoint of the scalar-integrand transform:
/// `L*g(t_k, y) = (c_k / dt) sum_j w_j conj(kappa) g(y - (t_k - b) theta_j, theta_j)`,
/// where `c_k` is the time-rule weight (so `c_k / dt = 1` except at the
/// window end points). This is the exact transpose of `lray_with`.
pub fn lray_adjoint<S: Scalar>(
    g: &RayData<S>,
    kappa: &WeightFunction<S>,
    axis: TimeAxis,
) -> Result<ScalarField<S>> {
    let mut out = backproject_rays(g, kappa, axis)?;
    let lat = g.lattice.clone();
    let (ns, dt) = (lat.n_space(), lat.dt());
    let times = ray_times(&lat, axis);
    out.values.par_chunks_mut(ns).enumerate().for_each(|(k, o)| {
        let s = times[k].2 / dt;
        if s != 1.0 {
            o.iter_mut().for_each(|x| *x = *x * s);
        }
    });
    Ok(out)
}

/// Pointwise backprojection `sum_j w_j conj(kappa) g(y - (t - b) theta_j, theta_j)`
/// at every sample of `axis`, without the time-rule factor of `lray_adjoint`.
pub fn backproject_rays<S: Scalar>(
    g: &RayData<S>,
    kappa: &WeightFunction<S>,
    axis: TimeAxis,
) -> Result<ScalarField<S>> {
    let lat = g.lattice.clone();
    let q = g.quadrature.clone();
    kappa.check(&lat, &q, axis, g.base_time)?;
    let (ns, n, dx) = (lat.n_space(), lat.n_x, lat.dx());
    let times = ray_times(&lat, axis);
    let base = g.base_time;
    let mut out = ScalarField::zeros(lat.clone(), axis);
    for j in 0..q.len() {
        let kap = dir_kappa(kappa, j)?;
        let mut h = g.dir(j).to_vec();
        kap.apply_post(&mut h, true);
        let th = q.nodes[j];
        let w = q.weights[j];
        out.values.par_chunks_mut(ns).enumerate().for_each(|(k, o)| {
            let t = times[k].1;
            let d = disp(th, -(t - base), dx);
            if let DirKappa::Unit = kap {
                shift_add(o, &h, n, d, S::from_re(w));
            } else {
                let mut buf = vec![S::zero(); ns];
                shift_add(&mut buf, &h, n, d, S::from_re(w));
                kap.apply(&lat, axis, k, &mut buf, true);
                for (x, &b) in o.iter_mut().zip(&buf) {
                    *x += b;
                }
            }
        });
    }
    Ok(out)
}

/// Adjoint of the kinetic-integrand transform (no sum over directions).
pub fn lray_adjoint_kinetic<S: Scalar>(
    g: &RayData<S>,
    kappa: &WeightFunction<S>,
) -> Result<KineticField<S>> {
    let lat = g.lattice.clone();
    let q = g.quadrature.clone();
    kappa.check(&lat, &q, TimeAxis::Window, g.base_time)?;
    let (nt, ns, n, dx, dt) = (lat.n_t, lat.n_space(), lat.n_x, lat.dx(), lat.dt());
    let times = ray_times(&lat, TimeAxis::Window);
    let mut out = KineticField::zeros(lat.clone(), q.clone());
    out.values
        .par_chunks_mut(nt * ns)
        .enumerate()
        .try_for_each(|(j, blk)| -> Result<()> {
            let kap = dir_kappa(kappa, j)?;
            let mut h = g.dir(j).to_vec();
            kap.apply_post(&mut h, true);
            let th = q.nodes[j];
            for &(k, t, c) in &times {
                let o = &mut blk[k * ns..(k + 1) * ns];
                shift_add(o, &h, n, disp(th, -(t - g.base_time), dx), S::from_re(c / dt));
                kap.apply(&lat, TimeAxis::Window, k, o, true);
            }
            Ok(())
        })?;
    Ok(out)
}

/// `N_kappa f = L*_kappa L_kappa f`, evaluated pointwise on the axis of `f`.
pub fn normal_compose<S: Scalar>(
    f: &ScalarField<S>,
    kappa: &WeightFunction<S>,
    q: Arc<DirectionQuadrature>,
) -> Result<ScalarField<S>> {
    let base = kappa.natural_base(&f.lattice);
    let g = lray_with(f, kappa, base, q)?;
    backproject_rays(&g, kappa, f.axis)
}

/// Relative discrepancy between the spatial DFT of `L f` and the space-time
/// transform of `f` on the planes `tau = -theta . xi`, the latter computed by
/// the trapezoid rule in `t` from the spatial DFT of each slice. Sums over
/// directions use the quadrature weights.
pub fn fourier_slice_error(f: &ScalarField<f64>, q: Arc<DirectionQuadrature>) -> Result<f64> {
    if f.axis != TimeAxis::Window {
        return Err(Error::InvalidArgument("Fourier slice check expects a window field".into()));
    }
    let lat = f.lattice.clone();
    let (n, nt, dt) = (lat.n_x, lat.n_t, lat.dt());
    let g = lray_with(f, &WeightFunction::Unit, 0.0, q.clone())?;
    let plan = FftNd::new(&[n, n, n]);
    let slices: Vec<Vec<C64>> = (0..nt)
        .into_par_iter()
        .map(|k| {
            let mut v: Vec<C64> = f.slice(k).iter().map(|&x| C64::new(x, 0.0)).collect();
            plan.forward(&mut v);
            v
        })
        .collect();
    let freq: Vec<f64> = (0..n).map(|i| lat.spatial_freq(i)).collect();
    let parts: Vec<(f64, f64)> = (0..q.len())
        .into_par_iter()
        .map(|j| {
            let th = q.nodes[j];
            let mut lf: Vec<C64> = g.dir(j).iter().map(|&x| C64::new(x, 0.0)).collect();
            plan.forward(&mut lf);
            let (mut num, mut den) = (0.0, 0.0);
            for (i, &got) in lf.iter().enumerate() {
                let xi = [freq[i / (n * n)], freq[(i / n) % n], freq[i % n]];
                let step = C64::from_polar(1.0, dt * (th[0] * xi[0] + th[1] * xi[1] + th[2] * xi[2]));
                let mut ph = C64::new(1.0, 0.0);
                let mut want = C64::new(0.0, 0.0);
                for (k, sl) in slices.iter().enumerate() {
                    want += sl[i] * ph * trap(dt, nt - 1, k);
                    ph *= step;
                }
                num += (got - want).norm_sqr();
                den += want.norm_sqr();
            }
            (num * q.weights[j], den * q.weights[j])
        })
        .collect();
    let num: f64 = parts.iter().map(|p| p.0).sum();
    let den: f64 = parts.iter().map(|p| p.1).sum();
    Ok(if den == 0.0 { 0.0 } else { (num / den).sqrt() })
}

/// Pointwise evaluation of `N_kappa f(t, x)` through the split
/// `I_+ + I_-` of the normal-operator kernel: rays leaving `(t, x)` towards
/// the future and the past, integrated in `r` with step `dr` and over the
/// sphere with `q`. `kappa` is evaluated pointwise; `f` is sampled
/// multilinearly and treated as zero outside `[0, t_final]`.
pub fn normal_kernel_eval<K>(
    f: &ScalarField<f64>,
    kappa: K,
    q: &DirectionQuadrature,
    t: f64,
    x: [f64; 3],
    dr: f64,
) -> Result<f64>
where
    K: Fn(f64, [f64; 3], [f64; 3]) -> f64 + Sync,
{
    if f.axis != TimeAxis::Window {
        return Err(Error::InvalidArgument("kernel evaluation expects a window field".into()));
    }
    let lat = &f.lattice;
    let t_f = lat.t_final;
    let sample = |s: f64, p: [f64; 3]| -> f64 {
        if s < 0.0 || s > t_f {
            0.0
        } else {
            interp_spacetime(SpacetimeSample::Scalar(f), s, p).unwrap_or(0.0)
        }
    };
    let r_max = (t_f - t).max(t);
    let steps = (r_max / dr).ceil().max(1.0) as usize;
    let h = r_max / steps as f64;
    let total: f64 = (0..q.len())
        .into_par_iter()
        .map(|j| {
            let th = q.nodes[j];
            let mth = [-th[0], -th[1], -th[2]];
            let mut acc = 0.0;
            for m in 0..=steps {
                let r = m as f64 * h;
                let c = if m == 0 || m == steps { 0.5 * h } else { h };
                let p = [x[0] + r * th[0], x[1] + r * th[1], x[2] + r * th[2]];
                // I+: (t + r, x + r theta) along theta
                let ip = kappa(t, x, th) * kappa(t + r, p, th) * sample(t + r, p);
                // I-: (t - r, x + r theta) along -theta
                let im = kappa(t, x, mth) * kappa(t - r, p, mth) * sample(t - r, p);
                acc += c * (ip + im);
            }
            q.weights[j] * acc
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::{rel_l2, L2Inner};
    use crate::quadrature::build_direction_quadrature;
    use crate::scalar::C64;
    use crate::transport::{t1_inverse_final, SourceTerm};

    fn setup() -> (Arc<Lattice>, Arc<DirectionQuadrature>) {
        (
            Arc::new(Lattice::new(1.0, 7, 4.0, 8, 1.0).unwrap()),
            Arc::new(build_direction_quadrature(3).unwrap()),
        )
    }

    fn bump(lat: &Lattice) -> impl Fn(f64, [f64; 3]) -> f64 + '_ {
        move |t, x| {
            let r = lat.dist_from_center(x);
            let s = (std::f64::consts::PI * t / lat.t_final).sin();
            if r < 0.9 {
                s * s * (-1.0 / (1.0 - (r / 0.9).powi(2))).exp()
            } else {
                0.0
            }
        }
    }

    #[test]
    fn adjoint_dot_tests() {
        let (lat, q) = setup();
        let f = ScalarField::from_fn(lat.clone(), TimeAxis::Window, bump(&lat));
        let g = RayData::from_fn(lat.clone(), q.clone(), 0.0, |x, th| (x[0] - 2.0 * th[1]).cos());
        let kt = WeightFunction::Time((0..lat.n_t).map(|k| 1.0 + 0.1 * k as f64).collect());
        for kappa in [WeightFunction::Unit, kt] {
            let lf = lray_with(&f, &kappa, 0.0, q.clone()).unwrap();
            let ls = lray_adjoint(&g, &kappa, TimeAxis::Window).unwrap();
            let a = lf.l2_inner(&g).unwrap();
            let b = f.l2_inner(&ls).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs());
        }
        // measurement weight with space-dependent absorption, base T
        let sig = KineticField::from_fn(lat.clone(), q.clone(), |t, x, th| {
            0.4 * bump(&lat)(0.5, x) * (1.0 + 0.3 * th[2]) * (1.0 + t)
        });
        let sigma = AbsorptionField::full(sig).unwrap();
        let kappa = WeightFunction::measurement(sigma);
        let gt = RayData::from_fn(lat.clone(), q.clone(), 1.0, |x, th| (x[1] + th[0]).sin());
        let lf = lray_weighted(&f, &kappa).unwrap();
        assert_eq!(lf.base_time, 1.0);
        let ls = lray_adjoint(&gt, &kappa, TimeAxis::Window).unwrap();
        let a = lf.l2_inner(&gt).unwrap();
        let b = f.l2_inner(&ls).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs());
        // padded axis
        let fp = f.padded();
        let lp = lray_with(&fp, &WeightFunction::Unit, 0.0, q.clone()).unwrap();
        let lsp = lray_adjoint(&g, &WeightFunction::Unit, TimeAxis::Padded).unwrap();
        let a = lp.l2_inner(&g).unwrap();
        let b = fp.l2_inner(&lsp).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn measurement_weight_matches_transport() {
        let (lat, q) = setup();
        let f = ScalarField::from_fn(lat.clone(), TimeAxis::Window, bump(&lat));
        let sigma = AbsorptionField::time_fn(lat.clone(), |t| 0.5 + 0.3 * t).unwrap();
        let a = lray_weighted(&f, &WeightFunction::measurement(sigma.clone())).unwrap();
        let src = SourceTerm::scalar(f.clone(), a.quadrature.clone()).unwrap();
        let b = t1_inverse_final(&src, &sigma).unwrap();
        assert!(rel_l2(&a.values, &b.values) < 1e-12);
        let kt = WeightFunction::<f64>::time_from_absorption(&sigma).unwrap();
        let c = lray_at(&f, &kt, lat.t_final, Some(a.quadrature.clone())).unwrap();
        assert!(rel_l2(&c.values, &b.values) < 1e-12);
        let _ = q;
    }

    #[test]
    fn constant_ray_data_backprojects_to_four_pi() {
        let (lat, q) = setup();
        let g = RayData::from_fn(lat.clone(), q, 0.0, |_, _| C64::new(2.0, -1.0));
        let h = lray_adjoint(&g, &WeightFunction::Unit, TimeAxis::Window).unwrap();
        let fpi = 4.0 * std::f64::consts::PI;
        for k in 1..lat.n_t - 1 {
            for v in h.slice(k) {
                assert!((v - C64::new(2.0, -1.0) * fpi).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn normal_operator_is_positive_and_symmetric() {
        let (lat, q) = setup();
        let f = ScalarField::from_fn(lat.clone(), TimeAxis::Window, bump(&lat));
        let g = ScalarField::from_fn(lat.clone(), TimeAxis::Window, |t, x| {
            bump(&lat)(t, x) * (x[0] - 2.0)
        });
        let nf = normal_compose(&f, &WeightFunction::Unit, q.clone()).unwrap();
        let ng = normal_compose(&g, &WeightFunction::Unit, q.clone()).unwrap();
        assert!(nf.l2_inner(&f).unwrap() > 0.0);
        let a = nf.l2_inner(&g).unwrap();
        let b = f.l2_inner(&ng).unwrap();
        assert!((a - b).abs() < 1e-12 * nf.l2_norm() * g.l2_norm());
        let z = ScalarField::<f64>::zeros(lat, TimeAxis::Window);
        assert_eq!(normal_compose(&z, &WeightFunction::Unit, q).unwrap().max_abs(), 0.0);
    }
}
