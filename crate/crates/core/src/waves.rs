//! Hyperbolic Cauchy problems `P f = 0` with `P = box + sum_j A_j d_j + B`,
//! `box = -d_t^2 + Laplacian`, Bardeen's equation, the CMB source terms, the
//! operator `A(D)` and least-squares recovery of Cauchy data from `u_T`.
//!
//! Time stepping is leapfrog with a pointwise-implicit damping term; space
//! derivatives are spectral on the periodic box.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::field::{CauchyData, KineticField, RaySlice, ScalarField};
use crate::lattice::{Lattice, TimeAxis};
use crate::norm::L2Inner;
use crate::quadrature::DirectionQuadrature;
use crate::scalar::{Scalar, C64};
use crate::transport::{
    boltzmann_measure, boltzmann_measure_adjoint, sum_directions, AbsorptionField,
    ScatteringKernelField, SolveReport, SourceTerm,
};

/// Sign of the Laplacian when the equation is written as
/// `d_t^2 f + A0 d_t f +/- Laplacian f + B0 f = 0`.
///
/// `Minus` is the usual wave operator. `Plus` is the literal printed form of
/// Bardeen's equation; it is elliptic in space-time and blows up at high
/// frequency, so it is only kept as an explicit toggle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianSign {
    #[default]
    Minus,
    Plus,
}

impl LaplacianSign {
    /// Factor `s` in `d_t^2 f = s Laplacian f + ...`.
    fn factor(self) -> f64 {
        match self {
            LaplacianSign::Minus => 1.0,
            LaplacianSign::Plus => -1.0,
        }
    }
}

/// A lower-order coefficient sampled on the time window.
#[derive(Clone, Debug)]
pub enum Coefficient<S: Scalar> {
    Constant(S),
    /// One value per window time sample.
    Time(Vec<S>),
    Field(ScalarField<S>),
}

enum Slot<'a, S> {
    Uniform(S),
    Grid(&'a [S]),
}

impl<S: Scalar> Slot<'_, S> {
    #[inline]
    fn get(&self, s: usize) -> S {
        match self {
            Slot::Uniform(v) => *v,
            Slot::Grid(g) => g[s],
        }
    }
}

impl<S: Scalar> Coefficient<S> {
    fn at(&self, k: usize) -> Slot<'_, S> {
        match self {
            Coefficient::Constant(c) => Slot::Uniform(*c),
            Coefficient::Time(v) => Slot::Uniform(v[k]),
            Coefficient::Field(f) => Slot::Grid(f.slice(k)),
        }
    }

    fn check(&self, lat: &Lattice, name: &str) -> Result<()> {
        let finite = match self {
            Coefficient::Constant(c) => c.is_finite(),
            Coefficient::Time(v) => {
                if v.len() != lat.n_t {
                    return Err(Error::ShapeMismatch(format!(
                        "{name}: {} time samples, n_t = {}",
                        v.len(),
                        lat.n_t
                    )));
                }
                v.iter().all(|x| x.is_finite())
            }
            Coefficient::Field(f) => {
                if *f.lattice != *lat || f.axis != TimeAxis::Window {
                    return Err(Error::ShapeMismatch(format!(
                        "{name} must be a window field on the data lattice"
                    )));
                }
                f.values.iter().all(|x| x.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err(Error::NonFinite(name.into()))
        }
    }
}

impl Coefficient<f64> {
    pub fn to_complex(&self) -> Coefficient<C64> {
        match self {
            Coefficient::Constant(c) => Coefficient::Constant(C64::new(*c, 0.0)),
            Coefficient::Time(v) => Coefficient::Time(v.iter().map(|&x| C64::new(x, 0.0)).collect()),
            Coefficient::Field(f) => Coefficient::Field(f.to_complex()),
        }
    }
}

/// `P = -d_t^2 + s Laplacian + sum_j A_j d_j + B` (index 0 is time).
#[derive(Clone, Debug)]
pub struct HyperbolicOperatorSpec<S: Scalar = f64> {
    pub a: [Option<Coefficient<f64>>; 4],
    pub b: Option<Coefficient<S>>,
    pub laplacian: LaplacianSign,
}

impl<S: Scalar> Default for HyperbolicOperatorSpec<S> {
    fn default() -> Self {
        Self::free()
    }
}

impl<S: Scalar> HyperbolicOperatorSpec<S> {
    /// The free wave operator.
    pub fn free() -> Self {
        HyperbolicOperatorSpec {
            a: [None, None, None, None],
            b: None,
            laplacian: LaplacianSign::Minus,
        }
    }

    pub fn with_a(mut self, j: usize, c: Coefficient<f64>) -> Self {
        self.a[j] = Some(c);
        self
    }

    pub fn with_b(mut self, c: Coefficient<S>) -> Self {
        self.b = Some(c);
        self
    }

    pub fn with_laplacian(mut self, sign: LaplacianSign) -> Self {
        self.laplacian = sign;
        self
    }

    pub fn validate(&self, lat: &Lattice) -> Result<()> {
        for (j, a) in self.a.iter().enumerate() {
            if let Some(a) = a {
                a.check(lat, &format!("A_{j}"))?;
            }
        }
        if let Some(b) = &self.b {
            b.check(lat, "B")?;
        }
        Ok(())
    }
}

impl HyperbolicOperatorSpec<f64> {
    pub fn to_complex(&self) -> HyperbolicOperatorSpec<C64> {
        HyperbolicOperatorSpec {
            a: self.a.clone(),
            b: self.b.as_ref().map(|b| b.to_complex()),
            laplacian: self.laplacian,
        }
    }
}

/// Stability limit `dt <= 2 dx / (sqrt(3) pi)` of leapfrog with spectral
/// derivatives (the largest grid wavenumber is `sqrt(3) pi / dx`).
pub fn cfl_limit(lat: &Lattice) -> f64 {
    2.0 * lat.dx() / (3f64.sqrt() * std::f64::consts::PI)
}

fn from_c<S: Scalar>(z: C64) -> S {
    if S::IS_COMPLEX {
        S::from_complex(z).unwrap()
    } else {
        S::from_re(z.re)
    }
}

/// Spectral space derivatives on one time slice.
struct SpatialOps {
    fft: FftNd,
    k2: Vec<f64>,
    /// Wavenumbers per axis with the Nyquist mode zeroed.
    kd: [Vec<f64>; 3],
}

impl SpatialOps {
    fn new(lat: &Lattice) -> Self {
        let n = lat.n_x;
        let ns = lat.n_space();
        let wave = |i: usize| {
            if n % 2 == 0 && i == n / 2 {
                0.0
            } else {
                lat.spatial_freq(i)
            }
        };
        let mut kd = [vec![0.0; ns], vec![0.0; ns], vec![0.0; ns]];
        let mut k2 = vec![0.0; ns];
        for s in 0..ns {
            let idx = [s / (n * n), (s / n) % n, s % n];
            for a in 0..3 {
                kd[a][s] = wave(idx[a]);
                let f = lat.spatial_freq(idx[a]);
                k2[s] += f * f;
            }
        }
        SpatialOps {
            fft: FftNd::new(&[n, n, n]),
            k2,
            kd,
        }
    }

    fn apply<S: Scalar, F: Fn(usize) -> C64>(&self, v: &[S], m: F) -> Vec<S> {
        let mut buf: Vec<C64> = v.iter().map(|x| x.to_complex()).collect();
        self.fft.forward(&mut buf);
        for (s, b) in buf.iter_mut().enumerate() {
            *b *= m(s);
        }
        self.fft.inverse(&mut buf);
        buf.into_iter().map(from_c).collect()
    }

    fn laplacian<S: Scalar>(&self, v: &[S]) -> Vec<S> {
        self.apply(v, |s| C64::new(-self.k2[s], 0.0))
    }

    fn deriv<S: Scalar>(&self, v: &[S], axis: usize) -> Vec<S> {
        self.apply(v, |s| C64::new(0.0, self.kd[axis][s]))
    }
}

/// Precomputed stepping data for one spec on one lattice.
struct Stepper<'a, S: Scalar> {
    spec: &'a HyperbolicOperatorSpec<S>,
    ops: SpatialOps,
    dt: f64,
    ns: usize,
    sign: f64,
}

impl<'a, S: Scalar> Stepper<'a, S> {
    fn new(spec: &'a HyperbolicOperatorSpec<S>, lat: &Lattice) -> Result<Self> {
        spec.validate(lat)?;
        if lat.n_t < 2 {
            return Err(Error::InvalidArgument("wave solver needs n_t >= 2".into()));
        }
        let dt = lat.dt();
        let limit = cfl_limit(lat);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit });
        }
        Ok(Stepper {
            spec,
            ops: SpatialOps::new(lat),
            dt,
            ns: lat.n_space(),
            sign: spec.laplacian.factor(),
        })
    }

    fn a0(&self, k: usize, s: usize) -> f64 {
        match &self.spec.a[0] {
            Some(c) => c.at(k).get(s),
            None => 0.0,
        }
    }

    /// `L_k f = s Laplacian f + sum_i A_i d_i f + B f` at time sample `k`.
    fn space_op(&self, k: usize, f: &[S]) -> Vec<S> {
        let mut out = self.ops.laplacian(f);
        if self.sign != 1.0 {
            out.iter_mut().for_each(|v| *v = *v * self.sign);
        }
        for i in 1..4 {
            if let Some(a) = &self.spec.a[i] {
                let d = self.ops.deriv(f, i - 1);
                let a = a.at(k);
                for s in 0..self.ns {
                    out[s] += d[s] * a.get(s);
                }
            }
        }
        if let Some(b) = &self.spec.b {
            let b = b.at(k);
            for s in 0..self.ns {
                out[s] += b.get(s) * f[s];
            }
        }
        out
    }

    /// Conjugate transpose of [`Self::space_op`].
    fn space_op_adjoint(&self, k: usize, z: &[S]) -> Vec<S> {
        let mut out = self.ops.laplacian(z);
        if self.sign != 1.0 {
            out.iter_mut().for_each(|v| *v = *v * self.sign);
        }
        for i in 1..4 {
            if let Some(a) = &self.spec.a[i] {
                let a = a.at(k);
                let az: Vec<S> = (0..self.ns).map(|s| z[s] * a.get(s)).collect();
                let d = self.ops.deriv(&az, i - 1);
                for s in 0..self.ns {
                    out[s] -= d[s];
                }
            }
        }
        if let Some(b) = &self.spec.b {
            let b = b.at(k);
            for s in 0..self.ns {
                out[s] += b.get(s).conj() * z[s];
            }
        }
        out
    }

    fn forward(&self, lat: &Arc<Lattice>, data: &CauchyData<S>) -> ScalarField<S> {
        let (nt, ns, dt) = (lat.n_t, self.ns, self.dt);
        let mut out = ScalarField::zeros(lat.clone(), TimeAxis::Window);
        let v = &mut out.values;
        v[..ns].copy_from_slice(&data.f1);
        let l0 = self.space_op(0, &data.f1);
        for s in 0..ns {
            v[ns + s] = data.f1[s]
                + data.f2[s] * dt
                + (l0[s] + data.f2[s] * self.a0(0, s)) * (0.5 * dt * dt);
        }
        for n in 1..nt - 1 {
            let lf = self.space_op(n, &v[n * ns..(n + 1) * ns]);
            for s in 0..ns {
                let h = 0.5 * self.a0(n, s) * dt;
                let f = v[n * ns + s];
                let fm = v[(n - 1) * ns + s];
                v[(n + 1) * ns + s] = (f * 2.0 + lf[s] * (dt * dt) - fm * (1.0 + h)) * (1.0 / (1.0 - h));
            }
        }
        out
    }

    /// Reverse sweep of the transposed update; no `dt` factor.
    fn transpose(&self, lat: &Arc<Lattice>, g: &[S]) -> CauchyData<S> {
        let (nt, ns, dt) = (lat.n_t, self.ns, self.dt);
        let mut mu = g.to_vec();
        for n in (1..nt - 1).rev() {
            let z: Vec<S> = (0..ns)
                .map(|s| mu[(n + 1) * ns + s] * (1.0 / (1.0 - 0.5 * self.a0(n, s) * dt)))
                .collect();
            let lz = self.space_op_adjoint(n, &z);
            for s in 0..ns {
                let h = 0.5 * self.a0(n, s) * dt;
                mu[n * ns + s] += z[s] * 2.0 + lz[s] * (dt * dt);
                mu[(n - 1) * ns + s] -= z[s] * (1.0 + h);
            }
        }
        let m1 = &mu[ns..2 * ns];
        let l0 = self.space_op_adjoint(0, m1);
        let mut d = CauchyData::zeros(lat.clone());
        for s in 0..ns {
            d.f1[s] = mu[s] + m1[s] + l0[s] * (0.5 * dt * dt);
            d.f2[s] = m1[s] * (dt + 0.5 * dt * dt * self.a0(0, s));
        }
        d
    }
}

/// Solves `P f = 0`, `f(0) = f1`, `d_t f(0) = f2` on the time window.
///
/// The data must sit within `support_radius - t_final` of the box centre so
/// the wave never reaches the periodic images.
pub fn wave_solve<S: Scalar>(spec: &HyperbolicOperatorSpec<S>, data: &CauchyData<S>) -> Result<ScalarField<S>> {
    data.check_support()?;
    wave_solve_periodic(spec, data)
}

/// [`wave_solve`] without the support guard, for periodic test modes.
pub fn wave_solve_periodic<S: Scalar>(
    spec: &HyperbolicOperatorSpec<S>,
    data: &CauchyData<S>,
) -> Result<ScalarField<S>> {
    let lat = data.lattice.clone();
    let st = Stepper::new(spec, &lat)?;
    let out = st.forward(&lat, data);
    out.check_finite()?;
    Ok(out)
}

/// Exact adjoint of [`wave_solve`] for the window and Cauchy-data pairings.
pub fn wave_adjoint_solve<S: Scalar>(spec: &HyperbolicOperatorSpec<S>, g: &ScalarField<S>) -> Result<CauchyData<S>> {
    if g.axis != TimeAxis::Window {
        return Err(Error::ShapeMismatch("wave adjoint expects a window field".into()));
    }
    let lat = g.lattice.clone();
    let st = Stepper::new(spec, &lat)?;
    let mut d = st.transpose(&lat, &g.values);
    d.scale(S::from_re(lat.dt()));
    if d.f1.iter().chain(&d.f2).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("wave adjoint".into()));
    }
    Ok(d)
}

/// Leapfrog energy `|(f^{k+1} - f^k)/dt|^2 + <grad f^{k+1}, grad f^k>` at the
/// half steps; exactly conserved by the free scheme.
pub fn wave_energy<S: Scalar>(f: &ScalarField<S>) -> Result<Vec<f64>> {
    if f.axis != TimeAxis::Window {
        return Err(Error::ShapeMismatch("energy is defined on window fields".into()));
    }
    let lat = &f.lattice;
    let ops = SpatialOps::new(lat);
    let (dt, dv) = (lat.dt(), lat.dx().powi(3));
    Ok((0..lat.n_t - 1)
        .map(|k| {
            let (a, b) = (f.slice(k), f.slice(k + 1));
            let lap = ops.laplacian(a);
            let mut e = 0.0;
            for s in 0..a.len() {
                e += (b[s] - a[s]).norm_sqr() / (dt * dt) - (b[s].conj() * lap[s]).re();
            }
            e * dv
        })
        .collect())
}

/// Time-only coefficients of `d_t^2 Psi + A0 d_t Psi -/+ Laplacian Psi + B0 Psi = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BardeenCoefficients {
    pub a0: Vec<f64>,
    pub b0: Vec<f64>,
}

impl BardeenCoefficients {
    pub fn from_fn<A: Fn(f64) -> f64, B: Fn(f64) -> f64>(lat: &Lattice, a0: A, b0: B) -> Self {
        let t = |k| lat.time_of(TimeAxis::Window, k);
        BardeenCoefficients {
            a0: (0..lat.n_t).map(|k| a0(t(k))).collect(),
            b0: (0..lat.n_t).map(|k| b0(t(k))).collect(),
        }
    }

    pub fn constant(lat: &Lattice, a0: f64, b0: f64) -> Self {
        Self::from_fn(lat, |_| a0, |_| b0)
    }

    pub fn to_spec<S: Scalar>(&self, sign: LaplacianSign) -> HyperbolicOperatorSpec<S> {
        let mut spec = HyperbolicOperatorSpec::free().with_laplacian(sign);
        if self.a0.iter().any(|&v| v != 0.0) {
            spec.a[0] = Some(Coefficient::Time(self.a0.iter().map(|&v| -v).collect()));
        }
        if self.b0.iter().any(|&v| v != 0.0) {
            spec.b = Some(Coefficient::Time(self.b0.iter().map(|&v| S::from_re(-v)).collect()));
        }
        spec
    }
}

pub fn bardeen_solve<S: Scalar>(
    coeffs: &BardeenCoefficients,
    data: &CauchyData<S>,
    sign: LaplacianSign,
) -> Result<ScalarField<S>> {
    let spec = coeffs.to_spec::<S>(sign);
    spec.validate(&data.lattice)?;
    wave_solve(&spec, data)
}

/// `d_t f`: spectral on the padded (periodic) axis, second-order finite
/// differences on the window, whose ends are not periodic.
pub fn time_derivative<S: Scalar>(f: &ScalarField<S>) -> Result<ScalarField<S>> {
    let lat = f.lattice.clone();
    let ns = lat.n_space();
    match f.axis {
        TimeAxis::Window => {
            let nt = lat.n_t;
            if nt < 3 {
                return Err(Error::InvalidArgument("finite differences need n_t >= 3".into()));
            }
            let rows = fd_rows(nt, lat.dt());
            let mut out = ScalarField::zeros(lat, TimeAxis::Window);
            for (k, row) in rows.iter().enumerate() {
                for &(j, c) in row {
                    for s in 0..ns {
                        out.values[k * ns + s] += f.values[j * ns + s] * c;
                    }
                }
            }
            Ok(out)
        }
        TimeAxis::Padded => spectral_dt(f, 1.0),
    }
}

fn time_derivative_adjoint<S: Scalar>(g: &ScalarField<S>) -> Result<ScalarField<S>> {
    let lat = g.lattice.clone();
    let ns = lat.n_space();
    match g.axis {
        TimeAxis::Window => {
            let rows = fd_rows(lat.n_t, lat.dt());
            let mut out = ScalarField::zeros(lat, TimeAxis::Window);
            for (k, row) in rows.iter().enumerate() {
                for &(j, c) in row {
                    for s in 0..ns {
                        out.values[j * ns + s] += g.values[k * ns + s] * c;
                    }
                }
            }
            Ok(out)
        }
        TimeAxis::Padded => spectral_dt(g, -1.0),
    }
}

/// Rows of the window difference matrix: centred inside, one-sided at the ends.
fn fd_rows(nt: usize, dt: f64) -> Vec<Vec<(usize, f64)>> {
    let h = 0.5 / dt;
    (0..nt)
        .map(|k| {
            if k == 0 {
                vec![(0, -3.0 * h), (1, 4.0 * h), (2, -h)]
            } else if k == nt - 1 {
                vec![(k, 3.0 * h), (k - 1, -4.0 * h), (k - 2, h)]
            } else {
                vec![(k + 1, h), (k - 1, -h)]
            }
        })
        .collect()
}

/// `sign * d_t` on the padded axis, Nyquist frequency dropped.
fn spectral_dt<S: Scalar>(f: &ScalarField<S>, sign: f64) -> Result<ScalarField<S>> {
    let lat = f.lattice.clone();
    let n = lat.n_total();
    let ns = lat.n_space();
    let fft = FftNd::new(&[n]);
    let mut out = ScalarField::zeros(lat.clone(), TimeAxis::Padded);
    let mut col = vec![C64::new(0.0, 0.0); n];
    for s in 0..ns {
        for k in 0..n {
            col[k] = f.values[k * ns + s].to_complex();
        }
        fft.forward(&mut col);
        for (k, c) in col.iter_mut().enumerate() {
            let tau = if n % 2 == 0 && k == n / 2 {
                0.0
            } else {
                lat.temporal_freq(k)
            };
            *c *= C64::new(0.0, sign * tau);
        }
        fft.inverse(&mut col);
        for k in 0..n {
            out.values[k * ns + s] = from_c(col[k]);
        }
    }
    Ok(out)
}

/// Spectral `d_j f` (`axis` 0..3 for x, y, z) slice by slice.
pub fn spatial_derivative<S: Scalar>(f: &ScalarField<S>, axis: usize) -> Result<ScalarField<S>> {
    if axis > 2 {
        return Err(Error::OutOfRange(format!("spatial axis {axis}")));
    }
    let ops = SpatialOps::new(&f.lattice);
    let mut out = f.zeros_like();
    for k in 0..f.n_time() {
        let d = ops.deriv(f.slice(k), axis);
        out.slice_mut(k).copy_from_slice(&d);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmbForm {
    /// Direction-dependent `C (d_t Psi / 2 - theta . grad Phi / 2)`.
    Boltz3,
    /// Scalar `C (d_t Psi / 2 + d_t Phi / 2 + B Phi)`.
    Boltz4,
}

/// Source term of the linearised photon Boltzmann equation built from the
/// metric potentials. Sources live on the time window.
pub fn cmb_source<S: Scalar>(
    psi: &ScalarField<S>,
    phi: &ScalarField<S>,
    b: Option<&ScalarField<S>>,
    form: CmbForm,
    c: f64,
    quadrature: Arc<DirectionQuadrature>,
) -> Result<SourceTerm<S>> {
    psi.same_grid(phi)?;
    if let Some(b) = b {
        psi.same_grid(b)?;
    }
    let half = S::from_re(0.5 * c);
    let dpsi = time_derivative(psi)?.window();
    match form {
        CmbForm::Boltz4 => {
            let dphi = time_derivative(phi)?.window();
            let phw = phi.window();
            let bw = b.map(|b| b.window());
            let mut out = dpsi;
            for (i, v) in out.values.iter_mut().enumerate() {
                let mut x = (*v + dphi.values[i]) * half;
                if let Some(bw) = &bw {
                    x += bw.values[i] * phw.values[i] * S::from_re(c);
                }
                *v = x;
            }
            SourceTerm::scalar(out, quadrature)
        }
        CmbForm::Boltz3 => {
            let grads: Vec<ScalarField<S>> = (0..3)
                .map(|a| spatial_derivative(phi, a).map(|d| d.window()))
                .collect::<Result<_>>()?;
            let lat = psi.lattice.clone();
            let n = dpsi.values.len();
            let mut vals = Vec::with_capacity(quadrature.len() * n);
            for th in &quadrature.nodes {
                for i in 0..n {
                    let dot = grads[0].values[i] * th[0] + grads[1].values[i] * th[1] + grads[2].values[i] * th[2];
                    vals.push((dpsi.values[i] - dot) * half);
                }
            }
            Ok(SourceTerm::kinetic(KineticField::from_values(lat, quadrature, vals)?))
        }
    }
}

/// The operator `A(D)` applied to the wave before it drives the transport.
#[derive(Clone, Debug)]
pub enum PseudoDiffSpec {
    /// `d_t + B`.
    Differential { b: Option<Coefficient<C64>> },
    /// `a(tau, xi)` sampled on the padded DFT grid, layout `[tau][xi]`.
    Multiplier { symbol: Vec<C64>, order: f64 },
}

impl PseudoDiffSpec {
    pub fn dt() -> Self {
        PseudoDiffSpec::Differential { b: None }
    }

    /// Samples `a(tau, xi)` and rejects symbols that vanish on the light cone.
    pub fn multiplier<F: Fn(f64, [f64; 3]) -> C64>(lat: &Lattice, a: F, order: f64) -> Result<Self> {
        let n = lat.n_x;
        let ns = lat.n_space();
        let mut symbol = Vec::with_capacity(lat.n_total() * ns);
        for k in 0..lat.n_total() {
            let tau = lat.temporal_freq(k);
            for s in 0..ns {
                let xi = [
                    lat.spatial_freq(s / (n * n)),
                    lat.spatial_freq((s / n) % n),
                    lat.spatial_freq(s % n),
                ];
                symbol.push(a(tau, xi));
            }
        }
        let spec = PseudoDiffSpec::Multiplier { symbol, order };
        spec.check_symbol(lat)?;
        Ok(spec)
    }

    /// The symbol must not vanish on grid frequencies within one grid step
    /// of `|tau| = |xi|` (the origin neighbourhood excluded).
    pub fn check_symbol(&self, lat: &Lattice) -> Result<()> {
        let PseudoDiffSpec::Multiplier { symbol, .. } = self else {
            return Ok(());
        };
        let ns = lat.n_space();
        if symbol.len() != lat.n_total() * ns {
            return Err(Error::ShapeMismatch(format!(
                "symbol has {} samples, padded grid has {}",
                symbol.len(),
                lat.n_total() * ns
            )));
        }
        if symbol.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symbol".into()));
        }
        let peak = symbol.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let n = lat.n_x;
        let band = (2.0 * std::f64::consts::PI / lat.period()).max(2.0 * std::f64::consts::PI / lat.box_len);
        for k in 0..lat.n_total() {
            let tau = lat.temporal_freq(k);
            for s in 0..ns {
                let xi = [
                    lat.spatial_freq(s / (n * n)),
                    lat.spatial_freq((s / n) % n),
                    lat.spatial_freq(s % n),
                ];
                let r = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
                if r <= band || (tau.abs() - r).abs() > band {
                    continue;
                }
                if !(symbol[k * ns + s].norm() > 1e-10 * peak) {
                    return Err(Error::VanishingSymbol(format!("tau = {tau:.4}, |xi| = {r:.4}")));
                }
            }
        }
        Ok(())
    }

    fn apply_impl(&self, f: &ScalarField<C64>, adjoint: bool) -> Result<ScalarField<C64>> {
        match self {
            PseudoDiffSpec::Differential { b } => {
                let mut out = if adjoint {
                    time_derivative_adjoint(f)?
                } else {
                    time_derivative(f)?
                };
                if let Some(b) = b {
                    let lat = &f.lattice;
                    b.check(lat, "B")?;
                    let ns = lat.n_space();
                    let nt = match f.axis {
                        TimeAxis::Window => lat.n_t,
                        TimeAxis::Padded => {
                            return Err(Error::InvalidArgument(
                                "a B term is sampled on the window; pass a window field".into(),
                            ))
                        }
                    };
                    for k in 0..nt {
                        let bk = b.at(k);
                        for s in 0..ns {
                            let c = if adjoint { bk.get(s).conj() } else { bk.get(s) };
                            out.values[k * ns + s] += c * f.values[k * ns + s];
                        }
                    }
                }
                Ok(out)
            }
            PseudoDiffSpec::Multiplier { symbol, .. } => {
                let lat = f.lattice.clone();
                self.check_symbol(&lat)?;
                let ns = lat.n_space();
                let nt = lat.n_total();
                let fft = FftNd::new(&[nt, lat.n_x, lat.n_x, lat.n_x]);
                let mut data = f.padded().values;
                fft.forward(&mut data);
                for (v, a) in data.iter_mut().zip(symbol) {
                    *v *= if adjoint { a.conj() } else { *a };
                }
                fft.inverse(&mut data);
                debug_assert_eq!(data.len(), nt * ns);
                ScalarField::from_values(lat, TimeAxis::Padded, data)
            }
        }
    }
}

/// `A(D) f`. The differential form keeps the time axis of `f`; the
/// multiplier form returns a padded field.
pub fn ad_apply(spec: &PseudoDiffSpec, f: &ScalarField<C64>) -> Result<ScalarField<C64>> {
    spec.apply_impl(f, false)
}

/// Adjoint of [`ad_apply`]: `-d_t + conj(B)` or the conjugate symbol.
pub fn ad_adjoint(spec: &PseudoDiffSpec, g: &ScalarField<C64>) -> Result<ScalarField<C64>> {
    spec.apply_impl(g, true)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CauchyRecoverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for CauchyRecoverConfig {
    fn default() -> Self {
        CauchyRecoverConfig {
            tol: 1e-6,
            max_iter: 300,
            solver_tol: 1e-10,
            solver_max_iter: 200,
        }
    }
}

/// `F(f1, f2) = u_T` for the source `chi0 * A(D) f`, `f` the wave launched by
/// the data. Unknowns are restricted to the ball where the wave guard holds;
/// the source is restricted to the lattice support ball, which removes the
/// small non-local tails of spectral differentiation.
pub struct ForwardChain<'a> {
    pub spec: &'a HyperbolicOperatorSpec<C64>,
    pub ad: &'a PseudoDiffSpec,
    pub sigma: &'a AbsorptionField,
    pub k: &'a ScatteringKernelField,
    pub chi0: Vec<f64>,
    pub quadrature: Arc<DirectionQuadrature>,
    pub lattice: Arc<Lattice>,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    data_mask: Vec<bool>,
    source_mask: Vec<bool>,
}

impl<'a> ForwardChain<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lattice: Arc<Lattice>,
        spec: &'a HyperbolicOperatorSpec<C64>,
        ad: &'a PseudoDiffSpec,
        sigma: &'a AbsorptionField,
        k: &'a ScatteringKernelField,
        chi0: Vec<f64>,
        quadrature: Arc<DirectionQuadrature>,
        solver_tol: f64,
        solver_max_iter: usize,
    ) -> Result<Self> {
        spec.validate(&lattice)?;
        ad.check_symbol(&lattice)?;
        let allowed = lattice.support_radius() - lattice.t_final;
        if allowed <= 0.0 {
            return Err(Error::SupportViolation(format!(
                "support radius {} does not exceed t_final {}",
                lattice.support_radius(),
                lattice.t_final
            )));
        }
        let slack = 1e-9 * lattice.box_len;
        let dist: Vec<f64> = (0..lattice.n_space())
            .map(|s| lattice.dist_from_center(lattice.point(s)))
            .collect();
        let data_mask = dist.iter().map(|&r| r <= allowed + slack).collect();
        let source_mask = dist.iter().map(|&r| r <= lattice.support_radius() + slack).collect();
        Ok(ForwardChain {
            spec,
            ad,
            sigma,
            k,
            chi0,
            quadrature,
            lattice,
            solver_tol,
            solver_max_iter,
            data_mask,
            source_mask,
        })
    }

    /// Number of unknowns (both components) inside the data ball.
    pub fn n_unknowns(&self) -> usize {
        2 * self.data_mask.iter().filter(|&&m| m).count()
    }

    pub fn data_mask(&self) -> &[bool] {
        &self.data_mask
    }

    pub fn restrict_data(&self, d: &mut CauchyData<C64>) {
        for (s, &m) in self.data_mask.iter().enumerate() {
            if !m {
                d.f1[s] = C64::new(0.0, 0.0);
                d.f2[s] = C64::new(0.0, 0.0);
            }
        }
    }

    fn mask_source(&self, f: &mut ScalarField<C64>) {
        let ns = self.lattice.n_space();
        for (i, v) in f.values.iter_mut().enumerate() {
            if !self.source_mask[i % ns] {
                *v = C64::new(0.0, 0.0);
            }
        }
    }

    /// The source `A(D) f` before the cutoff, on the window.
    pub fn source(&self, d: &CauchyData<C64>) -> Result<ScalarField<C64>> {
        let mut d = d.clone();
        self.restrict_data(&mut d);
        let wave = wave_solve(self.spec, &d)?;
        let mut src = ad_apply(self.ad, &wave)?.window();
        self.mask_source(&mut src);
        Ok(src)
    }

    pub fn apply(&self, d: &CauchyData<C64>) -> Result<RaySlice<C64>> {
        let src = SourceTerm::scalar(self.source(d)?, self.quadrature.clone())?.with_cutoff(self.chi0.clone())?;
        let (g, _) = boltzmann_measure(&src, self.sigma, self.k, self.solver_tol, self.solver_max_iter)?;
        Ok(g)
    }

    pub fn adjoint(&self, g: &RaySlice<C64>) -> Result<CauchyData<C64>> {
        let (z, _) = boltzmann_measure_adjoint(g, self.sigma, self.k, self.solver_tol, self.solver_max_iter)?;
        let mut h = sum_directions(&z);
        h.mul_time(|t| {
            let k = (t / self.lattice.dt()).round() as usize;
            C64::new(self.chi0[k.min(self.chi0.len() - 1)], 0.0)
        });
        self.mask_source(&mut h);
        let h = match self.ad {
            PseudoDiffSpec::Differential { .. } => ad_adjoint(self.ad, &h)?,
            PseudoDiffSpec::Multiplier { .. } => ad_adjoint(self.ad, &h.padded())?.window(),
        };
        let mut d = wave_adjoint_solve(self.spec, &h)?;
        self.restrict_data(&mut d);
        Ok(d)
    }
}

/// Least-squares recovery of `(f1, f2)` from `u_T` by conjugate gradients on
/// the normal equations (CGLS form). The recorded residual is
/// `|u_T - F d| / |u_T|`, which CG never increases.
#[allow(clippy::too_many_arguments)]
pub fn cauchy_recover(
    ut: &RaySlice<C64>,
    spec: &HyperbolicOperatorSpec<C64>,
    ad: &PseudoDiffSpec,
    sigma: &AbsorptionField,
    k: &ScatteringKernelField,
    chi0: &[f64],
    cfg: &CauchyRecoverConfig,
) -> Result<(CauchyData<C64>, SolveReport)> {
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::InvalidArgument("need tol > 0 and max_iter >= 1".into()));
    }
    let chain = ForwardChain::new(
        ut.lattice.clone(),
        spec,
        ad,
        sigma,
        k,
        chi0.to_vec(),
        ut.quadrature.clone(),
        cfg.solver_tol,
        cfg.solver_max_iter,
    )?;
    cgls(&chain, ut, cfg.tol, cfg.max_iter)
}

pub fn cgls(
    chain: &ForwardChain<'_>,
    ut: &RaySlice<C64>,
    tol: f64,
    max_iter: usize,
) -> Result<(CauchyData<C64>, SolveReport)> {
    let bn = ut.l2_norm();
    let mut x = CauchyData::zeros(chain.lattice.clone());
    if bn == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                residual_history: vec![0.0],
                converged: true,
            },
        ));
    }
    let mut r = ut.clone();
    let mut s = chain.adjoint(&r)?;
    let mut p = s.clone();
    let mut gamma = s.l2_norm().powi(2);
    let gamma0 = gamma;
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let q = chain.apply(&p)?;
        let qn = q.l2_norm().powi(2);
        if qn == 0.0 || !qn.is_finite() {
            return Err(Error::Stagnation {
                iterations: it,
                last: history.last().copied().unwrap_or(1.0),
                history,
            });
        }
        let alpha = gamma / qn;
        x.axpy(C64::new(alpha, 0.0), &p);
        r.axpy(C64::new(-alpha, 0.0), &q)?;
        let res = r.l2_norm() / bn;
        history.push(res);
        if !res.is_finite() {
            return Err(Error::NonFinite("CG residual".into()));
        }
        if res <= tol {
            return Ok((
                x,
                SolveReport {
                    iterations: it,
                    residual_history: history,
                    converged: true,
                },
            ));
        }
        s = chain.adjoint(&r)?;
        let g_new = s.l2_norm().powi(2);
        // least-squares minimum reached above tol: data not in the range
        if g_new <= 1e-28 * gamma0 {
            return Err(Error::Stagnation {
                iterations: it,
                last: res,
                history,
            });
        }
        let beta = g_new / gamma;
        gamma = g_new;
        let mut np = s.clone();
        np.axpy(C64::new(beta, 0.0), &p);
        p = np;
    }
    Err(Error::Stagnation {
        iterations: max_iter,
        last: *history.last().unwrap(),
        history,
    })
}

/// `|a - b| / |b|` over both Cauchy components.
pub fn cauchy_rel_error<S: Scalar>(a: &CauchyData<S>, b: &CauchyData<S>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.f1.iter().zip(&b.f1).chain(a.f2.iter().zip(&b.f2)) {
        num += (*x - *y).norm_sqr();
        den += y.norm_sqr();
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::l2_inner;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lat(n: usize, nt: usize) -> Arc<Lattice> {
        Arc::new(Lattice::new(1.0, nt, 6.0, n, 1.0).unwrap())
    }

    #[test]
    fn plane_wave_is_second_order() {
        let err = |nt: usize| {
            let l = Arc::new(Lattice::new(1.0, nt, 2.0 * std::f64::consts::PI, 8, 1.0).unwrap());
            let xi = [1.0, 2.0, 0.0];
            let w = (5.0f64).sqrt();
            let d = CauchyData::from_fn(
                l.clone(),
                |x| C64::new(0.0, xi[0] * x[0] + xi[1] * x[1]).exp(),
                |_| C64::new(0.0, 0.0),
            );
            let f = wave_solve_periodic(&HyperbolicOperatorSpec::free(), &d).unwrap();
            let exact = ScalarField::from_fn(l, TimeAxis::Window, |t, x| {
                C64::new(0.0, xi[0] * x[0] + xi[1] * x[1]).exp() * (w * t).cos()
            });
            crate::norm::rel_l2(&f.values, &exact.values)
        };
        let (a, b) = (err(41), err(81));
        assert!(a < 1e-2, "{a}");
        let ratio = a / b;
        assert!((ratio - 4.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn zero_data_and_cfl() {
        let l = lat(8, 5);
        let f = wave_solve(&HyperbolicOperatorSpec::<f64>::free(), &CauchyData::zeros(l.clone())).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
        let bad = Arc::new(Lattice::new(1.0, 3, 6.0, 16, 1.0).unwrap());
        let e = wave_solve(&HyperbolicOperatorSpec::<f64>::free(), &CauchyData::zeros(bad));
        assert!(matches!(e, Err(Error::Cfl { .. })));
    }

    #[test]
    fn support_guard() {
        let l = lat(8, 5);
        let d = CauchyData::from_fn(l, |_| 1.0, |_| 0.0);
        assert!(matches!(
            wave_solve(&HyperbolicOperatorSpec::free(), &d),
            Err(Error::SupportViolation(_))
        ));
    }

    fn random_spec(l: &Arc<Lattice>, rng: &mut ChaCha8Rng) -> HyperbolicOperatorSpec<C64> {
        let field = || ScalarField::from_fn(l.clone(), TimeAxis::Window, |t, x| 0.3 * (t + x[0]).sin());
        let a1 = field();
        let b = ScalarField::from_fn(l.clone(), TimeAxis::Window, |t, x| C64::new(0.2 * x[1].cos(), 0.1 * t));
        let a0: Vec<f64> = (0..l.n_t).map(|_| rng.gen_range(-0.5..0.5)).collect();
        HyperbolicOperatorSpec::free()
            .with_a(0, Coefficient::Time(a0))
            .with_a(1, Coefficient::Field(a1))
            .with_a(3, Coefficient::Constant(0.4))
            .with_b(Coefficient::Field(b))
    }

    #[test]
    fn adjoint_dot_test() {
        let l = lat(8, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = random_spec(&l, &mut rng);
        let ns = l.n_space();
        let mut cv = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let d = CauchyData::new(l.clone(), (0..ns).map(|_| cv()).collect(), (0..ns).map(|_| cv()).collect()).unwrap();
        let g = ScalarField::from_values(l.clone(), TimeAxis::Window, (0..ns * l.n_t).map(|_| cv()).collect())
            .unwrap();
        let lhs = l2_inner(&wave_solve_periodic(&spec, &d).unwrap(), &g).unwrap();
        let rhs = l2_inner(&d, &wave_adjoint_solve(&spec, &g).unwrap()).unwrap();
        assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm(), "{lhs} {rhs}");
        let z = wave_adjoint_solve(&spec, &g.zeros_like()).unwrap();
        assert!(z.f1.iter().chain(&z.f2).all(|v| v.norm() == 0.0));
    }

    #[test]
    fn adjoint_matches_dense_transpose() {
        let l = lat(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = random_spec(&l, &mut rng);
        let ns = l.n_space();
        let rows = ns * l.n_t;
        let mut m = vec![C64::new(0.0, 0.0); rows * 2 * ns];
        for c in 0..2 * ns {
            let mut d = CauchyData::zeros(l.clone());
            if c < ns {
                d.f1[c] = C64::new(1.0, 0.0);
            } else {
                d.f2[c - ns] = C64::new(1.0, 0.0);
            }
            let f = wave_solve_periodic(&spec, &d).unwrap();
            for r in 0..rows {
                m[r * 2 * ns + c] = f.values[r];
            }
        }
        let g: Vec<C64> = (0..rows).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let gf = ScalarField::from_values(l.clone(), TimeAxis::Window, g.clone()).unwrap();
        let adj = wave_adjoint_solve(&spec, &gf).unwrap();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for c in 0..2 * ns {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..rows {
                acc += m[r * 2 * ns + c].conj() * g[r];
            }
            acc *= l.dt();
            let got = if c < ns { adj.f1[c] } else { adj.f2[c - ns] };
            worst = worst.max((got - acc).norm());
            scale = scale.max(acc.norm());
        }
        assert!(worst <= 1e-12 * scale, "{worst} vs {scale}");
    }

    fn bump(l: &Lattice, r0: f64) -> impl Fn([f64; 3]) -> f64 + '_ {
        move |x| {
            let c = l.center();
            let r = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt() / r0;
            if r < 1.0 {
                (-1.0 / (1.0 - r * r)).exp()
            } else {
                0.0
            }
        }
    }

    #[test]
    fn free_energy_conserved_and_damped_energy_decays() {
        let l = lat(16, 9);
        let d = CauchyData::from_fn(l.clone(), bump(&l, 1.0), |_| 0.0);
        let f = wave_solve(&HyperbolicOperatorSpec::free(), &d).unwrap();
        let e = wave_energy(&f).unwrap();
        for v in &e {
            assert!((v - e[0]).abs() <= 1e-10 * e[0], "{e:?}");
        }
        let g = bardeen_solve(&BardeenCoefficients::constant(&l, 0.0, 0.0), &d, LaplacianSign::Minus).unwrap();
        assert!(crate::norm::rel_l2(&g.values, &f.values) <= 1e-12);
        let h = bardeen_solve(&BardeenCoefficients::constant(&l, 1.5, 0.0), &d, LaplacianSign::Minus).unwrap();
        let e = wave_energy(&h).unwrap();
        assert!(e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{e:?}");
        assert!(e[e.len() - 1] < e[0]);
    }

    #[test]
    fn bardeen_constant_mode_matches_ode() {
        let l = Arc::new(Lattice::new(1.0, 2001, 4.0, 4, 1.0).unwrap());
        let a0 = |t: f64| 1.0 + 0.5 * t;
        let b0 = |t: f64| 2.0 - t;
        let c = BardeenCoefficients::from_fn(&l, a0, b0);
        let d = CauchyData::from_fn(l.clone(), |_| 1.0, |_| 0.0);
        let f = wave_solve_periodic(&c.to_spec::<f64>(LaplacianSign::Minus), &d).unwrap();
        // RK4 with a much finer step
        let rhs = |t: f64, y: [f64; 2]| [y[1], -a0(t) * y[1] - b0(t) * y[0]];
        let mut y = [1.0, 0.0];
        let sub = 20;
        let h = l.dt() / sub as f64;
        let mut worst = 0.0f64;
        for k in 0..l.n_t {
            worst = worst.max((f.slice(k)[0] - y[0]).abs());
            for i in 0..sub {
                let t = (k * sub + i) as f64 * h;
                let k1 = rhs(t, y);
                let k2 = rhs(t + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
                let k3 = rhs(t + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
                let k4 = rhs(t + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
                for j in 0..2 {
                    y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
                }
            }
        }
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn ad_on_modes() {
        let l = Arc::new(Lattice::new(1.0, 9, 6.0, 4, 1.0).unwrap());
        let k0 = 3;
        let tau = l.temporal_freq(k0);
        let f = ScalarField::from_fn(l.clone(), TimeAxis::Padded, |t, _| C64::new(0.0, tau * t).exp());
        let g = ad_apply(&PseudoDiffSpec::dt(), &f).unwrap();
        let want = f.scaled(C64::new(0.0, tau));
        assert!(crate::norm::rel_l2(&g.values, &want.values) <= 1e-12);
        let one = PseudoDiffSpec::multiplier(&l, |_, _| C64::new(1.0, 0.0), 0.0).unwrap();
        let h = ad_apply(&one, &f).unwrap();
        assert!(crate::norm::rel_l2(&h.values, &f.values) <= 1e-12);
        let zero = PseudoDiffSpec::multiplier(&l, |t, _| C64::new(t.abs().min(1.0) * 0.0, 0.0), 0.0);
        assert!(matches!(zero, Err(Error::VanishingSymbol(_))));
    }

    #[test]
    fn ad_adjoints() {
        let l = Arc::new(Lattice::new(1.0, 9, 6.0, 4, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = Coefficient::Time((0..l.n_t).map(|_| C64::new(rng.gen(), rng.gen())).collect());
        let sym = PseudoDiffSpec::multiplier(&l, |t, x| C64::new(1.0 + t * t, x[0]), 2.0).unwrap();
        for (spec, axis) in [
            (PseudoDiffSpec::Differential { b: Some(b) }, TimeAxis::Window),
            (PseudoDiffSpec::dt(), TimeAxis::Padded),
            (sym, TimeAxis::Padded),
        ] {
            let n = l.n_time(axis) * l.n_space();
            let mut cv = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let f = ScalarField::from_values(l.clone(), axis, (0..n).map(|_| cv()).collect()).unwrap();
            let g = ScalarField::from_values(l.clone(), axis, (0..n).map(|_| cv()).collect()).unwrap();
            let lhs = l2_inner(&ad_apply(&spec, &f).unwrap(), &g).unwrap();
            let rhs = l2_inner(&f, &ad_adjoint(&spec, &g).unwrap()).unwrap();
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm(), "{lhs} {rhs}");
        }
    }

    #[test]
    fn cmb_forms() {
        let l = Arc::new(Lattice::new(1.0, 41, 6.0, 8, 1.0).unwrap());
        let q = Arc::new(crate::quadrature::build_direction_quadrature(2).unwrap());
        let psi = ScalarField::from_fn(l.clone(), TimeAxis::Window, |t, x| (2.0 * t).sin() * (x[0]).cos());
        let zero = psi.zeros_like();
        let s3 = cmb_source(&psi, &zero, None, CmbForm::Boltz3, 2.0, q.clone()).unwrap().to_kinetic();
        let s4 = cmb_source(&psi, &zero, None, CmbForm::Boltz4, 2.0, q.clone()).unwrap().to_kinetic();
        assert!(crate::norm::rel_l2(&s3.values, &s4.values) <= 1e-12);
        // Psi = Phi, B = 0: C d_t Psi
        let s = cmb_source(&psi, &psi, None, CmbForm::Boltz4, 2.0, q.clone()).unwrap().to_kinetic();
        let exact = ScalarField::from_fn(l.clone(), TimeAxis::Window, |t, x| 4.0 * (2.0 * t).cos() * x[0].cos());
        let e = crate::norm::rel_l2(s.dir(0), &exact.values);
        assert!(e < 1e-2, "{e}");
        let stat = ScalarField::from_fn(l.clone(), TimeAxis::Window, |_, x| x[1].sin());
        for form in [CmbForm::Boltz4] {
            let s = cmb_source(&stat, &stat, None, form, 1.0, q.clone()).unwrap().to_kinetic();
            assert!(s.max_abs() <= 1e-12);
        }
    }
}
