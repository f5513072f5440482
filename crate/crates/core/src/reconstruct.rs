//! Recovery of the space-like part `phi(D)(kappa f)` of a source from the
//! measurement `u_T`: filtered backprojection `Q phi(D) L*`, and iterative
//! refinement (Richardson or CG on the normal equations) when scattering
//! adds a remainder to the light ray transform.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{RaySlice, ScalarField};
use crate::lattice::{Lattice, TimeAxis};
use crate::lightray::{backproject_rays, lray_adjoint, WeightFunction};
use crate::norm::{sobolev_norm, sobolev_norm_mixed, L2Inner};
use crate::quadrature::DirectionQuadrature;
use crate::spectral::{ConeClassifier, Spectral, DEFAULT_C_CONV};
use crate::transport::{
    boltzmann_measure, boltzmann_measure_adjoint, sum_directions, AbsorptionField,
    ScatteringKernelField, SourceTerm,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconstructionMode {
    /// Backprojection only; exact up to discretisation when `k = 0`.
    Direct,
    Richardson,
    CgNormal,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub mode: ReconstructionMode,
    /// Cone tolerance of the classifier behind `phi(D)`.
    pub eta: f64,
    pub c_conv: f64,
    /// Tolerance and iteration cap of the inner transport solves.
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            tol: 1e-3,
            max_iter: 50,
            mode: ReconstructionMode::Direct,
            eta: 0.0,
            c_conv: DEFAULT_C_CONV,
            solver_tol: 1e-10,
            solver_max_iter: 200,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.solver_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be > 0".into()));
        }
        if self.max_iter == 0 || self.solver_max_iter == 0 {
            return Err(Error::InvalidArgument("iteration caps must be >= 1".into()));
        }
        if !(self.c_conv > 0.0) || !self.c_conv.is_finite() {
            return Err(Error::InvalidArgument("c_conv must be positive".into()));
        }
        ConeClassifier::new(self.eta)?;
        Ok(())
    }

    fn spectral(&self, lat: Arc<Lattice>) -> Result<Spectral> {
        Ok(Spectral::new(lat, ConeClassifier::new(self.eta)?).with_c_conv(self.c_conv))
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    /// `phi(D)(kappa f)` on the padded axis.
    pub recovered: ScalarField<f64>,
    /// The source iterate behind `recovered` (window axis); `None` in direct mode.
    pub source: Option<ScalarField<f64>>,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `|recovered|_{H^2} / |u_T|_{H^{5/2}}`.
    pub stability_ratio: f64,
}

/// JSON view of a result (the field itself goes through `io`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionSummary {
    pub mode: ReconstructionMode,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub stability_ratio: f64,
    pub error_vs_truth: Option<f64>,
}

/// `kappa_T(t_k) = exp(-int_{t_k}^T sigma)` for time-only absorption.
pub fn kappa_time(sigma: &AbsorptionField) -> Result<Vec<f64>> {
    if sigma.lambda.im != 0.0 {
        return Err(Error::InvalidWeight(
            "complex absorption multiplier gives a non-positive weight".into(),
        ));
    }
    let w = WeightFunction::<f64>::time_from_absorption(sigma)?;
    w.check_positive()?;
    Ok(w.time_values(&sigma.lattice).unwrap())
}

/// Indicator of the declared spatial support ball.
pub fn support_mask(lat: &Lattice) -> Vec<f64> {
    let r = lat.support_radius() + 1e-9 * lat.box_len;
    (0..lat.n_space())
        .map(|s| if lat.dist_from_center(lat.point(s)) <= r { 1.0 } else { 0.0 })
        .collect()
}

/// `m = Q phi(D) L* u_T`. With time-only absorption the adjoint is
/// unweighted (kappa is part of the unknown) and evaluated on the padded
/// axis; otherwise the kappa-weighted adjoint is used on the window.
pub fn backproject(
    ut: &RaySlice<f64>,
    sigma: &AbsorptionField,
    cfg: &ReconstructionConfig,
) -> Result<ScalarField<f64>> {
    let sp = cfg.spectral(ut.lattice.clone())?;
    backproject_with(ut, sigma, &sp)
}

fn backproject_with(
    ut: &RaySlice<f64>,
    sigma: &AbsorptionField,
    sp: &Spectral,
) -> Result<ScalarField<f64>> {
    let raw = if sigma.is_time_only() {
        lray_adjoint(ut, &WeightFunction::Unit, TimeAxis::Padded)?
    } else {
        let w = WeightFunction::measurement(sigma.clone());
        w.check_positive()?;
        backproject_rays(ut, &w, TimeAxis::Window)?.padded()
    };
    sp.q_phi_apply(&raw)
}

/// Shared state of the iterative modes.
struct Pipeline<'a> {
    lat: Arc<Lattice>,
    q: Arc<DirectionQuadrature>,
    sigma: &'a AbsorptionField,
    k: &'a ScatteringKernelField,
    sp: Spectral,
    kappa: Vec<f64>,
    mask: Vec<f64>,
    cfg: &'a ReconstructionConfig,
}

impl Pipeline<'_> {
    /// `kappa^{-1} W g` for a window field `g`, where `W` restricts to the support.
    fn to_source(&self, g: &ScalarField<f64>) -> ScalarField<f64> {
        let mut out = g.window();
        self.restrict(&mut out, |k| 1.0 / self.kappa[k]);
        out
    }

    fn restrict<F: Fn(usize) -> f64>(&self, f: &mut ScalarField<f64>, w: F) {
        let ns = self.lat.n_space();
        for k in 0..self.lat.n_t {
            let s = w(k);
            for (v, m) in f.values[k * ns..(k + 1) * ns].iter_mut().zip(&self.mask) {
                *v *= s * m;
            }
        }
    }

    fn measure(&self, f: &ScalarField<f64>) -> Result<RaySlice<f64>> {
        let src = SourceTerm::scalar(f.clone(), self.q.clone())?;
        Ok(boltzmann_measure(&src, self.sigma, self.k, self.cfg.solver_tol, self.cfg.solver_max_iter)?.0)
    }

    fn measure_adjoint(&self, g: &RaySlice<f64>) -> Result<ScalarField<f64>> {
        let (z, _) = boltzmann_measure_adjoint(g, self.sigma, self.k, self.cfg.solver_tol, self.cfg.solver_max_iter)?;
        Ok(sum_directions(&z))
    }

    /// `P f = kappa^{-1} W phi(D) (kappa f)`, the projection onto the class
    /// of sources whose weighted field is space-like.
    fn project(&self, f: &ScalarField<f64>) -> Result<ScalarField<f64>> {
        let mut kf = f.clone();
        kf.mul_time(|t| self.kappa_at(t));
        let p = self.sp.phi_apply(&kf)?;
        Ok(self.to_source(&p))
    }

    /// `P* g = kappa W phi(D) (kappa^{-1} g)`.
    fn project_adjoint(&self, g: &ScalarField<f64>) -> Result<ScalarField<f64>> {
        let mut h = g.clone();
        h.mul_time(|t| 1.0 / self.kappa_at(t));
        let p = self.sp.phi_apply(&h)?;
        let mut out = p.window();
        self.restrict(&mut out, |k| self.kappa[k]);
        Ok(out)
    }

    fn kappa_at(&self, t: f64) -> f64 {
        let k = (t / self.lat.dt()).round() as usize;
        self.kappa[k.min(self.lat.n_t - 1)]
    }

    /// `phi(D)(kappa f)` on the padded axis.
    fn weighted_part(&self, f: &ScalarField<f64>) -> Result<ScalarField<f64>> {
        let mut kf = f.clone();
        kf.mul_time(|t| self.kappa_at(t));
        self.sp.phi_apply(&kf)
    }
}

fn masked_norm(f: &ScalarField<f64>, mask: &[f64]) -> f64 {
    let lat = &f.lattice;
    let ns = lat.n_space();
    let w = f.window();
    let s: f64 = (0..lat.n_t)
        .map(|k| {
            w.values[k * ns..(k + 1) * ns]
                .iter()
                .zip(mask)
                .map(|(v, m)| m * v * v)
                .sum::<f64>()
        })
        .sum();
    (s * lat.dt() * lat.dx().powi(3)).sqrt()
}

/// Recovers `phi(D)(kappa f)` from `u_T`.
///
/// `richardson` iterates `f <- f + kappa^{-1} W [m - G(f)]` with
/// `G(f) = Q phi(D) L* X f` and `W` the restriction to the window times the
/// support ball; the residual is `|W (m - G(f))| / |W m|`. `cg-normal` runs
/// CGLS on `min |X P f - u_T|` with `P` the projection above.
pub fn recover_spacelike(
    ut: &RaySlice<f64>,
    sigma: &AbsorptionField,
    k: &ScatteringKernelField,
    cfg: &ReconstructionConfig,
) -> Result<ReconstructionResult> {
    cfg.validate()?;
    let lat = ut.lattice.clone();
    let sp = cfg.spectral(lat.clone())?;
    // without scattering the remainder vanishes and nothing is left to invert
    if cfg.mode == ReconstructionMode::Direct || k.is_zero() {
        if sigma.is_time_only() {
            kappa_time(sigma)?;
        }
        let m = backproject_with(ut, sigma, &sp)?;
        let ratio = stability_ratio(&m, ut)?;
        return Ok(ReconstructionResult {
            recovered: m,
            source: None,
            residual_history: vec![],
            iterations: 0,
            converged: true,
            stability_ratio: ratio,
        });
    }
    if !sigma.is_time_only() {
        return Err(Error::InvalidArgument(
            "iterative recovery needs time-only absorption".into(),
        ));
    }
    if *k.quadrature != *ut.quadrature {
        return Err(Error::ShapeMismatch("scattering kernel uses another quadrature".into()));
    }
    let pipe = Pipeline {
        lat: lat.clone(),
        q: ut.quadrature.clone(),
        sigma,
        k,
        kappa: kappa_time(sigma)?,
        mask: support_mask(&lat),
        sp,
        cfg,
    };
    let (source, history, converged) = match cfg.mode {
        ReconstructionMode::Richardson => richardson(&pipe, ut)?,
        ReconstructionMode::CgNormal => cgls(&pipe, ut)?,
        ReconstructionMode::Direct => unreachable!(),
    };
    let recovered = pipe.weighted_part(&source)?;
    let ratio = stability_ratio(&recovered, ut)?;
    let iterations = history.len();
    if !converged {
        return Err(Error::Divergence {
            iterations,
            last: history.last().copied().unwrap_or(f64::NAN),
            history,
        });
    }
    Ok(ReconstructionResult {
        recovered,
        source: Some(source),
        residual_history: history,
        iterations,
        converged,
        stability_ratio: ratio,
    })
}

fn richardson(pipe: &Pipeline, ut: &RaySlice<f64>) -> Result<(ScalarField<f64>, Vec<f64>, bool)> {
    let cfg = pipe.cfg;
    let m = backproject_with(ut, pipe.sigma, &pipe.sp)?;
    let m_norm = masked_norm(&m, &pipe.mask);
    let mut f = ScalarField::zeros(pipe.lat.clone(), TimeAxis::Window);
    let mut history = Vec::new();
    if m_norm == 0.0 {
        return Ok((f, vec![0.0], true));
    }
    let mut r = m.clone();
    for it in 1..=cfg.max_iter {
        f.axpy(1.0, &pipe.to_source(&r))?;
        let g = backproject_with(&pipe.measure(&f)?, pipe.sigma, &pipe.sp)?;
        r = m.clone();
        r.axpy(-1.0, &g)?;
        let res = masked_norm(&r, &pipe.mask) / m_norm;
        history.push(res);
        if !res.is_finite() || res > 1e8 {
            return Err(Error::Divergence {
                iterations: it,
                last: res,
                history,
            });
        }
        if res <= cfg.tol {
            return Ok((f, history, true));
        }
    }
    Ok((f, history, false))
}

/// CGLS for `min |A f - u_T|`, `A = X P`, with the relative normal-equation
/// residual `|A* r| / |A* u_T|` as the stopping measure.
fn cgls(pipe: &Pipeline, ut: &RaySlice<f64>) -> Result<(ScalarField<f64>, Vec<f64>, bool)> {
    let cfg = pipe.cfg;
    let apply = |f: &ScalarField<f64>| -> Result<RaySlice<f64>> { pipe.measure(&pipe.project(f)?) };
    let adjoint = |g: &RaySlice<f64>| -> Result<ScalarField<f64>> {
        pipe.project_adjoint(&pipe.measure_adjoint(g)?)
    };
    let mut x = ScalarField::zeros(pipe.lat.clone(), TimeAxis::Window);
    let mut r = ut.clone();
    let mut s = adjoint(&r)?;
    let s0 = s.l2_norm();
    if s0 == 0.0 {
        return Ok((x, vec![0.0], true));
    }
    let mut p = s.clone();
    let mut gamma = s.l2_inner(&s)?;
    let mut history = Vec::new();
    for _ in 0..cfg.max_iter {
        let q = apply(&p)?;
        let qq = q.l2_inner(&q)?;
        if qq <= 0.0 {
            break;
        }
        let alpha = gamma / qq;
        x.axpy(alpha, &p)?;
        r.axpy(-alpha, &q)?;
        s = adjoint(&r)?;
        let gamma_new = s.l2_inner(&s)?;
        let res = gamma_new.sqrt() / s0;
        history.push(res);
        if !res.is_finite() {
            return Err(Error::NonFinite("CGLS residual".into()));
        }
        if res <= cfg.tol {
            return Ok((pipe.project(&x)?, history, true));
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        let mut next = s.clone();
        next.axpy(beta, &p)?;
        p = next;
    }
    let converged = history.last().is_some_and(|&r| r <= cfg.tol);
    Ok((pipe.project(&x)?, history, converged))
}

/// `|h|_{H^2} / |u_T|_{H^{5/2}}` for a recovered (or true) space-like part `h`.
pub fn stability_ratio(h: &ScalarField<f64>, ut: &RaySlice<f64>) -> Result<f64> {
    let den = sobolev_norm_mixed(ut, 2.5);
    if den == 0.0 {
        return Err(Error::InvalidArgument("measurement has zero norm".into()));
    }
    Ok(sobolev_norm(h, 2.0) / den)
}

/// Empirical constant of the stability estimate for a known source:
/// `|phi(D)(kappa f)|_{H^2} / |u_T|_{H^{5/2}}`.
pub fn stability_report(
    f_true: &ScalarField<f64>,
    ut: &RaySlice<f64>,
    sigma: &AbsorptionField,
    cfg: &ReconstructionConfig,
) -> Result<f64> {
    let kappa = kappa_time(sigma)?;
    let dt = f_true.lattice.dt();
    let mut kf = f_true.window();
    let n = kappa.len();
    kf.mul_time(|t| kappa[((t / dt).round() as usize).min(n - 1)]);
    let h = cfg.spectral(f_true.lattice.clone())?.phi_apply(&kf)?;
    stability_ratio(&h, ut)
}

/// Relative L2 error on the window samples after removing each slice's
/// spatial mean (the part the multipliers cannot carry).
pub fn window_error(recovered: &ScalarField<f64>, truth: &ScalarField<f64>) -> f64 {
    let a = remove_mean(&recovered.window());
    let b = remove_mean(&truth.window());
    crate::norm::rel_l2(&a.values, &b.values)
}

fn remove_mean(f: &ScalarField<f64>) -> ScalarField<f64> {
    let mut out = f.clone();
    let ns = f.lattice.n_space();
    for k in 0..out.n_time() {
        let sl = out.slice_mut(k);
        let m = sl.iter().sum::<f64>() / ns as f64;
        sl.iter_mut().for_each(|v| *v -= m);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightray::lray_with;
    use crate::quadrature::build_direction_quadrature;

    fn setup() -> (Arc<Lattice>, Arc<DirectionQuadrature>) {
        let lat = Arc::new(Lattice::new(1.0, 5, 4.0, 8, 1.0).unwrap());
        (lat, Arc::new(build_direction_quadrature(4).unwrap()))
    }

    fn bump(lat: &Lattice) -> impl Fn(f64, [f64; 3]) -> f64 + '_ {
        move |t, x| {
            let r = lat.dist_from_center(x);
            if r >= 1.0 {
                0.0
            } else {
                (std::f64::consts::PI * t).sin().powi(2) * (-1.0 / (1.0 - r * r)).exp()
            }
        }
    }

    #[test]
    fn backprojection_is_linear_and_zero_on_zero() {
        let (lat, q) = setup();
        let sigma = AbsorptionField::constant(lat.clone(), 0.5).unwrap();
        let cfg = ReconstructionConfig::default();
        let f = ScalarField::from_fn(lat.clone(), TimeAxis::Window, bump(&lat));
        let g1 = lray_with(&f, &WeightFunction::Unit, 1.0, q.clone()).unwrap();
        let mut g2 = g1.clone();
        g2.values.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64 * 0.37).sin());
        let mut sum = g1.clone();
        sum.axpy(2.5, &g2).unwrap();
        let a = backproject(&g1, &sigma, &cfg).unwrap();
        let b = backproject(&g2, &sigma, &cfg).unwrap();
        let c = backproject(&sum, &sigma, &cfg).unwrap();
        let mut want = a.clone();
        want.axpy(2.5, &b).unwrap();
        assert!(crate::norm::rel_l2(&c.values, &want.values) < 1e-12);
        let z = backproject(&g1.zeros_like(), &sigma, &cfg).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn recovered_field_is_spacelike() {
        let (lat, q) = setup();
        let sigma = AbsorptionField::zero(lat.clone());
        let f = ScalarField::from_fn(lat.clone(), TimeAxis::Window, bump(&lat));
        let g = lray_with(&f, &WeightFunction::Unit, 1.0, q).unwrap();
        let cfg = ReconstructionConfig::default();
        let m = backproject(&g, &sigma, &cfg).unwrap();
        let sp = cfg.spectral(lat).unwrap();
        let again = sp.phi_apply(&m).unwrap();
        assert!(crate::norm::rel_l2(&again.values, &m.values) < 1e-12);
    }

    #[test]
    fn stability_ratio_is_scale_invariant() {
        let (lat, q) = setup();
        let sigma = AbsorptionField::constant(lat.clone(), 0.5).unwrap();
        let cfg = ReconstructionConfig::default();
        let f = ScalarField::from_fn(lat.clone(), TimeAxis::Window, bump(&lat));
        let w = WeightFunction::measurement(sigma.clone());
        let g = lray_with(&f, &w, 1.0, q.clone()).unwrap();
        let a = stability_report(&f, &g, &sigma, &cfg).unwrap();
        let g3 = lray_with(&f.scaled(3.0), &w, 1.0, q).unwrap();
        let b = stability_report(&f.scaled(3.0), &g3, &sigma, &cfg).unwrap();
        assert!(a.is_finite() && a > 0.0);
        assert!((a - b).abs() < 1e-10 * a);
        assert!(stability_report(&f, &g.zeros_like(), &sigma, &cfg).is_err());
    }

    #[test]
    fn negative_absorption_weight_rejected() {
        let (lat, q) = setup();
        let sigma = AbsorptionField::constant(lat.clone(), 0.5)
            .unwrap()
            .with_lambda(crate::scalar::C64::new(1.0, 0.5));
        let g = RaySlice::zeros(lat.clone(), q.clone(), 1.0);
        let k = ScatteringKernelField::zero(lat, q);
        let cfg = ReconstructionConfig {
            mode: ReconstructionMode::Richardson,
            ..Default::default()
        };
        assert!(matches!(recover_spacelike(&g, &sigma, &k, &cfg), Err(Error::InvalidWeight(_))));
    }
}
