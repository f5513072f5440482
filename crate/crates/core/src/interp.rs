//! Multilinear interpolation on the periodic spatial grid.
//!
//! Every ray-type operator samples a grid function at `x + d` for all grid
//! points `x` and one displacement `d`, so the stencil weights are shared
//! by the whole slice. [`shift_add`] exploits that; its transpose is the
//! same call with `-d` because the hat function is symmetric.

use crate::error::{Error, Result};
use crate::field::{KineticField, ScalarField};
use crate::lattice::TimeAxis;
use crate::scalar::Scalar;

/// Per-axis stencil for a fixed displacement (in grid units).
#[derive(Clone, Copy, Debug)]
struct AxisStencil {
    base: usize,
    w0: f64,
    w1: f64,
}

impl AxisStencil {
    fn new(e: f64, n: usize) -> Self {
        let fl = e.floor();
        let a = e - fl;
        let base = (fl as i64).rem_euclid(n as i64) as usize;
        AxisStencil {
            base,
            w0: 1.0 - a,
            w1: a,
        }
    }
}

/// `out[x] += weight * I[src](x + disp)` on an `n^3` periodic grid, with
/// `disp` in grid units.
pub fn shift_add<S: Scalar>(out: &mut [S], src: &[S], n: usize, disp: [f64; 3], weight: S) {
    debug_assert_eq!(out.len(), n * n * n);
    debug_assert_eq!(src.len(), n * n * n);
    let sx = AxisStencil::new(disp[0], n);
    let sy = AxisStencil::new(disp[1], n);
    let sz = AxisStencil::new(disp[2], n);
    let mut tmp = vec![S::zero(); n];
    let (z0, z1) = (sz.base, (sz.base + 1) % n);
    for ix in 0..n {
        let xa = (ix + sx.base) % n;
        let xb = (xa + 1) % n;
        for iy in 0..n {
            let ya = (iy + sy.base) % n;
            let yb = (ya + 1) % n;
            let rows = [
                (xa, ya, sx.w0 * sy.w0),
                (xa, yb, sx.w0 * sy.w1),
                (xb, ya, sx.w1 * sy.w0),
                (xb, yb, sx.w1 * sy.w1),
            ];
            tmp.iter_mut().for_each(|v| *v = S::zero());
            for &(px, py, w) in &rows {
                if w == 0.0 {
                    continue;
                }
                let row = &src[(px * n + py) * n..(px * n + py + 1) * n];
                for (t, &r) in tmp.iter_mut().zip(row) {
                    *t += r * w;
                }
            }
            let orow = &mut out[(ix * n + iy) * n..(ix * n + iy + 1) * n];
            let wa = sz.w0;
            let wb = sz.w1;
            for iz in 0..n {
                let a = tmp[(iz + z0) % n];
                let b = tmp[(iz + z1) % n];
                orow[iz] += (a * wa + b * wb) * weight;
            }
        }
    }
}

/// Trilinear periodic interpolation at a single point given in grid units.
pub fn trilinear<S: Scalar>(src: &[S], n: usize, p: [f64; 3]) -> S {
    let sx = AxisStencil::new(p[0], n);
    let sy = AxisStencil::new(p[1], n);
    let sz = AxisStencil::new(p[2], n);
    let xs = [(sx.base, sx.w0), ((sx.base + 1) % n, sx.w1)];
    let ys = [(sy.base, sy.w0), ((sy.base + 1) % n, sy.w1)];
    let zs = [(sz.base, sz.w0), ((sz.base + 1) % n, sz.w1)];
    let mut acc = S::zero();
    for &(ix, wx) in &xs {
        for &(iy, wy) in &ys {
            for &(iz, wz) in &zs {
                let w = wx * wy * wz;
                if w != 0.0 {
                    acc += src[(ix * n + iy) * n + iz] * w;
                }
            }
        }
    }
    acc
}

/// Linear-in-time, trilinear-in-space sample of a time-major array of
/// `n_time` slices.
fn sample_spacetime<S: Scalar>(
    values: &[S],
    n: usize,
    n_time: usize,
    dt: f64,
    dx: f64,
    t: f64,
    x: [f64; 3],
) -> S {
    let ns = n * n * n;
    let tau = t / dt;
    let k0 = (tau.floor() as usize).min(n_time - 2);
    let a = tau - k0 as f64;
    let p = [x[0] / dx, x[1] / dx, x[2] / dx];
    let v0 = trilinear(&values[k0 * ns..(k0 + 1) * ns], n, p);
    let v1 = trilinear(&values[(k0 + 1) * ns..(k0 + 2) * ns], n, p);
    v0 * (1.0 - a) + v1 * a
}

fn check_time(t: f64, t_final: f64) -> Result<()> {
    let eps = 1e-12 * t_final.max(1.0);
    if !(t >= -eps && t <= t_final + eps) {
        return Err(Error::OutOfRange(format!(
            "t = {t} outside [0, {t_final}]"
        )));
    }
    Ok(())
}

/// Anything [`interp_spacetime`] can sample.
pub enum SpacetimeSample<'a, S: Scalar> {
    Scalar(&'a ScalarField<S>),
    Kinetic(&'a KineticField<S>, usize),
}

/// Multilinear interpolation of a field at `(t, x)` (and direction index
/// for kinetic fields). `x` is reduced modulo the box period.
pub fn interp_spacetime<S: Scalar>(field: SpacetimeSample<'_, S>, t: f64, x: [f64; 3]) -> Result<S> {
    match field {
        SpacetimeSample::Scalar(f) => {
            let lat = &f.lattice;
            check_time(t, lat.t_final)?;
            let t = t.clamp(0.0, lat.t_final);
            let n_time = match f.axis {
                TimeAxis::Window => lat.n_t,
                // the window occupies the leading samples of the padded axis
                TimeAxis::Padded => lat.n_t,
            };
            Ok(sample_spacetime(
                &f.values[..n_time * lat.n_space()],
                lat.n_x,
                n_time,
                lat.dt(),
                lat.dx(),
                t,
                x,
            ))
        }
        SpacetimeSample::Kinetic(u, j) => {
            let lat = &u.lattice;
            if j >= u.quadrature.len() {
                return Err(Error::OutOfRange(format!("direction index {j}")));
            }
            check_time(t, lat.t_final)?;
            let t = t.clamp(0.0, lat.t_final);
            Ok(sample_spacetime(
                u.dir(j),
                lat.n_x,
                lat.n_t,
                lat.dt(),
                lat.dx(),
                t,
                x,
            ))
        }
    }
}
