//! On-disk field format: a raw little-endian `f64` array (`<stem>.bin`,
//! complex values interleaved re/im) plus a JSON sidecar (`<stem>.json`).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CauchyData, KineticField, RayData, ScalarField};
use crate::lattice::{Lattice, TimeAxis};
use crate::quadrature::{build_direction_quadrature, DirectionQuadrature};
use crate::scalar::{Scalar, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scalar,
    Kinetic,
    Ray,
    Cauchy,
    Spectral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    C64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: FieldKind,
    /// `spacetime`, `ray`, `cauchy` or `spectral`.
    pub axes_tag: String,
    pub shape: Vec<usize>,
    pub axis_names: Vec<String>,
    pub dtype: DType,
    pub dt: f64,
    pub dx: f64,
    pub t_final: f64,
    pub box_len: f64,
    pub quadrature_degree: Option<usize>,
    pub time_axis: Option<TimeAxis>,
    pub base_time: Option<f64>,
    pub lattice: Lattice,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

fn encode<S: Scalar>(values: &[S]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * if S::IS_COMPLEX { 16 } else { 8 });
    for v in values {
        let z = v.to_complex();
        out.extend_from_slice(&z.re.to_le_bytes());
        if S::IS_COMPLEX {
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

fn decode<S: Scalar>(bytes: &[u8], dtype: DType) -> Result<Vec<S>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("payload length is not a multiple of 8".into()));
    }
    let raw: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    match dtype {
        DType::F64 => Ok(raw.into_iter().map(S::from_re).collect()),
        DType::C64 => raw
            .chunks_exact(2)
            .map(|p| {
                S::from_complex(C64::new(p[0], p[1])).ok_or_else(|| {
                    Error::Format("complex payload cannot be read into a real field".into())
                })
            })
            .collect(),
    }
}

fn sidecar_for(lat: &Lattice, kind: FieldKind, dtype: DType) -> Sidecar {
    Sidecar {
        kind,
        axes_tag: match kind {
            FieldKind::Scalar | FieldKind::Kinetic => "spacetime",
            FieldKind::Ray => "ray",
            FieldKind::Cauchy => "cauchy",
            FieldKind::Spectral => "spectral",
        }
        .into(),
        shape: vec![],
        axis_names: vec![],
        dtype,
        dt: lat.dt(),
        dx: lat.dx(),
        t_final: lat.t_final,
        box_len: lat.box_len,
        quadrature_degree: None,
        time_axis: None,
        base_time: None,
        lattice: lat.clone(),
    }
}

fn dtype_of<S: Scalar>() -> DType {
    if S::IS_COMPLEX {
        DType::C64
    } else {
        DType::F64
    }
}

fn write(stem: &Path, side: &Sidecar, bytes: &[u8]) -> Result<()> {
    let (bin, json) = paths(stem);
    if let Some(dir) = bin.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&bin, bytes)?;
    let text = serde_json::to_string_pretty(side).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&json, text)?;
    Ok(())
}

pub fn read_sidecar(stem: &Path) -> Result<Sidecar> {
    let (_, json) = paths(stem);
    let text = fs::read_to_string(&json)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", json.display())))
}

fn read<S: Scalar>(stem: &Path, kind: FieldKind) -> Result<(Sidecar, Vec<S>)> {
    let side = read_sidecar(stem)?;
    if side.kind != kind {
        return Err(Error::Format(format!(
            "{} holds a {:?} field, expected {:?}",
            stem.display(),
            side.kind,
            kind
        )));
    }
    side.lattice.validate()?;
    let (bin, _) = paths(stem);
    let bytes = fs::read(&bin)?;
    let values = decode(&bytes, side.dtype)?;
    let want: usize = side.shape.iter().product();
    if values.len() != want {
        return Err(Error::Format(format!(
            "{}: {} values, sidecar shape {:?}",
            bin.display(),
            values.len(),
            side.shape
        )));
    }
    Ok((side, values))
}

fn quadrature_from(side: &Sidecar) -> Result<Arc<DirectionQuadrature>> {
    let deg = side
        .quadrature_degree
        .ok_or_else(|| Error::Format("sidecar lacks quadrature_degree".into()))?;
    Ok(Arc::new(build_direction_quadrature(deg)?))
}

pub fn write_scalar<S: Scalar>(stem: &Path, f: &ScalarField<S>) -> Result<()> {
    let lat = &f.lattice;
    let mut side = sidecar_for(lat, FieldKind::Scalar, dtype_of::<S>());
    side.shape = vec![f.n_time(), lat.n_x, lat.n_x, lat.n_x];
    side.axis_names = ["t", "x", "y", "z"].map(String::from).to_vec();
    side.time_axis = Some(f.axis);
    write(stem, &side, &encode(&f.values))
}

pub fn read_scalar<S: Scalar>(stem: &Path) -> Result<ScalarField<S>> {
    let (side, values) = read::<S>(stem, FieldKind::Scalar)?;
    let axis = side.time_axis.unwrap_or(TimeAxis::Window);
    ScalarField::from_values(Arc::new(side.lattice), axis, values)
}

pub fn write_kinetic<S: Scalar>(stem: &Path, u: &KineticField<S>) -> Result<()> {
    let lat = &u.lattice;
    let mut side = sidecar_for(lat, FieldKind::Kinetic, dtype_of::<S>());
    side.shape = vec![u.quadrature.len(), lat.n_t, lat.n_x, lat.n_x, lat.n_x];
    side.axis_names = ["dir", "t", "x", "y", "z"].map(String::from).to_vec();
    side.quadrature_degree = Some(u.quadrature.degree);
    side.time_axis = Some(TimeAxis::Window);
    write(stem, &side, &encode(&u.values))
}

pub fn read_kinetic<S: Scalar>(stem: &Path) -> Result<KineticField<S>> {
    let (side, values) = read::<S>(stem, FieldKind::Kinetic)?;
    let q = quadrature_from(&side)?;
    KineticField::from_values(Arc::new(side.lattice), q, values)
}

pub fn write_ray<S: Scalar>(stem: &Path, g: &RayData<S>) -> Result<()> {
    let lat = &g.lattice;
    let mut side = sidecar_for(lat, FieldKind::Ray, dtype_of::<S>());
    side.shape = vec![g.quadrature.len(), lat.n_x, lat.n_x, lat.n_x];
    side.axis_names = ["dir", "x", "y", "z"].map(String::from).to_vec();
    side.quadrature_degree = Some(g.quadrature.degree);
    side.base_time = Some(g.base_time);
    write(stem, &side, &encode(&g.values))
}

pub fn read_ray<S: Scalar>(stem: &Path) -> Result<RayData<S>> {
    let (side, values) = read::<S>(stem, FieldKind::Ray)?;
    let q = quadrature_from(&side)?;
    let base = side.base_time.unwrap_or(0.0);
    RayData::from_values(Arc::new(side.lattice), q, base, values)
}

pub fn write_cauchy<S: Scalar>(stem: &Path, d: &CauchyData<S>) -> Result<()> {
    let lat = &d.lattice;
    let mut side = sidecar_for(lat, FieldKind::Cauchy, dtype_of::<S>());
    side.shape = vec![2, lat.n_x, lat.n_x, lat.n_x];
    side.axis_names = ["component", "x", "y", "z"].map(String::from).to_vec();
    let mut all = d.f1.clone();
    all.extend_from_slice(&d.f2);
    write(stem, &side, &encode(&all))
}

pub fn read_cauchy<S: Scalar>(stem: &Path) -> Result<CauchyData<S>> {
    let (side, mut values) = read::<S>(stem, FieldKind::Cauchy)?;
    let n = side.lattice.n_space();
    let f2 = values.split_off(n);
    CauchyData::new(Arc::new(side.lattice), values, f2)
}

/// Spectral coefficients on the padded grid, always complex.
pub fn write_spectral(stem: &Path, lat: &Lattice, coeffs: &[C64]) -> Result<()> {
    let mut side = sidecar_for(lat, FieldKind::Spectral, DType::C64);
    side.shape = vec![lat.n_total(), lat.n_x, lat.n_x, lat.n_x];
    side.axis_names = ["tau", "xi_x", "xi_y", "xi_z"].map(String::from).to_vec();
    side.time_axis = Some(TimeAxis::Padded);
    write(stem, &side, &encode(coeffs))
}

pub fn read_spectral(stem: &Path) -> Result<(Lattice, Vec<C64>)> {
    let (side, values) = read::<C64>(stem, FieldKind::Spectral)?;
    Ok((side.lattice, values))
}
