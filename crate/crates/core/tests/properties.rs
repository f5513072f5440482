use std::sync::Arc;

use boltzinv::io::{read_cauchy, read_ray, read_scalar, write_cauchy, write_ray, write_scalar};
use boltzinv::lightray::{lray_adjoint, lray_with, WeightFunction};
use boltzinv::norm::{l2_inner, rel_l2, L2Inner};
use boltzinv::reconstruct::support_mask;
use boltzinv::spectral::{ConeClassifier, Spectral};
use boltzinv::waves::{wave_adjoint_solve, wave_solve_periodic, HyperbolicOperatorSpec};
use boltzinv::{build_direction_quadrature, CauchyData, Lattice, RayData, ScalarField, TimeAxis, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> Arc<Lattice> {
    Arc::new(Lattice::new(1.0, 5, 4.0, 8, 1.0).unwrap())
}

fn random_field(lat: &Arc<Lattice>, seed: u64) -> ScalarField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = lat.n_space();
    let mask = support_mask(lat);
    let v = (0..ns * lat.n_t).map(|i| mask[i % ns] * rng.gen_range(-1.0..1.0)).collect();
    ScalarField::from_values(lat.clone(), TimeAxis::Window, v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quadrature_moments(degree in 2usize..14) {
        let q = build_direction_quadrature(degree).unwrap();
        let w: f64 = q.weights.iter().sum();
        prop_assert!((w - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        for a in 0..3 {
            let m: f64 = q.nodes.iter().zip(&q.weights).map(|(n, w)| w * n[a]).sum();
            prop_assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn inner_product_is_hermitian_and_positive(seed in any::<u64>()) {
        let lat = small();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = lat.n_space() * lat.n_t;
        let mut mk = || ScalarField::from_values(
            lat.clone(),
            TimeAxis::Window,
            (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect(),
        ).unwrap();
        let (a, b) = (mk(), mk());
        let ab = l2_inner(&a, &b).unwrap();
        let ba = l2_inner(&b, &a).unwrap();
        prop_assert!((ab - ba.conj()).norm() <= 1e-12 * ab.norm().max(1.0));
        prop_assert!(a.l2_norm() > 0.0);
    }

    #[test]
    fn transform_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let lat = small();
        let q = Arc::new(build_direction_quadrature(2).unwrap());
        let (f, g) = (random_field(&lat, seed), random_field(&lat, seed ^ 0x5555));
        let mut h = f.scaled(alpha);
        h.axpy(1.0, &g).unwrap();
        let lh = lray_with(&h, &WeightFunction::Unit, 0.0, q.clone()).unwrap();
        let lf = lray_with(&f, &WeightFunction::Unit, 0.0, q.clone()).unwrap();
        let lg = lray_with(&g, &WeightFunction::Unit, 0.0, q).unwrap();
        let want: Vec<f64> = lf.values.iter().zip(&lg.values).map(|(a, b)| alpha * a + b).collect();
        prop_assert!(rel_l2(&lh.values, &want) <= 1e-12);
    }

    #[test]
    fn transform_adjoint_identity(seed in any::<u64>()) {
        let lat = small();
        let q = Arc::new(build_direction_quadrature(3).unwrap());
        let f = random_field(&lat, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        let g = RayData::from_values(
            lat.clone(),
            q.clone(),
            0.0,
            (0..lat.n_space() * q.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        ).unwrap();
        let a = l2_inner(&lray_with(&f, &WeightFunction::Unit, 0.0, q).unwrap(), &g).unwrap();
        let b = l2_inner(&f, &lray_adjoint(&g, &WeightFunction::Unit, TimeAxis::Window).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
    }

    #[test]
    fn wave_adjoint_identity(seed in any::<u64>()) {
        // finer dt than small(): the leapfrog CFL limit is ~0.18 here
        let lat = Arc::new(Lattice::new(1.0, 9, 4.0, 8, 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ns = lat.n_space();
        let d = CauchyData::new(
            lat.clone(),
            (0..ns).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..ns).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        ).unwrap();
        let g = random_field(&lat, seed ^ 0xabc);
        let spec = HyperbolicOperatorSpec::<f64>::free();
        let a = l2_inner(&wave_solve_periodic(&spec, &d).unwrap(), &g).unwrap();
        let b = l2_inner(&d, &wave_adjoint_solve(&spec, &g).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
    }

    #[test]
    fn cone_projector_is_idempotent(seed in any::<u64>(), eta in 0.0f64..0.5) {
        let lat = small();
        let sp = Spectral::new(lat.clone(), ConeClassifier::new(eta).unwrap());
        let f = random_field(&lat, seed).padded();
        let p = sp.phi_apply(&f).unwrap();
        let pp = sp.phi_apply(&p).unwrap();
        prop_assert!(rel_l2(&pp.values, &p.values) <= 1e-12);
    }

    #[test]
    fn fields_round_trip_through_disk(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let lat = small();
        let q = Arc::new(build_direction_quadrature(2).unwrap());
        let f = random_field(&lat, seed);
        write_scalar(&dir.path().join("f"), &f).unwrap();
        let back: ScalarField<f64> = read_scalar(&dir.path().join("f")).unwrap();
        prop_assert_eq!(&back.values, &f.values);
        let g = lray_with(&f, &WeightFunction::Unit, 0.0, q).unwrap();
        write_ray(&dir.path().join("g"), &g).unwrap();
        let gb: RayData<f64> = read_ray(&dir.path().join("g")).unwrap();
        prop_assert_eq!(&gb.values, &g.values);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ns = lat.n_space();
        let d = CauchyData::new(
            lat.clone(),
            (0..ns).map(|_| C64::new(rng.gen(), rng.gen())).collect(),
            (0..ns).map(|_| C64::new(rng.gen(), rng.gen())).collect(),
        ).unwrap();
        write_cauchy(&dir.path().join("d"), &d).unwrap();
        let db: CauchyData<C64> = read_cauchy(&dir.path().join("d")).unwrap();
        prop_assert_eq!(&db.f1, &d.f1);
        prop_assert_eq!(&db.f2, &d.f2);
    }
}
