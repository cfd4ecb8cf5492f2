use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;

use stabsphere_core::ambient::{AxialFactor, ConformalFactor, ConformalJet, ConstantFactor};
use stabsphere_core::immersion::{make_canonical_with, AdaptedFrame, ShapeSpec};
use stabsphere_core::linalg::{axpy, dot, norm, scaled, Matrix};
use stabsphere_core::oracle::{
    fd_curvature_check, fd_first_variation, lemma_residuals, random_instance,
    random_quadratic_factor,
};
use stabsphere_core::pinching::{
    delta_estimate, extremal_sectional_at_point, random_point, stream_rng,
};
use stabsphere_core::stability::{
    k_sigma_normal_at, trace_q_over_v, trace_qtilde_over_vtilde, ProjectedConstantField,
};
use stabsphere_core::Sequential;

fn random_rotation(seed: u64, dim: usize) -> Matrix {
    let mut rng = stream_rng(seed, 0);
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let q = g.qr().q();
    Matrix::from_fn(dim, dim, |i, j| q[(i, j)])
}

/// Block rotation of a list of orthonormal vectors.
fn remix(vs: &[Vec<f64>], seed: u64) -> Vec<Vec<f64>> {
    let r = random_rotation(seed, vs.len());
    (0..vs.len())
        .map(|j| {
            let mut out = vec![0.0; vs[0].len()];
            for (i, v) in vs.iter().enumerate() {
                axpy(r[(i, j)], v, &mut out);
            }
            out
        })
        .collect()
}

fn library() -> Vec<ShapeSpec> {
    vec![
        ShapeSpec::GreatSubsphere { k: 2, n: 4 },
        ShapeSpec::GreatSubsphere { k: 2, n: 5 },
        ShapeSpec::GreatSubsphere { k: 3, n: 5 },
        ShapeSpec::GeodesicSphere { k: 2, n: 4, theta: std::f64::consts::PI / 3.0 },
        ShapeSpec::CliffordTorus { p: 1, q: 1, n: 3 },
        ShapeSpec::CliffordTorus { p: 1, q: 2, n: 4 },
        ShapeSpec::ProductTorus { factors: vec![(1, 0.6), (1, 0.8)], n: 3 },
    ]
}

/// Exact extremes of `K̃` at `p` from the spectrum of `B = ∇f∇fᵀ − Hess f` on
/// `T_pS^n`: `e^{2f}K̃(π) = 1 − |∇f|² + tr(B|_π)`.
fn exact_extremes(f: &dyn ConformalFactor, p: &stabsphere_core::ambient::AmbientPoint) -> (f64, f64) {
    let jet = ConformalJet::new(f, p).unwrap();
    let dim = p.ambient_dim();
    // orthonormal basis of T_p: trailing columns of Q for [p | random]
    let mut rng = stream_rng(99, 0);
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        if j == 0 { p.coords()[i] } else { rng.sample::<f64, _>(rand_distr::StandardNormal) }
    });
    let q = m.qr().q();
    let basis: Vec<Vec<f64>> = (1..dim).map(|c| q.column(c).iter().copied().collect()).collect();
    let b = DMatrix::from_fn(dim - 1, dim - 1, |i, j| {
        jet.df(&basis[i]) * jet.df(&basis[j]) - jet.hess(&basis[i], &basis[j])
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(b).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = ev.len();
    let base = 1.0 - jet.grad_norm_sq();
    let s = (-2.0 * jet.value).exp();
    (s * (base + ev[0] + ev[1]), s * (base + ev[m - 1] + ev[m - 2]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curvature_tensor_symmetries(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let n = rng.random_range(2..=6usize);
        let p = random_point(&mut rng, n + 1);
        let f = random_quadratic_factor(&mut rng, n + 1, 0.5);
        let jet = ConformalJet::new(&f, &p).unwrap();
        let mut t = || p.project(&(0..=n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect::<Vec<_>>());
        let (x, y, z, w) = (t(), t(), t(), t());
        let rm = |a: &[f64], b: &[f64], c: &[f64], d: &[f64]| jet.metric(&jet.curvature(a, b, c), d);
        let r = rm(&x, &y, &z, &w);
        let tol = 1e-8 * (1.0 + r.abs());
        prop_assert!((r + rm(&y, &x, &z, &w)).abs() < tol);
        prop_assert!((r + rm(&x, &y, &w, &z)).abs() < tol);
        prop_assert!((r - rm(&z, &w, &x, &y)).abs() < tol);
        let mut b = jet.curvature(&x, &y, &z);
        axpy(1.0, &jet.curvature(&y, &z, &x), &mut b);
        axpy(1.0, &jet.curvature(&z, &x, &y), &mut b);
        prop_assert!(norm(&b) < 1e-8);
    }

    #[test]
    fn sectional_matches_contracted_curvature(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let n = rng.random_range(2..=6usize);
        let p = random_point(&mut rng, n + 1);
        let f = random_quadratic_factor(&mut rng, n + 1, 0.5);
        let jet = ConformalJet::new(&f, &p).unwrap();
        let (x, y) = stabsphere_core::pinching::random_plane(&mut rng, &p);
        let num = jet.metric(&jet.curvature(&x, &y, &x), &y);
        let den = jet.metric(&x, &x) * jet.metric(&y, &y) - jet.metric(&x, &y).powi(2);
        prop_assert!((jet.sectional(&x, &y) - num / den).abs() < 1e-8);
    }

    #[test]
    fn connection_is_metric(seed in any::<u64>()) {
        // X(g̃(Y,Z)) along the great circle through p in direction X, with
        // Y, Z the tangential projections of affine ambient fields
        let mut rng = stream_rng(seed, 0);
        let n = rng.random_range(2..=5usize);
        let dim = n + 1;
        let p = random_point(&mut rng, dim);
        let f = random_quadratic_factor(&mut rng, dim, 0.5);
        let mut g = || (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect::<Vec<f64>>();
        let (ay, by, az, bz, xr) = (g(), g(), g(), g(), g());
        let lin = |a: &[f64], b: &[f64], q: &[f64]| -> Vec<f64> {
            (0..dim).map(|i| a[i] + b[i] * q[(i + 1) % dim]).collect()
        };
        let field = |a: &[f64], b: &[f64], q: &[f64]| -> Vec<f64> {
            let w = lin(a, b, q);
            let mut out = w.clone();
            axpy(-dot(&w, q), q, &mut out);
            out
        };
        let x = p.project(&xr);
        let xn = norm(&x);
        let u = scaled(1.0 / xn, &x);
        let curve = |t: f64| -> Vec<f64> {
            let mut c = scaled(t.cos(), p.coords());
            axpy(t.sin(), &u, &mut c);
            c
        };
        let gt = |t: f64| {
            let q = curve(t);
            let e = (2.0 * f.value(&q)).exp();
            e * dot(&field(&ay, &by, &q), &field(&az, &bz, &q))
        };
        let h = 1e-5;
        let lhs = xn * (gt(h) - gt(-h)) / (2.0 * h);
        let jet = ConformalJet::new(&f, &p).unwrap();
        let deriv = |a: &[f64], b: &[f64]| {
            let mut d = field(a, b, &curve(h));
            axpy(-1.0, &field(a, b, &curve(-h)), &mut d);
            p.project(&scaled(xn / (2.0 * h), &d))
        };
        let (y, z) = (field(&ay, &by, p.coords()), field(&az, &bz, p.coords()));
        let rhs = jet.metric(&jet.connection(&x, &y, &deriv(&ay, &by)), &z)
            + jet.metric(&y, &jet.connection(&x, &z, &deriv(&az, &bz)));
        prop_assert!((lhs - rhs).abs() < 1e-5 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn transformation_identities_on_random_instances(seed in any::<u64>(), minimal in any::<bool>()) {
        let mut rng = stream_rng(seed, 0);
        let inst = random_instance(&mut rng, minimal).unwrap();
        let r = lemma_residuals(&inst).unwrap();
        prop_assert!(r.gradient < 1e-6 && r.curvature < 1e-6 && r.shape < 1e-6, "{:?}", r);
        prop_assert!(r.proposition < 1e-6 && r.rescaled < 1e-6, "{:?}", r);
        prop_assert!(r.rescaled_inner < 1e-10);
    }

    #[test]
    fn k_sigma_normal_ignores_frame_rotations(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let inst = random_instance(&mut rng, false).unwrap();
        let jet = inst.jet().unwrap();
        let base = k_sigma_normal_at(&inst.frame, &jet);
        let rotated = AdaptedFrame {
            point: inst.frame.point.clone(),
            tangent: remix(&inst.frame.tangent, seed ^ 1),
            normal: remix(&inst.frame.normal, seed ^ 2),
        };
        prop_assert!((k_sigma_normal_at(&rotated, &jet) - base).abs() < 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn sampled_extremes_bracket_inside_exact_extremes(seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 0);
        let n = rng.random_range(3..=6usize);
        let p = random_point(&mut rng, n + 1);
        let f = random_quadratic_factor(&mut rng, n + 1, 0.05);
        let (lo, hi) = exact_extremes(&f, &p);
        prop_assume!(lo > 0.0);
        let e = extremal_sectional_at_point(&f, &p, 200, &mut rng).unwrap();
        prop_assert!(e.min_k >= lo - 1e-12 && e.max_k <= hi + 1e-12);
        prop_assert!(e.min_k - lo < 1e-4 && hi - e.max_k < 1e-4, "{:?} vs {:?}", (e.min_k, e.max_k), (lo, hi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn traces_are_basis_independent(seed in any::<u64>(), shape in 0usize..7) {
        let spec = &library()[shape];
        let imm = make_canonical_with(spec, 8).unwrap();
        let rot = random_rotation(seed, spec.n() + 1);
        let f = AxialFactor::new(0.05, spec.k() + 1);
        for node in (0..imm.nodes().len()).step_by(7) {
            let a = trace_q_over_v(&imm, node, None).unwrap();
            let b = trace_q_over_v(&imm, node, Some(&rot)).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            let a = trace_qtilde_over_vtilde(&imm, node, &f, None).unwrap().trace;
            let b = trace_qtilde_over_vtilde(&imm, node, &f, Some(&rot)).unwrap().trace;
            prop_assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn pinching_estimate_shrinks_with_budget(seed in any::<u64>()) {
        let f = AxialFactor::new(0.05, 3);
        let small = delta_estimate(&Sequential, &f, 5, 4, 10, seed).unwrap();
        let more_points = delta_estimate(&Sequential, &f, 5, 8, 10, seed).unwrap();
        prop_assert!(more_points.delta_lower <= small.delta_lower);
        prop_assert!(small.pointwise_display_holds() && more_points.pointwise_display_holds());
        let more_planes = delta_estimate(&Sequential, &f, 5, 4, 40, seed).unwrap();
        prop_assert!(more_planes.delta_lower <= small.delta_lower + 1e-9, "{} vs {}", more_planes.delta_lower, small.delta_lower);
    }
}

#[test]
fn round_trace_is_constant_on_every_library_shape() {
    for spec in library() {
        let imm = make_canonical_with(&spec, 12).unwrap();
        let expected = -((spec.k() * (spec.n() - spec.k())) as f64);
        for node in 0..imm.nodes().len() {
            let t = trace_q_over_v(&imm, node, None).unwrap();
            assert!((t - expected).abs() < 1e-8, "{} node {node}: {t}", spec.label());
        }
    }
}

#[test]
fn frames_and_shape_data_are_adapted() {
    for spec in library() {
        let imm = make_canonical_with(&spec, 10).unwrap();
        for node in 0..imm.nodes().len() {
            let g = imm.node_geometry(node).unwrap();
            for r in &g.frame.normal {
                for c in g.jac.columns() {
                    assert!(dot(r, &c).abs() < 1e-9);
                }
                assert!(dot(r, g.point.coords()).abs() < 1e-12);
            }
            assert!(g.shape.max_asymmetry() < 1e-9);
            let k = g.k();
            for i in 0..k {
                for j in 0..k {
                    let a = g.shape.a(i, j);
                    assert!(norm(&g.frame.tangent_part(a)) < 1e-9);
                    assert!(dot(a, g.point.coords()).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn constant_normal_variations_of_minimal_shapes_are_critical() {
    let cases = [
        (ShapeSpec::GreatSubsphere { k: 2, n: 4 }, vec![0.3, -0.2, 0.5, 0.7, 0.1]),
        (ShapeSpec::CliffordTorus { p: 1, q: 1, n: 3 }, vec![0.4, 0.1, -0.6, 0.2]),
    ];
    let round = ConstantFactor::new(0.0);
    for (spec, v) in cases {
        let imm = make_canonical_with(&spec, 24).unwrap();
        let field = ProjectedConstantField::new(v);
        let d = fd_first_variation(&Sequential, &imm, &round, &field, 1e-4).unwrap();
        assert!(d.abs() < 1e-5, "{}: {d}", spec.label());
    }
}

#[test]
fn curvature_oracle_is_stable_under_step_halving() {
    let mut rng = stream_rng(21, 0);
    let p = random_point(&mut rng, 5);
    let f = AxialFactor::new(0.05, 3);
    let (x, y) = stabsphere_core::pinching::random_plane(&mut rng, &p);
    let t = |v: &[f64]| stabsphere_core::ambient::TangentVector::new(p.clone(), v.to_vec()).unwrap();
    let z = {
        let mut z = x.clone();
        axpy(0.5, &y, &mut z);
        z
    };
    let a = fd_curvature_check(&f, &t(&x), &t(&y), &t(&z), 2e-3).unwrap();
    let b = fd_curvature_check(&f, &t(&x), &t(&y), &t(&z), 1e-3).unwrap();
    let d = a.vec().iter().zip(b.vec()).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
    assert!(d < 1e-4);
}
