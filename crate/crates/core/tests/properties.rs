//! Invariants checked on random inputs.

use amoment::measure::{epsilon_max, sample_neighbors};
use amoment::spectral::{principal_angle, symmetric_eigen};
use amoment::{debiased_estimate, project, Domain, Measure, Projection, QuadraticSpec, SamplingMode};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, n)
}

fn symmetric(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    vector(n * n).prop_map(move |v| {
        let m = DMatrix::from_vec(n, n, v);
        (&m + m.transpose()) * 0.5
    })
}

/// Orthonormal `n × r` basis from the QR factor of a random matrix.
fn basis(n: usize, r: usize) -> impl Strategy<Value = DMatrix<f64>> {
    vector(n * r)
        .prop_filter("full rank", move |v| DMatrix::from_vec(n, r, v.clone()).rank(1e-6) == r)
        .prop_map(move |v| DMatrix::from_vec(n, r, v).qr().q())
}

fn rotation(r: usize) -> impl Strategy<Value = DMatrix<f64>> {
    basis(r, r)
}

proptest! {
    #[test]
    fn projection_is_idempotent_and_self_adjoint(d in vector(5), v in vector(5), w in vector(5)) {
        prop_assume!(d.iter().map(|x| x * x).sum::<f64>() > 1e-6);
        let p = Projection::onto(DVector::from_vec(d)).unwrap();
        let (v, w) = (DVector::from_vec(v), DVector::from_vec(w));
        let pv = project(&p, &v).unwrap();
        let ppv = project(&p, &pv).unwrap();
        prop_assert!((&ppv - &pv).norm() <= 1e-12 * (1.0 + v.norm()));
        let lhs = pv.dot(&w);
        let rhs = v.dot(&project(&p, &w).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + v.norm() * w.norm()));
        prop_assert!(pv.norm() <= v.norm() * (1.0 + 1e-12));
    }

    #[test]
    fn eigenvectors_are_invariant_to_positive_scaling(m in symmetric(5), c in 0.01..100.0f64) {
        let (l1, v1) = symmetric_eigen(&m).unwrap();
        let (l2, v2) = symmetric_eigen(&(&m * c)).unwrap();
        let scale = m.norm().max(1e-300);
        prop_assert!((&l2 - &l1 * c).amax() <= 1e-9 * scale * c);
        // Individual eigenvectors are only well defined for a separated
        // spectrum.
        let gap = l1.as_slice().windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        prop_assume!(gap > 1e-3 * scale);
        prop_assert!((v1 - v2).amax() <= 1e-6);
    }

    #[test]
    fn principal_angle_is_symmetric_and_rotation_invariant(
        u in basis(6, 2),
        v in basis(6, 2),
        q in rotation(2),
    ) {
        let a = principal_angle(&u, &v).unwrap();
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&a));
        prop_assert!((a - principal_angle(&v, &u).unwrap()).abs() <= 1e-10);
        prop_assert!((a - principal_angle(&(&u * &q), &v).unwrap()).abs() <= 1e-10);
        prop_assert!((a - principal_angle(&u, &(&v * &q)).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn debiased_estimate_is_symmetric(seed in any::<u64>(), n in 2usize..6) {
        let f = QuadraticSpec::random(n, seed).build().unwrap();
        let measure = Measure::uniform(Domain::hypercube(n).unwrap());
        let x = DMatrix::from_fn(n, 3, |i, j| 0.5 * (j as f64 - 1.0) + 0.01 * i as f64);
        let d = sample_neighbors(&x, 0.05, 30, &measure, SamplingMode::Exact, seed).unwrap();
        let est = debiased_estimate(&f, &d).unwrap();
        prop_assert_eq!(&est.matrix, &est.matrix.transpose());
    }

    #[test]
    fn admissible_radius_keeps_balls_disjoint_and_inside(points in prop::collection::vec(vector(3), 2..6)) {
        let domain = Domain::hypercube(3).unwrap();
        let x = DMatrix::from_fn(3, points.len(), |i, j| points[j][i] / 10.0);
        let eps = epsilon_max(&x, &domain).unwrap();
        for j in 0..x.ncols() {
            let c: Vec<f64> = x.column(j).iter().copied().collect();
            prop_assert!(domain.boundary_distance(&c) >= eps);
            for k in 0..j {
                prop_assert!((x.column(j) - x.column(k)).norm() >= 2.0 * eps * (1.0 - 1e-12));
            }
        }
    }
}
