mod common;

use common::{quat_distance, quat_to_rows, quat_zyz};
use matcha_core::so3::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[test]
fn euler_matches_quaternion_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (a, b, g) = (
            rng.random_range(-PI..PI),
            rng.random_range(0.0..PI),
            rng.random_range(-PI..PI),
        );
        let m = euler_to_matrix(&EulerZYZ::new(a, b, g)).to_rows();
        let q = quat_to_rows(quat_zyz(a, b, g));
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - q[i][j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn geodesic_matches_quaternion_half_angle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let e1 = random_euler(&mut rng);
        let e2 = random_euler(&mut rng);
        let [a1, b1, g1] = e1.to_array();
        let [a2, b2, g2] = e2.to_array();
        let want = quat_distance(quat_zyz(a1, b1, g1), quat_zyz(a2, b2, g2));
        assert!((euler_distance(&e1, &e2) - want).abs() < 1e-10);
    }
}

#[test]
fn z_rotation_distance_is_angle() {
    for k in 0..=20 {
        let t = PI * k as f64 / 20.0;
        let d = geodesic_distance(&RotationMatrix::identity(), &RotationMatrix::rz(t));
        assert!((d - t).abs() < 1e-7, "t={t} d={d}");
    }
}

#[test]
fn round_trip_interior() {
    let e = matrix_to_euler(&euler_to_matrix(&EulerZYZ::new(1.1, 2.0, 0.3))).unwrap();
    let [a, b, g] = e.to_array();
    assert!((a - 1.1).abs() < 1e-9 && (b - 2.0).abs() < 1e-9 && (g - 0.3).abs() < 1e-9);
    let e = matrix_to_euler(&RotationMatrix::rz(0.7)).unwrap();
    let [a, b, g] = e.to_array();
    assert!((a - 0.7).abs() < 1e-12 && b == 0.0 && g == 0.0);
}

#[test]
fn haar_angle_distribution() {
    // Haar angle density (1 - cos t) / pi, CDF (t - sin t) / pi
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000;
    let mut angles = Vec::with_capacity(n);
    let mut trace_sum = 0.0;
    for _ in 0..n {
        let r = random_rotation(&mut rng);
        angles.push(r.angle());
        trace_sum += r.trace();
    }
    angles.sort_by(f64::total_cmp);
    let mut ks: f64 = 0.0;
    for (i, &t) in angles.iter().enumerate() {
        let cdf = (t - t.sin()) / PI;
        ks = ks.max((cdf - i as f64 / n as f64).abs());
        ks = ks.max((cdf - (i + 1) as f64 / n as f64).abs());
    }
    assert!(ks < 0.01, "KS statistic {ks}");
    assert!((trace_sum / n as f64).abs() < 0.02);
}

#[test]
fn perturbation_has_requested_angle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = random_rotation(&mut rng);
    for _ in 0..20 {
        let p = perturb(&mut rng, &base, 0.05);
        assert!((geodesic_distance(&base, &p) - 0.05).abs() < 1e-9);
    }
}
