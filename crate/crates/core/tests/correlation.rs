mod common;

use std::sync::Arc;

use common::random_sigma;
use matcha_core::ball::{build_truncation, forward_transform, BallCoefficients};
use matcha_core::correlation::*;
use matcha_core::so3::{random_euler, EulerZYZ, RotationMatrix};
use matcha_core::synth::make_phantom;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_coefficients(t: &Arc<matcha_core::TruncationIndex>, rng: &mut ChaCha8Rng) -> BallCoefficients {
    let v = (0..t.len()).map(|_| common::complex_normal(rng)).collect();
    BallCoefficients::from_values(t.clone(), v).unwrap()
}

#[test]
fn self_blocks_are_hermitian_psd() {
    let t = Arc::new(build_truncation(15.0, 12).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = random_coefficients(&t, &mut rng);
    let s = compute_sigma(&c, &c, t.l_max()).unwrap();
    for l in 0..=t.l_max() {
        let a = s.block(l);
        assert!(common::max_abs(&(a - a.adjoint())) < 1e-12);
        for _ in 0..5 {
            let x = DMatrix::from_fn(2 * l + 1, 1, |_, _| common::complex_normal(&mut rng));
            let q = (x.adjoint() * a * &x)[(0, 0)];
            assert!(q.re >= -1e-10 && q.im.abs() < 1e-9);
        }
    }
}

#[test]
fn single_radial_index_gives_rank_one() {
    // Lambda = 6 keeps exactly one root for each of l = 0, 1, 2
    let t = Arc::new(build_truncation(6.0, 10).unwrap());
    assert!((0..=t.l_max()).all(|l| t.radial_count(l) == 1));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_coefficients(&t, &mut rng);
    let h = random_coefficients(&t, &mut rng);
    let s = compute_sigma(&f, &h, t.l_max()).unwrap();
    for l in 0..=t.l_max() {
        assert!(numerical_rank(s.block(l), 1e-10) <= 1);
    }
}

#[test]
fn sigma_matches_naive_double_loop() {
    let t = Arc::new(build_truncation(12.0, 9).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = random_coefficients(&t, &mut rng);
    let h = random_coefficients(&t, &mut rng);
    let s = compute_sigma(&f, &h, t.l_max()).unwrap();
    for l in 0..=t.l_max() {
        let li = l as i64;
        for m in -li..=li {
            for mp in -li..=li {
                let mut want = Complex64::new(0.0, 0.0);
                for k in 1..=t.radial_count(l) {
                    want += f.get(k, l, m).unwrap() * h.get(k, l, mp).unwrap().conj();
                }
                let got = s.block(l)[((m + li) as usize, (mp + li) as usize)];
                assert!((got - want).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn degree_one_identity_is_character() {
    let mut s = SigmaBlocks::zeros(1);
    *s.block_mut(1) = DMatrix::identity(3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let e = random_euler(&mut rng);
        let theta = e.to_matrix().angle();
        assert!((eval_cl(&s, 1, &e).unwrap() - (1.0 + 2.0 * theta.cos())).abs() < 1e-10);
    }
}

#[test]
fn self_correlation_at_identity() {
    let p = make_phantom(5, 24, 5).unwrap();
    let t = Arc::new(build_truncation(14.0, 12).unwrap());
    let c = forward_transform(&p.volume, &t).unwrap();
    let s = compute_sigma(&c, &c, t.l_max()).unwrap();
    let at_id = eval_cl(&s, t.l_max(), &EulerZYZ::identity()).unwrap();
    assert!((at_id - c.norm_sqr()).abs() < 1e-10 * at_id);
    // the identity is a gimbal point of the chart, so use the intrinsic gradient
    let ev = eval_cl_intrinsic(&s, t.l_max(), &EulerZYZ::identity()).unwrap();
    assert!(ev.gradient.norm() < 1e-8 * ev.value);
}

fn interior(rng: &mut ChaCha8Rng) -> EulerZYZ {
    EulerZYZ::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(0.3..2.8),
        rng.random_range(-3.0..3.0),
    )
}

#[test]
fn derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let l = rng.random_range(1..=16);
        let s = random_sigma(&mut rng, l);
        let e = interior(&mut rng);
        let ev = eval_cl_full(&s, l, &e).unwrap();
        let f = |d: [f64; 3]| eval_cl(&s, l, &e.offset(d)).unwrap();
        let h = 1e-5;
        let mut g = nalgebra::Vector3::zeros();
        for i in 0..3 {
            let mut p = [0.0; 3];
            p[i] = h;
            let mut m = [0.0; 3];
            m[i] = -h;
            g[i] = (f(p) - f(m)) / (2.0 * h);
        }
        assert!((g - ev.gradient).norm() < 1e-6 * ev.gradient.norm());
        let h = 1e-4;
        let mut hs = nalgebra::Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let at = |a: f64, b: f64| {
                    let mut d = [0.0; 3];
                    d[i] += a;
                    d[j] += b;
                    f(d)
                };
                hs[(i, j)] = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
            }
        }
        assert!((hs - ev.hessian).norm() < 1e-4 * ev.hessian.norm());
    }
}

#[test]
fn intrinsic_derivatives_follow_right_translations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let l = rng.random_range(1..=12);
        let s = random_sigma(&mut rng, l);
        let g = random_euler(&mut rng).to_matrix();
        let ev = eval_cl_intrinsic(&s, l, &g.to_euler()).unwrap();
        let f = |v: [f64; 3]| eval_cl_at(&s, l, &g.compose(&RotationMatrix::from_rotation_vector(v))).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let mut p = [0.0; 3];
            p[i] = h;
            let mut m = [0.0; 3];
            m[i] = -h;
            let fd = (f(p) - f(m)) / (2.0 * h);
            assert!((fd - ev.gradient[i]).abs() < 1e-6 * ev.gradient.norm().max(1e-3));
            // second derivative along a one-parameter subgroup
            let h2 = 1e-4;
            let mut p2 = [0.0; 3];
            p2[i] = h2;
            let mut m2 = [0.0; 3];
            m2[i] = -h2;
            let fd2 = (f(p2) - 2.0 * f([0.0; 3]) + f(m2)) / (h2 * h2);
            assert!((fd2 - ev.hessian[(i, i)]).abs() < 1e-4 * ev.hessian.norm().max(1e-3));
        }
    }
}

#[test]
fn rank_bounds_and_invariance() {
    let t = Arc::new(build_truncation(16.0, 12).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let f = random_coefficients(&t, &mut rng);
        let h = random_coefficients(&t, &mut rng);
        let s = compute_sigma(&f, &h, t.l_max()).unwrap();
        let hr = matcha_core::rotate_coefficients(&h, &random_euler(&mut rng)).unwrap();
        let sr = compute_sigma(&f, &hr, t.l_max()).unwrap();
        for l in 0..=t.l_max() {
            let nr = numerical_rank(s.block(l), 1e-10);
            assert!(effective_rank(s.block(l), 0.2) <= nr);
            assert!(nr <= t.radial_count(l));
            assert_eq!(numerical_rank(sr.block(l), 1e-10), nr);
        }
    }
}
