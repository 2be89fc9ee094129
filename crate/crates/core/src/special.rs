//! Spherical Bessel functions, their positive zeros, and fully normalized
//! associated Legendre functions.

use std::f64::consts::PI;

/// Extra terms above the requested order used to start Miller's recurrence.
const MILLER_PAD: usize = 60;

/// Spherical Bessel function of the first kind `j_l(x)` for `x >= 0`.
pub fn sph_bessel(l: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if l == 0 { 1.0 } else { 0.0 };
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    if l == 0 {
        return j0;
    }
    let j1 = s / (x * x) - c / x;
    if l == 1 {
        return j1;
    }
    if x >= l as f64 {
        let (mut a, mut b) = (j0, j1);
        for n in 1..l {
            let next = (2 * n + 1) as f64 / x * b - a;
            a = b;
            b = next;
        }
        return b;
    }
    miller(l, x, j0, j1)
}

/// Downward recurrence normalized against whichever of `j_0`, `j_1` is larger.
fn miller(l: usize, x: f64, j0: f64, j1: f64) -> f64 {
    let start = l + MILLER_PAD + x as usize;
    let mut above = 0.0;
    let mut cur = 1e-300;
    let mut at_l = 0.0;
    for n in (1..=start).rev() {
        // cur = f_n, above = f_{n+1}; produce f_{n-1}
        let below = (2 * n + 1) as f64 / x * cur - above;
        above = cur;
        cur = below;
        if n - 1 == l {
            at_l = cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            above *= 1e-250;
            at_l *= 1e-250;
        }
    }
    // cur = f_0, above = f_1
    if j0.abs() >= j1.abs() {
        at_l * (j0 / cur)
    } else {
        at_l * (j1 / above)
    }
}

/// Positive zeros of `j_l` not exceeding `limit`, ascending, to about 1e-13.
pub fn sph_bessel_zeros(l: usize, limit: f64) -> Vec<f64> {
    let mut out = Vec::new();
    // no zeros of j_l in (0, l]
    let mut a = (l as f64).max(0.5);
    let mut fa = sph_bessel(l, a);
    let step = 0.5;
    while a < limit {
        let b = a + step;
        let fb = sph_bessel(l, b);
        if fa == 0.0 {
            if a > 0.0 && a <= limit && a > l as f64 {
                out.push(a);
            }
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            let r = bisect(|x| sph_bessel(l, x), a, b, fa);
            if r <= limit {
                out.push(r);
            }
        }
        a = b;
        fa = fb;
    }
    out
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Fully normalized associated Legendre values with the Condon-Shortley phase,
/// such that `Y_lm(theta, phi) = p[l][m] * exp(i m phi)` with `t = cos(theta)`.
///
/// Returns a triangular table `p[l][m]` for `0 <= m <= l <= l_max`.
pub fn legendre_table(l_max: usize, t: f64) -> Vec<Vec<f64>> {
    let s = (1.0 - t * t).max(0.0).sqrt();
    let mut p: Vec<Vec<f64>> = (0..=l_max).map(|l| vec![0.0; l + 1]).collect();
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            pmm *= -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        p[m][m] = pmm;
        if m + 1 <= l_max {
            p[m + 1][m] = ((2 * m + 3) as f64).sqrt() * t * pmm;
        }
        for l in m + 2..=l_max {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let lp = lf - 1.0;
            let a_prev = ((4.0 * lp * lp - 1.0) / (lp * lp - mf * mf)).sqrt();
            p[l][m] = a * (t * p[l - 1][m] - p[l - 2][m] / a_prev);
        }
    }
    p
}
