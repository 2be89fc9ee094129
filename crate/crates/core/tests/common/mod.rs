#![allow(dead_code)]

use matcha_core::correlation::SigmaBlocks;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Double-double number: `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let (h, l) = two_sum(hi, lo);
        Dd { hi: h, lo: l }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        Dd::norm(s, e + self.lo + o.lo)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::norm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Dd::new(q1)).neg());
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul(Dd::new(q2)).neg());
        let q3 = r.hi / o.hi;
        Dd::new(q1).add(Dd::new(q2)).add(Dd::new(q3))
    }

    pub fn sqrt(self) -> Dd {
        if self.hi <= 0.0 {
            return Dd::new(0.0);
        }
        let x = Dd::new(self.hi.sqrt());
        // one Newton step doubles the precision
        x.add(self.div(x)).mul(Dd::new(0.5))
    }

    pub fn powi(self, n: usize) -> Dd {
        let mut out = Dd::new(1.0);
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

fn factorial(n: usize) -> Dd {
    (1..=n).fold(Dd::new(1.0), |acc, k| acc.mul(Dd::new(k as f64)))
}

/// Wigner small-d entry `d^l_{m m'}` from the explicit factorial sum, in
/// double-double arithmetic, given `c = cos(beta/2)` as an exact double.
/// Row index `m`, column `m'`, matching `d^1_{10} = -sin(beta)/sqrt 2`.
pub fn little_d_oracle(l: i64, m: i64, mp: i64, c: f64) -> f64 {
    let cc = Dd::new(c);
    let s = Dd::new(1.0).add(cc.mul(cc).neg()).sqrt();
    let pref = factorial((l + m) as usize)
        .mul(factorial((l - m) as usize))
        .mul(factorial((l + mp) as usize))
        .mul(factorial((l - mp) as usize))
        .sqrt();
    let mut sum = Dd::new(0.0);
    let kmin = 0.max(mp - m);
    let kmax = (l + mp).min(l - m);
    for k in kmin..=kmax {
        let den = factorial((l + mp - k) as usize)
            .mul(factorial(k as usize))
            .mul(factorial((m - mp + k) as usize))
            .mul(factorial((l - m - k) as usize));
        let pc = (2 * l + mp - m - 2 * k) as usize;
        let ps = (m - mp + 2 * k) as usize;
        let mut t = pref.div(den).mul(cc.powi(pc)).mul(s.powi(ps));
        if (m - mp + k) % 2 != 0 {
            t = t.neg();
        }
        sum = sum.add(t);
    }
    sum.to_f64()
}

/// Unit quaternion `(w, x, y, z)`.
pub type Quat = [f64; 4];

pub fn quat_mul(a: Quat, b: Quat) -> Quat {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

pub fn quat_axis(axis: usize, angle: f64) -> Quat {
    let mut q = [(angle / 2.0).cos(), 0.0, 0.0, 0.0];
    q[axis + 1] = (angle / 2.0).sin();
    q
}

/// `Rz(a) Ry(b) Rz(g)` as a quaternion.
pub fn quat_zyz(a: f64, b: f64, g: f64) -> Quat {
    quat_mul(quat_mul(quat_axis(2, a), quat_axis(1, b)), quat_axis(2, g))
}

pub fn quat_to_rows(q: Quat) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn quat_distance(a: Quat, b: Quat) -> f64 {
    let d: f64 = (0..4).map(|i| a[i] * b[i]).sum();
    2.0 * d.abs().min(1.0).acos()
}

pub fn complex_normal<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

/// Random blocks with entries of size about `1 / (2l+1)`.
pub fn random_sigma<R: Rng>(rng: &mut R, l_max: usize) -> SigmaBlocks {
    let blocks = (0..=l_max)
        .map(|l| {
            let d = 2 * l + 1;
            DMatrix::from_fn(d, d, |_, _| complex_normal(rng) / d as f64)
        })
        .collect();
    SigmaBlocks::from_blocks(blocks).unwrap()
}

/// Blocks `w_l D^l(center^{-1})^T` for each listed center. Since
/// `C(g) = Re sum sigma .* D(g)`, this gives a sum of weighted characters
/// `w_l chi_l(center^{-1} g)` peaked at each center.
pub fn character_sigma(l_max: usize, weights: &[f64], centers: &[(matcha_core::EulerZYZ, f64)]) -> SigmaBlocks {
    let mut blocks: Vec<DMatrix<Complex64>> = (0..=l_max)
        .map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1))
        .collect();
    for (c, amp) in centers {
        let inv = c.to_matrix().inverse().to_euler();
        for l in 0..=l_max {
            let d = matcha_core::wigner::wigner_d(l, &inv).unwrap();
            blocks[l] += d.entries.transpose() * Complex64::new(weights[l] * amp, 0.0);
        }
    }
    SigmaBlocks::from_blocks(blocks).unwrap()
}

/// Max-abs over entries.
pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
