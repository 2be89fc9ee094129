//! Wigner d- and D-matrices with closed-form Euler-angle derivatives.
//!
//! Index convention, fixed crate-wide: rows and columns of every degree-`l`
//! block run over `m = -l, ..., l` in ascending order, so entry `(m, m')`
//! lives at `(m + l, m' + l)`. With `d^l(beta) = exp(-i beta J_y)`,
//!
//! ```text
//! D^l_{m m'}(alpha, beta, gamma) = exp(-i m alpha) d^l_{m m'}(beta) exp(-i m' gamma)
//! ```
//!
//! and `D(g1 g2) = D(g1) D(g2)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::so3::EulerZYZ;

/// Largest supported degree.
pub const DEGREE_CAP: usize = 256;

/// Real block `d^l(beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LittleDBlock {
    pub l: usize,
    pub beta: f64,
    pub entries: DMatrix<f64>,
}

impl LittleDBlock {
    /// Entry `d^l_{m m'}`.
    #[inline]
    pub fn get(&self, m: i64, mp: i64) -> f64 {
        let l = self.l as i64;
        self.entries[((m + l) as usize, (mp + l) as usize)]
    }
}

/// Complex block `D^l(alpha, beta, gamma)` (or one of its derivatives).
#[derive(Debug, Clone, PartialEq)]
pub struct WignerDBlock {
    pub l: usize,
    pub angles: EulerZYZ,
    pub entries: DMatrix<Complex64>,
}

impl WignerDBlock {
    #[inline]
    pub fn get(&self, m: i64, mp: i64) -> Complex64 {
        let l = self.l as i64;
        self.entries[((m + l) as usize, (mp + l) as usize)]
    }
}

fn check_degree(l: usize) -> Result<()> {
    if l > DEGREE_CAP {
        Err(Error::DegreeTooLarge {
            degree: l,
            cap: DEGREE_CAP,
        })
    } else {
        Ok(())
    }
}

/// `ln k!` for `k = 0..=n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Signed-permutation value of `d^l(pi)`.
fn d_at_pi(l: usize) -> DMatrix<f64> {
    let n = 2 * l + 1;
    DMatrix::from_fn(n, n, |r, c| {
        if r + c == 2 * l {
            let m = r as i64 - l as i64;
            if (l as i64 + m).rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
        }
    })
}

/// All blocks `d^0(beta), ..., d^{l_max}(beta)`.
///
/// Entries with `max(|m|,|m'|) = l` are seeded in closed form; the rest follow
/// from the three-term recurrence in `l` at fixed `(m, m')`. At `beta = 0` and
/// `beta = pi` the exact signed permutations are returned.
pub fn little_d_all(l_max: usize, beta: f64) -> Result<Vec<DMatrix<f64>>> {
    check_degree(l_max)?;
    if beta == 0.0 {
        return Ok((0..=l_max)
            .map(|l| DMatrix::identity(2 * l + 1, 2 * l + 1))
            .collect());
    }
    if beta == std::f64::consts::PI {
        return Ok((0..=l_max).map(d_at_pi).collect());
    }

    let lnf = ln_factorials(2 * l_max + 1);
    let ln_binom = |n: usize, k: usize| lnf[n] - lnf[k] - lnf[n - k];
    let half = 0.5 * beta;
    let (s, c) = half.sin_cos();
    let (ln_s, ln_c) = (s.ln(), c.ln());
    let cb = beta.cos();
    // c^p s^q sqrt(binom), robust for large degree
    let seed = |j: usize, k: usize, p: usize, q: usize| -> f64 {
        let mut log = 0.5 * ln_binom(2 * j, k);
        if p > 0 {
            log += p as f64 * ln_c;
        }
        if q > 0 {
            log += q as f64 * ln_s;
        }
        log.exp()
    };

    let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(l_max + 1);
    blocks.push(DMatrix::from_element(1, 1, 1.0));
    for j in 1..=l_max {
        let n = 2 * j + 1;
        let ji = j as i64;
        let mut cur = DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            let m = r as i64 - ji;
            for col in 0..n {
                let mp = col as i64 - ji;
                let v = if m == ji {
                    // row m = j
                    let k = (ji + mp) as usize;
                    let sign = if (ji - mp) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * seed(j, k, (ji + mp) as usize, (ji - mp) as usize)
                } else if m == -ji {
                    let k = (ji + mp) as usize;
                    seed(j, k, (ji - mp) as usize, (ji + mp) as usize)
                } else if mp == ji {
                    let k = (ji + m) as usize;
                    seed(j, k, (ji + m) as usize, (ji - m) as usize)
                } else if mp == -ji {
                    let k = (ji + m) as usize;
                    let sign = if (m + ji) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * seed(j, k, (ji - m) as usize, (ji + m) as usize)
                } else {
                    // recurrence from degree j-1 (and j-2)
                    let jm = (j - 1) as i64;
                    let jf = jm as f64;
                    let (mf, mpf) = (m as f64, mp as f64);
                    let prev = &blocks[j - 1];
                    let d1 = prev[((m + jm) as usize, (mp + jm) as usize)];
                    let mixed = if m == 0 || mp == 0 {
                        0.0
                    } else {
                        mf * mpf / (jf * (jf + 1.0))
                    };
                    let mut acc = (cb - mixed) * d1;
                    if m.abs() < jm && mp.abs() < jm {
                        let jmm = jm - 1;
                        let d0 = blocks[j - 2][((m + jmm) as usize, (mp + jmm) as usize)];
                        let coef = ((jf * jf - mf * mf) * (jf * jf - mpf * mpf)).sqrt()
                            / (jf * (2.0 * jf + 1.0));
                        acc -= coef * d0;
                    }
                    let jp = jf + 1.0;
                    let pre = jp * (2.0 * jf + 1.0)
                        / ((jp * jp - mf * mf) * (jp * jp - mpf * mpf)).sqrt();
                    pre * acc
                };
                cur[(r, col)] = v;
            }
        }
        blocks.push(cur);
    }
    Ok(blocks)
}

/// Single block `d^l(beta)`.
pub fn little_d(l: usize, beta: f64) -> Result<LittleDBlock> {
    let mut all = little_d_all(l, beta)?;
    let entries = all.pop().expect("at least degree 0");
    Ok(LittleDBlock { l, beta, entries })
}

/// The real matrix `G = -i J_y` of degree `l`, so that `d/dbeta d^l = d^l G`.
pub fn beta_generator(l: usize) -> DMatrix<f64> {
    let n = 2 * l + 1;
    let j = l as f64;
    let mut g = DMatrix::zeros(n, n);
    for col in 0..n {
        let c = col as f64 - j;
        if col > 0 {
            g[(col - 1, col)] = 0.5 * ((j + c) * (j - c + 1.0)).sqrt();
        }
        if col + 1 < n {
            g[(col + 1, col)] = -0.5 * ((j - c) * (j + c + 1.0)).sqrt();
        }
    }
    g
}

/// `d/dbeta` of a d-block via the ladder identity.
pub fn d_beta_block(d: &DMatrix<f64>) -> DMatrix<f64> {
    let n = d.nrows();
    let l = (n - 1) / 2;
    let j = l as f64;
    let mut out = DMatrix::zeros(n, n);
    for col in 0..n {
        let c = col as f64 - j;
        let lo = if col > 0 {
            0.5 * ((j + c) * (j - c + 1.0)).sqrt()
        } else {
            0.0
        };
        let hi = if col + 1 < n {
            0.5 * ((j - c) * (j + c + 1.0)).sqrt()
        } else {
            0.0
        };
        for r in 0..n {
            let mut v = 0.0;
            if col > 0 {
                v += lo * d[(r, col - 1)];
            }
            if col + 1 < n {
                v -= hi * d[(r, col + 1)];
            }
            out[(r, col)] = v;
        }
    }
    out
}

/// Lie-algebra generators `(-i J_x, -i J_y, -i J_z)` of degree `l`, so that
/// `D^l(exp(t e_k)) = exp(t G_k)` for rotations about the coordinate axes.
pub fn lie_generators(l: usize) -> [DMatrix<Complex64>; 3] {
    let n = 2 * l + 1;
    let j = l as f64;
    let mut gx = DMatrix::zeros(n, n);
    let mut gy = DMatrix::zeros(n, n);
    let mut gz = DMatrix::zeros(n, n);
    for col in 0..n {
        let c = col as f64 - j;
        gz[(col, col)] = Complex64::new(0.0, -c);
        if col + 1 < n {
            // <c+1| J+ |c>
            let up = ((j - c) * (j + c + 1.0)).sqrt();
            gx[(col + 1, col)] = Complex64::new(0.0, -0.5 * up);
            gy[(col + 1, col)] = Complex64::new(-0.5 * up, 0.0);
        }
        if col > 0 {
            // <c-1| J- |c>
            let down = ((j + c) * (j - c + 1.0)).sqrt();
            gx[(col - 1, col)] = Complex64::new(0.0, -0.5 * down);
            gy[(col - 1, col)] = Complex64::new(0.5 * down, 0.0);
        }
    }
    [gx, gy, gz]
}

/// Largest entry modulus of a complex matrix.
pub fn complex_max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Phase vector `exp(-i m x)` for `m = -l..=l`.
#[inline]
pub(crate) fn phases(l: usize, x: f64) -> Vec<Complex64> {
    let li = l as i64;
    (-li..=li)
        .map(|m| Complex64::from_polar(1.0, -(m as f64) * x))
        .collect()
}

fn assemble(l: usize, e: &EulerZYZ, d: &DMatrix<f64>, weight: impl Fn(f64, f64) -> Complex64) -> WignerDBlock {
    let n = 2 * l + 1;
    let pa = phases(l, e.alpha());
    let pg = phases(l, e.gamma());
    let li = l as f64;
    let entries = DMatrix::from_fn(n, n, |r, c| {
        let m = r as f64 - li;
        let mp = c as f64 - li;
        // weight last, so derivative entries are exact multiples of D
        pa[r] * pg[c] * d[(r, c)] * weight(m, mp)
    });
    WignerDBlock {
        l,
        angles: *e,
        entries,
    }
}

/// `D^l(alpha, beta, gamma)`.
pub fn wigner_d(l: usize, e: &EulerZYZ) -> Result<WignerDBlock> {
    let d = little_d(l, e.beta())?;
    Ok(assemble(l, e, &d.entries, |_, _| Complex64::new(1.0, 0.0)))
}

/// First derivatives `(dD/dalpha, dD/dbeta, dD/dgamma)`.
pub fn d_wigner_d(l: usize, e: &EulerZYZ) -> Result<[WignerDBlock; 3]> {
    let d = little_d(l, e.beta())?.entries;
    let db = d_beta_block(&d);
    let one = |_: f64, _: f64| Complex64::new(1.0, 0.0);
    Ok([
        assemble(l, e, &d, |m, _| Complex64::new(0.0, -m)),
        assemble(l, e, &db, one),
        assemble(l, e, &d, |_, mp| Complex64::new(0.0, -mp)),
    ])
}

/// Second derivatives in the order `(aa, bb, gg, ab, ag, bg)`.
pub fn d2_wigner_d(l: usize, e: &EulerZYZ) -> Result<[WignerDBlock; 6]> {
    let d = little_d(l, e.beta())?.entries;
    let db = d_beta_block(&d);
    let dbb = d_beta_block(&db);
    let one = |_: f64, _: f64| Complex64::new(1.0, 0.0);
    Ok([
        assemble(l, e, &d, |m, _| Complex64::new(-m * m, 0.0)),
        assemble(l, e, &dbb, one),
        assemble(l, e, &d, |_, mp| Complex64::new(-mp * mp, 0.0)),
        assemble(l, e, &db, |m, _| Complex64::new(0.0, -m)),
        assemble(l, e, &d, |m, mp| Complex64::new(-m * mp, 0.0)),
        assemble(l, e, &db, |_, mp| Complex64::new(0.0, -mp)),
    ])
}

/// Full `D^l` blocks for every degree up to `l_max` at one rotation.
pub fn wigner_d_all(l_max: usize, e: &EulerZYZ) -> Result<Vec<DMatrix<Complex64>>> {
    let ds = little_d_all(l_max, e.beta())?;
    Ok(ds
        .iter()
        .enumerate()
        .map(|(l, d)| assemble(l, e, d, |_, _| Complex64::new(1.0, 0.0)).entries)
        .collect())
}
