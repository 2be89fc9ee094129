//! Ball-harmonic basis on the unit ball.
//!
//! Basis functions are `psi_{k,l,m}(x) = N_{lk} j_l(lambda_{lk} |x|) conj(Y_lm(x/|x|))`
//! with `Y_lm` the orthonormal complex spherical harmonics (Condon-Shortley
//! phase) and `lambda_{lk}` the k-th positive zero of `j_l`, so that
//! `psi(x) = 0` on the sphere and `||psi||_{L2(ball)} = 1`.
//!
//! The conjugated angular factor is what makes a rotation act on each
//! `(l, k)` shell through `conj(D^l)`: the coefficients of `x -> u(g^{-1} x)`
//! are `conj(D^l(g)) u_hat_{k,l,.}`, and the correlation of two coefficient
//! sets then reads `sum sigma_{l m m'} D^l_{m m'}(g)` directly.
//!
//! Coefficients are stored flat, ordered by degree, then radial index, then
//! `m = -l..=l`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::EulerZYZ;
use crate::special::{legendre_table, sph_bessel, sph_bessel_zeros};
use crate::volume::{coord, Volume};
use crate::wigner::{wigner_d_all, DEGREE_CAP};

/// One radial shell `(l, k)` of the truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub l: usize,
    /// 1-based radial index.
    pub k: usize,
    pub lambda: f64,
    pub norm: f64,
    /// Start of the `2l+1` coefficients of this shell.
    pub offset: usize,
}

/// Index set of retained `(k, l, m)` with `lambda_{lk} <= Lambda`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationIndex {
    lambda: f64,
    l_max: usize,
    roots: Vec<Vec<f64>>,
    shells: Vec<Shell>,
    len: usize,
}

impl PartialEq for TruncationIndex {
    fn eq(&self, other: &Self) -> bool {
        self.lambda == other.lambda && self.l_max == other.l_max && self.len == other.len
    }
}

/// Zeros of `j_l` up to `lambda` for every `l <= l_max`.
pub fn bessel_roots(l_max: usize, lambda: f64) -> Vec<Vec<f64>> {
    (0..=l_max)
        .into_par_iter()
        .map(|l| sph_bessel_zeros(l, lambda))
        .collect()
}

/// Builds the truncation for budget `lambda`, keeping degrees `l <= l_max`.
///
/// The stored `l_max` is the largest degree that actually has a retained
/// root, which may be below the requested cap.
pub fn build_truncation(lambda: f64, l_max: usize) -> Result<TruncationIndex> {
    if !lambda.is_finite() || lambda < std::f64::consts::PI {
        return Err(Error::EmptyTruncation { lambda });
    }
    if l_max > DEGREE_CAP {
        return Err(Error::DegreeTooLarge {
            degree: l_max,
            cap: DEGREE_CAP,
        });
    }
    // j_{l,1} > l, so no degree above lambda contributes
    let cap = l_max.min(lambda.floor() as usize);
    let mut roots = bessel_roots(cap, lambda);
    while roots.last().is_some_and(|r| r.is_empty()) {
        roots.pop();
    }
    let mut shells = Vec::new();
    let mut offset = 0;
    for (l, rl) in roots.iter().enumerate() {
        for (i, &lam) in rl.iter().enumerate() {
            let norm = std::f64::consts::SQRT_2 / sph_bessel(l + 1, lam).abs();
            shells.push(Shell {
                l,
                k: i + 1,
                lambda: lam,
                norm,
                offset,
            });
            offset += 2 * l + 1;
        }
    }
    Ok(TruncationIndex {
        lambda,
        l_max: roots.len() - 1,
        roots,
        shells,
        len: offset,
    })
}

impl TruncationIndex {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest retained degree.
    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Retained roots for degree `l` (empty above `l_max`).
    pub fn roots(&self, l: usize) -> &[f64] {
        self.roots.get(l).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `|K_l|`.
    pub fn radial_count(&self, l: usize) -> usize {
        self.roots(l).len()
    }

    pub fn shells(&self) -> &[Shell] {
        &self.shells
    }

    /// Shells of degree `l`, in radial order.
    pub fn shells_of(&self, l: usize) -> impl Iterator<Item = &Shell> {
        self.shells.iter().filter(move |s| s.l == l)
    }

    /// Number of complex coefficients.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Flat position of `(k, l, m)`, if retained.
    pub fn position(&self, k: usize, l: usize, m: i64) -> Option<usize> {
        if m.unsigned_abs() as usize > l || k == 0 || k > self.radial_count(l) {
            return None;
        }
        let shell = self.shells.iter().find(|s| s.l == l && s.k == k)?;
        Some(shell.offset + (m + l as i64) as usize)
    }

    /// The flat list `(k, l, m)` in storage order.
    pub fn indices(&self) -> Vec<(usize, usize, i64)> {
        let mut out = Vec::with_capacity(self.len);
        for s in &self.shells {
            let l = s.l as i64;
            for m in -l..=l {
                out.push((s.k, s.l, m));
            }
        }
        out
    }

    /// Basis function value `psi_{k,l,m}` at a point of the ball.
    pub fn basis_value(&self, k: usize, l: usize, m: i64, x: [f64; 3]) -> Option<Complex64> {
        let pos = self.position(k, l, m)?;
        let shell = self.shells.iter().find(|s| s.offset <= pos && pos < s.offset + 2 * s.l + 1)?;
        let g = Geometry::of(x);
        if g.r >= 1.0 {
            return Some(Complex64::new(0.0, 0.0));
        }
        let p = legendre_table(l, g.cos_theta);
        let ma = m.unsigned_abs() as usize;
        let mut y = Complex64::from_polar(p[l][ma], ma as f64 * g.phi);
        if m < 0 {
            y = y.conj() * if ma % 2 == 0 { 1.0 } else { -1.0 };
        }
        Some(y.conj() * shell.norm * sph_bessel(l, shell.lambda * g.r))
    }
}

/// Coefficients of a volume in the ball-harmonic basis.
#[derive(Debug, Clone)]
pub struct BallCoefficients {
    truncation: Arc<TruncationIndex>,
    values: Vec<Complex64>,
}

impl BallCoefficients {
    pub fn zeros(truncation: Arc<TruncationIndex>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); truncation.len()];
        Self { truncation, values }
    }

    pub fn from_values(truncation: Arc<TruncationIndex>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != truncation.len() {
            return Err(Error::TruncationMismatch);
        }
        Ok(Self { truncation, values })
    }

    pub fn truncation(&self) -> &Arc<TruncationIndex> {
        &self.truncation
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn get(&self, k: usize, l: usize, m: i64) -> Option<Complex64> {
        self.truncation.position(k, l, m).map(|i| self.values[i])
    }

    /// The `2l+1` coefficients of one shell.
    pub fn shell(&self, s: &Shell) -> &[Complex64] {
        &self.values[s.offset..s.offset + 2 * s.l + 1]
    }

    pub fn same_truncation(&self, other: &BallCoefficients) -> bool {
        Arc::ptr_eq(&self.truncation, &other.truncation) || *self.truncation == *other.truncation
    }

    pub fn check_same_truncation(&self, other: &BallCoefficients) -> Result<()> {
        if self.same_truncation(other) {
            Ok(())
        } else {
            Err(Error::TruncationMismatch)
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &BallCoefficients, b: f64) -> Result<BallCoefficients> {
        self.check_same_truncation(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Ok(Self {
            truncation: self.truncation.clone(),
            values,
        })
    }

    /// Sum of squared moduli.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Squared norm restricted to degrees `l <= l_cut`.
    pub fn norm_sqr_upto(&self, l_cut: usize) -> f64 {
        self.truncation
            .shells()
            .iter()
            .filter(|s| s.l <= l_cut)
            .map(|s| self.shell(s).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// Cheap content hash used to tag derived objects.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the coefficient bits
        let mut h: u64 = 0xcbf29ce484222325;
        for z in &self.values {
            for b in z.re.to_bits().to_le_bytes().into_iter().chain(z.im.to_bits().to_le_bytes()) {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

struct Geometry {
    r: f64,
    cos_theta: f64,
    phi: f64,
}

impl Geometry {
    fn of(x: [f64; 3]) -> Self {
        let rho = x[0].hypot(x[1]);
        let r = rho.hypot(x[2]);
        if r == 0.0 {
            return Self {
                r,
                cos_theta: 1.0,
                phi: 0.0,
            };
        }
        Self {
            r,
            cos_theta: (x[2] / r).clamp(-1.0, 1.0),
            phi: x[1].atan2(x[0]),
        }
    }
}

/// Per-point basis evaluator: `Y_lm` for `m >= 0` and radial factors per shell.
struct PointBasis {
    ylm: Vec<Vec<Complex64>>,
    radial: Vec<f64>,
}

impl PointBasis {
    fn new(t: &TruncationIndex, x: [f64; 3]) -> Self {
        let g = Geometry::of(x);
        let p = legendre_table(t.l_max(), g.cos_theta);
        let ylm = p
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(m, &v)| Complex64::from_polar(v, m as f64 * g.phi))
                    .collect()
            })
            .collect();
        let radial = t
            .shells()
            .iter()
            .map(|s| s.norm * sph_bessel(s.l, s.lambda * g.r))
            .collect();
        Self { ylm, radial }
    }

    /// `Y_lm` for any sign of `m`.
    #[inline]
    fn y(&self, l: usize, m: i64) -> Complex64 {
        let ma = m.unsigned_abs() as usize;
        let v = self.ylm[l][ma];
        if m >= 0 {
            v
        } else if ma % 2 == 0 {
            v.conj()
        } else {
            -v.conj()
        }
    }
}

/// Voxel indices (flat) of the ball interior, grouped by `ix` slab.
fn ball_slabs(n: usize) -> Vec<Vec<(usize, [f64; 3])>> {
    (0..n)
        .map(|ix| {
            let mut v = Vec::new();
            for iy in 0..n {
                for iz in 0..n {
                    let p = [coord(n, ix), coord(n, iy), coord(n, iz)];
                    if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] < 1.0 {
                        v.push(((ix * n + iy) * n + iz, p));
                    }
                }
            }
            v
        })
        .collect()
}

/// Quadrature projection `u_hat = <v, psi>` over voxels inside the unit ball.
///
/// Voxels at radius `>= 1` are ignored, which is the same as masking first.
/// Partial sums are formed per slab in parallel and reduced in slab order,
/// so the result does not depend on the thread count.
pub fn forward_transform(v: &Volume, t: &Arc<TruncationIndex>) -> Result<BallCoefficients> {
    if t.is_empty() {
        return Err(Error::EmptyTruncation { lambda: t.lambda() });
    }
    let w = v.voxel_volume();
    let data = v.data();
    let slabs = ball_slabs(v.n());
    let partials: Vec<Vec<Complex64>> = slabs
        .par_iter()
        .map(|slab| {
            let mut acc = vec![Complex64::new(0.0, 0.0); t.len()];
            for &(idx, p) in slab {
                let val = data[idx];
                if val == 0.0 {
                    continue;
                }
                let basis = PointBasis::new(t, p);
                for (si, s) in t.shells().iter().enumerate() {
                    let f = val * w * basis.radial[si];
                    if f == 0.0 {
                        continue;
                    }
                    let l = s.l as i64;
                    for m in -l..=l {
                        acc[s.offset + (m + l) as usize] += basis.y(s.l, m) * f;
                    }
                }
            }
            acc
        })
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); t.len()];
    for part in partials {
        for (a, b) in values.iter_mut().zip(part) {
            *a += b;
        }
    }
    BallCoefficients::from_values(t.clone(), values)
}

/// Pointwise synthesis `sum u_hat psi` at voxel centers; zero outside the ball.
///
/// The real part is returned, which is exact for coefficients of real volumes.
pub fn synthesize(c: &BallCoefficients, n: usize) -> Result<Volume> {
    let t = c.truncation().clone();
    Volume::from_fn(n, |p| {
        if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] >= 1.0 {
            return 0.0;
        }
        let basis = PointBasis::new(&t, p);
        let mut acc = 0.0;
        for (si, s) in t.shells().iter().enumerate() {
            let r = basis.radial[si];
            if r == 0.0 {
                continue;
            }
            let l = s.l as i64;
            let coeffs = c.shell(s);
            let mut z = Complex64::new(0.0, 0.0);
            for m in -l..=l {
                z += coeffs[(m + l) as usize] * basis.y(s.l, m).conj();
            }
            acc += r * z.re;
        }
        acc
    })
}

/// Coefficients of `x -> u(g^{-1} x)`: each shell is mapped by `conj(D^l(g))`.
pub fn rotate_coefficients(c: &BallCoefficients, g: &EulerZYZ) -> Result<BallCoefficients> {
    let t = c.truncation();
    let blocks = wigner_d_all(t.l_max(), g)?;
    Ok(apply_blocks(c, |l| blocks[l].map(|z| z.conj())))
}

/// Applies a per-degree matrix to every shell.
pub(crate) fn apply_blocks(
    c: &BallCoefficients,
    block: impl Fn(usize) -> DMatrix<Complex64>,
) -> BallCoefficients {
    let t = c.truncation().clone();
    let mut out = BallCoefficients::zeros(t.clone());
    for l in 0..=t.l_max() {
        let b = block(l);
        for s in t.shells_of(l) {
            let v = nalgebra::DVector::from_column_slice(c.shell(s));
            let r = &b * v;
            out.values[s.offset..s.offset + 2 * l + 1].copy_from_slice(r.as_slice());
        }
    }
    out
}
