//! Sigma blocks and the band-limited correlation
//! `C_L(g) = Re sum_{l <= L} sum_{m m'} sigma_{l m m'} D^l_{m m'}(g)`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;

use crate::ball::BallCoefficients;
use crate::error::{Error, Result};
use crate::so3::{EulerZYZ, RotationMatrix};
use crate::wigner::{d_beta_block, lie_generators, little_d_all, phases, wigner_d_all};

/// Per-degree matrices `A_l = sum_k f_hat_{k,l,.} conj(h_hat_{k,l,.})^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaBlocks {
    l_max: usize,
    blocks: Vec<DMatrix<Complex64>>,
    /// Fingerprints of the two coefficient sets, when built from them.
    pub provenance: Option<[u64; 2]>,
}

/// Value, Euler-chart gradient and Hessian of `C_L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEval {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

impl SigmaBlocks {
    /// Wraps explicit blocks; block `l` must be `(2l+1) x (2l+1)`.
    pub fn from_blocks(blocks: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Config("no sigma blocks".into()));
        }
        for (l, b) in blocks.iter().enumerate() {
            if b.nrows() != 2 * l + 1 || b.ncols() != 2 * l + 1 {
                return Err(Error::Config(format!(
                    "sigma block {l} has shape {}x{}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        Ok(Self {
            l_max: blocks.len() - 1,
            blocks,
            provenance: None,
        })
    }

    /// All-zero blocks up to `l_max`.
    pub fn zeros(l_max: usize) -> Self {
        Self {
            l_max,
            blocks: (0..=l_max)
                .map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1))
                .collect(),
            provenance: None,
        }
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn blocks(&self) -> &[DMatrix<Complex64>] {
        &self.blocks
    }

    pub fn block(&self, l: usize) -> &DMatrix<Complex64> {
        &self.blocks[l]
    }

    pub fn block_mut(&mut self, l: usize) -> &mut DMatrix<Complex64> {
        &mut self.blocks[l]
    }

    pub fn check_cutoff(&self, l: usize) -> Result<()> {
        if l > self.l_max {
            Err(Error::CutoffExceedsBlocks {
                requested: l,
                available: self.l_max,
            })
        } else {
            Ok(())
        }
    }

    /// Sum of Frobenius norms up to `l_cut`.
    pub fn frobenius_sum(&self, l_cut: usize) -> f64 {
        self.blocks[..=l_cut.min(self.l_max)]
            .iter()
            .map(|b| b.norm())
            .sum()
    }

    /// Sum of entry moduli over degrees in `(lo, hi]`.
    pub fn abs_sum_between(&self, lo: usize, hi: usize) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(l, _)| *l > lo && *l <= hi)
            .map(|(_, b)| b.iter().map(|z| z.norm()).sum::<f64>())
            .sum()
    }

    /// Blocks with degrees in `(lo, hi]` kept and all others zeroed, i.e. the
    /// sigma set of `C_hi - C_lo`.
    pub fn band(&self, lo: Option<usize>, hi: usize) -> SigmaBlocks {
        let mut out = SigmaBlocks::zeros(hi.min(self.l_max));
        for l in 0..=out.l_max {
            if lo.is_none_or(|lo| l > lo) {
                out.blocks[l] = self.blocks[l].clone();
            }
        }
        out
    }

    /// Scaled copy.
    pub fn scaled(&self, a: f64) -> SigmaBlocks {
        SigmaBlocks {
            l_max: self.l_max,
            blocks: self.blocks.iter().map(|b| b * Complex64::new(a, 0.0)).collect(),
            provenance: self.provenance,
        }
    }

    /// Entrywise sum over common degrees.
    pub fn add(&self, other: &SigmaBlocks) -> SigmaBlocks {
        let l_max = self.l_max.max(other.l_max);
        let mut out = SigmaBlocks::zeros(l_max);
        for l in 0..=l_max {
            if l <= self.l_max {
                out.blocks[l] += &self.blocks[l];
            }
            if l <= other.l_max {
                out.blocks[l] += &other.blocks[l];
            }
        }
        out
    }

    /// Blocks `sigma' = sigma D(q)^T`, so that `C'(g) = C(g q)`.
    pub fn right_translate(&self, q: &RotationMatrix) -> Result<SigmaBlocks> {
        let dq = wigner_d_all(self.l_max, &q.to_euler())?;
        Ok(SigmaBlocks {
            l_max: self.l_max,
            blocks: self
                .blocks
                .iter()
                .zip(&dq)
                .map(|(s, d)| s * d.transpose())
                .collect(),
            provenance: self.provenance,
        })
    }

    /// Low-rank compression: each block replaced by its truncated SVD at the
    /// effective rank for ratio `rho`.
    pub fn compressed(&self, rho: f64) -> SigmaBlocks {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let r = effective_rank(b, rho);
                let svd = b.clone().svd(true, true);
                let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
                let mut out = DMatrix::zeros(b.nrows(), b.ncols());
                for (i, &s) in svd.singular_values.iter().enumerate() {
                    if i >= r || s == 0.0 {
                        continue;
                    }
                    out += u.column(i) * vt.row(i) * Complex64::new(s, 0.0);
                }
                out
            })
            .collect();
        SigmaBlocks {
            l_max: self.l_max,
            blocks,
            provenance: self.provenance,
        }
    }
}

/// Builds sigma blocks up to degree `l_max` from two coefficient sets on the
/// same truncation.
pub fn compute_sigma(fc: &BallCoefficients, hc: &BallCoefficients, l_max: usize) -> Result<SigmaBlocks> {
    fc.check_same_truncation(hc)?;
    let t = fc.truncation();
    if l_max > t.l_max() {
        return Err(Error::CutoffExceedsBlocks {
            requested: l_max,
            available: t.l_max(),
        });
    }
    let mut out = SigmaBlocks::zeros(l_max);
    for l in 0..=l_max {
        let blk = &mut out.blocks[l];
        for s in t.shells_of(l) {
            let a = fc.shell(s);
            let b = hc.shell(s);
            for (r, ar) in a.iter().enumerate() {
                for (c, bc) in b.iter().enumerate() {
                    blk[(r, c)] += ar * bc.conj();
                }
            }
        }
    }
    out.provenance = Some([fc.fingerprint(), hc.fingerprint()]);
    Ok(out)
}

/// Complex `sum sigma D` up to `l`; the imaginary part measures asymmetry.
pub fn eval_cl_complex(s: &SigmaBlocks, l: usize, e: &EulerZYZ) -> Result<Complex64> {
    s.check_cutoff(l)?;
    let ds = little_d_all(l, e.beta())?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (deg, d) in ds.iter().enumerate() {
        let pa = phases(deg, e.alpha());
        let pg = phases(deg, e.gamma());
        let sig = &s.blocks[deg];
        let n = 2 * deg + 1;
        for c in 0..n {
            let mut col = Complex64::new(0.0, 0.0);
            for r in 0..n {
                col += sig[(r, c)] * pa[r] * d[(r, c)];
            }
            acc += col * pg[c];
        }
    }
    Ok(acc)
}

/// `C_L(e)`.
pub fn eval_cl(s: &SigmaBlocks, l: usize, e: &EulerZYZ) -> Result<f64> {
    Ok(eval_cl_complex(s, l, e)?.re)
}

/// `C_L` at a rotation matrix.
pub fn eval_cl_at(s: &SigmaBlocks, l: usize, g: &RotationMatrix) -> Result<f64> {
    eval_cl(s, l, &g.to_euler())
}

/// Value, gradient and Hessian of `C_L` in the `(alpha, beta, gamma)` chart.
pub fn eval_cl_full(s: &SigmaBlocks, l: usize, e: &EulerZYZ) -> Result<CorrelationEval> {
    s.check_cutoff(l)?;
    let ds = little_d_all(l, e.beta())?;
    // accumulators: v, a, b, g, aa, bb, gg, ab, ag, bg
    let mut acc = [0.0f64; 10];
    for (deg, d) in ds.iter().enumerate() {
        let db = d_beta_block(d);
        let dbb = d_beta_block(&db);
        let pa = phases(deg, e.alpha());
        let pg = phases(deg, e.gamma());
        let sig = &s.blocks[deg];
        let n = 2 * deg + 1;
        let lf = deg as f64;
        for r in 0..n {
            let m = r as f64 - lf;
            for c in 0..n {
                let mp = c as f64 - lf;
                let p = sig[(r, c)] * pa[r] * pg[c];
                let (x0, x1, x2) = (d[(r, c)], db[(r, c)], dbb[(r, c)]);
                // Re(p * x), Re(-i k p * x) = k Im(p) x, Re(-k^2 p x)
                acc[0] += p.re * x0;
                acc[1] += m * p.im * x0;
                acc[2] += p.re * x1;
                acc[3] += mp * p.im * x0;
                acc[4] -= m * m * p.re * x0;
                acc[5] += p.re * x2;
                acc[6] -= mp * mp * p.re * x0;
                acc[7] += m * p.im * x1;
                acc[8] -= m * mp * p.re * x0;
                acc[9] += mp * p.im * x1;
            }
        }
    }
    let gradient = Vector3::new(acc[1], acc[2], acc[3]);
    let hessian = Matrix3::new(
        acc[4], acc[7], acc[8], //
        acc[7], acc[5], acc[9], //
        acc[8], acc[9], acc[6],
    );
    Ok(CorrelationEval {
        value: acc[0],
        gradient,
        hessian,
    })
}

/// `M G` for a generator `G` with nonzeros only on the three central diagonals.
fn mul_tridiag(m: &DMatrix<Complex64>, g: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for c in 0..n {
        let lo = c.saturating_sub(1);
        let hi = (c + 1).min(n - 1);
        for k in lo..=hi {
            let gk = g[(k, c)];
            if gk.re == 0.0 && gk.im == 0.0 {
                continue;
            }
            for r in 0..n {
                out[(r, c)] += m[(r, k)] * gk;
            }
        }
    }
    out
}

fn contract(s: &DMatrix<Complex64>, m: &DMatrix<Complex64>) -> f64 {
    s.iter().zip(m.iter()).map(|(a, b)| (a * b).re).sum()
}

/// Value, gradient and Hessian with respect to the left-invariant frame:
/// `X_i F(g) = d/dt F(g exp(t E_i))`, Hessian symmetrized. Well defined at
/// every rotation including the gimbal set.
pub fn eval_cl_intrinsic(s: &SigmaBlocks, l: usize, e: &EulerZYZ) -> Result<CorrelationEval> {
    let jets = intrinsic_jets(s, l, e)?;
    let mut out = CorrelationEval {
        value: 0.0,
        gradient: Vector3::zeros(),
        hessian: Matrix3::zeros(),
    };
    for j in &jets {
        out.value += j.value;
        out.gradient += j.gradient;
        out.hessian += j.hessian;
    }
    Ok(out)
}

/// Per-degree contributions to [`eval_cl_intrinsic`], so that band
/// differences `C_b - C_a` are partial sums.
pub fn intrinsic_jets(s: &SigmaBlocks, l: usize, e: &EulerZYZ) -> Result<Vec<CorrelationEval>> {
    s.check_cutoff(l)?;
    let ds = wigner_d_all(l, e)?;
    let mut out = Vec::with_capacity(l + 1);
    for (deg, d) in ds.iter().enumerate() {
        let sig = &s.blocks[deg];
        let mut jet = CorrelationEval {
            value: contract(sig, d),
            gradient: Vector3::zeros(),
            hessian: Matrix3::zeros(),
        };
        if deg > 0 {
            let gens = lie_generators(deg);
            let dg: Vec<DMatrix<Complex64>> = gens.iter().map(|g| mul_tridiag(d, g)).collect();
            for i in 0..3 {
                jet.gradient[i] = contract(sig, &dg[i]);
                for j in 0..3 {
                    jet.hessian[(i, j)] = contract(sig, &mul_tridiag(&dg[i], &gens[j]));
                }
            }
            // symmetrized: (X_i X_j + X_j X_i) / 2
            jet.hessian = 0.5 * (jet.hessian + jet.hessian.transpose());
        }
        out.push(jet);
    }
    Ok(out)
}

/// Smallest `k` with `s_{k+1}/s_k < rho`; the full dimension when no such
/// gap exists and 0 for a zero block.
pub fn effective_rank(a: &DMatrix<Complex64>, rho: f64) -> usize {
    let sv = sorted_singular_values(a);
    if sv.is_empty() || sv[0] == 0.0 {
        return 0;
    }
    for k in 1..sv.len() {
        if sv[k] / sv[k - 1] < rho {
            return k;
        }
    }
    sv.len()
}

/// Number of singular values above `rel_tol * s_1`.
pub fn numerical_rank(a: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    let sv = sorted_singular_values(a);
    match sv.first() {
        Some(&s1) if s1 > 0.0 => sv.iter().filter(|&&s| s > rel_tol * s1).count(),
        _ => 0,
    }
}

/// Singular values in descending order.
pub fn sorted_singular_values(a: &DMatrix<Complex64>) -> Vec<f64> {
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}
