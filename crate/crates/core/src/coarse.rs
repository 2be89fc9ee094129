//! Exhaustive evaluation of `C_L` on an equiangular SO(3) grid and
//! extraction of local maxima.
//!
//! For a fixed `beta` the correlation is a 2D trigonometric polynomial in
//! `(alpha, gamma)`:
//!
//! ```text
//! C(alpha, beta, gamma) = Re sum_{m m'} M_{m m'}(beta) exp(-i m alpha) exp(-i m' gamma),
//! M(beta) = sum_l sigma_l .* d^l(beta)
//! ```
//!
//! so each beta slice costs one 2D FFT. Frequencies are folded modulo the
//! grid size, which keeps the values exact even on grids coarser than the
//! bandwidth.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::correlation::SigmaBlocks;
use crate::error::{Error, Result};
use crate::so3::{geodesic_distance, EulerZYZ, RotationMatrix};
use crate::wigner::little_d_all;

/// Correlation values on the grid `alpha_a = 2 pi a / n_alpha`,
/// `beta_j = (j + 1/2) pi / n_beta`, `gamma_c = 2 pi c / n_gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct So3Grid {
    pub bandwidth: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub n_gamma: usize,
    /// Row-major `[beta][alpha][gamma]`.
    pub values: Vec<f64>,
}

impl So3Grid {
    #[inline]
    pub fn index(&self, j: usize, a: usize, c: usize) -> usize {
        (j * self.n_alpha + a) * self.n_gamma + c
    }

    /// Inverse of [`So3Grid::index`].
    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let c = idx % self.n_gamma;
        let rest = idx / self.n_gamma;
        (rest / self.n_alpha, rest % self.n_alpha, c)
    }

    #[inline]
    pub fn value(&self, j: usize, a: usize, c: usize) -> f64 {
        self.values[self.index(j, a, c)]
    }

    pub fn alpha(&self, a: usize) -> f64 {
        std::f64::consts::TAU * a as f64 / self.n_alpha as f64
    }

    pub fn beta(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * std::f64::consts::PI / self.n_beta as f64
    }

    pub fn gamma(&self, c: usize) -> f64 {
        std::f64::consts::TAU * c as f64 / self.n_gamma as f64
    }

    pub fn node(&self, j: usize, a: usize, c: usize) -> EulerZYZ {
        EulerZYZ::new(self.alpha(a), self.beta(j), self.gamma(c))
    }

    /// Spacing of the alpha axis in radians.
    pub fn alpha_spacing(&self) -> f64 {
        std::f64::consts::TAU / self.n_alpha as f64
    }

    /// Largest spacing over the three axes.
    pub fn max_spacing(&self) -> f64 {
        let b = std::f64::consts::PI / self.n_beta as f64;
        self.alpha_spacing().max(b).max(std::f64::consts::TAU / self.n_gamma as f64)
    }

    /// Flat index of the largest value (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Grid { beta: usize, alpha: usize, gamma: usize },
    Refined,
}

/// Score of a candidate after processing one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandScore {
    pub band: usize,
    pub score: f64,
}

/// A tracked local maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub rotation: EulerZYZ,
    pub score: f64,
    pub origin: Origin,
    pub history: Vec<BandScore>,
}

/// Grid of size `n_alpha = n_gamma = 2K(L0+1)`, `n_beta = K(L0+1)`.
pub fn grid_eval(s: &SigmaBlocks, l0: usize, k: usize) -> Result<So3Grid> {
    let base = k * (l0 + 1);
    if k == 0 || base < 4 {
        return Err(Error::InvalidSchedule(format!(
            "oversampled grid too small: K (L0 + 1) = {base} < 4"
        )));
    }
    grid_eval_dims(s, l0, 2 * base, base, 2 * base)
}

/// Grid evaluation with explicit dimensions.
pub fn grid_eval_dims(
    s: &SigmaBlocks,
    l: usize,
    n_alpha: usize,
    n_beta: usize,
    n_gamma: usize,
) -> Result<So3Grid> {
    s.check_cutoff(l)?;
    if n_alpha == 0 || n_beta == 0 || n_gamma == 0 {
        return Err(Error::Config("grid dimensions must be positive".into()));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fa = planner.plan_fft_forward(n_alpha);
    let fg = planner.plan_fft_forward(n_gamma);
    let mut grid = So3Grid {
        bandwidth: l,
        n_alpha,
        n_beta,
        n_gamma,
        values: Vec::new(),
    };
    let slices: Vec<Vec<f64>> = (0..n_beta)
        .into_par_iter()
        .map(|j| slice(s, l, grid.beta(j), n_alpha, n_gamma, &fa, &fg))
        .collect::<Result<_>>()?;
    grid.values = slices.concat();
    Ok(grid)
}

fn slice(
    s: &SigmaBlocks,
    l: usize,
    beta: f64,
    n_alpha: usize,
    n_gamma: usize,
    fa: &Arc<dyn Fft<f64>>,
    fg: &Arc<dyn Fft<f64>>,
) -> Result<Vec<f64>> {
    let ds = little_d_all(l, beta)?;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_alpha * n_gamma];
    for (deg, d) in ds.iter().enumerate() {
        let sig = s.block(deg);
        let li = deg as i64;
        for r in 0..2 * deg + 1 {
            let a = (r as i64 - li).rem_euclid(n_alpha as i64) as usize;
            for c in 0..2 * deg + 1 {
                let g = (c as i64 - li).rem_euclid(n_gamma as i64) as usize;
                buf[a * n_gamma + g] += sig[(r, c)] * d[(r, c)];
            }
        }
    }
    // rows (gamma) are contiguous
    fg.process(&mut buf);
    let mut col = vec![Complex64::new(0.0, 0.0); n_alpha];
    for g in 0..n_gamma {
        for a in 0..n_alpha {
            col[a] = buf[a * n_gamma + g];
        }
        fa.process(&mut col);
        for a in 0..n_alpha {
            buf[a * n_gamma + g] = col[a];
        }
    }
    Ok(buf.into_iter().map(|z| z.re).collect())
}

/// Strict local maxima over the 26-neighbourhood under the order
/// "larger value, then smaller flat index", merged greedily within
/// `merge_radius` (geodesic) and truncated to the `n_c` best.
pub fn find_local_maxima(g: &So3Grid, n_c: usize, merge_radius: f64) -> Vec<Candidate> {
    let mut peaks: Vec<usize> = (0..g.n_beta)
        .into_par_iter()
        .flat_map_iter(|j| {
            let mut out = Vec::new();
            for a in 0..g.n_alpha {
                for c in 0..g.n_gamma {
                    if is_peak(g, j, a, c) {
                        out.push(g.index(j, a, c));
                    }
                }
            }
            out
        })
        .collect();
    peaks.sort_by(|&x, &y| g.values[y].total_cmp(&g.values[x]).then(x.cmp(&y)));

    let mut kept: Vec<(Candidate, RotationMatrix)> = Vec::new();
    for idx in peaks {
        if kept.len() >= n_c {
            break;
        }
        let (j, a, c) = g.unravel(idx);
        let e = g.node(j, a, c);
        let m = e.to_matrix();
        if kept
            .iter()
            .any(|(_, km)| geodesic_distance(km, &m) <= merge_radius)
        {
            continue;
        }
        let score = g.values[idx];
        kept.push((
            Candidate {
                rotation: e,
                score,
                origin: Origin::Grid {
                    beta: j,
                    alpha: a,
                    gamma: c,
                },
                history: vec![BandScore {
                    band: g.bandwidth,
                    score,
                }],
            },
            m,
        ));
    }
    kept.into_iter().map(|(c, _)| c).collect()
}

/// Default merge radius: twice the alpha spacing.
pub fn default_merge_radius(g: &So3Grid) -> f64 {
    2.0 * g.alpha_spacing()
}

fn is_peak(g: &So3Grid, j: usize, a: usize, c: usize) -> bool {
    let me = g.index(j, a, c);
    let v = g.values[me];
    for dj in -1i64..=1 {
        let jj = j as i64 + dj;
        if jj < 0 || jj >= g.n_beta as i64 {
            continue;
        }
        for da in -1i64..=1 {
            let aa = (a as i64 + da).rem_euclid(g.n_alpha as i64) as usize;
            for dc in -1i64..=1 {
                let cc = (c as i64 + dc).rem_euclid(g.n_gamma as i64) as usize;
                let other = g.index(jj as usize, aa, cc);
                if other == me {
                    continue;
                }
                let w = g.values[other];
                if w > v || (w == v && other < me) {
                    return false;
                }
            }
        }
    }
    true
}
