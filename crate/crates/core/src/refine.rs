//! Safeguarded Newton refinement in the Euler chart and the multi-band
//! marching driver.

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ball::BallCoefficients;
use crate::coarse::{default_merge_radius, find_local_maxima, grid_eval, BandScore, Candidate, Origin};
use crate::correlation::{compute_sigma, eval_cl, eval_cl_full, SigmaBlocks};
use crate::error::{Error, Result};
use crate::so3::{EulerZYZ, RotationMatrix};

/// Iterates with `beta` closer than this to a pole are refined in a chart
/// rotated by 90 degrees about y.
pub const GIMBAL_THRESHOLD: f64 = 0.2;
/// Largest number of step halvings in the backtracking search.
pub const MAX_HALVINGS: usize = 5;
/// Relative eigenvalue shift used when the Hessian is not negative definite.
pub const REG_EPS: f64 = 1e-6;
/// Increments below this many radians are accepted without comparing
/// objective values, which only differ by round-off at that scale.
const NEGLIGIBLE_STEP: f64 = 1e-13;

/// Early-termination thresholds of the Newton loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Gradient norm relative to `|value|`.
    pub tol_grad: f64,
    /// Step length in radians (Euler coordinates).
    pub tol_step: f64,
    /// Objective change relative to `|value|`.
    pub tol_obj: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_grad: 1e-8,
            tol_step: 1e-10,
            tol_obj: 1e-12,
        }
    }
}

/// Bandwidth ladder and search budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub bands: Vec<usize>,
    pub m_iter: usize,
    pub n_c: usize,
    pub k: usize,
    #[serde(flatten)]
    pub tol: Tolerances,
    /// Requested final accuracy in radians.
    pub tau_target: f64,
    /// Candidate merge radius in radians; twice the alpha spacing when unset.
    #[serde(default)]
    pub merge_radius: Option<f64>,
}

impl Schedule {
    pub fn new(bands: Vec<usize>, m_iter: usize, n_c: usize, k: usize) -> Result<Self> {
        let s = Self {
            bands,
            m_iter,
            n_c,
            k,
            tol: Tolerances::default(),
            tau_target: 1e-3f64.to_radians(),
            merge_radius: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// Desk-scale default: bands {8, 12, 16}, two Newton steps per band.
    pub fn quick() -> Self {
        Self::new(vec![8, 12, 16], 2, 10, 2).expect("valid preset")
    }

    /// The published operating point: bands {30, 40, 60, L_max}, one step per
    /// band. Bands above `l_max` are dropped when the schedule is run.
    pub fn paper(l_max: usize) -> Self {
        let mut bands = vec![30, 40, 60];
        if l_max > 60 {
            bands.push(l_max);
        }
        Self::new(bands, 1, 10, 2).expect("valid preset")
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::InvalidSchedule("no bands".into()));
        }
        if self.bands.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(format!(
                "bands must be strictly increasing: {:?}",
                self.bands
            )));
        }
        if self.m_iter == 0 {
            return Err(Error::InvalidSchedule("M_iter must be at least 1".into()));
        }
        if self.n_c == 0 {
            return Err(Error::InvalidSchedule("N_C must be at least 1".into()));
        }
        if self.k == 0 || self.k * (self.bands[0] + 1) < 4 {
            return Err(Error::InvalidSchedule(format!(
                "K (L0 + 1) must be at least 4 (K = {}, L0 = {})",
                self.k, self.bands[0]
            )));
        }
        for (name, v) in [
            ("tol_grad", self.tol.tol_grad),
            ("tol_step", self.tol.tol_step),
            ("tol_obj", self.tol.tol_obj),
            ("tau_target", self.tau_target),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidSchedule(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Bands not exceeding `available`; errors when none remain.
    pub fn usable_bands(&self, available: usize) -> Result<Vec<usize>> {
        let b: Vec<usize> = self.bands.iter().copied().filter(|&l| l <= available).collect();
        if b.is_empty() {
            return Err(Error::CutoffExceedsBlocks {
                requested: self.bands[0],
                available,
            });
        }
        Ok(b)
    }
}

/// Outcome of one safeguarded Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStep {
    pub theta: EulerZYZ,
    pub accepted: bool,
    /// Objective at the returned point.
    pub value: f64,
    /// Objective at the start point.
    pub start_value: f64,
    pub gradient_norm: f64,
    /// Length of the accepted increment in Euler coordinates.
    pub step_norm: f64,
    pub regularized: bool,
}

/// Largest Euler-coordinate increment allowed at bandwidth `l`.
pub fn max_step(l: usize) -> f64 {
    std::f64::consts::PI / (l as f64 + 1.0)
}

/// `theta - H^{-1} grad` with eigenvalue-shift regularization, a length cap of
/// `pi / (L + 1)` and up to five halvings until the objective does not
/// decrease. Works in the plain Euler chart; see [`Refiner`] for the
/// gimbal-safe variant.
pub fn newton_step(s: &SigmaBlocks, l: usize, theta: &EulerZYZ) -> Result<NewtonStep> {
    let ev = eval_cl_full(s, l, theta)?;
    let gn = ev.gradient.norm();
    let mut out = NewtonStep {
        theta: *theta,
        accepted: true,
        value: ev.value,
        start_value: ev.value,
        gradient_norm: gn,
        step_norm: 0.0,
        regularized: false,
    };
    if gn == 0.0 {
        return Ok(out);
    }
    let (dir, regularized) = ascent_direction(&ev.hessian, &ev.gradient);
    out.regularized = regularized;
    let mut p = dir;
    let cap = max_step(l);
    if p.norm() > cap {
        p *= cap / p.norm();
    }
    let base = theta.to_array();
    if p.norm() < NEGLIGIBLE_STEP {
        out.theta = EulerZYZ::new(base[0] + p[0], base[1] + p[1], base[2] + p[2]);
        out.value = eval_cl(s, l, &out.theta)?;
        out.step_norm = p.norm();
        return Ok(out);
    }
    let mut t = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let cand = EulerZYZ::new(base[0] + t * p[0], base[1] + t * p[1], base[2] + t * p[2]);
        let v = eval_cl(s, l, &cand)?;
        if v >= ev.value {
            out.theta = cand;
            out.value = v;
            out.step_norm = t * p.norm();
            return Ok(out);
        }
        t *= 0.5;
    }
    out.accepted = false;
    Ok(out)
}

/// Newton direction `-H^{-1} g`, with `H` shifted to be negative definite
/// when needed.
fn ascent_direction(h: &Matrix3<f64>, g: &Vector3<f64>) -> (Vector3<f64>, bool) {
    let sym = 0.5 * (h + h.transpose());
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.max();
    let eps = REG_EPS * sym.norm();
    let (hh, reg) = if lmax >= -eps || lmax.is_nan() {
        let shift = lmax.max(0.0) + eps.max(f64::MIN_POSITIVE);
        (sym - Matrix3::identity() * shift, true)
    } else {
        (sym, false)
    };
    match hh.try_inverse() {
        Some(inv) => (-(inv * g), reg),
        // only reachable for a zero Hessian with underflowing shift
        None => (*g, true),
    }
}

/// Result of refining one start point at one band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refined {
    pub theta: EulerZYZ,
    pub score: f64,
    pub steps: usize,
}

/// Newton refinement over fixed sigma blocks. Handles the gimbal set by
/// switching to a chart rotated by `Q = R_y(pi/2)`, with the translated
/// blocks built once on first use.
pub struct Refiner<'a> {
    sigma: &'a SigmaBlocks,
    anchored: OnceLock<Result<SigmaBlocks>>,
}

fn anchor() -> RotationMatrix {
    RotationMatrix::ry(std::f64::consts::FRAC_PI_2)
}

fn near_gimbal(e: &EulerZYZ) -> bool {
    e.beta() < GIMBAL_THRESHOLD || e.beta() > std::f64::consts::PI - GIMBAL_THRESHOLD
}

impl<'a> Refiner<'a> {
    pub fn new(sigma: &'a SigmaBlocks) -> Self {
        Self {
            sigma,
            anchored: OnceLock::new(),
        }
    }

    pub fn sigma(&self) -> &SigmaBlocks {
        self.sigma
    }

    fn anchored(&self) -> Result<&SigmaBlocks> {
        self.anchored
            .get_or_init(|| self.sigma.right_translate(&anchor()))
            .as_ref()
            .map_err(|e| Error::NonFinite(format!("anchored blocks: {e}")))
    }

    /// One Newton step, re-anchored near the poles.
    pub fn step(&self, l: usize, theta: &EulerZYZ) -> Result<NewtonStep> {
        if !near_gimbal(theta) {
            return newton_step(self.sigma, l, theta);
        }
        // C(g) = C'(g Q^{-1}) with C' built from sigma D(Q)^T
        let q = anchor();
        let h = theta.to_matrix().compose(&q.inverse()).to_euler();
        let mut st = newton_step(self.anchored()?, l, &h)?;
        st.theta = st.theta.to_matrix().compose(&q).to_euler();
        Ok(st)
    }

    /// At most `m_iter` accepted steps with early termination.
    pub fn refine(&self, l: usize, theta0: &EulerZYZ, m_iter: usize, tol: &Tolerances) -> Result<Refined> {
        let mut theta = *theta0;
        let mut score = eval_cl(self.sigma, l, &theta)?;
        let mut steps = 0;
        while steps < m_iter {
            let st = self.step(l, &theta)?;
            if !st.accepted {
                break;
            }
            steps += 1;
            let scale = st.start_value.abs().max(f64::MIN_POSITIVE);
            let small_grad = st.gradient_norm <= tol.tol_grad * scale;
            let gain = (st.value - st.start_value).abs() / scale;
            theta = st.theta;
            score = st.value;
            if small_grad || st.step_norm <= tol.tol_step || gain <= tol.tol_obj {
                break;
            }
        }
        if !score.is_finite() {
            return Err(Error::NonFinite(format!("objective at band {l}")));
        }
        Ok(Refined { theta, score, steps })
    }
}

/// Refines a candidate at band `l`, appending to its history.
pub fn refine_candidate(
    s: &SigmaBlocks,
    l: usize,
    cand: &Candidate,
    m_iter: usize,
    tol: &Tolerances,
) -> Result<Candidate> {
    let r = Refiner::new(s).refine(l, &cand.rotation, m_iter, tol)?;
    let mut out = cand.clone();
    out.rotation = r.theta;
    out.score = r.score;
    out.origin = Origin::Refined;
    out.history.push(BandScore { band: l, score: r.score });
    Ok(out)
}

/// Newton step counts of every candidate at one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSteps {
    pub band: usize,
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub rotation: EulerZYZ,
    pub score: f64,
    pub candidates: Vec<Candidate>,
    pub per_band_steps: Vec<BandSteps>,
    /// Bands actually used, after dropping those above the available degree.
    pub bands: Vec<usize>,
    pub wall_time: f64,
}

/// Coarse search at the first band, then Newton refinement of every
/// candidate at each following band, returning the best final candidate.
pub fn matcha(fc: &BallCoefficients, hc: &BallCoefficients, sched: &Schedule) -> Result<AlignmentResult> {
    sched.validate()?;
    fc.check_same_truncation(hc)?;
    let bands = sched.usable_bands(fc.truncation().l_max())?;
    let sigma = compute_sigma(fc, hc, *bands.last().expect("non-empty"))?;
    matcha_sigma(&sigma, sched)
}

/// [`matcha`] on precomputed sigma blocks.
pub fn matcha_sigma(sigma: &SigmaBlocks, sched: &Schedule) -> Result<AlignmentResult> {
    let start = Instant::now();
    sched.validate()?;
    let bands = sched.usable_bands(sigma.l_max())?;
    let l0 = bands[0];
    let grid = grid_eval(sigma, l0, sched.k)?;
    let radius = sched.merge_radius.unwrap_or_else(|| default_merge_radius(&grid));
    let mut cands = find_local_maxima(&grid, sched.n_c, radius);
    let refiner = Refiner::new(sigma);
    let mut per_band_steps = Vec::new();

    // a single band still gets its Newton polish
    let ladder: Vec<usize> = if bands.len() == 1 { vec![l0] } else { bands[1..].to_vec() };
    for &l in &ladder {
        let out: Vec<(Candidate, usize)> = cands
            .par_iter()
            .map(|c| {
                let r = refiner.refine(l, &c.rotation, sched.m_iter, &sched.tol)?;
                let mut c = c.clone();
                c.rotation = r.theta;
                c.score = r.score;
                c.origin = Origin::Refined;
                c.history.push(BandScore { band: l, score: r.score });
                Ok((c, r.steps))
            })
            .collect::<Result<_>>()?;
        per_band_steps.push(BandSteps {
            band: l,
            steps: out.iter().map(|(_, s)| *s).collect(),
        });
        cands = out.into_iter().map(|(c, _)| c).collect();
    }

    let best = argmax(&cands);
    Ok(AlignmentResult {
        rotation: cands[best].rotation,
        score: cands[best].score,
        candidates: cands,
        per_band_steps,
        bands,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn argmax(c: &[Candidate]) -> usize {
    let mut best = 0;
    for (i, x) in c.iter().enumerate() {
        if x.score > c[best].score {
            best = i;
        }
    }
    best
}

/// Pure grid search: argmax of the oversampled grid at band `l`.
pub fn grid_search(sigma: &SigmaBlocks, l: usize, k: usize) -> Result<(EulerZYZ, f64)> {
    let g = grid_eval(sigma, l, k)?;
    let idx = g.argmax();
    let (j, a, c) = g.unravel(idx);
    Ok((g.node(j, a, c), g.values[idx]))
}

/// Fixed-step gradient ascent in the Euler chart; returns every iterate
/// including the start.
pub fn gradient_ascent(s: &SigmaBlocks, l: usize, theta0: &EulerZYZ, step: f64, iters: usize) -> Result<Vec<EulerZYZ>> {
    let mut path = vec![*theta0];
    let mut theta = *theta0;
    for _ in 0..iters {
        let ev = eval_cl_full(s, l, &theta)?;
        let g = ev.gradient * step;
        theta = theta.offset([g[0], g[1], g[2]]);
        path.push(theta);
    }
    Ok(path)
}
