//! Sampled estimates of the quantities that govern frequency marching:
//! set gaps, per-step perturbation norms, Bernstein ratios, effective
//! bandwidth, and a checker for the conditions of the convergence theorem.
//!
//! Every sup-norm here is a sampled lower estimate at a stated density,
//! refined by a short Newton polish where that is cheap. Nothing is a
//! certified bound.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::{find_local_maxima, grid_eval, grid_eval_dims, default_merge_radius, So3Grid};
use crate::correlation::{effective_rank, eval_cl, eval_cl_intrinsic, intrinsic_jets, CorrelationEval, SigmaBlocks};
use crate::error::{Error, Result};
use crate::refine::{Refiner, Schedule, Tolerances};
use crate::so3::{geodesic_distance, random_rotation, EulerZYZ, RotationMatrix};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;
/// A density is adequate when the sample spacing is below `r / ADEQUACY`.
pub const ADEQUACY: f64 = 4.0;
/// Newton steps used for polishing sampled maxima.
const POLISH_STEPS: usize = 30;
/// Local maxima of the global grid that get polished.
const POLISH_PEAKS: usize = 8;
/// Relative singular-value gap used for the reported effective ranks.
const RANK_RHO: f64 = 1e-3;

/// Common-radius closed geodesic balls with pairwise disjoint interiors.
#[derive(Debug, Clone, PartialEq)]
pub struct BallSet {
    centers: Vec<EulerZYZ>,
    matrices: Vec<RotationMatrix>,
    radius: f64,
}

impl BallSet {
    /// Rejects empty sets, non-positive radii and overlapping balls.
    pub fn new(centers: Vec<EulerZYZ>, radius: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Config("ball set is empty".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        let matrices: Vec<RotationMatrix> = centers.iter().map(|c| c.to_matrix()).collect();
        for i in 0..matrices.len() {
            for j in 0..i {
                let d = geodesic_distance(&matrices[i], &matrices[j]);
                if d <= 2.0 * radius {
                    return Err(Error::Config(format!(
                        "balls {j} and {i} overlap: center distance {d:.4} <= 2r = {:.4}",
                        2.0 * radius
                    )));
                }
            }
        }
        Ok(Self {
            centers,
            matrices,
            radius,
        })
    }

    pub fn centers(&self) -> &[EulerZYZ] {
        &self.centers
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Index of the ball containing `g`, if any.
    pub fn locate(&self, g: &RotationMatrix) -> Option<usize> {
        self.matrices
            .iter()
            .position(|c| geodesic_distance(c, g) <= self.radius)
    }

    pub fn contains(&self, g: &RotationMatrix) -> bool {
        self.locate(g).is_some()
    }

    /// Whether the sampling density resolves balls of this radius.
    pub fn density_adequate(&self, density: f64) -> bool {
        density > 0.0 && 1.0 / density < self.radius / ADEQUACY
    }
}

/// Balls around the polished top coarse candidates of `C_{l0}`, radius twice
/// the grid spacing. Candidates whose ball would overlap a better one are
/// dropped.
pub fn auto_balls(s: &SigmaBlocks, l0: usize, k: usize, n_c: usize) -> Result<BallSet> {
    let grid = grid_eval(s, l0, k)?;
    let radius = 2.0 * grid.alpha_spacing();
    let cands = find_local_maxima(&grid, n_c.max(1), default_merge_radius(&grid));
    let refiner = Refiner::new(s);
    let tol = Tolerances::default();
    let mut polished: Vec<(EulerZYZ, f64)> = cands
        .par_iter()
        .map(|c| {
            let r = refiner.refine(l0, &c.rotation, POLISH_STEPS, &tol)?;
            Ok((r.theta, r.score))
        })
        .collect::<Result<_>>()?;
    polished.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut kept: Vec<(EulerZYZ, RotationMatrix)> = Vec::new();
    for (e, _) in polished {
        let m = e.to_matrix();
        if kept.iter().all(|(_, km)| geodesic_distance(km, &m) > 2.0 * radius) {
            kept.push((e, m));
        }
    }
    BallSet::new(kept.into_iter().map(|(e, _)| e).collect(), radius)
}

/// Lattice points of spacing `1/density` in exponential coordinates around
/// each center: `c exp(v)` with `|v| <= r`. Returns `(ball, rotation)`.
pub fn local_samples(balls: &BallSet, density: f64) -> Vec<(usize, RotationMatrix)> {
    let h = 1.0 / density.max(1e-12);
    // shrink slightly so boundary nodes survive the geodesic round trip
    let r = balls.radius * (1.0 - 1e-9);
    let m = (r / h).floor() as i64;
    let mut out = Vec::new();
    for (p, c) in balls.matrices.iter().enumerate() {
        for i in -m..=m {
            for j in -m..=m {
                for k in -m..=m {
                    let v = [i as f64 * h, j as f64 * h, k as f64 * h];
                    if (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() <= r {
                        out.push((p, c.compose(&RotationMatrix::from_rotation_vector(v))));
                    }
                }
            }
        }
    }
    out
}

/// Grid side lengths for a global scan at `density`, never coarser than
/// twofold oversampling of bandwidth `l`.
fn global_dims(l: usize, density: f64) -> (usize, usize) {
    let from_density = (std::f64::consts::TAU * density).ceil() as usize;
    let n = from_density.max(4 * (l + 1));
    let n = n + n % 2;
    (n, n / 2)
}

fn global_grid(s: &SigmaBlocks, l: usize, density: f64) -> Result<So3Grid> {
    let (n, nb) = global_dims(l, density);
    grid_eval_dims(s, l, n, nb, n)
}

/// Polishes `start` at band `l` and returns the polished point.
fn polish(refiner: &Refiner, l: usize, start: &EulerZYZ) -> Result<(EulerZYZ, f64)> {
    let r = refiner.refine(l, start, POLISH_STEPS, &Tolerances::default())?;
    Ok((r.theta, r.score))
}

/// Sampled set gap with the pieces it was built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub gamma: f64,
    pub inside_max: f64,
    pub outside_max: f64,
    pub density: f64,
    pub adequate: bool,
}

/// `max_S F - sup_{not S} F` for `F = C_l`: local lattice samples inside,
/// a global grid outside, both polished by Newton where the polished point
/// stays on its side.
pub fn set_gap(s: &SigmaBlocks, l: usize, balls: &BallSet, density: f64) -> Result<GapEstimate> {
    s.check_cutoff(l)?;
    let refiner = Refiner::new(s);
    let samples = local_samples(balls, density);
    let values: Vec<f64> = samples
        .par_iter()
        .map(|(_, g)| eval_cl(s, l, &g.to_euler()))
        .collect::<Result<_>>()?;
    let mut inside_max = f64::NEG_INFINITY;
    for p in 0..balls.len() {
        let best = samples
            .iter()
            .zip(&values)
            .filter(|((b, _), _)| *b == p)
            .max_by(|a, b| a.1.total_cmp(b.1));
        if let Some(((_, g), &v)) = best {
            inside_max = inside_max.max(v);
            let (e, pv) = polish(&refiner, l, &g.to_euler())?;
            if balls.contains(&e.to_matrix()) {
                inside_max = inside_max.max(pv);
            }
        }
    }

    let grid = global_grid(s, l, density)?;
    let outside_max = outside_max(l, &grid, balls, &refiner)?;
    Ok(GapEstimate {
        gamma: inside_max - outside_max,
        inside_max,
        outside_max,
        density,
        adequate: balls.density_adequate(density),
    })
}

fn outside_max(l: usize, grid: &So3Grid, balls: &BallSet, refiner: &Refiner) -> Result<f64> {
    let mut best = (0..grid.len())
        .into_par_iter()
        .filter_map(|i| {
            let (j, a, c) = grid.unravel(i);
            (!balls.contains(&grid.node(j, a, c).to_matrix())).then_some(grid.values[i])
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let peaks = find_local_maxima(grid, POLISH_PEAKS, default_merge_radius(grid));
    for c in peaks {
        if balls.contains(&c.rotation.to_matrix()) {
            continue;
        }
        let (e, v) = polish(refiner, l, &c.rotation)?;
        if !balls.contains(&e.to_matrix()) {
            best = best.max(v);
        }
    }
    Ok(best)
}

/// Sampled sup-norms of `E = C_next - C_prev`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepNorms {
    /// Gradient norm over S.
    pub a: f64,
    /// Hessian spectral norm over S.
    pub b: f64,
    /// Absolute value over the whole group.
    pub delta: f64,
}

fn spectral_norm(h: &Matrix3<f64>) -> f64 {
    let sym = 0.5 * (h + h.transpose());
    SymmetricEigen::new(sym).eigenvalues.amax()
}

fn lambda_max(h: &Matrix3<f64>) -> f64 {
    let sym = 0.5 * (h + h.transpose());
    SymmetricEigen::new(sym).eigenvalues.max()
}

/// Per-degree jets at every sample, up to degree `l`.
fn sample_jets(s: &SigmaBlocks, l: usize, samples: &[(usize, RotationMatrix)]) -> Result<Vec<Vec<CorrelationEval>>> {
    samples
        .par_iter()
        .map(|(_, g)| intrinsic_jets(s, l, &g.to_euler()))
        .collect()
}

/// Sum of jets over degrees in `(lo, hi]`, or `[0, hi]` for `lo = None`.
fn band_jet(jets: &[CorrelationEval], lo: Option<usize>, hi: usize) -> CorrelationEval {
    let start = lo.map_or(0, |x| x + 1);
    let mut out = CorrelationEval {
        value: 0.0,
        gradient: nalgebra::Vector3::zeros(),
        hessian: Matrix3::zeros(),
    };
    for j in jets.iter().take(hi + 1).skip(start) {
        out.value += j.value;
        out.gradient += j.gradient;
        out.hessian += j.hessian;
    }
    out
}

fn global_abs_max(s: &SigmaBlocks, l: usize, density: f64) -> Result<f64> {
    let grid = global_grid(s, l, density)?;
    let mut best = grid.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // polish the largest peaks of F and of -F
    let neg = s.scaled(-1.0);
    let mut flipped = grid.clone();
    flipped.values.iter_mut().for_each(|v| *v = -*v);
    for (sig, g) in [(s, &grid), (&neg, &flipped)] {
        let refiner = Refiner::new(sig);
        for cand in find_local_maxima(g, POLISH_PEAKS, default_merge_radius(g)) {
            best = best.max(polish(&refiner, l, &cand.rotation)?.1);
        }
    }
    Ok(best)
}

/// Sampled `(a, b, delta)` for the step `l_prev -> l_next`.
pub fn step_norms(s: &SigmaBlocks, l_prev: usize, l_next: usize, balls: &BallSet, density: f64) -> Result<StepNorms> {
    if l_next < l_prev {
        return Err(Error::InvalidSchedule(format!("step {l_prev} -> {l_next} decreases")));
    }
    s.check_cutoff(l_next)?;
    if l_prev == l_next {
        return Ok(StepNorms { a: 0.0, b: 0.0, delta: 0.0 });
    }
    let samples = local_samples(balls, density);
    let jets = sample_jets(s, l_next, &samples)?;
    let band = s.band(Some(l_prev), l_next);
    step_from_jets(&jets, &band, l_prev, l_next, density)
}

fn step_from_jets(
    jets: &[Vec<CorrelationEval>],
    band: &SigmaBlocks,
    l_prev: usize,
    l_next: usize,
    density: f64,
) -> Result<StepNorms> {
    let mut out = StepNorms { a: 0.0, b: 0.0, delta: 0.0 };
    for j in jets {
        let e = band_jet(j, Some(l_prev), l_next);
        out.a = out.a.max(e.gradient.norm());
        out.b = out.b.max(spectral_norm(&e.hessian));
        out.delta = out.delta.max(e.value.abs());
    }
    out.delta = out.delta.max(global_abs_max(band, l_next, density)?);
    Ok(out)
}

/// `(sup |grad F| / ((1+L) sup|F|), sup |Hess F| / ((1+L)^2 sup|F|))` with
/// derivatives sampled at `samples` Haar points (fixed seed) and `|F|`
/// additionally scanned on a twofold oversampled grid.
pub fn bernstein_ratio(s: &SigmaBlocks, l: usize, samples: usize) -> Result<(f64, f64)> {
    s.check_cutoff(l)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b3a7);
    let points: Vec<EulerZYZ> = (0..samples).map(|_| random_rotation(&mut rng).to_euler()).collect();
    let evals: Vec<CorrelationEval> = points
        .par_iter()
        .map(|e| eval_cl_intrinsic(s, l, e))
        .collect::<Result<_>>()?;
    let mut sup_f = global_abs_max(s, l, 0.0)?;
    let (mut g1, mut g2) = (0.0f64, 0.0f64);
    for ev in &evals {
        sup_f = sup_f.max(ev.value.abs());
        g1 = g1.max(ev.gradient.norm());
        g2 = g2.max(spectral_norm(&ev.hessian));
    }
    if sup_f == 0.0 {
        return Ok((0.0, 0.0));
    }
    let lp = 1.0 + l as f64;
    Ok((g1 / (lp * sup_f), g2 / (lp * lp * sup_f)))
}

/// `sqrt(sum L_j^2 delta_j / sum delta_j)`.
pub fn effective_bandwidth(deltas: &[f64], bands: &[usize]) -> Result<f64> {
    if deltas.len() != bands.len() {
        return Err(Error::Config(format!(
            "{} deltas for {} bands",
            deltas.len(),
            bands.len()
        )));
    }
    if deltas.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::Config("step sizes must be non-negative".into()));
    }
    let total: f64 = deltas.iter().sum();
    if total == 0.0 {
        return Err(Error::AllZeroDeltas);
    }
    let num: f64 = deltas
        .iter()
        .zip(bands)
        .map(|(d, &l)| (l as f64) * (l as f64) * d)
        .sum();
    Ok((num / total).sqrt())
}

/// Geometric toy spectrum: `L_j = l0 + (j-1) step`, `delta_j = q^(j-1)` for
/// `j = 1..=count`.
pub fn toy_spectrum(l0: usize, step: usize, q: f64, count: usize) -> (Vec<f64>, Vec<usize>) {
    let deltas = (0..count).map(|j| q.powi(j as i32)).collect();
    let bands = (0..count).map(|j| l0 + j * step).collect();
    (deltas, bands)
}

/// Infinite-schedule limit of the squared effective bandwidth of
/// [`toy_spectrum`].
pub fn toy_lbar2_squared(l0: f64, step: f64, q: f64) -> f64 {
    let p = 1.0 - q;
    l0 * l0 + 2.0 * l0 * step * q / p + step * step * q * (1.0 + q) / (p * p)
}

/// Outcome of a condition check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Holds,
    Fails,
    /// The sample density is too low to decide.
    Inconclusive,
}

impl Flag {
    fn from_bool(ok: bool, adequate: bool) -> Self {
        match (adequate, ok) {
            (false, _) => Flag::Inconclusive,
            (true, true) => Flag::Holds,
            (true, false) => Flag::Fails,
        }
    }

    fn and(self, other: Flag) -> Flag {
        match (self, other) {
            (Flag::Fails, _) | (_, Flag::Fails) => Flag::Fails,
            (Flag::Inconclusive, _) | (_, Flag::Inconclusive) => Flag::Inconclusive,
            _ => Flag::Holds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEstimate {
    pub from: usize,
    pub to: usize,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    /// `a_j < mu r / 8`.
    pub gradient_flag: Flag,
}

/// The same estimates for a single jump `L_0 -> L_J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneShot {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    /// `b <= mu / 2`.
    pub curvature_flag: Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionFlags {
    /// `mu > 0`: the coarse landscape is strongly concave on every ball.
    pub concavity: Flag,
    /// `sum b_j <= mu / 2`.
    pub curvature_budget: Flag,
    /// `a_j < mu r / 8` for every step.
    pub gradients: Flag,
    /// `sum 2 a_j / mu <= r / 2`.
    pub drift: Flag,
    /// Conjunction of the four above.
    pub b: Flag,
    /// `2 sum delta_j < Gamma`.
    pub c: Flag,
    /// `M_J tau^2 / 2 <= gamma / 4`, vacuous for one ball.
    pub f: Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub density: f64,
    pub density_adequate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub radius: f64,
    /// Ball centers as ZYZ angles in degrees.
    pub centers_deg: Vec<[f64; 3]>,
    pub bands: Vec<usize>,
    pub tau: f64,
    pub local_samples: usize,
    pub gamma_set: f64,
    pub mu_hat: f64,
    #[serde(rename = "M_J_hat")]
    pub m_j_hat: f64,
    pub steps: Vec<StepEstimate>,
    pub sum_b: f64,
    pub sum_delta: f64,
    /// `sum 2 a_j / mu`.
    pub drift: f64,
    /// `r / 2`.
    pub drift_limit: f64,
    #[serde(rename = "L_bar2")]
    pub l_bar2: Option<f64>,
    /// Largest `a_j / ((1 + L_j) delta_j)` over the steps.
    pub bernstein_b1: Option<f64>,
    /// Largest `b_j / ((1 + L_j)^2 delta_j)` over the steps.
    pub bernstein_b2: Option<f64>,
    /// `B2 sum (1 + L_j)^2 delta_j`.
    pub predicted_b_marching: Option<f64>,
    /// `B2 (1 + L_J)^2 delta_tot`.
    pub predicted_b_one_shot: Option<f64>,
    pub one_shot: OneShot,
    /// `C_{L_J}` at the end of each ball's marched path.
    pub basin_values: Vec<f64>,
    pub basin_maxima_deg: Vec<[f64; 3]>,
    pub gamma_hat: Option<f64>,
    pub winner: usize,
    /// "certified" when (F) holds, "inconclusive selection" otherwise.
    pub selection: String,
    /// Effective rank of each sigma block at the final band.
    pub effective_ranks: Vec<usize>,
    pub flags: ConditionFlags,
}

impl DiagnosticsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Estimates every quantity in the convergence theorem for `s` under
/// `sched` on the given balls, and flags each assumption.
pub fn check_theorem_conditions(
    s: &SigmaBlocks,
    sched: &Schedule,
    balls: &BallSet,
    density: f64,
    tau: f64,
) -> Result<DiagnosticsReport> {
    sched.validate()?;
    let bands = sched.usable_bands(s.l_max())?;
    let l0 = bands[0];
    let lj = *bands.last().expect("non-empty");
    let adequate = balls.density_adequate(density);
    let r = balls.radius();

    let samples = local_samples(balls, density);
    let jets = sample_jets(s, lj, &samples)?;

    let mut mu = f64::INFINITY;
    let mut m_j = 0.0f64;
    for j in &jets {
        let f0 = band_jet(j, None, l0);
        mu = mu.min(-lambda_max(&f0.hessian));
        let fj = band_jet(j, None, lj);
        m_j = m_j.max(spectral_norm(&fj.hessian));
    }

    let mut steps = Vec::new();
    for w in bands.windows(2) {
        let (lp, ln) = (w[0], w[1]);
        let n = step_from_jets(&jets, &s.band(Some(lp), ln), lp, ln, density)?;
        steps.push((lp, ln, n));
    }
    let one = if lj > l0 {
        step_from_jets(&jets, &s.band(Some(l0), lj), l0, lj, density)?
    } else {
        StepNorms { a: 0.0, b: 0.0, delta: 0.0 }
    };

    let gap = set_gap(s, l0, balls, density)?;

    let concave = mu > 0.0;
    let sum_b: f64 = steps.iter().map(|x| x.2.b).sum();
    let sum_delta: f64 = steps.iter().map(|x| x.2.delta).sum();
    let drift = if concave {
        steps.iter().map(|x| 2.0 * x.2.a / mu).sum()
    } else {
        f64::INFINITY
    };
    let step_estimates: Vec<StepEstimate> = steps
        .iter()
        .map(|&(from, to, n)| StepEstimate {
            from,
            to,
            a: n.a,
            b: n.b,
            delta: n.delta,
            gradient_flag: Flag::from_bool(concave && n.a < mu * r / 8.0, adequate),
        })
        .collect();

    let concavity = Flag::from_bool(concave, adequate);
    let curvature_budget = Flag::from_bool(concave && sum_b <= mu / 2.0, adequate);
    let gradients = step_estimates
        .iter()
        .fold(Flag::from_bool(concave, adequate), |f, s| f.and(s.gradient_flag));
    let drift_flag = Flag::from_bool(drift <= r / 2.0, adequate);
    let b_flag = concavity.and(curvature_budget).and(gradients).and(drift_flag);
    let c_flag = Flag::from_bool(2.0 * sum_delta < gap.gamma, adequate);

    // march every ball center through the schedule
    let refiner = Refiner::new(s);
    let tol = Tolerances::default();
    let basins: Vec<(EulerZYZ, f64)> = balls
        .centers()
        .par_iter()
        .map(|c| {
            let mut theta = *c;
            let mut score = eval_cl(s, l0, &theta)?;
            for &l in &bands {
                let r = refiner.refine(l, &theta, POLISH_STEPS, &tol)?;
                theta = r.theta;
                score = r.score;
            }
            Ok((theta, score))
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..basins.len()).collect();
    order.sort_by(|&x, &y| basins[y].1.total_cmp(&basins[x].1).then(x.cmp(&y)));
    let winner = order[0];
    let gamma_hat = (order.len() > 1).then(|| basins[order[0]].1 - basins[order[1]].1);
    let f_ok = match gamma_hat {
        Some(g) => m_j * tau * tau / 2.0 <= g / 4.0,
        None => true,
    };
    let f_flag = Flag::from_bool(f_ok, adequate);

    let mut b1: Option<f64> = None;
    let mut b2: Option<f64> = None;
    for &(_, to, n) in &steps {
        if n.delta > 0.0 {
            let lp = 1.0 + to as f64;
            b1 = Some(b1.unwrap_or(0.0).max(n.a / (lp * n.delta)));
            b2 = Some(b2.unwrap_or(0.0).max(n.b / (lp * lp * n.delta)));
        }
    }
    let predicted_b_marching = b2.map(|c| {
        c * steps
            .iter()
            .map(|&(_, to, n)| (1.0 + to as f64).powi(2) * n.delta)
            .sum::<f64>()
    });
    let predicted_b_one_shot = b2.map(|c| c * (1.0 + lj as f64).powi(2) * sum_delta);
    let deltas: Vec<f64> = steps.iter().map(|x| x.2.delta).collect();
    let step_bands: Vec<usize> = steps.iter().map(|x| x.1).collect();
    let l_bar2 = effective_bandwidth(&deltas, &step_bands).ok();

    let warning = (!adequate).then(|| {
        format!(
            "density {density} per radian leaves spacing {:.4} >= r/{ADEQUACY} = {:.4}; flags are inconclusive",
            1.0 / density,
            r / ADEQUACY
        )
    });
    let selection = if f_flag == Flag::Holds {
        "certified"
    } else {
        "inconclusive selection"
    };

    Ok(DiagnosticsReport {
        schema_version: SCHEMA_VERSION,
        density,
        density_adequate: adequate,
        warning,
        radius: r,
        centers_deg: balls.centers().iter().map(|c| c.to_degrees()).collect(),
        bands: bands.clone(),
        tau,
        local_samples: samples.len(),
        gamma_set: gap.gamma,
        mu_hat: mu,
        m_j_hat: m_j,
        steps: step_estimates,
        sum_b,
        sum_delta,
        drift,
        drift_limit: r / 2.0,
        l_bar2,
        bernstein_b1: b1,
        bernstein_b2: b2,
        predicted_b_marching,
        predicted_b_one_shot,
        one_shot: OneShot {
            a: one.a,
            b: one.b,
            delta: one.delta,
            curvature_flag: Flag::from_bool(concave && one.b <= mu / 2.0, adequate),
        },
        basin_values: basins.iter().map(|b| b.1).collect(),
        basin_maxima_deg: basins.iter().map(|b| b.0.to_degrees()).collect(),
        gamma_hat,
        winner,
        selection: selection.into(),
        effective_ranks: (0..=lj).map(|l| effective_rank(s.block(l), RANK_RHO)).collect(),
        flags: ConditionFlags {
            concavity,
            curvature_budget,
            gradients,
            drift: drift_flag,
            b: b_flag,
            c: c_flag,
            f: f_flag,
        },
    })
}

/// Sampled global maximizer of `C_l`: grid scan at `density` plus Newton
/// polish of the best local maxima.
pub fn global_max(s: &SigmaBlocks, l: usize, density: f64) -> Result<(EulerZYZ, f64)> {
    let grid = global_grid(s, l, density)?;
    let refiner = Refiner::new(s);
    let idx = grid.argmax();
    let (j, a, c) = grid.unravel(idx);
    let mut best = (grid.node(j, a, c), grid.values[idx]);
    for cand in find_local_maxima(&grid, POLISH_PEAKS, default_merge_radius(&grid)) {
        let (e, v) = polish(&refiner, l, &cand.rotation)?;
        if v > best.1 {
            best = (e, v);
        }
    }
    Ok(best)
}

/// Sampled global sup of `|C_l|`.
pub fn sup_norm(s: &SigmaBlocks, l: usize, density: f64) -> Result<f64> {
    global_abs_max(s, l, density)
}

/// Result of testing the quadratic sandwich around a maximizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedCheck {
    pub mu: f64,
    pub m: f64,
    pub samples: usize,
    pub violations: usize,
}

/// Checks `F(g0) - M d^2 / 2 <= F(g) <= F(g0) - mu d^2 / 2` on the lattice
/// around `g0`, with `mu` and `M` estimated on the same samples and a
/// relative slack of `slack` on the quadratic terms.
pub fn two_sided_bounds(
    s: &SigmaBlocks,
    l: usize,
    g0: &EulerZYZ,
    radius: f64,
    density: f64,
    slack: f64,
) -> Result<TwoSidedCheck> {
    let ball = BallSet::new(vec![*g0], radius)?;
    let samples = local_samples(&ball, density);
    let evals: Vec<CorrelationEval> = samples
        .par_iter()
        .map(|(_, g)| eval_cl_intrinsic(s, l, &g.to_euler()))
        .collect::<Result<_>>()?;
    let mut mu = f64::INFINITY;
    let mut m = 0.0f64;
    for ev in &evals {
        mu = mu.min(-lambda_max(&ev.hessian));
        m = m.max(spectral_norm(&ev.hessian));
    }
    let f0 = eval_cl(s, l, g0)?;
    let c0 = g0.to_matrix();
    let mut violations = 0;
    for ((_, g), ev) in samples.iter().zip(&evals) {
        let d2 = geodesic_distance(&c0, g).powi(2);
        let lower = f0 - (1.0 + slack) * m * d2 / 2.0;
        let upper = f0 - (1.0 - slack) * mu * d2 / 2.0;
        let tiny = 1e-12 * f0.abs();
        if ev.value < lower - tiny || ev.value > upper + tiny {
            violations += 1;
        }
    }
    Ok(TwoSidedCheck {
        mu,
        m,
        samples: samples.len(),
        violations,
    })
}

/// Displacement of a maximizer under a perturbation versus its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinCheck {
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub displacement: f64,
    /// `a / (mu - b)`, infinite when `b >= mu`.
    pub bound: f64,
}

/// Maximizers of `F` and `F + E` near `g0` (both polished from `g0`),
/// compared with the persistence bound `a / (mu - b)` where `mu`, `a`, `b`
/// are sampled on the ball of radius `radius` around `g0`.
pub fn basin_persistence(
    f: &SigmaBlocks,
    e: &SigmaBlocks,
    l: usize,
    g0: &EulerZYZ,
    radius: f64,
    density: f64,
) -> Result<BasinCheck> {
    let ball = BallSet::new(vec![*g0], radius)?;
    let samples = local_samples(&ball, density);
    let pairs: Vec<(CorrelationEval, CorrelationEval)> = samples
        .par_iter()
        .map(|(_, g)| {
            let eu = g.to_euler();
            Ok((eval_cl_intrinsic(f, l, &eu)?, eval_cl_intrinsic(e, l, &eu)?))
        })
        .collect::<Result<_>>()?;
    let mut mu = f64::INFINITY;
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for (fe, ee) in &pairs {
        mu = mu.min(-lambda_max(&fe.hessian));
        a = a.max(ee.gradient.norm());
        b = b.max(spectral_norm(&ee.hessian));
    }
    let (gf, _) = polish(&Refiner::new(f), l, g0)?;
    let sum = f.add(e);
    let (gp, _) = polish(&Refiner::new(&sum), l, &gf)?;
    let bound = if mu > b { a / (mu - b) } else { f64::INFINITY };
    Ok(BasinCheck {
        mu,
        a,
        b,
        displacement: geodesic_distance(&gf.to_matrix(), &gp.to_matrix()),
        bound,
    })
}
