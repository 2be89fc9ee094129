//! FFT translation search, subpixel refinement, Fourier shifts and the
//! alternating rotation/translation loop.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::ball::{forward_transform, BallCoefficients, TruncationIndex};
use crate::correlation::{compute_sigma, eval_cl};
use crate::error::{Error, Result};
use crate::refine::{matcha, AlignmentResult, Schedule};
use crate::so3::EulerZYZ;
use crate::synth::rotate_volume;
use crate::volume::Volume;

/// A translation in voxels along `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Shift3 {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Shift3 {
    pub fn new(tx: f64, ty: f64, tz: f64) -> Self {
        Self { tx, ty, tz }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.tx, self.ty, self.tz]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn norm(&self) -> f64 {
        (self.tx * self.tx + self.ty * self.ty + self.tz * self.tz).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.tx == 0.0 && self.ty == 0.0 && self.tz == 0.0
    }
}

/// Subpixel refinement of the integer correlation peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subpixel {
    None,
    /// Quadratic fit to the 27 correlation values around the integer peak.
    #[default]
    Quadratic,
    /// Independent three-point parabola per axis.
    Separable,
    /// Correlation evaluated on a finer lattice around the peak by direct
    /// DFT sums; the factor is the number of subdivisions per voxel.
    Upsampled(usize),
}

/// In-place 3D DFT of an `n^3` z-fastest array. Unnormalized in both
/// directions.
pub fn fft3(data: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    // z lines are contiguous
    data.par_chunks_mut(n).for_each(|line| fft.process(line));
    // y lines: stride n within each x slab
    data.par_chunks_mut(n * n).for_each(|slab| {
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for iz in 0..n {
            for iy in 0..n {
                line[iy] = slab[iy * n + iz];
            }
            fft.process(&mut line);
            for iy in 0..n {
                slab[iy * n + iz] = line[iy];
            }
        }
    });
    // x lines: stride n^2
    let nn = n * n;
    let cols: Vec<Vec<Complex64>> = (0..nn)
        .into_par_iter()
        .map(|yz| {
            let mut line: Vec<Complex64> = (0..n).map(|ix| data[ix * nn + yz]).collect();
            fft.process(&mut line);
            line
        })
        .collect();
    for (yz, line) in cols.into_iter().enumerate() {
        for (ix, v) in line.into_iter().enumerate() {
            data[ix * nn + yz] = v;
        }
    }
}

fn to_complex(v: &Volume) -> Vec<Complex64> {
    v.data().iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Signed frequency of DFT bin `k`.
#[inline]
fn freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Circular roll by integer offsets: `out[i] = v[i - t]`.
pub fn roll(v: &Volume, t: [i64; 3]) -> Volume {
    let n = v.n();
    let ni = n as i64;
    let mut out = vec![0.0; n * n * n];
    for ix in 0..n {
        let sx = (ix as i64 - t[0]).rem_euclid(ni) as usize;
        for iy in 0..n {
            let sy = (iy as i64 - t[1]).rem_euclid(ni) as usize;
            for iz in 0..n {
                let sz = (iz as i64 - t[2]).rem_euclid(ni) as usize;
                out[(ix * n + iy) * n + iz] = v.get(sx, sy, sz);
            }
        }
    }
    Volume::from_vec(n, out).expect("same grid")
}

/// `(S_t v)(x) = v(x - t)` with periodic boundary. Integer shifts are exact
/// rolls; otherwise a Fourier phase ramp is applied with the Nyquist bin
/// (even `n`) left unshifted, which keeps the map real, unitary and
/// inverted by `-t`.
pub fn apply_shift(v: &Volume, t: &Shift3) -> Volume {
    let a = t.to_array();
    if a.iter().all(|x| x.fract() == 0.0) {
        return roll(v, a.map(|x| x as i64));
    }
    let n = v.n();
    let mut buf = to_complex(v);
    fft3(&mut buf, n, false);
    let ramp = |k: usize, s: f64| -> Complex64 {
        if n % 2 == 0 && k == n / 2 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, -std::f64::consts::TAU * freq(k, n) * s / n as f64)
        }
    };
    let px: Vec<Complex64> = (0..n).map(|k| ramp(k, a[0])).collect();
    let py: Vec<Complex64> = (0..n).map(|k| ramp(k, a[1])).collect();
    let pz: Vec<Complex64> = (0..n).map(|k| ramp(k, a[2])).collect();
    for ix in 0..n {
        for iy in 0..n {
            let pxy = px[ix] * py[iy];
            for iz in 0..n {
                buf[(ix * n + iy) * n + iz] *= pxy * pz[iz];
            }
        }
    }
    fft3(&mut buf, n, true);
    let scale = 1.0 / (n * n * n) as f64;
    Volume::from_vec(n, buf.into_iter().map(|z| z.re * scale).collect()).expect("finite")
}

/// Circular cross-correlation spectrum `H conj(F)`.
fn cross_spectrum(f: &Volume, h: &Volume) -> Vec<Complex64> {
    let n = f.n();
    let mut ff = to_complex(f);
    let mut hh = to_complex(h);
    fft3(&mut ff, n, false);
    fft3(&mut hh, n, false);
    hh.iter().zip(&ff).map(|(a, b)| a * b.conj()).collect()
}

/// Shift `t` maximizing `sum_x h(x) f(x - t)` with each component in
/// `[-window, window]`, so `h = S_t f` yields `t`.
pub fn estimate_shift(f: &Volume, h: &Volume, window: usize, subpixel: Subpixel) -> Result<Shift3> {
    f.check_same_grid(h)?;
    let n = f.n();
    if window > n / 4 {
        return Err(Error::WindowTooLarge {
            window,
            limit: n / 4,
            n,
        });
    }
    let spec = cross_spectrum(f, h);
    let mut corr = spec.clone();
    fft3(&mut corr, n, true);
    let c = |t: [i64; 3]| -> f64 {
        let ni = n as i64;
        let i = t.map(|x| x.rem_euclid(ni) as usize);
        corr[(i[0] * n + i[1]) * n + i[2]].re
    };
    let w = window as i64;
    let mut best = [0i64; 3];
    let mut best_v = f64::NEG_INFINITY;
    for tx in -w..=w {
        for ty in -w..=w {
            for tz in -w..=w {
                let v = c([tx, ty, tz]);
                if v > best_v {
                    best_v = v;
                    best = [tx, ty, tz];
                }
            }
        }
    }
    let mut out = best.map(|x| x as f64);
    match subpixel {
        Subpixel::None => {}
        Subpixel::Quadratic | Subpixel::Separable => {
            // the peak of an anisotropic volume is a tilted ellipsoid, so
            // the default fit keeps the cross terms
            let at = |d: [i64; 3]| c([best[0] + d[0], best[1] + d[1], best[2] + d[2]]);
            let unit = |ax: usize, s: i64| {
                let mut d = [0i64; 3];
                d[ax] = s;
                d
            };
            let mut g = Vector3::zeros();
            let mut hess = Matrix3::zeros();
            for i in 0..3 {
                let (p, m) = (at(unit(i, 1)), at(unit(i, -1)));
                g[i] = 0.5 * (p - m);
                hess[(i, i)] = p - 2.0 * best_v + m;
                for j in (i + 1)..3 {
                    let corner = |si: i64, sj: i64| {
                        let mut d = [0i64; 3];
                        d[i] = si;
                        d[j] = sj;
                        at(d)
                    };
                    let v = 0.25 * (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1));
                    hess[(i, j)] = v;
                    hess[(j, i)] = v;
                }
            }
            let concave = hess.symmetric_eigenvalues().iter().all(|&l| l < 0.0);
            let joint = subpixel == Subpixel::Quadratic && concave;
            let step = hess.try_inverse().filter(|_| joint).map(|inv| -(inv * g));
            match step {
                Some(d) if d.iter().all(|x| x.abs() <= 1.0) => {
                    for ax in 0..3 {
                        out[ax] += d[ax].clamp(-0.5, 0.5);
                    }
                }
                _ => {
                    for ax in 0..3 {
                        let denom = hess[(ax, ax)];
                        if denom < 0.0 {
                            out[ax] += (-g[ax] / denom).clamp(-0.5, 0.5);
                        }
                    }
                }
            }
        }
        Subpixel::Upsampled(factor) => {
            out = upsampled_peak(&spec, n, best, factor.max(2));
        }
    }
    let wf = window as f64;
    Ok(Shift3::from_array(out.map(|x| x.clamp(-wf, wf))))
}

/// Maximizes the band-limited correlation on a lattice of spacing `1/factor`
/// covering one voxel around the integer peak, by separable DFT sums.
fn upsampled_peak(spec: &[Complex64], n: usize, peak: [i64; 3], factor: usize) -> [f64; 3] {
    let half = factor as i64;
    let offs: Vec<f64> = (-half..=half).map(|k| k as f64 / factor as f64).collect();
    let p = offs.len();
    let tau = std::f64::consts::TAU / n as f64;
    let kern = |ax: usize| -> Vec<Complex64> {
        // kern[j * n + k] = exp(+i 2 pi k_signed (peak + off_j) / n)
        let mut out = vec![Complex64::new(0.0, 0.0); p * n];
        for (j, o) in offs.iter().enumerate() {
            let t = peak[ax] as f64 + o;
            for k in 0..n {
                out[j * n + k] = Complex64::from_polar(1.0, tau * freq(k, n) * t);
            }
        }
        out
    };
    let (kx, ky, kz) = (kern(0), kern(1), kern(2));
    // contract z, then y, then x
    let mut s1 = vec![Complex64::new(0.0, 0.0); n * n * p];
    for ix in 0..n {
        for iy in 0..n {
            let row = &spec[(ix * n + iy) * n..(ix * n + iy + 1) * n];
            for j in 0..p {
                let kr = &kz[j * n..(j + 1) * n];
                s1[(ix * n + iy) * p + j] = row.iter().zip(kr).map(|(a, b)| a * b).sum();
            }
        }
    }
    let mut s2 = vec![Complex64::new(0.0, 0.0); n * p * p];
    for ix in 0..n {
        for jy in 0..p {
            for jz in 0..p {
                let mut acc = Complex64::new(0.0, 0.0);
                for iy in 0..n {
                    acc += s1[(ix * n + iy) * p + jz] * ky[jy * n + iy];
                }
                s2[(ix * p + jy) * p + jz] = acc;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, [0.0; 3]);
    for jx in 0..p {
        for jy in 0..p {
            for jz in 0..p {
                let mut acc = Complex64::new(0.0, 0.0);
                for ix in 0..n {
                    acc += s2[(ix * p + jy) * p + jz] * kx[jx * n + ix];
                }
                if acc.re > best.0 {
                    best = (
                        acc.re,
                        [
                            peak[0] as f64 + offs[jx],
                            peak[1] as f64 + offs[jy],
                            peak[2] as f64 + offs[jz],
                        ],
                    );
                }
            }
        }
    }
    best.1
}

/// Rotation and translation found by the alternating search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseResult {
    pub rotation: EulerZYZ,
    pub shift: Shift3,
    /// Joint score after each accepted alternation.
    pub scores: Vec<f64>,
    /// Last rotation search, for step counts and candidates.
    pub alignment: AlignmentResult,
}

/// Settings of [`alternate_align`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternateConfig {
    pub outer_iterations: usize,
    pub window: usize,
    pub subpixel: Subpixel,
}

/// Joint score `C_L(g)` of `f` against `S_t h`.
pub fn pose_score(
    fc: &BallCoefficients,
    h: &Volume,
    trunc: &Arc<TruncationIndex>,
    l: usize,
    g: &EulerZYZ,
    shift: &Shift3,
) -> Result<f64> {
    let hc = forward_transform(&apply_shift(h, shift), trunc)?;
    let s = compute_sigma(fc, &hc, l)?;
    eval_cl(&s, l, g)
}

/// Alternates rotation search on the shifted template with translation
/// search on the rotated template, starting from zero shift. Models
/// `f(x) = h(g^{-1} x - t)`. An alternation is kept only if the joint
/// score does not decrease; the loop stops early once the relative gain
/// falls below `sched.tol.tol_obj`.
/// Start from both volumes centered on their centroids. With
/// `f = g S_t h` the centroids satisfy `c_f = g (c_h + t)`, so centering
/// removes the translation and `t = g^{-1} c_f - c_h`. Returns the pose and
/// its joint score, or `None` when a centroid is undefined.
fn centroid_start(
    f: &Volume,
    h: &Volume,
    fc: &BallCoefficients,
    trunc: &Arc<TruncationIndex>,
    sched: &Schedule,
    l_top: usize,
) -> Result<Option<(EulerZYZ, Shift3, AlignmentResult, f64)>> {
    let (Some(cf), Some(ch)) = (f.center_of_mass(), h.center_of_mass()) else {
        return Ok(None);
    };
    let f0 = forward_transform(&apply_shift(f, &Shift3::from_array(cf.map(|x| -x))), trunc)?;
    let h0 = forward_transform(&apply_shift(h, &Shift3::from_array(ch.map(|x| -x))), trunc)?;
    let a0 = matcha(&f0, &h0, sched)?;
    let back = a0.rotation.to_matrix().inverse().apply(cf);
    let t0 = Shift3::new(back[0] - ch[0], back[1] - ch[1], back[2] - ch[2]);
    let v0 = pose_score(fc, h, trunc, l_top, &a0.rotation, &t0)?;
    Ok(Some((a0.rotation, t0, a0, v0)))
}

pub fn alternate_align(
    f: &Volume,
    h: &Volume,
    trunc: &Arc<TruncationIndex>,
    sched: &Schedule,
    cfg: &AlternateConfig,
) -> Result<PoseResult> {
    f.check_same_grid(h)?;
    if cfg.window > f.n() / 4 {
        return Err(Error::WindowTooLarge {
            window: cfg.window,
            limit: f.n() / 4,
            n: f.n(),
        });
    }
    let fc = forward_transform(f, trunc)?;
    let bands = sched.usable_bands(trunc.l_max())?;
    let l_top = *bands.last().expect("non-empty");

    let mut shift = Shift3::default();
    let hc = forward_transform(h, trunc)?;
    let mut alignment = matcha(&fc, &hc, sched)?;
    let mut rotation = alignment.rotation;
    let mut start = alignment.score;
    if cfg.outer_iterations > 0 {
        if let Some((g0, t0, a0, v0)) = centroid_start(f, h, &fc, trunc, sched, l_top)? {
            if v0 > start {
                rotation = g0;
                shift = t0;
                alignment = a0;
                start = v0;
            }
        }
    }
    let mut scores = vec![start];

    for _ in 0..cfg.outer_iterations {
        // translation given rotation: f ~ g S_t h = S_{g t} (g h)
        let hg = rotate_volume(h, &rotation);
        let t_rot = estimate_shift(&hg, f, cfg.window, cfg.subpixel)?;
        let g_inv = rotation.to_matrix().inverse();
        let new_shift = Shift3::from_array(g_inv.apply(t_rot.to_array()));
        // rotation given translation
        let new_hc = forward_transform(&apply_shift(h, &new_shift), trunc)?;
        let new_alignment = matcha(&fc, &new_hc, sched)?;
        let s = compute_sigma(&fc, &new_hc, l_top)?;
        // keep whichever rotation is better on the new template
        let (new_rot, new_score) = {
            let keep = eval_cl(&s, l_top, &rotation)?;
            if keep > new_alignment.score {
                (rotation, keep)
            } else {
                (new_alignment.rotation, new_alignment.score)
            }
        };
        let prev = *scores.last().expect("non-empty");
        if new_score < prev {
            break;
        }
        shift = new_shift;
        rotation = new_rot;
        alignment = new_alignment;
        scores.push(new_score);
        if (new_score - prev) <= sched.tol.tol_obj * prev.abs() {
            break;
        }
    }
    Ok(PoseResult {
        rotation,
        shift,
        scores,
        alignment,
    })
}
