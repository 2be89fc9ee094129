//! Synthetic test volumes: Gaussian-blob phantoms, volume rotation and
//! additive noise at an exact SNR.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::{random_rotation, EulerZYZ, RotationMatrix};
use crate::volume::Volume;

/// Radius below which the taper is exactly one.
pub const TAPER_INNER: f64 = 0.8;
/// Radius at and beyond which the phantom vanishes.
pub const TAPER_OUTER: f64 = 0.95;
/// Largest accepted correlation with a 90-degree rotated copy, relative to
/// the self-correlation.
pub const SYMMETRY_LIMIT: f64 = 0.9;

const MAX_REDRAWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 3],
    /// Rows are the principal axes.
    pub axes: [[f64; 3]; 3],
    pub widths: [f64; 3],
    pub amplitude: f64,
}

impl Blob {
    fn value(&self, x: [f64; 3]) -> f64 {
        let d = [x[0] - self.center[0], x[1] - self.center[1], x[2] - self.center[2]];
        let mut q = 0.0;
        for i in 0..3 {
            let a = self.axes[i];
            let u = a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
            q += u * u / (self.widths[i] * self.widths[i]);
        }
        self.amplitude * (-0.5 * q).exp()
    }
}

/// Blob parameter ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub center_radius: f64,
    pub width_range: [f64; 2],
    pub amplitude_range: [f64; 2],
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            center_radius: 0.6,
            width_range: [0.05, 0.2],
            amplitude_range: [0.5, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub seed: u64,
    pub blobs: Vec<Blob>,
    pub volume: Volume,
}

/// Smooth radial cutoff: 1 inside `TAPER_INNER`, 0 from `TAPER_OUTER` on.
pub fn taper(r: f64) -> f64 {
    if r <= TAPER_INNER {
        1.0
    } else if r >= TAPER_OUTER {
        0.0
    } else {
        let t = (r - TAPER_INNER) / (TAPER_OUTER - TAPER_INNER);
        let c = (0.5 * std::f64::consts::PI * t).cos();
        c * c
    }
}

impl Phantom {
    /// Continuous density at a point.
    pub fn value(&self, x: [f64; 3]) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let w = taper(r);
        if w == 0.0 {
            return 0.0;
        }
        w * self.blobs.iter().map(|b| b.value(x)).sum::<f64>()
    }

    /// Analytic render of `x -> phantom(g^{-1} x)` on an `n`-grid.
    pub fn render_rotated(&self, n: usize, g: &RotationMatrix) -> Result<Volume> {
        let inv = g.inverse();
        Volume::from_fn(n, |x| self.value(inv.apply(x)))
    }
}

/// Draws a blob phantom with the default parameter ranges.
pub fn make_phantom(seed: u64, n: usize, blobs: usize) -> Result<Phantom> {
    make_phantom_with(seed, n, blobs, &PhantomParams::default())
}

/// Draws a phantom, redrawing until it passes the asymmetry guard.
pub fn make_phantom_with(seed: u64, n: usize, blobs: usize, params: &PhantomParams) -> Result<Phantom> {
    if n < 16 {
        return Err(Error::Config(format!("phantom grid {n} below 16")));
    }
    if blobs < 3 {
        return Err(Error::Config(format!("phantom needs at least 3 blobs, got {blobs}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for _ in 0..MAX_REDRAWS {
        let drawn: Vec<Blob> = (0..blobs).map(|_| draw_blob(&mut rng, params)).collect();
        let mut p = Phantom {
            seed,
            blobs: drawn,
            volume: Volume::zeros(n)?,
        };
        p.volume = p.render_rotated(n, &RotationMatrix::identity())?;
        if symmetry_score(&p)? < SYMMETRY_LIMIT {
            return Ok(p);
        }
        last = Some(p);
    }
    // extremely unlikely; keep the last draw rather than fail
    Ok(last.expect("at least one draw"))
}

fn draw_blob(rng: &mut ChaCha8Rng, params: &PhantomParams) -> Blob {
    // uniform in the ball of radius center_radius
    let center = loop {
        let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        if c.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            break c.map(|v| v * params.center_radius);
        }
    };
    let rot = random_rotation(rng);
    let m = rot.matrix();
    let axes = std::array::from_fn(|i| [m[(0, i)], m[(1, i)], m[(2, i)]]);
    let [w0, w1] = params.width_range;
    let [a0, a1] = params.amplitude_range;
    Blob {
        center,
        axes,
        widths: std::array::from_fn(|_| rng.random_range(w0..=w1)),
        amplitude: rng.random_range(a0..=a1),
    }
}

/// Largest correlation of the phantom with a 90-degree copy about any
/// coordinate axis, relative to its self-correlation.
pub fn symmetry_score(p: &Phantom) -> Result<f64> {
    let n = p.volume.n();
    let own = p.volume.energy();
    let mut worst: f64 = f64::NEG_INFINITY;
    let half = std::f64::consts::FRAC_PI_2;
    for g in [RotationMatrix::rx(half), RotationMatrix::ry(half), RotationMatrix::rz(half)] {
        let r = p.render_rotated(n, &g)?;
        worst = worst.max(p.volume.dot(&r)? / own);
    }
    Ok(worst)
}

/// `(g . v)(x) = v(g^{-1} x)` by trilinear interpolation, zero outside the ball.
pub fn rotate_volume(v: &Volume, g: &EulerZYZ) -> Volume {
    v.rotated(&g.to_matrix())
}

/// Adds i.i.d. Gaussian noise rescaled so that `10 log10(|v|^2 / |eta|^2)`
/// equals `snr_db` exactly. An infinite SNR returns `v` unchanged.
pub fn add_noise<R: Rng + ?Sized>(v: &Volume, snr_db: f64, rng: &mut R) -> Result<Volume> {
    let signal = v.energy();
    if signal == 0.0 {
        return Err(Error::ZeroSignal);
    }
    if snr_db == f64::INFINITY {
        return Ok(v.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("invalid SNR {snr_db}")));
    }
    let eta: Vec<f64> = (0..v.data().len())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let raw: f64 = eta.iter().map(|x| x * x).sum();
    let target = signal * 10f64.powf(-snr_db / 10.0);
    let scale = (target / raw).sqrt();
    let data = v.data().iter().zip(&eta).map(|(a, e)| a + scale * e).collect();
    Volume::from_vec(v.n(), data)
}

/// Noise component actually added by [`add_noise`], for checks.
pub fn noise_energy(noisy: &Volume, clean: &Volume) -> Result<f64> {
    clean.check_same_grid(noisy)?;
    Ok(noisy
        .data()
        .iter()
        .zip(clean.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}
