//! Cubic voxel volumes mapped onto `[-1, 1]^3`, with the unit ball inscribed.
//!
//! Storage is z-fastest: voxel `(ix, iy, iz)` lives at `(ix * n + iy) * n + iz`.
//! Axis `ix` is the x coordinate, `iy` y, `iz` z; voxel centers sit at
//! `-1 + (i + 1/2) * 2/n`.

use crate::error::{Error, Result};
use crate::so3::RotationMatrix;

/// Smallest accepted grid size.
pub const MIN_GRID: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    n: usize,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_vec(n, vec![0.0; n * n * n])
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if n < MIN_GRID {
            return Err(Error::InvalidVolume(format!(
                "grid size {n} below minimum {MIN_GRID}"
            )));
        }
        if data.len() != n * n * n {
            return Err(Error::InvalidVolume(format!(
                "expected {} samples, got {}",
                n * n * n,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume(format!("non-finite sample at {i}")));
        }
        Ok(Self { n, data })
    }

    /// Samples `f(x, y, z)` at voxel centers.
    pub fn from_fn(n: usize, f: impl Fn([f64; 3]) -> f64 + Sync) -> Result<Self> {
        use rayon::prelude::*;
        let data: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|ix| {
                let f = &f;
                (0..n).flat_map(move |iy| {
                    (0..n).map(move |iz| f([coord(n, ix), coord(n, iy), coord(n, iz)]))
                })
            })
            .collect();
        Self::from_vec(n, data)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.data[self.index(ix, iy, iz)]
    }

    /// Edge length of one voxel in unit-ball coordinates.
    #[inline]
    pub fn voxel_size(&self) -> f64 {
        2.0 / self.n as f64
    }

    /// Quadrature weight of one voxel.
    #[inline]
    pub fn voxel_volume(&self) -> f64 {
        self.voxel_size().powi(3)
    }

    /// Center of voxel `(ix, iy, iz)`.
    #[inline]
    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [coord(self.n, ix), coord(self.n, iy), coord(self.n, iz)]
    }

    /// Zeroes every voxel whose center lies at radius `>= radius`.
    pub fn masked(&self, radius: f64) -> Volume {
        let mut out = self.clone();
        let n = self.n;
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    let [x, y, z] = self.center(ix, iy, iz);
                    if x * x + y * y + z * z >= radius * radius {
                        let i = out.index(ix, iy, iz);
                        out.data[i] = 0.0;
                    }
                }
            }
        }
        out
    }

    /// Sum of squares (no quadrature weight).
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Quadrature approximation of the L2 norm on `[-1,1]^3`.
    pub fn l2_norm(&self) -> f64 {
        (self.energy() * self.voxel_volume()).sqrt()
    }

    /// Density-weighted centroid in voxels relative to the grid center;
    /// `None` when the total mass is not positive.
    pub fn center_of_mass(&self) -> Option<[f64; 3]> {
        let n = self.n;
        let mut m = 0.0;
        let mut c = [0.0; 3];
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    let v = self.get(ix, iy, iz);
                    m += v;
                    let p = self.center(ix, iy, iz);
                    for k in 0..3 {
                        c[k] += v * p[k];
                    }
                }
            }
        }
        if !(m > 0.0) {
            return None;
        }
        let vs = self.voxel_size();
        Some(c.map(|x| x / (m * vs)))
    }

    /// Plain voxel inner product `sum f g`.
    pub fn dot(&self, other: &Volume) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn check_same_grid(&self, other: &Volume) -> Result<()> {
        if self.n != other.n {
            Err(Error::GridMismatch(self.n, other.n))
        } else {
            Ok(())
        }
    }

    /// `||self - other|| / ||other||` over voxels.
    pub fn relative_l2_error(&self, reference: &Volume) -> Result<f64> {
        self.check_same_grid(reference)?;
        let num: f64 = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((num / reference.energy()).sqrt())
    }

    /// Linear combination `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Volume, b: f64) -> Result<Volume> {
        self.check_same_grid(other)?;
        Ok(Volume {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// Trilinear sample at a continuous point; zero outside the grid.
    pub fn sample_trilinear(&self, p: [f64; 3]) -> f64 {
        let n = self.n;
        let h = 2.0 / n as f64;
        // continuous index of the voxel center lattice
        let u: [f64; 3] = p.map(|c| (c + 1.0) / h - 0.5);
        let mut base = [0isize; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            let f = u[k].floor();
            base[k] = f as isize;
            frac[k] = u[k] - f;
        }
        let mut acc = 0.0;
        for dx in 0..2 {
            let wx = if dx == 0 { 1.0 - frac[0] } else { frac[0] };
            let ix = base[0] + dx as isize;
            if ix < 0 || ix >= n as isize || wx == 0.0 {
                continue;
            }
            for dy in 0..2 {
                let wy = if dy == 0 { 1.0 - frac[1] } else { frac[1] };
                let iy = base[1] + dy as isize;
                if iy < 0 || iy >= n as isize || wy == 0.0 {
                    continue;
                }
                for dz in 0..2 {
                    let wz = if dz == 0 { 1.0 - frac[2] } else { frac[2] };
                    let iz = base[2] + dz as isize;
                    if iz < 0 || iz >= n as isize || wz == 0.0 {
                        continue;
                    }
                    acc += wx * wy * wz * self.get(ix as usize, iy as usize, iz as usize);
                }
            }
        }
        acc
    }

    /// `(g . v)(x) = v(g^{-1} x)` by trilinear interpolation, zero outside the
    /// unit ball.
    pub fn rotated(&self, g: &RotationMatrix) -> Volume {
        let inv = g.inverse();
        let n = self.n;
        Volume::from_fn(n, |x| {
            if x[0] * x[0] + x[1] * x[1] + x[2] * x[2] >= 1.0 {
                0.0
            } else {
                self.sample_trilinear(inv.apply(x))
            }
        })
        .expect("rotation preserves grid validity")
    }
}

#[inline]
pub(crate) fn coord(n: usize, i: usize) -> f64 {
    -1.0 + (i as f64 + 0.5) * 2.0 / n as f64
}
