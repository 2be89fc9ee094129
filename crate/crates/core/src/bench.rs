//! Synthetic rotation benchmark: plant a Haar-random rotation, add noise,
//! run each method and record the angular error.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ball::{build_truncation, forward_transform, TruncationIndex};
use crate::correlation::compute_sigma;
use crate::error::{Error, Result};
use crate::refine::{grid_search, matcha_sigma, Schedule};
use crate::so3::{geodesic_distance, random_rotation};
use crate::special::sph_bessel_zeros;
use crate::synth::{add_noise, make_phantom};

pub const CSV_HEADER: &str = "method,seed,snr_db,l_max,n_c,k,error_deg,time_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Matcha,
    Grid,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Matcha => "matcha",
            Method::Grid => "grid",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "matcha" => Ok(Method::Matcha),
            "grid" => Ok(Method::Grid),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub trials: usize,
    pub n: usize,
    pub blobs: usize,
    /// SNR levels in dB; `inf` is noiseless.
    pub snr_db: Vec<f64>,
    pub schedules: Vec<Schedule>,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    /// Frequency budget of the ball transform; derived from the largest
    /// band when unset.
    pub lambda: Option<f64>,
    /// When false, `time_s` is written as zero so output is byte-stable.
    pub record_timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            n: 32,
            blobs: 6,
            snr_db: vec![0.0],
            schedules: vec![Schedule::quick()],
            methods: vec![Method::Matcha],
            master_seed: 0,
            lambda: None,
            record_timing: true,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 16 {
            return Err(Error::Config(format!("grid size {} below 16", self.n)));
        }
        if self.blobs < 3 {
            return Err(Error::Config(format!("need at least 3 blobs, got {}", self.blobs)));
        }
        if self.snr_db.is_empty() || self.schedules.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("SNR list, schedules and methods must be non-empty".into()));
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return Err(Error::Config("SNR values must be finite or +inf".into()));
        }
        for s in &self.schedules {
            s.validate()?;
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!("invalid frequency budget {l}")));
            }
        }
        Ok(())
    }

    /// Largest band over all schedules.
    pub fn max_band(&self) -> usize {
        self.schedules
            .iter()
            .filter_map(|s| s.bands.last().copied())
            .max()
            .unwrap_or(0)
    }

    /// The configured budget, or the smallest one that reaches `max_band`.
    pub fn effective_lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| lambda_for_degree(self.max_band()))
    }

    /// Schedules for a bandwidth ablation: `base` bands below each final
    /// band, followed by that band.
    pub fn ablation(base: &Schedule, finals: &[usize]) -> Result<Vec<Schedule>> {
        finals
            .iter()
            .map(|&l| {
                let mut s = base.clone();
                s.bands = base.bands.iter().copied().filter(|&b| b < l).collect();
                s.bands.push(l);
                s.validate()?;
                Ok(s)
            })
            .collect()
    }
}

/// Slightly above the first zero of `j_l`, so that degree `l` is retained.
pub fn lambda_for_degree(l: usize) -> f64 {
    let z = sph_bessel_zeros(l, 4.0 * l as f64 + 10.0);
    z.first().copied().unwrap_or(std::f64::consts::PI) + 0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    pub seed: u64,
    pub snr_db: f64,
    pub l_max: usize,
    pub n_c: usize,
    pub k: usize,
    pub error_deg: f64,
    pub time_s: f64,
}

/// Seed of trial `i`: a SplitMix64 step of the master seed.
pub fn trial_seed(master: u64, i: usize) -> u64 {
    let mut z = master.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn trial(cfg: &BenchConfig, trunc: &Arc<TruncationIndex>, seed: u64) -> Result<Vec<BenchRecord>> {
    let phantom = make_phantom(seed, cfg.n, cfg.blobs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x726f_7461_7465);
    let planted = random_rotation(&mut rng);
    let clean = phantom.render_rotated(cfg.n, &planted)?;
    let hc = forward_transform(&phantom.volume, trunc)?;
    let mut out = Vec::new();
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let mut nrng = ChaCha8Rng::seed_from_u64(seed ^ ((si as u64 + 1) << 48));
        let f = add_noise(&clean, snr, &mut nrng)?;
        let fc = forward_transform(&f, trunc)?;
        for sched in &cfg.schedules {
            let bands = sched.usable_bands(trunc.l_max())?;
            let l_max = *bands.last().expect("non-empty");
            let sigma = compute_sigma(&fc, &hc, l_max)?;
            for &m in &cfg.methods {
                let start = Instant::now();
                let (rot, n_c) = match m {
                    Method::Matcha => (matcha_sigma(&sigma, sched)?.rotation, sched.n_c),
                    Method::Grid => (grid_search(&sigma, l_max, sched.k)?.0, 1),
                };
                let time = start.elapsed().as_secs_f64();
                out.push(BenchRecord {
                    method: m,
                    seed,
                    snr_db: snr,
                    l_max,
                    n_c,
                    k: sched.k,
                    error_deg: geodesic_distance(&rot.to_matrix(), &planted).to_degrees(),
                    time_s: if cfg.record_timing { time } else { 0.0 },
                });
            }
        }
    }
    Ok(out)
}

/// Runs every trial in parallel and returns records sorted by
/// `(method, seed)`, then SNR and band in configuration order.
pub fn bench_run(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    if cfg.trials == 0 {
        return Ok(Vec::new());
    }
    let trunc = Arc::new(build_truncation(cfg.effective_lambda(), cfg.max_band())?);
    let per_trial: Vec<Vec<BenchRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| trial(cfg, &trunc, trial_seed(cfg.master_seed, i)))
        .collect::<Result<_>>()?;
    let mut records: Vec<(usize, BenchRecord)> = per_trial
        .into_iter()
        .flatten()
        .enumerate()
        .collect();
    // stable sort keeps the per-trial configuration order within a key
    records.sort_by(|(i, a), (j, b)| {
        a.method
            .cmp(&b.method)
            .then(a.seed.cmp(&b.seed))
            .then(i.cmp(j))
    });
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

/// CSV text with the fixed header; numbers are written with fixed
/// precision so equal runs give equal bytes.
pub fn to_csv(records: &[BenchRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| Error::Config(e.to_string()))?;
    for r in records {
        w.write_record([
            r.method.name().to_string(),
            r.seed.to_string(),
            format!("{}", r.snr_db),
            r.l_max.to_string(),
            r.n_c.to_string(),
            r.k.to_string(),
            format!("{:.9}", r.error_deg),
            format!("{:.6}", r.time_s),
        ])
        .map_err(|e| Error::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}

/// Parses CSV produced by [`to_csv`].
pub fn from_csv(text: &str) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Config(format!("bad CSV row: {e}"))))
        .collect()
}

/// Linear-interpolation percentile of unsorted data, `p` in `[0, 100]`.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub method: Method,
    pub snr_db: f64,
    pub l_max: usize,
    pub n_c: usize,
    pub k: usize,
    pub count: usize,
    pub p50_error_deg: f64,
    pub p90_error_deg: f64,
    pub p50_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub cells: Vec<SummaryCell>,
}

impl BenchSummary {
    pub fn cell(&self, method: Method, snr_db: f64, l_max: usize) -> Option<&SummaryCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.snr_db == snr_db && c.l_max == l_max)
    }
}

/// 50th and 90th percentiles per `(method, snr, l_max, n_c, k)` cell.
pub fn summarize(records: &[BenchRecord]) -> BenchSummary {
    type Key = (Method, u64, usize, usize, usize);
    let mut groups: BTreeMap<Key, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let key = (r.method, r.snr_db.to_bits(), r.l_max, r.n_c, r.k);
        let e = groups.entry(key).or_insert((r.snr_db, Vec::new(), Vec::new()));
        e.1.push(r.error_deg);
        e.2.push(r.time_s);
    }
    let cells = groups
        .into_iter()
        .map(|((method, _, l_max, n_c, k), (snr_db, err, time))| SummaryCell {
            method,
            snr_db,
            l_max,
            n_c,
            k,
            count: err.len(),
            p50_error_deg: percentile(&err, 50.0).unwrap_or(f64::NAN),
            p90_error_deg: percentile(&err, 90.0).unwrap_or(f64::NAN),
            p50_time_s: percentile(&time, 50.0).unwrap_or(f64::NAN),
        })
        .collect();
    BenchSummary { cells }
}
