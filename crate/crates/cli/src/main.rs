mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use matcha_core::bench::{lambda_for_degree, summarize, to_csv};
use matcha_core::diagnostics::auto_balls;
use matcha_core::wigner::DEGREE_CAP;
use matcha_core::io::{read_volume, write_atomic, write_volume, VolumeFormat};
use matcha_core::{
    alternate_align, bench_run, build_truncation, check_theorem_conditions, compute_sigma, forward_transform,
    matcha, synthesize, AlternateConfig, BallSet, BenchConfig, Error, EulerZYZ, Method, Schedule, Shift3, Subpixel,
    TruncationIndex, Volume,
};

use config::{FileConfig, Preset};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

/// Rigid alignment of 3D volumes by band-limited SO(3) correlation.
#[derive(Parser, Debug)]
#[command(name = "matcha", version, about)]
struct Cli {
    /// Worker threads; falls back to MATCHA_THREADS, then all cores.
    #[arg(long, global = true, env = "MATCHA_THREADS")]
    threads: Option<usize>,
    /// JSON file with default values for any flag (kebab-case keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Find the rotation (and optionally shift) taking TEMPLATE onto TARGET.
    Align(AlignArgs),
    /// Run the synthetic rotation benchmark.
    Bench(BenchArgs),
    /// Estimate the quantities of the convergence conditions for a volume pair.
    Diagnose(DiagnoseArgs),
    /// Ball-harmonic round trip of one volume.
    Transform(TransformArgs),
    /// Print the truncation table for a frequency budget.
    Info(InfoArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct ScheduleArgs {
    /// Parameter preset: quick (desk scale) or paper.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Comma-separated bandwidth schedule, e.g. 8,12,16.
    #[arg(long, value_delimiter = ',')]
    bands: Option<Vec<usize>>,
    /// Newton steps per band.
    #[arg(long)]
    m_iter: Option<usize>,
    /// Retained coarse candidates.
    #[arg(long)]
    n_c: Option<usize>,
    /// Coarse grid oversampling factor.
    #[arg(long)]
    k: Option<usize>,
    /// Frequency budget of the ball transform; derived from the schedule when unset.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct AlignArgs {
    /// Volume that was rotated (f).
    target: Option<PathBuf>,
    /// Reference volume (h).
    template: Option<PathBuf>,
    /// Input format; inferred from the extension when unset.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Also search translations within this many voxels.
    #[arg(long)]
    translate: Option<usize>,
    /// Rotation/translation alternations when translating.
    #[arg(long)]
    outer_iterations: Option<usize>,
    /// Subpixel shift refinement.
    #[arg(long, value_enum)]
    subpixel: Option<SubpixelArg>,
    /// Subdivisions per voxel for `--subpixel upsampled`.
    #[arg(long)]
    upsample: Option<usize>,
    /// Output JSON path; stdout when unset.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct BenchArgs {
    /// Number of random trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Grid side length.
    #[arg(long)]
    n: Option<usize>,
    /// Blobs per phantom.
    #[arg(long)]
    blobs: Option<usize>,
    /// Comma-separated SNR levels in dB (`inf` for noiseless).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// Comma-separated methods: matcha, grid.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated final bands for a bandwidth ablation.
    #[arg(long, value_delimiter = ',')]
    ablation: Option<Vec<usize>>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write zero wall times so output is byte-stable.
    #[arg(long)]
    no_timing: bool,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// CSV output path; stdout when unset.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Summary JSON output path.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct DiagnoseArgs {
    /// Volume that was rotated (f).
    target: Option<PathBuf>,
    /// Reference volume (h).
    template: Option<PathBuf>,
    /// Input format; inferred from the extension when unset.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[command(flatten)]
    schedule: ScheduleArgs,
    /// Samples per radian.
    #[arg(long)]
    density: Option<f64>,
    /// Newton tolerance in degrees for condition (F).
    #[arg(long)]
    tau: Option<f64>,
    /// Ball radius in degrees; twice the coarse spacing when unset.
    #[arg(long)]
    radius: Option<f64>,
    /// Ball centers as ZYZ degrees, `a,b,g` separated by `;`. Auto-placed when unset.
    #[arg(long)]
    centers: Option<String>,
    /// Output JSON path; stdout when unset.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct TransformArgs {
    /// Volume to transform.
    input: Option<PathBuf>,
    /// Input format; inferred from the extension when unset.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Frequency budget; N/3 when unset.
    #[arg(long)]
    lambda: Option<f64>,
    /// Largest degree kept.
    #[arg(long)]
    l_max: Option<usize>,
    /// Synthesized volume output path.
    #[arg(long)]
    volume_out: Option<PathBuf>,
    /// Output JSON path; stdout when unset.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct InfoArgs {
    /// Frequency budget.
    #[arg(long)]
    lambda: Option<f64>,
    /// Largest degree kept.
    #[arg(long)]
    l_max: Option<usize>,
    /// Output JSON path; stdout when unset.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubpixelArg {
    /// Quadratic fit over the 27 neighbours of the integer peak.
    Quadratic,
    /// Three-point parabola per axis.
    Separable,
    /// Correlation on a finer lattice around the peak.
    Upsampled,
    /// Integer shifts only.
    None,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy)]
enum FormatArg {
    Raw,
    Mrc,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_)
            | Error::UnsupportedMode(_)
            | Error::CorruptHeader(_)
            | Error::NonCubic(..)
            | Error::InvalidVolume(_) => EXIT_IO,
            Error::Config(_)
            | Error::InvalidSchedule(_)
            | Error::WindowTooLarge { .. }
            | Error::CutoffExceedsBlocks { .. }
            | Error::DegreeTooLarge { .. }
            | Error::EmptyTruncation { .. }
            | Error::Json(_) => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let threads = cli.threads.or(file.threads);
    if let Some(t) = threads {
        if t == 0 {
            return Err(Failure::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::config(e.to_string()))?;
    }
    let ctx = Ctx {
        file,
        verbose: cli.verbose,
    };
    match cli.command {
        Command::Align(a) => ctx.align(a),
        Command::Bench(a) => ctx.bench(a),
        Command::Diagnose(a) => ctx.diagnose(a),
        Command::Transform(a) => ctx.transform(a),
        Command::Info(a) => ctx.info(a),
    }
}

struct Ctx {
    file: FileConfig,
    verbose: bool,
}

fn deg3(e: &EulerZYZ) -> serde_json::Value {
    let [a, b, g] = e.to_degrees();
    serde_json::json!({ "alpha": a, "beta": b, "gamma": g })
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => Ok(write_atomic(p, text.as_bytes())?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::from(Error::Json(e)))
}

fn read_input(path: &Path, format: Option<FormatArg>, fallback: Option<VolumeFormat>) -> CliResult<Volume> {
    let fmt = match format {
        Some(FormatArg::Raw) => VolumeFormat::Raw,
        Some(FormatArg::Mrc) => VolumeFormat::Mrc,
        None => fallback.unwrap_or_else(|| VolumeFormat::from_path(path)),
    };
    read_volume(path, fmt).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn require(p: Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    p.ok_or_else(|| Failure::config(format!("missing {what} path")))
}

fn check_finite(what: &str, x: f64) -> CliResult<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Failure::from(Error::NonFinite(what.into())))
    }
}

impl Ctx {
    fn note(&self, msg: &str) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }

    /// Flags over config file over preset.
    fn schedule(&self, a: &ScheduleArgs) -> CliResult<Schedule> {
        let f = &self.file;
        let preset = a.preset.or(f.preset).unwrap_or(Preset::Quick);
        let mut s = match preset {
            Preset::Quick => Schedule::quick(),
            Preset::Paper => Schedule::paper(0),
        };
        if let Some(b) = a.bands.clone().or_else(|| f.bands.clone()) {
            s.bands = b;
        }
        if let Some(v) = a.m_iter.or(f.m_iter) {
            s.m_iter = v;
        }
        if let Some(v) = a.n_c.or(f.n_c) {
            s.n_c = v;
        }
        if let Some(v) = a.k.or(f.k) {
            s.k = v;
        }
        s.validate()?;
        Ok(s)
    }

    fn truncation(&self, a: &ScheduleArgs, sched: &Schedule) -> CliResult<Arc<TruncationIndex>> {
        let top = *sched.bands.last().expect("validated");
        let lambda = a.lambda.or(self.file.lambda).unwrap_or_else(|| lambda_for_degree(top));
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Failure::config(format!("invalid --lambda {lambda}")));
        }
        let t = build_truncation(lambda, top)?;
        if t.l_max() < sched.bands[0] {
            return Err(Failure::config(format!(
                "--lambda {lambda} only reaches degree {}, below the first band {}",
                t.l_max(),
                sched.bands[0]
            )));
        }
        Ok(Arc::new(t))
    }

    fn pair(&self, target: Option<PathBuf>, template: Option<PathBuf>, format: Option<FormatArg>) -> CliResult<(Volume, Volume)> {
        let target = require(target.or_else(|| self.file.target.clone()), "target")?;
        let template = require(template.or_else(|| self.file.template.clone()), "template")?;
        let fallback = self.file.format;
        let f = read_input(&target, format, fallback)?;
        let h = read_input(&template, format, fallback)?;
        if f.n() != h.n() {
            return Err(Failure::from(Error::GridMismatch(f.n(), h.n())));
        }
        Ok((f, h))
    }

    fn align(&self, a: AlignArgs) -> CliResult<()> {
        let sched = self.schedule(&a.schedule)?;
        let translate = a.translate.or(self.file.translate);
        let outer = a.outer_iterations.or(self.file.outer_iterations).unwrap_or(3);
        let out = a.out.clone().or_else(|| self.file.out.clone());
        let factor = a.upsample.or(self.file.upsample).unwrap_or(20);
        if factor < 2 {
            return Err(Failure::config("--upsample must be at least 2"));
        }
        let subpixel = match a.subpixel.or(self.file.subpixel).unwrap_or(SubpixelArg::Quadratic) {
            SubpixelArg::Quadratic => Subpixel::Quadratic,
            SubpixelArg::Separable => Subpixel::Separable,
            SubpixelArg::Upsampled => Subpixel::Upsampled(factor),
            SubpixelArg::None => Subpixel::None,
        };
        let (f, h) = self.pair(a.target, a.template, a.format)?;
        if let Some(w) = translate {
            if w > f.n() / 4 {
                return Err(Failure::from(Error::WindowTooLarge {
                    window: w,
                    limit: f.n() / 4,
                    n: f.n(),
                }));
            }
        }
        let trunc = self.truncation(&a.schedule, &sched)?;
        let start = Instant::now();
        let (rotation, shift, score, per_band_steps, scores) = match translate {
            Some(window) => {
                let cfg = AlternateConfig {
                    outer_iterations: outer,
                    window,
                    subpixel,
                };
                let r = alternate_align(&f, &h, &trunc, &sched, &cfg)?;
                let score = *r.scores.last().expect("non-empty");
                (r.rotation, r.shift, score, r.alignment.per_band_steps, Some(r.scores))
            }
            None => {
                self.note("forward transforms");
                let fc = forward_transform(&f, &trunc)?;
                let hc = forward_transform(&h, &trunc)?;
                let r = matcha(&fc, &hc, &sched)?;
                (r.rotation, Shift3::default(), r.score, r.per_band_steps, None)
            }
        };
        check_finite("alignment score", score)?;
        let mut doc = serde_json::json!({
            "rotation": deg3(&rotation),
            "shift": shift,
            "score": score,
            "per_band_steps": per_band_steps,
            "bands": sched.usable_bands(trunc.l_max())?,
            "time_s": start.elapsed().as_secs_f64(),
        });
        if let Some(s) = scores {
            doc["joint_scores"] = serde_json::json!(s);
        }
        emit(out.as_deref(), &json(&doc)?)
    }

    fn bench(&self, a: BenchArgs) -> CliResult<()> {
        let f = &self.file;
        let base = self.schedule(&a.schedule)?;
        let mut cfg = BenchConfig::default();
        if let Some(v) = a.trials.or(f.trials) {
            cfg.trials = v;
        }
        if let Some(v) = a.n.or(f.n) {
            cfg.n = v;
        }
        if let Some(v) = a.blobs.or(f.blobs) {
            cfg.blobs = v;
        }
        if let Some(v) = a.snr.clone().or_else(|| f.snr.clone()) {
            cfg.snr_db = v;
        }
        if let Some(v) = a.methods.clone().or_else(|| f.methods.clone()) {
            cfg.methods = v
                .iter()
                .map(|m| m.parse::<Method>())
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = a.seed.or(f.seed) {
            cfg.master_seed = v;
        }
        cfg.record_timing = !(a.no_timing || f.no_timing.unwrap_or(false));
        cfg.lambda = a.schedule.lambda.or(f.lambda);
        cfg.schedules = match a.ablation.clone().or_else(|| f.ablation.clone()) {
            Some(finals) => BenchConfig::ablation(&base, &finals)?,
            None => vec![base],
        };
        cfg.validate()?;
        let csv_path = a.csv.clone().or_else(|| f.csv.clone());
        let summary_path = a.summary.clone().or_else(|| f.summary.clone());

        self.note(&format!("{} trials", cfg.trials));
        let records = bench_run(&cfg)?;
        if records.iter().any(|r| !r.error_deg.is_finite()) {
            return Err(Failure::from(Error::NonFinite("benchmark error".into())));
        }
        let csv = to_csv(&records)?;
        let summary = json(&summarize(&records))?;
        match csv_path {
            Some(p) => write_atomic(&p, csv.as_bytes())?,
            None => print!("{csv}"),
        }
        if let Some(p) = summary_path {
            write_atomic(&p, summary.as_bytes())?;
        }
        Ok(())
    }

    fn diagnose(&self, a: DiagnoseArgs) -> CliResult<()> {
        let f = &self.file;
        let sched = self.schedule(&a.schedule)?;
        let tau = a.tau.or(f.tau).unwrap_or(0.01).to_radians();
        let radius = a.radius.or(f.radius).map(f64::to_radians);
        let centers = match a.centers.clone().or_else(|| f.centers.clone()) {
            Some(s) => Some(config::parse_centers(&s)?),
            None => None,
        };
        let density_flag = a.density.or(f.density);
        if let Some(d) = density_flag {
            if !(d.is_finite() && d > 0.0) {
                return Err(Failure::config(format!("invalid --density {d}")));
            }
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Failure::config("--tau must be positive"));
        }
        if centers.is_some() && radius.is_none() {
            return Err(Failure::config("--centers requires --radius"));
        }
        let out = a.out.clone().or_else(|| f.out.clone());
        let (fv, hv) = self.pair(a.target, a.template, a.format)?;
        let trunc = self.truncation(&a.schedule, &sched)?;
        let fc = forward_transform(&fv, &trunc)?;
        let hc = forward_transform(&hv, &trunc)?;
        let bands = sched.usable_bands(trunc.l_max())?;
        let sigma = compute_sigma(&fc, &hc, *bands.last().expect("non-empty"))?;
        let balls = match centers {
            Some(c) => BallSet::new(c, radius.expect("checked"))?,
            None => {
                let auto = auto_balls(&sigma, bands[0], sched.k, sched.n_c)?;
                match radius {
                    Some(r) => BallSet::new(auto.centers().to_vec(), r)?,
                    None => auto,
                }
            }
        };
        let density = density_flag.unwrap_or(6.0 / balls.radius());
        self.note(&format!("{} balls, radius {:.4} rad, density {density}", balls.len(), balls.radius()));
        let report = check_theorem_conditions(&sigma, &sched, &balls, density, tau)?;
        if let Some(w) = &report.warning {
            eprintln!("warning: {w}");
        }
        emit(out.as_deref(), &report.to_json()?)
    }

    fn transform(&self, a: TransformArgs) -> CliResult<()> {
        let f = &self.file;
        let input = require(a.input.clone().or_else(|| f.target.clone()), "input")?;
        let v = read_input(&input, a.format, f.format)?;
        let lambda = a.lambda.or(f.lambda).unwrap_or(v.n() as f64 / 3.0);
        let l_max = a.l_max.or(f.l_max).unwrap_or(DEGREE_CAP);
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Failure::config(format!("invalid --lambda {lambda}")));
        }
        let out = a.out.clone().or_else(|| f.out.clone());
        let t = Arc::new(build_truncation(lambda, l_max)?);
        let start = Instant::now();
        let c = forward_transform(&v, &t)?;
        let back = synthesize(&c, v.n())?;
        let err = back.relative_l2_error(&v.masked(1.0))?;
        check_finite("round-trip error", err)?;
        if let Some(p) = &a.volume_out {
            write_volume(p, &back, VolumeFormat::from_path(p))?;
        }
        let doc = serde_json::json!({
            "n": v.n(),
            "lambda": lambda,
            "l_max": t.l_max(),
            "coefficients": t.len(),
            "relative_l2_error": err,
            "coefficient_energy": c.norm_sqr(),
            "volume_energy": v.masked(1.0).energy() * v.voxel_volume(),
            "time_s": start.elapsed().as_secs_f64(),
        });
        emit(out.as_deref(), &json(&doc)?)
    }

    fn info(&self, a: InfoArgs) -> CliResult<()> {
        let lambda = a
            .lambda
            .or(self.file.lambda)
            .ok_or_else(|| Failure::config("info needs --lambda"))?;
        let l_max = a.l_max.or(self.file.l_max).unwrap_or(DEGREE_CAP);
        let t = build_truncation(lambda, l_max)?;
        let degrees: Vec<serde_json::Value> = (0..=t.l_max())
            .map(|l| serde_json::json!({ "l": l, "radial_count": t.radial_count(l), "roots": t.roots(l) }))
            .collect();
        let doc = serde_json::json!({
            "lambda": lambda,
            "l_max": t.l_max(),
            "coefficients": t.len(),
            "degrees": degrees,
        });
        emit(a.out.or_else(|| self.file.out.clone()).as_deref(), &json(&doc)?)
    }
}
