pub mod ball;
pub mod bench;
pub mod coarse;
pub mod correlation;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod refine;
pub mod so3;
pub mod special;
pub mod synth;
pub mod translation;
pub mod volume;
pub mod wigner;

pub use error::{Error, Result};
pub use ball::{build_truncation, forward_transform, rotate_coefficients, synthesize, BallCoefficients, TruncationIndex};
pub use bench::{bench_run, BenchConfig, BenchRecord, Method};
pub use correlation::{compute_sigma, eval_cl, SigmaBlocks};
pub use diagnostics::{check_theorem_conditions, BallSet, DiagnosticsReport, Flag};
pub use refine::{matcha, AlignmentResult, Schedule, Tolerances};
pub use so3::{geodesic_distance, EulerZYZ, RotationMatrix};
pub use translation::{alternate_align, AlternateConfig, PoseResult, Shift3, Subpixel};
pub use volume::Volume;
