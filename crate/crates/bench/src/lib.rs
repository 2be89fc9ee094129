//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use matcha_core::bench::lambda_for_degree;
use matcha_core::synth::make_phantom;
use matcha_core::{build_truncation, compute_sigma, forward_transform, EulerZYZ, SigmaBlocks, TruncationIndex, Volume};

/// Fixed rotation away from the chart poles.
pub fn planted_rotation() -> EulerZYZ {
    EulerZYZ::from_degrees(37.0, 71.0, -122.0)
}

/// Phantom and its copy at [`planted_rotation`], both on an `n`-grid.
pub fn planted_pair(n: usize) -> (Volume, Volume) {
    let p = make_phantom(7, n, 6).expect("valid phantom");
    let f = p.render_rotated(n, &planted_rotation().to_matrix()).expect("valid grid");
    (f, p.volume)
}

/// Truncation reaching degree `l`.
pub fn truncation(l: usize) -> Arc<TruncationIndex> {
    Arc::new(build_truncation(lambda_for_degree(l), l).expect("valid budget"))
}

/// Correlation blocks of the planted pair up to degree `l`.
pub fn planted_sigma(n: usize, l: usize) -> SigmaBlocks {
    let (f, h) = planted_pair(n);
    let t = truncation(l);
    let fc = forward_transform(&f, &t).expect("transform");
    let hc = forward_transform(&h, &t).expect("transform");
    compute_sigma(&fc, &hc, l).expect("blocks")
}
