//! Pan-sharpening quality metrics and the block-matching aligner.
//!
//! Images are `[1, H, W, C]` tensors with values nominally in `[0, 1]`.

mod block_match;
mod quality;
mod report;

pub use block_match::{block_match_align, BlockMatch, BlockOffset, BLOCK, SEARCH};
pub use quality::{
    ergas, jqm, laplacian, pearson, psnr, psnr_capped, q_index, q_index_windowed, qnr, scc, spectral_q, Qnr, PSNR_CAP,
    Q_WINDOW, Q_WINDOW_LOW,
};
pub use report::{aggregate, Aggregate, ImageMetrics, MetricsReport, JQM_LABEL};

use pansharp_tensor::Shape;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("{metric}: shapes {a} and {b} differ")]
    Shape { metric: &'static str, a: Shape, b: Shape },

    #[error("{metric}: zero-variance input, correlation undefined")]
    Flat { metric: &'static str },

    #[error("{metric}: band {band} of the reference has zero mean")]
    ZeroMean { metric: &'static str, band: usize },

    #[error("{metric}: {detail}")]
    Invalid { metric: &'static str, detail: String },
}

pub type MetricResult<T> = std::result::Result<T, MetricError>;
