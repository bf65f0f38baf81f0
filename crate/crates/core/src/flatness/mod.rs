//! Curvature metrics, loss-landscape slices, domain divergence and the
//! computable terms of the transfer bound.

mod divergence;
mod hessian;
mod landscape;
mod report;

pub use divergence::{analytic_divergence, tv_divergence, DivergenceEstimate, DivergenceMethod};
pub use hessian::{
    default_hvp_step, hessian_trace, hvp, top_eigenvalues, Eigenpairs, TraceEstimate, TraceMode, EXACT_TRACE_LIMIT,
};
pub use landscape::{fmt_g, landscape_slice, orthonormalize, random_directions, LandscapeGrid, LandscapePoint, SliceConfig};
pub use report::{
    bound_report, episodic_query_loss, flatness_report, BatchId, BoundConfig, BoundReport, FlatnessConfig,
    FlatnessReport, TargetDivergence,
};
