//! Scaling-law analysis for brain and behavioral alignment of vision models.
//!
//! The crate fits saturating power laws to misalignment (`L = 1 - S`) measured
//! across many training runs, derives compute-optimal model/data allocations
//! from a joint fit, puts bootstrap confidence intervals on both, and scores
//! model activations against neural recordings and behavioral confusion
//! patterns.
//!
//! Module map:
//!
//! - [`records`]: run table ingestion, export, aggregation and filters.
//! - [`numerics`]: Huber loss, log-sum-exp, log-log regression, BFGS.
//! - [`fit`]: the three parametric curve forms and their grid-initialized fits.
//! - [`allocation`]: compute model `C = m (N D)^n` and optimal `(N*, D*)`.
//! - [`uncertainty`]: row bootstrap with percentile intervals.
//! - [`alignment`]: neural readout and behavioral confusion scoring.
//! - [`synth`]: seeded generators used as oracles throughout the tests.
//! - [`report`]: JSON report schemas and the minimal SVG chart.
//! - [`cli`]: the `scalefit` command-line surface.
//!
//! Runnable walkthroughs live under `examples/`.

pub mod alignment;
pub mod allocation;
pub mod cli;
pub mod fit;
pub mod numerics;
pub mod records;
pub mod report;
pub mod synth;
pub mod uncertainty;

pub use records::{Region, RunRecord, RunTable};
