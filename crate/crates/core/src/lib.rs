//! Quadrature domains for the Helmholtz operator `Delta + k^2`.
//!
//! The crate constructs candidate domains by partial balayage — a projected
//! relaxation solve of a discrete obstacle problem — and verifies their
//! defining properties: quadrature identities for metaharmonic test
//! functions, sub-solution inequalities, pointwise PDE residuals, vanishing
//! far-field defects, and boundary classification of conformal images of the
//! unit disk.

pub mod balayage;
pub mod conformal;
pub mod error;
pub mod io;
pub mod kernel;
pub mod measures;
pub mod specialfn;
pub mod verify;

pub use error::{HqdError, Result};

/// Initializes the global rayon pool, honoring the `HQD_THREADS` cap.
/// Called once by entry points that want bounded parallelism; later calls
/// are no-ops.
pub fn init_threads() {
    use std::sync::OnceLock;
    static INIT: OnceLock<()> = OnceLock::new();
    INIT.get_or_init(|| {
        if let Ok(v) = std::env::var("HQD_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    });
}
