//! Sweeps, expansion fits, root finding and the limit-cycle report.

mod fit;
mod report;
mod roots;
mod sweep;

pub use fit::{fit_expansion, FitOptions, ExpansionFit};
pub use report::{conjecture_report, ConjectureReport, ReportSettings, ReportTarget};
pub use roots::{find_roots, find_roots_in_samples, RootEntry, RootKind, RootOptions, RootReport};
pub use sweep::{nudge_off_breakpoints, radius_grid, sweep_melnikov, Spacing};

use rayon::prelude::*;

/// Maps `f` over `items`, on `jobs` worker threads when `jobs > 1`. Output order
/// always follows input order.
pub fn map_ordered<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}
