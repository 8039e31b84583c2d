//! One module per verb.

pub mod analyze;
pub mod scan;
pub mod simulate;
pub mod theory;

use eprsim_core::Basis;

/// `events_<near|far>_tau<τ>.events.csv`.
pub fn events_file_name(basis: Basis, tau: f64) -> String {
    format!("events_{}_tau{tau}.events.csv", basis.short())
}

/// Column-safe unit of one coordinate.
pub fn coordinate_unit(basis: Basis) -> &'static str {
    match basis {
        Basis::Position => "mm",
        Basis::Momentum => "hbar_per_mm",
    }
}
