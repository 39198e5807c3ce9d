//! Approximation-loss bookkeeping around policy improvement: losses,
//! contraction ratios, policy distances, Lipschitz margins and the
//! closer-target condition.

mod gpi;
mod measures;
mod records;

pub use gpi::{run_tabular_gpi, TabularGpiConfig, TabularGpiRun};
pub use measures::{
    approx_loss, contraction_ratio, lipschitz_estimate, perturb_gaussian, policy_distance,
    table_distance, Contraction,
};
pub use records::{
    lemma2_track, theorem1_check, write_theory_csv, BoundRow, LossRecord, OracleKind, Theorem1Row,
    THEORY_HEADER,
};

/// Default number of probe states for policy distances.
pub const PROBE_STATES: usize = 256;
