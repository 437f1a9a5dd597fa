//! Parameter sets shared by the criterion benches.

use mjn_core::{ForkParams, NetworkParams};

/// Jackson-like instance with an x-axis jitter path.
pub fn jitter_instance() -> NetworkParams {
    NetworkParams::new(1.0, 0.5, 2.0, 2.5, 2.3, 0.3, 0.2).expect("valid params")
}

/// Instance whose optimal path climbs the y-axis first.
pub fn cascade_instance() -> NetworkParams {
    NetworkParams::new(0.3, 0.3, 3.0, 1.5, 3.0, 0.6, 0.6).expect("valid params")
}

pub fn fork_instance() -> ForkParams {
    ForkParams::new(0.2, 0.5, 0.4, 1.5, 2.0).expect("valid params")
}
