//! Fixtures shared by the benchmarks.

use fairsmooth_core::train::init_params;
use fairsmooth_core::{Architecture, Features, Mlp, ParameterVector};

/// Default 18-input network with seeded parameters.
pub fn default_network() -> (Mlp, ParameterVector) {
    let arch = Architecture::default_for(18);
    let params = init_params(&arch, 0);
    (Mlp::new(arch), params)
}

/// `rows` binary feature rows with a fixed bit pattern.
pub fn binary_rows(rows: usize) -> Features {
    let data = (0..rows * 18).map(|i| ((i * 7 + i / 18) % 3 == 0) as u8 as f64).collect();
    Features::new(18, data).expect("consistent shape")
}

/// Labels alternating between the two classes.
pub fn labels(rows: usize) -> Vec<f64> {
    (0..rows).map(|i| (i % 2) as f64).collect()
}
