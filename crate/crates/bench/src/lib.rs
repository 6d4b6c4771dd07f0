//! Shared fixtures for the benchmarks.

use contmeas_core::*;

/// Oscillator with `kappa = 0.1`, `lambda = 0.2` and a coherent state of
/// amplitude 1.
pub struct Fixture {
    pub ops: OscillatorOps,
    pub model: MeasurementModel,
    pub rho0: DensityMatrix,
}

pub fn fixture(dim: usize) -> Fixture {
    let ops = make_oscillator_ops(dim, 1.0, 1.0).expect("valid oscillator");
    let model = oscillator_model(&ops, 0.1, 0.2).expect("valid model");
    let rho0 = coherent_state(dim, C64::new(1.0, 0.0)).expect("fits in basis");
    Fixture { ops, model, rho0 }
}
