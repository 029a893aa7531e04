//! Locates the source of a forced oscillation (FO) among generators sharing
//! a bus, using only the point-of-connection PMU measurements.
//!
//! The pipeline combines four pieces:
//!
//! 1. event playback of every unit under a normal-operation hypothesis,
//!    driven by the measured bus voltage ([`playback`]);
//! 2. reconstruction of each generator's unobserved current injection from
//!    the single measured branch current ([`playback::current_injection`]);
//! 3. per-generator dynamic state estimation with an unscented Kalman filter
//!    with unknown inputs, ranking hypotheses by residual energy
//!    ([`estimate`], [`playback::identify_source`]);
//! 4. dissipating-energy functions for the excitation and mechanical control
//!    loops of the identified generator ([`energy`]).
//!
//! [`simulate`] provides a five-unit single-bus test bench that generates
//! ground truth and synthetic PMU data for the two stock FO scenarios
//! (field-voltage modulation and a swept square wave on a hydro gate), and
//! [`pmuio`] handles PMU data ingestion and calibrated measurement noise.

pub mod energy;
pub mod estimate;
pub mod models;
pub mod pipeline;
pub mod playback;
pub mod pmuio;
pub mod simulate;

pub use num_complex::Complex64 as Phasor;

/// The bundled five-unit test bench, parsed from the default parameter file.
pub fn default_bench_spec() -> models::BenchSpec {
    models::parse_bench_str(DEFAULT_BENCH_TOML).expect("bundled bench file is valid")
}

/// Text of the default bench parameter file, for `--bench` templates.
pub const DEFAULT_BENCH_TOML: &str = include_str!("../assets/default_bench.toml");
