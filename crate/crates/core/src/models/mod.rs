//! Dynamic models of the units on the monitored bus: round-rotor synchronous
//! machines (GENROU), their exciters (SEXS) and turbine governors (TGOV1,
//! GAST, HYGOV), and simplified renewable current sources, plus steady-state
//! initialization from a dispatched operating point.
//!
//! Conventions used throughout:
//! * machine quantities are in per-unit on the machine MVA base, network
//!   quantities on the system base; conversion happens at the unit boundary;
//! * the rotor q-axis sits at angle `delta` in the network frame, the d-axis
//!   lags it by 90 degrees;
//! * `omega` is the speed deviation from synchronous in per-unit;
//! * stator transients are neglected and the stator algebra is evaluated at
//!   synchronous speed, so air-gap torque and terminal power coincide
//!   (stator resistance is not modeled).

mod controller;
mod genrou;
mod init;
mod paramfile;
mod renewable;
mod saturation;

pub use controller::{
    ControllerError, ControllerOutputs, ControllerParams, ControllerState, GastParams, GovernorInput,
    HygovParams, SexsParams, Tgov1Params,
};
pub use genrou::{
    dq_to_network, genrou_derivatives, genrou_derivatives_at_current, network_to_dq,
    stator_currents as stator_currents_of, subtransient_flux as subtransient_flux_of, GenrouParams,
    MachineOutputs, MachineState, ModelError,
};
pub use init::{init_from_powerflow, InitError, Initialized};
pub use paramfile::{parse_bench_str, read_bench_file, BenchSpec, ParamFileError, SystemSpec, UnitSpec};
pub use renewable::{RenewableParams, RenewableState};
pub use saturation::saturation;
