//! Reservoir computing with dense or structured random weights, the
//! recurrent kernels they converge to as the reservoir grows, and ridge
//! readouts for both.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. The `parallel` feature evaluates Gram updates with rayon.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod kernel;
pub mod learning;
pub mod linalg;
pub mod reservoir;
pub mod rng;
pub mod series;
pub mod transforms;

pub use error::{Error, Result};
pub use kernel::{
    add_linear_kernel, build_gram_test, build_gram_train, iterate_gram, kernel_scalar, lipschitz_constant,
    mc_kernel_estimate, mc_kernel_estimate_with_error, rk_update_ri, rk_update_ti, KernelFamily, KernelKind,
    McEstimate, RkConfig, RkState, WindowSet,
};
pub use learning::{
    forecast_closed_loop, forecast_closed_loop_batch, forecast_direct, nmse_curve, predict_step, ridge_fit,
    ridge_fit_dual, Machinery, Mode, NormalEquations, RidgeModel,
};
pub use reservoir::{concat_state, init_weights, run, step, Activation, Backend, Reservoir, ReservoirParams, ReservoirState, WeightSet};
pub use series::{windowize, TimeSeries, Windowed};
pub use transforms::{fwht_in_place, pad_input, structured_matvec, StructuredOperator};
