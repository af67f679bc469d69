//! Differentiation core: reverse-mode tape, forward-mode duals, the generic
//! scalar trait tying them together, and the network primitives.

mod derivs;
mod dual;
mod mlp;
mod params_io;
mod scalar;
mod tape;

pub use derivs::{
    directional_derivative, input_gradient, input_hessian, second_directional,
    value_and_gradient, ScalarFn,
};
pub use dual::Dual;
pub use mlp::{init_rng, Activation, Mlp, MlpArch};
pub use params_io::{
    decode_params, encode_params, read_params, write_params, BlockEntry, NetworkEntry,
    ParamsHeader, PARAMS_FORMAT,
};
pub use scalar::{dot, lift, sigmoid, softplus, values, Scalar};
pub use tape::{Gradients, Tape, Var};
