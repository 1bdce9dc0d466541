//! Numeric substrate: log-space weights, binomial coefficients, exact
//! rationals and compensated summation.

mod binomial;
mod logweight;
mod summation;
mod weight;

pub use binomial::{
    binomial_ratio_chain, binomial_u128, ln_binomial_row_cached, log_binomial,
    log_binomial_ratio_chain,
};
pub use logweight::{LogWeight, UNDERFLOW_LOG};
pub use summation::{compensated_alternating_sum, NeumaierSum};
pub use weight::{exact_binomial, rational, Rational, Weight};
