//! Discretised singular integrals, truncations and maximal operators.

pub mod appendix;
pub mod beurling;
pub mod kernel;
pub mod maximal;
pub mod truncation;

pub use kernel::{KernelSpec, ModulusOfContinuity, RadiiSet, RoughKernel, SmoothDiniParams, SmoothKernel};
pub use maximal::{hl_maximal, m_delta, truncated_centered_maximal, MaximalPlan};
pub use truncation::{
    localized_maximal_truncation, maximal_truncation, truncated_apply, TruncatedOperator, TruncationPlan,
    TruncationTable,
};
