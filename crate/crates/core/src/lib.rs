//! An exact-arithmetic laboratory for p-adic stability of nonlinear
//! recurrences: exact solutions over finite posets, N-perturbations (exact,
//! floating point and fixed point), projected precision loss, and the
//! Robbins stability inequality.

pub mod campaign;
pub mod dsl;
pub mod families;
pub mod field;
pub mod fixed;
pub mod perturb;
pub mod pfloat;
pub mod recurrence;
pub mod stability;
