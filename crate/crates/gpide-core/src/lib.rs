//! Core library for PID-inspired history encoding and tracking control:
//! numerics, simulators, encoders, PID tuning, soft actor-critic training,
//! and the evaluation harness.

pub mod encoders;
pub mod envs;
pub mod eval;
pub mod numcore;
pub mod pid;
pub mod sac;
