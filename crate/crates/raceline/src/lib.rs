//! Vehicle dynamics and minimum-lap-time optimization on 3D tracks.
//!
//! The vehicle is modeled as a six-joint serial chain rooted in a banked
//! NURBS track ribbon: a track joint advancing along the centerline, lateral
//! and yaw freedoms on the road plane, and bounce/pitch/roll of the sprung
//! mass. Forward dynamics run through an articulated-body recursion with
//! tire forces and load transfers closed by seven algebraic equations, and a
//! direct-collocation transcription turns the resulting DAE into a sparse
//! nonlinear program solved by a built-in interior-point method.
//!
//! Entry points:
//!
//! * [`track::TrackSpline`] — banked 3D centerline geometry.
//! * [`chain`] / [`aba`] — kinematic chain and forward dynamics.
//! * [`roadtire`] — tire forces, load transfers, algebraic residuals.
//! * [`dynamics`] — DAE assembly, time- and spatial-domain simulation.
//! * [`ocp`] — collocation transcription and the NLP solver.
//! * [`cli`] — the command implementations behind the `raceline` binary.
//!
//! The `examples/` directory contains one runnable example per capability;
//! `cargo run -p raceline --example minimum_lap_time` solves a full
//! minimum-lap-time problem on the bundled oval.

pub mod aba;
pub mod chain;
pub mod cli;
pub mod dynamics;
pub mod liegroup;
pub mod ocp;
pub mod params;
pub mod roadtire;
pub mod scalar;
pub mod track;

pub use scalar::Real;
