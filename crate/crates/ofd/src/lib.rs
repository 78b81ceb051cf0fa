//! Optimal flexibility design (OFD) for load aggregators.
//!
//! An aggregator bundling uncertain, non-convex devices (PV, batteries, EVs,
//! TCLs) must submit a battery-style bidding polytope `G p <= x` to the market
//! operator. This crate implements the full design pipeline:
//!
//! 1. generate a labeled dataset of (non)-disaggregatable aggregate schedules
//!    by solving chance-sampled mixed-integer disaggregation problems,
//! 2. train a PSD-constrained convex quadratic classifier whose 0-sublevel
//!    set is an ellipsoidal surrogate of the feasible set,
//! 3. inner-approximate the ellipsoid by a polytope (polyhedral ball
//!    approximation + Fourier-Motzkin projection), and
//! 4. fit the maximum-volume market-format polytope inside it via a
//!    Farkas-lemma containment linear program.
//!
//! Everything runs on the in-house dense LP/MILP solvers in [`opt_core`].

pub mod classifier;
pub mod cli;
pub mod dataset_gen;
pub mod devices;
pub mod disagg;
pub mod eval;
pub mod flex_design;
pub mod market_model;
pub mod opt_core;
pub mod poly_geom;
