//! Battery state-of-charge simulation for a PWM-driven four-wheel robot and
//! sparse identification of closed-form SOC models from the simulated data.
//!
//! * [`sim`]: RK4 motor/chassis/battery simulation and dataset generation
//! * [`library`]: candidate functions and design matrices
//! * [`regression`]: OLS, ridge, LASSO and thresholded least squares
//! * [`models`]: the identified model forms, the two-regime theoretical model, fitting
//! * [`validation`]: error metrics and the published reference tables

mod csvfmt;
pub mod library;
pub mod models;
pub mod regression;
pub mod sim;
pub mod validation;
