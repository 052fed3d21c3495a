pub mod almost_analytic;
pub mod cayley;
pub mod cli;
pub mod function_model;
pub mod hs_integrator;
pub mod matrix_core;
pub mod rng;
