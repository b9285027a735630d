//! Desk-scale multiscale renormalization-group engine for a two-dimensional
//! fermion gas: norm-domain arithmetic, Fermi-curve sectorization, torus
//! kernels, an exact small Grassmann algebra, ladder algebra and the
//! counterterm flow.

pub mod config;
pub mod geometry;
pub mod grassmann;
pub mod kernels;
pub mod ladders;
pub mod norm_domain;
pub mod rgflow;
