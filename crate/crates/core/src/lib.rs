pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod eval;
pub mod graph;
pub mod model;
pub mod report;
pub mod rng;
pub mod search;
pub mod sweep;
pub mod training;
