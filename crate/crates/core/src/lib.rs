pub mod fmt;
pub mod model;
pub mod pathsim;
pub mod rng;
pub mod stats;
pub mod boundary;
pub mod fode;
pub mod lfd;
pub mod detector;
pub mod cli;
