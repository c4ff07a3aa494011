pub mod analytics;
pub mod bilevel;
pub mod clearing;
pub mod error;
pub mod model;
pub mod qp;
pub mod runner;
