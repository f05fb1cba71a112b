pub mod graph;
pub mod instgen;
pub mod master;
pub mod pricer;
pub mod gnn;
pub mod reduce;
pub mod driver;
pub mod trainer;
pub mod cli;
