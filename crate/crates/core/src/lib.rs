pub mod abstraction;
pub mod cfg;
pub mod engine;
pub mod formula;
pub mod frontend;
pub mod solver;
