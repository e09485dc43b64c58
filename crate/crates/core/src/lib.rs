pub mod agent;
pub mod baseline;
pub mod env;
pub mod harness;
pub mod nn;
pub mod trajectory;
