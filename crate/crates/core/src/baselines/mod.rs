pub mod bounds;
pub mod sim;

pub use bounds::*;
pub use sim::*;
