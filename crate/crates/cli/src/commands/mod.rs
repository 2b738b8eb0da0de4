pub mod analyze;
pub mod bounds;
pub mod curve;
pub mod frontier;
pub mod reproduce;
pub mod simulate;
