pub mod analyze;
pub mod eda;
pub mod prepare;
pub mod split;
pub mod train;
