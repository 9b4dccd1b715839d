pub mod baseline;
pub mod eval;
pub mod preprocess;
pub mod report;
pub mod sample;
pub mod synth;
pub mod train;
