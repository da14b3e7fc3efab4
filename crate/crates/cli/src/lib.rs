pub mod bench;
pub mod config;
pub mod reference;
pub mod report;
pub mod seeds;
pub mod svg;
