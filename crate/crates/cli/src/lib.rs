pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod studies;
pub mod suite;
