pub mod datagen;
pub mod detector;
pub mod fuzzy;
pub mod harness;
pub mod healing;
pub mod ingest;
pub mod metrics;
pub mod reputation;
