//! File formats: CSV data, JSON traces, SVG plots and synthetic datasets.

pub mod csv;
pub mod svg;
pub mod synth;
pub mod trace;
