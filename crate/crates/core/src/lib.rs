//! Spreadsheet audit engine.

pub mod formula;
pub mod graph;
pub mod model;
pub mod par;
pub mod risk;
pub mod structure;
pub mod experiment;
pub mod report;
