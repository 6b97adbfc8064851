//! Dataset construction: letter-image corpus loading, event-log session
//! pipelines, experiment partitioning and synthetic corpus generators.

pub mod ocr;
pub mod sessions;
pub mod synthetic;
