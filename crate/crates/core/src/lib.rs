//! Incident reports from dashcam videos through a three-stage
//! vision-language pipeline, with ensembling, caption metrics and a blind
//! A/B scoring service.

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod video;
