//! Command-line front end for the backdoor laboratory: configuration,
//! stage orchestration with resumable runs, and report plotting.

pub mod placeholder {}
