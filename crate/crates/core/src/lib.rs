//! Happy-path driven REST API test generation.
//!
//! The pipeline reads an OpenAPI document, asks an LLM to plan and fill a
//! valid request sequence per operation, records every value in an execution
//! trace, derives negative scenarios from that trace, and emits reusable
//! Postman collections that the built-in runner can execute.

// Failures carry their exchanges and are built once per operation.
#![allow(clippy::result_large_err)]

pub mod oas;
pub mod trace;
pub mod engine;
pub mod happy_path;
pub mod negative;
pub mod llm;
pub mod builder;
pub mod runner;
pub mod report;
pub mod pipeline;
