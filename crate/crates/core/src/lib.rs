//! Core engine: task registry, data pipe, plan language, planner, executor,
//! responder, model gateway and translation.

pub mod datapipe;
pub mod engine;
pub mod executor;
pub mod llm;
pub mod plan;
pub mod planner;
pub mod prompts;
pub mod response;
pub mod session;
pub mod task;
pub mod trace;
pub mod translation;
pub mod value;
