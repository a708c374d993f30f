//! Evaluation harness measuring how an LLM's answer-generation accuracy
//! relates to its ability to judge other models' answers.

pub mod corpus;
pub mod extraction;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod providers;
pub mod report;
