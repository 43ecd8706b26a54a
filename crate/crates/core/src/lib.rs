//! Conversational recommender agent.
//!
//! An LLM plans a complete sequence of tool calls for each user turn; the
//! tools (SQL lookup, hard-condition SQL retrieval, ItemCF soft retrieval,
//! ranking, candidate storing and fetching) then run without further LLM
//! involvement, passing candidates through a shared [`memory::CandidateBus`].
//! A critic LLM judges each attempt and can trigger a replan.

pub mod catalog;
pub mod recmodels;
pub mod llm;
pub mod memory;
pub mod toolkit;
pub mod planner;
pub mod turn;
pub mod demogen;
pub mod eval;
pub mod service;
pub mod cli;
