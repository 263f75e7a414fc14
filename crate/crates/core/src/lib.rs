pub mod llm;
pub mod prompts;
pub mod survey;
pub mod metrics;
pub mod shapley;
pub mod icot;
pub mod forest;
pub mod trace;
pub mod baselines;
pub mod report;
pub mod runner;
