//! Group-relative policy optimization over scored candidates, and a
//! categorical-bandit simulator that trains against the reward functions.

mod math;
mod sim;

pub use math::{
    categorical_kl, clipped_term, group_advantages, grpo_objective, log_softmax, softmax, Candidate,
    CategoricalPolicy, GrpoConfig, GrpoGroup, Objective, SIGMA_EPS,
};
pub use sim::{
    simulate, synthesize_completion, SimConfig, Simulator, StepRecord, SyntheticPolicy, TrainingReport,
};
