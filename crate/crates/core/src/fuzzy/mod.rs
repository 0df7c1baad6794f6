//! Mamdani fuzzy inference with piecewise-linear memberships.

mod engine;
mod membership;
mod rules;
mod variable;

use thiserror::Error;

pub use engine::{
    defuzzify_cog, infer, FuzzyInferenceSystem, FuzzyRule, InferenceResult, DEFAULT_SAMPLES, INPUTS,
};
pub use membership::{membership_degree, MembershipFunction};
pub use rules::{
    build_default_fis, default_rules, input_name, load_rules, parse_rules, severity_label,
    INPUT_LEVELS, INPUT_SUPPORTS, OUTPUT_LABELS, OUTPUT_SUPPORTS,
};
pub use variable::LinguisticVariable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("invalid membership function: {0}")]
    InvalidMembership(String),
    #[error("invalid linguistic variable: {0}")]
    InvalidVariable(String),
    #[error("invalid inference system: {0}")]
    InvalidSystem(String),
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("rule base is empty")]
    EmptyRuleBase,
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("rule file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("activation {index} = {value} outside [0, 1]")]
    InvalidActivation { index: usize, value: f64 },
    #[error("no rule fired for the given activations")]
    AllRulesSilent,
    #[error("aggregate curve has zero mass")]
    ZeroMass,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{0}")]
    Io(String),
}
