use serde::{Deserialize, Serialize};

use super::{FuzzyError, MembershipFunction};

/// A named fuzzy variable over a closed domain `[lower, upper]` with labelled terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticVariable {
    name: String,
    lower: f64,
    upper: f64,
    terms: Vec<(String, MembershipFunction)>,
}

impl LinguisticVariable {
    pub fn new(
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        terms: Vec<(String, MembershipFunction)>,
    ) -> Result<Self, FuzzyError> {
        let name = name.into();
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(FuzzyError::InvalidVariable(format!(
                "{name}: domain [{lower}, {upper}] is empty"
            )));
        }
        if terms.is_empty() {
            return Err(FuzzyError::InvalidVariable(format!("{name}: no terms")));
        }
        for (i, (label, mf)) in terms.iter().enumerate() {
            if terms[..i].iter().any(|(other, _)| other == label) {
                return Err(FuzzyError::InvalidVariable(format!(
                    "{name}: duplicate term label {label:?}"
                )));
            }
            let (lo, hi) = mf.span();
            if lo < lower || hi > upper {
                return Err(FuzzyError::InvalidVariable(format!(
                    "{name}: term {label:?} spans [{lo}, {hi}] outside [{lower}, {upper}]"
                )));
            }
        }
        Ok(Self {
            name,
            lower,
            upper,
            terms,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn terms(&self) -> &[(String, MembershipFunction)] {
        &self.terms
    }

    pub fn term_index(&self, label: &str) -> Option<usize> {
        self.terms.iter().position(|(l, _)| l == label)
    }

    pub fn term(&self, label: &str) -> Option<&MembershipFunction> {
        self.terms
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, mf)| mf)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|(l, _)| l.as_str())
    }
}
