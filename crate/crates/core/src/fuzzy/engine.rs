use serde::{Deserialize, Serialize};

use super::{FuzzyError, LinguisticVariable};

/// Number of trust-property inputs the system evaluates.
pub const INPUTS: usize = 5;

/// Default number of uniform output samples used for defuzzification.
pub const DEFAULT_SAMPLES: usize = 1001;

/// `IF var=label AND ... THEN out=label`, always at unit weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRule {
    pub antecedent: Vec<(String, String)>,
    pub consequent: String,
    pub weight: f64,
}

impl FuzzyRule {
    pub fn new(antecedent: Vec<(String, String)>, consequent: impl Into<String>) -> Self {
        Self {
            antecedent,
            consequent: consequent.into(),
            weight: 1.0,
        }
    }
}

impl std::fmt::Display for FuzzyRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "IF ")?;
        for (i, (var, label)) in self.antecedent.iter().enumerate() {
            if i > 0 {
                write!(f, " AND ")?;
            }
            write!(f, "{var}={label}")?;
        }
        write!(f, " THEN out={}", self.consequent)
    }
}

#[derive(Debug, Clone)]
struct CompiledRule {
    antecedent: Vec<(usize, usize)>,
    consequent: usize,
}

/// Mamdani system with five inputs and one output.
///
/// Immutable once built. The output membership table for the configured
/// sample count is precomputed so `infer` only has to clip and aggregate.
#[derive(Debug, Clone)]
pub struct FuzzyInferenceSystem {
    inputs: Vec<LinguisticVariable>,
    output: LinguisticVariable,
    rules: Vec<FuzzyRule>,
    compiled: Vec<CompiledRule>,
    samples: usize,
    // table[term][i] = membership of sample i in output term `term`
    table: Vec<Vec<f64>>,
}

/// Sampled aggregate output curve and its centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub lower: f64,
    pub upper: f64,
    pub aggregate: Vec<f64>,
    pub crisp: f64,
}

impl FuzzyInferenceSystem {
    pub fn new(
        inputs: Vec<LinguisticVariable>,
        output: LinguisticVariable,
        rules: Vec<FuzzyRule>,
        samples: usize,
    ) -> Result<Self, FuzzyError> {
        if inputs.len() != INPUTS {
            return Err(FuzzyError::InvalidSystem(format!(
                "expected {INPUTS} inputs, got {}",
                inputs.len()
            )));
        }
        if output.domain() != (0.0, 1.0) {
            return Err(FuzzyError::InvalidSystem(format!(
                "output domain must be [0, 1], got {:?}",
                output.domain()
            )));
        }
        if samples < 2 {
            return Err(FuzzyError::TooFewSamples(samples));
        }
        for (i, v) in inputs.iter().enumerate() {
            if inputs[..i].iter().any(|o| o.name() == v.name()) || v.name() == output.name() {
                return Err(FuzzyError::InvalidSystem(format!(
                    "duplicate variable name {:?}",
                    v.name()
                )));
            }
        }
        if rules.is_empty() {
            return Err(FuzzyError::EmptyRuleBase);
        }
        let compiled = rules
            .iter()
            .map(|r| compile_rule(&inputs, &output, r))
            .collect::<Result<Vec<_>, _>>()?;
        let table = output_table(&output, samples);
        Ok(Self {
            inputs,
            output,
            rules,
            compiled,
            samples,
            table,
        })
    }

    /// Same variables, different rule base.
    pub fn with_rules(&self, rules: Vec<FuzzyRule>) -> Result<Self, FuzzyError> {
        Self::new(
            self.inputs.clone(),
            self.output.clone(),
            rules,
            self.samples,
        )
    }

    /// Same variables and rules, different output sample count.
    pub fn with_samples(&self, samples: usize) -> Result<Self, FuzzyError> {
        Self::new(
            self.inputs.clone(),
            self.output.clone(),
            self.rules.clone(),
            samples,
        )
    }

    pub fn inputs(&self) -> &[LinguisticVariable] {
        &self.inputs
    }

    pub fn output(&self) -> &LinguisticVariable {
        &self.output
    }

    pub fn rules(&self) -> &[FuzzyRule] {
        &self.rules
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub(crate) fn validate_rule(&self, rule: &FuzzyRule) -> Result<(), FuzzyError> {
        compile_rule(&self.inputs, &self.output, rule).map(|_| ())
    }

    /// Firing strength per output term: max over rules of the min antecedent degree.
    pub fn term_strengths(&self, activations: &[f64; INPUTS]) -> Result<Vec<f64>, FuzzyError> {
        for (index, &value) in activations.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(FuzzyError::InvalidActivation { index, value });
            }
        }
        let degrees: Vec<Vec<f64>> = self
            .inputs
            .iter()
            .zip(activations)
            .map(|(var, &x)| var.terms().iter().map(|(_, mf)| mf.degree(x)).collect())
            .collect();
        let mut strengths = vec![0.0f64; self.output.terms().len()];
        for rule in &self.compiled {
            let firing = rule
                .antecedent
                .iter()
                .map(|&(var, term)| degrees[var][term])
                .fold(1.0f64, f64::min);
            let slot = &mut strengths[rule.consequent];
            *slot = slot.max(firing);
        }
        Ok(strengths)
    }

    /// Crisp output only, without materialising the aggregate curve.
    pub fn crisp(&self, activations: &[f64; INPUTS]) -> Result<f64, FuzzyError> {
        let strengths = self.term_strengths(activations)?;
        if strengths.iter().all(|&s| s <= 0.0) {
            return Err(FuzzyError::AllRulesSilent);
        }
        let (lower, upper) = self.output.domain();
        let h = (upper - lower) / (self.samples - 1) as f64;
        let last = self.samples - 1;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.samples {
            let mut f = 0.0f64;
            for (t, &s) in strengths.iter().enumerate() {
                if s > 0.0 {
                    f = f.max(self.table[t][i].min(s));
                }
            }
            let w = if i == 0 || i == last { 0.5 } else { 1.0 };
            let x = lower + i as f64 * h;
            num += w * x * f;
            den += w * f;
        }
        if den <= 0.0 {
            return Err(FuzzyError::AllRulesSilent);
        }
        Ok((num / den).clamp(lower, upper))
    }
}

fn compile_rule(
    inputs: &[LinguisticVariable],
    output: &LinguisticVariable,
    rule: &FuzzyRule,
) -> Result<CompiledRule, FuzzyError> {
    if rule.antecedent.is_empty() {
        return Err(FuzzyError::InvalidRule(format!("{rule}: empty antecedent")));
    }
    if rule.weight != 1.0 {
        return Err(FuzzyError::InvalidRule(format!(
            "{rule}: weight must be 1.0, got {}",
            rule.weight
        )));
    }
    let mut antecedent = Vec::with_capacity(rule.antecedent.len());
    for (var_name, label) in &rule.antecedent {
        let var = inputs
            .iter()
            .position(|v| v.name() == var_name)
            .ok_or_else(|| FuzzyError::UnknownLabel(var_name.clone()))?;
        if antecedent.iter().any(|&(v, _)| v == var) {
            return Err(FuzzyError::InvalidRule(format!(
                "{rule}: variable {var_name} appears twice"
            )));
        }
        let term = inputs[var]
            .term_index(label)
            .ok_or_else(|| FuzzyError::UnknownLabel(format!("{var_name}={label}")))?;
        antecedent.push((var, term));
    }
    let consequent = output.term_index(&rule.consequent).ok_or_else(|| {
        FuzzyError::UnknownLabel(format!("{}={}", output.name(), rule.consequent))
    })?;
    Ok(CompiledRule {
        antecedent,
        consequent,
    })
}

fn output_table(output: &LinguisticVariable, samples: usize) -> Vec<Vec<f64>> {
    let (lower, upper) = output.domain();
    let h = (upper - lower) / (samples - 1) as f64;
    output
        .terms()
        .iter()
        .map(|(_, mf)| {
            (0..samples)
                .map(|i| mf.degree(lower + i as f64 * h))
                .collect()
        })
        .collect()
}

/// Mamdani inference: min for AND, min implication, max aggregation, COG.
pub fn infer(
    fis: &FuzzyInferenceSystem,
    activations: &[f64; INPUTS],
) -> Result<InferenceResult, FuzzyError> {
    let strengths = fis.term_strengths(activations)?;
    if strengths.iter().all(|&s| s <= 0.0) {
        return Err(FuzzyError::AllRulesSilent);
    }
    let aggregate: Vec<f64> = (0..fis.samples)
        .map(|i| {
            strengths
                .iter()
                .enumerate()
                .map(|(t, &s)| fis.table[t][i].min(s))
                .fold(0.0, f64::max)
        })
        .collect();
    let (lower, upper) = fis.output.domain();
    let crisp = defuzzify_cog(&aggregate, lower, upper).map_err(|e| match e {
        FuzzyError::ZeroMass => FuzzyError::AllRulesSilent,
        other => other,
    })?;
    Ok(InferenceResult {
        lower,
        upper,
        aggregate,
        crisp,
    })
}

/// Centre of gravity of a curve sampled uniformly over `[lower, upper]`,
/// integrated with the trapezoidal rule.
pub fn defuzzify_cog(curve: &[f64], lower: f64, upper: f64) -> Result<f64, FuzzyError> {
    let n = curve.len();
    if n < 2 {
        return Err(FuzzyError::TooFewSamples(n));
    }
    let h = (upper - lower) / (n - 1) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &f) in curve.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        num += w * (lower + i as f64 * h) * f;
        den += w * f;
    }
    if den <= 0.0 {
        return Err(FuzzyError::ZeroMass);
    }
    Ok((num / den).clamp(lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuzzy::build_default_fis;

    fn sample(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..n).map(|i| f(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn cog_of_constant_is_midpoint() {
        let c = defuzzify_cog(&vec![0.4; 1001], 0.0, 1.0).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cog_of_symmetric_triangle_is_apex() {
        let curve = sample(1001, |x| (1.0 - (x - 0.3).abs() / 0.2).max(0.0));
        let c = defuzzify_cog(&curve, 0.0, 1.0).unwrap();
        assert!((c - 0.3).abs() < 1e-9, "{c}");
    }

    #[test]
    fn cog_zero_mass_and_short_curves() {
        assert!(matches!(
            defuzzify_cog(&[0.0; 11], 0.0, 1.0),
            Err(FuzzyError::ZeroMass)
        ));
        assert!(matches!(
            defuzzify_cog(&[1.0], 0.0, 1.0),
            Err(FuzzyError::TooFewSamples(1))
        ));
    }

    #[test]
    fn infer_rejects_out_of_domain_activation() {
        let fis = build_default_fis();
        let err = infer(&fis, &[1.1, 0.5, 0.5, 0.5, 0.5]).unwrap_err();
        assert!(matches!(
            err,
            FuzzyError::InvalidActivation { index: 0, .. }
        ));
        assert!(infer(&fis, &[0.5, f64::NAN, 0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn silent_rule_base_is_reported() {
        let fis = build_default_fis();
        let only_high = fis
            .with_rules(vec![FuzzyRule::new(
                vec![("p1".into(), "high".into())],
                "worst",
            )])
            .unwrap();
        assert!(matches!(
            infer(&only_high, &[0.1; 5]),
            Err(FuzzyError::AllRulesSilent)
        ));
        assert!(matches!(
            only_high.crisp(&[0.1; 5]),
            Err(FuzzyError::AllRulesSilent)
        ));
    }

    #[test]
    fn crisp_fast_path_matches_infer() {
        let fis = build_default_fis();
        for act in [
            [0.05; 5],
            [0.97, 0.97, 0.95, 0.95, 0.95],
            [0.3, 0.6, 0.45, 0.8, 0.2],
        ] {
            let full = infer(&fis, &act).unwrap().crisp;
            let fast = fis.crisp(&act).unwrap();
            assert!((full - fast).abs() < 1e-12);
        }
    }

    #[test]
    fn rule_validation() {
        let fis = build_default_fis();
        let bad_weight = FuzzyRule {
            antecedent: vec![("p1".into(), "low".into())],
            consequent: "perfect".into(),
            weight: 0.5,
        };
        assert!(fis.with_rules(vec![bad_weight]).is_err());
        let repeated = FuzzyRule::new(
            vec![("p1".into(), "low".into()), ("p1".into(), "high".into())],
            "perfect",
        );
        assert!(fis.with_rules(vec![repeated]).is_err());
        assert!(matches!(
            fis.with_rules(vec![FuzzyRule::new(vec![], "perfect")]),
            Err(FuzzyError::InvalidRule(_))
        ));
        assert!(matches!(
            fis.with_rules(vec![]),
            Err(FuzzyError::EmptyRuleBase)
        ));
    }

    #[test]
    fn display_matches_rule_file_grammar() {
        let r = FuzzyRule::new(
            vec![("p1".into(), "low".into()), ("p2".into(), "medium".into())],
            "high",
        );
        assert_eq!(r.to_string(), "IF p1=low AND p2=medium THEN out=high");
    }
}
