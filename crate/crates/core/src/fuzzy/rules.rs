//! The default five-property system and the rule-file format.
//!
//! Rule files hold one rule per line:
//!
//! ```text
//! # comment
//! IF p1=low AND p2=low AND p3=low AND p4=low AND p5=low THEN out=perfect
//! ```

use std::path::Path;

use super::engine::{FuzzyInferenceSystem, FuzzyRule, DEFAULT_SAMPLES, INPUTS};
use super::{FuzzyError, LinguisticVariable, MembershipFunction};

pub const INPUT_LEVELS: [&str; 3] = ["low", "medium", "high"];

pub const OUTPUT_LABELS: [&str; 7] = [
    "perfect",
    "very_high",
    "high",
    "medium",
    "low",
    "very_low",
    "worst",
];

/// (low, medium, high) supports for P1..P5.
pub const INPUT_SUPPORTS: [[(f64, f64); 3]; INPUTS] = [
    [(0.0, 0.5), (0.4, 0.95), (0.9, 1.0)],
    [(0.0, 0.45), (0.2, 0.95), (0.9, 1.0)],
    [(0.0, 0.4), (0.1, 0.9), (0.8, 1.0)],
    [(0.0, 0.5), (0.4, 0.8), (0.7, 1.0)],
    [(0.0, 0.5), (0.2, 0.9), (0.6, 1.0)],
];

/// Output supports in `OUTPUT_LABELS` order.
pub const OUTPUT_SUPPORTS: [(f64, f64); 7] = [
    (0.0, 0.1),
    (0.0, 0.2),
    (0.1, 0.5),
    (0.3, 0.7),
    (0.5, 0.9),
    (0.7, 1.0),
    (0.8, 1.0),
];

/// Priority weights of P1..P5 in twentieths of a unit (1.0, 0.9, 0.8, 0.7, 0.6).
const PRIORITY_TWENTIETHS: [u32; INPUTS] = [20, 18, 16, 14, 12];

pub fn input_name(index: usize) -> String {
    format!("p{}", index + 1)
}

fn input_variable(index: usize) -> LinguisticVariable {
    let [(_, low_b), (med_a, med_b), (high_a, _)] = INPUT_SUPPORTS[index];
    let low = MembershipFunction::left_shoulder(0.0, med_a, low_b).expect("valid low term");
    let medium = MembershipFunction::triangle(med_a, 0.5 * (med_a + med_b), med_b)
        .expect("valid medium term");
    let high =
        MembershipFunction::right_shoulder(high_a, med_b.min(1.0), 1.0).expect("valid high term");
    LinguisticVariable::new(
        input_name(index),
        0.0,
        1.0,
        vec![
            ("low".into(), low),
            ("medium".into(), medium),
            ("high".into(), high),
        ],
    )
    .expect("valid input variable")
}

fn output_variable() -> LinguisticVariable {
    let terms = OUTPUT_LABELS
        .iter()
        .zip(OUTPUT_SUPPORTS)
        .enumerate()
        .map(|(i, (label, (a, b)))| {
            let mf = if i == 0 {
                MembershipFunction::left_shoulder(a, a, b)
            } else if i == OUTPUT_LABELS.len() - 1 {
                MembershipFunction::right_shoulder(a, b, b)
            } else {
                MembershipFunction::triangle(a, 0.5 * (a + b), b)
            };
            (label.to_string(), mf.expect("valid output term"))
        })
        .collect();
    LinguisticVariable::new("out", 0.0, 1.0, terms).expect("valid output variable")
}

/// Peak of each output term, in 160ths, matching `OUTPUT_SUPPORTS` and the shoulder shapes.
const OUTPUT_PEAKS_160: [u32; 7] = [0, 16, 48, 80, 112, 136, 160];

/// Output label for a combination of input levels (0 = low, 1 = medium, 2 = high).
///
/// The priority-weighted mean of the levels is snapped to the nearest output
/// peak; an exact tie goes to the more severe label. Integer arithmetic keeps
/// ties exact.
pub fn severity_label(levels: &[usize; INPUTS]) -> &'static str {
    // sum of weight/80 * level/2, expressed in 160ths
    let score: u32 = levels
        .iter()
        .zip(PRIORITY_TWENTIETHS)
        .map(|(&l, w)| w * l as u32)
        .sum();
    let mut best = 0;
    for (i, &peak) in OUTPUT_PEAKS_160.iter().enumerate() {
        if score.abs_diff(peak) <= score.abs_diff(OUTPUT_PEAKS_160[best]) {
            best = i;
        }
    }
    OUTPUT_LABELS[best]
}

/// All 3^5 = 243 level combinations with their severity label.
pub fn default_rules() -> Vec<FuzzyRule> {
    let mut rules = Vec::with_capacity(243);
    for code in 0..243usize {
        let mut levels = [0usize; INPUTS];
        let mut rest = code;
        for slot in levels.iter_mut().rev() {
            *slot = rest % 3;
            rest /= 3;
        }
        let antecedent = levels
            .iter()
            .enumerate()
            .map(|(i, &l)| (input_name(i), INPUT_LEVELS[l].to_string()))
            .collect();
        rules.push(FuzzyRule::new(antecedent, severity_label(&levels)));
    }
    rules
}

/// The five-input system with generated rule base and `DEFAULT_SAMPLES` output samples.
pub fn build_default_fis() -> FuzzyInferenceSystem {
    let inputs = (0..INPUTS).map(input_variable).collect();
    FuzzyInferenceSystem::new(inputs, output_variable(), default_rules(), DEFAULT_SAMPLES)
        .expect("default system is valid")
}

/// Parses rule-file text, checking every label against `fis`.
pub fn parse_rules(text: &str, fis: &FuzzyInferenceSystem) -> Result<Vec<FuzzyRule>, FuzzyError> {
    let mut rules = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let rule =
            parse_rule_line(line, fis.output().name()).map_err(|message| FuzzyError::Parse {
                line: line_no,
                message,
            })?;
        fis.validate_rule(&rule)?;
        rules.push(rule);
    }
    if rules.is_empty() {
        return Err(FuzzyError::Parse {
            line: last_line,
            message: "empty rule base".into(),
        });
    }
    Ok(rules)
}

/// Reads and validates a rule file.
pub fn load_rules(
    path: impl AsRef<Path>,
    fis: &FuzzyInferenceSystem,
) -> Result<Vec<FuzzyRule>, FuzzyError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| FuzzyError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_rules(&text, fis)
}

fn parse_rule_line(line: &str, output_name: &str) -> Result<FuzzyRule, String> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let mut iter = tokens.iter().copied().peekable();
    match iter.next() {
        Some(t) if t.eq_ignore_ascii_case("IF") => {}
        _ => return Err("rule must start with IF".into()),
    }
    let mut antecedent = Vec::new();
    loop {
        let clause = iter.next().ok_or("missing clause after IF/AND")?;
        antecedent.push(parse_clause(clause)?);
        match iter.next() {
            Some(t) if t.eq_ignore_ascii_case("AND") => continue,
            Some(t) if t.eq_ignore_ascii_case("THEN") => break,
            Some(t) => return Err(format!("expected AND or THEN, found {t:?}")),
            None => return Err("missing THEN".into()),
        }
    }
    let (var, label) = parse_clause(iter.next().ok_or("missing consequent after THEN")?)?;
    if var != output_name {
        return Err(format!(
            "consequent must assign {output_name}, found {var:?}"
        ));
    }
    if let Some(extra) = iter.next() {
        return Err(format!("unexpected token {extra:?} after consequent"));
    }
    Ok(FuzzyRule::new(antecedent, label))
}

fn parse_clause(token: &str) -> Result<(String, String), String> {
    let (var, label) = token
        .split_once('=')
        .ok_or_else(|| format!("expected var=label, found {token:?}"))?;
    if var.is_empty() || label.is_empty() {
        return Err(format!("expected var=label, found {token:?}"));
    }
    Ok((var.to_string(), label.to_string()))
}
