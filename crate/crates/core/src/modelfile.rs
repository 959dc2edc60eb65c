//! Reading models from TOML files.
//!
//! ```toml
//! label = "special binary m=0.8"
//! mode = "subcritical"
//!
//! [[jump]]
//! offset = -1
//! p = "1/2"
//!
//! [[jump]]
//! offset = 1
//! p = "1/2"
//!
//! [[offspring]]
//! count = 0
//! p = 0.2
//!
//! [[offspring]]
//! count = 1
//! p = "4/5"
//! ```
//!
//! Probabilities are decimals or `p/q` rational strings.

use std::path::Path;

use serde::Deserialize;

use crate::error::{BrwError, Result};
use crate::model::{JumpDistribution, MeanMode, Mode, ModelSpec, OffspringDistribution};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(default)]
    label: Option<String>,
    mode: Mode,
    jump: Vec<RawJump>,
    offspring: Vec<RawOffspring>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJump {
    offset: i64,
    p: Probability,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOffspring {
    count: usize,
    p: Probability,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Probability {
    Number(f64),
    Text(String),
}

impl Probability {
    fn value(&self) -> std::result::Result<f64, String> {
        match self {
            Probability::Number(x) => Ok(*x),
            Probability::Text(t) => parse_probability(t),
        }
    }
}

/// Parses `"0.25"` or `"1/4"`.
pub fn parse_probability(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim();
    if let Some((num, den)) = t.split_once('/') {
        let num: u64 = num.trim().parse().map_err(|_| format!("bad numerator in {t:?}"))?;
        let den: u64 = den.trim().parse().map_err(|_| format!("bad denominator in {t:?}"))?;
        if den == 0 {
            return Err(format!("zero denominator in {t:?}"));
        }
        Ok(num as f64 / den as f64)
    } else {
        t.parse::<f64>().map_err(|_| format!("{t:?} is neither a decimal nor a p/q fraction"))
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

/// Parses and validates a model, reporting every violated invariant at once.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let raw: RawModel = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        BrwError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let mut problems = Vec::new();
    let mut jump = Vec::new();
    for j in &raw.jump {
        match j.p.value() {
            Ok(p) => jump.push((j.offset, p)),
            Err(e) => problems.push(format!("jump: {e}")),
        }
    }
    let mut offspring = Vec::new();
    for o in &raw.offspring {
        match o.p.value() {
            Ok(p) => offspring.push((o.count, p)),
            Err(e) => problems.push(format!("offspring: {e}")),
        }
    }
    problems.extend(JumpDistribution::violations(&jump, MeanMode::Strict));
    let off = OffspringDistribution::from_pairs(&offspring);
    match &off {
        Err(BrwError::Invalid(list)) => problems.extend(list.iter().cloned()),
        Err(e) => problems.push(e.to_string()),
        Ok(o) => problems.extend(ModelSpec::mode_violations(o, raw.mode)),
    }
    if !problems.is_empty() {
        return Err(BrwError::Invalid(problems));
    }
    let label = raw.label.unwrap_or_else(|| "unnamed".to_string());
    ModelSpec::new(JumpDistribution::new(jump)?, off?, raw.mode, label)
}

/// Reads and validates a model file.
pub fn load_model(path: &Path) -> Result<ModelSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BrwError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPECIAL: &str = r#"
label = "special"
mode = "subcritical"
jump = [{ offset = -1, p = "1/2" }, { offset = 1, p = 0.5 }]
offspring = [{ count = 0, p = "1/5" }, { count = 1, p = "4/5" }]
"#;

    #[test]
    fn parses_inline_and_fraction_forms() {
        let m = parse_model(SPECIAL).unwrap();
        assert!(m.is_special_binary());
        assert!((m.mean_offspring() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn reports_all_violations() {
        let text = r#"
mode = "subcritical"
jump = [{ offset = -1, p = 0.4 }, { offset = 1, p = 0.5 }]
offspring = [{ count = 0, p = 0.2 }, { count = 1, p = "79/100" }]
"#;
        let BrwError::Invalid(list) = parse_model(text).unwrap_err() else { panic!() };
        assert!(list.iter().any(|s| s.contains("mean")), "{list:?}");
        assert!(list.iter().any(|s| s.contains("offspring") && s.contains("sum")), "{list:?}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = "mode = \"subcritical\"\njump = [\n  { offset = -1 p = 1 }\n]\n";
        match parse_model(text).unwrap_err() {
            BrwError::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 1);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn probabilities() {
        assert_eq!(parse_probability("3/4").unwrap(), 0.75);
        assert_eq!(parse_probability(" 0.125 ").unwrap(), 0.125);
        assert!(parse_probability("1/0").is_err());
        assert!(parse_probability("half").is_err());
    }
}
