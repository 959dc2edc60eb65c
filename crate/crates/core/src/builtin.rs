//! The model set shipped with the crate.

use crate::error::{BrwError, Result};
use crate::model::{Mode, ModelSpec};
use crate::modelfile::parse_model;

/// `(name, file contents)` for every built-in model.
pub const BUILTIN: &[(&str, &str)] = &[
    ("special-0.5", include_str!("../models/special-0.5.toml")),
    ("special-0.8", include_str!("../models/special-0.8.toml")),
    ("special-0.9", include_str!("../models/special-0.9.toml")),
    ("period2", include_str!("../models/period2.toml")),
    ("range2", include_str!("../models/range2.toml")),
    ("supercritical", include_str!("../models/supercritical.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|&(n, _)| n)
}

/// Looks up a built-in model by name.
pub fn builtin(name: &str) -> Result<ModelSpec> {
    let (_, text) = BUILTIN
        .iter()
        .find(|&&(n, _)| n == name)
        .ok_or_else(|| BrwError::Config(format!("no built-in model named {name:?}")))?;
    parse_model(text)
}

/// All built-in subcritical models.
pub fn subcritical() -> Vec<(&'static str, ModelSpec)> {
    BUILTIN
        .iter()
        .map(|&(n, t)| (n, parse_model(t).expect("built-in models are valid")))
        .filter(|(_, m)| m.mode == Mode::Subcritical)
        .collect()
}
