//! Negative scenarios derived from a frozen happy path: the model proposes
//! structural and functional oracles, then invalid values that replace only
//! the targeted keys of the final request.

mod invalid;
mod scenarios;
mod violation;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::GatewayError;
use crate::oas::{ConstraintKind, LocatorSegment, ParamLocation, ParamLocator};
use crate::trace::{
    Direction, ExecutionTrace, KeySegment, Literal, ResolvedValues, Section, TraceError, TraceKey, TraceValue,
};

pub use invalid::generate_invalid_values;
pub use scenarios::generate_scenarios;
pub use violation::violates;

pub const DEFAULT_SCENARIOS_PER_KIND: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    HappyPath,
    Structural,
    Functional,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::HappyPath, TestKind::Structural, TestKind::Functional];

    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::HappyPath => "happy_path",
            TestKind::Structural => "structural",
            TestKind::Functional => "functional",
        }
    }

    pub fn name_suffix(self) -> &'static str {
        match self {
            TestKind::HappyPath => "",
            TestKind::Structural => "_ST",
            TestKind::Functional => "_FN",
        }
    }

    /// Status class the final request should get: `2` or `4`.
    pub fn expected_class(self) -> u16 {
        match self {
            TestKind::HappyPath => 2,
            _ => 4,
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "happy" | "happy_path" | "happypath" | "happy-path" => Ok(TestKind::HappyPath),
            "structural" => Ok(TestKind::Structural),
            "functional" => Ok(TestKind::Functional),
            other => Err(format!("unknown test kind '{other}' (expected happy, structural or functional)")),
        }
    }
}

/// The catalog entry a structural scenario violates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedConstraint {
    pub locator: ParamLocator,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestScenario {
    pub name: String,
    pub kind: TestKind,
    pub description: String,
    pub target_keys: BTreeSet<TraceKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<CitedConstraint>,
    /// Always `4xx` for negative scenarios.
    pub expected_status_class: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvalidValueSet {
    pub scenario: String,
    pub overrides: IndexMap<TraceKey, Literal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub max_structural: usize,
    pub max_functional: usize,
    /// Character budget of the operation description in prompts.
    pub summary_budget: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            max_structural: DEFAULT_SCENARIOS_PER_KIND,
            max_functional: DEFAULT_SCENARIOS_PER_KIND,
            summary_budget: 2000,
        }
    }
}

impl ScenarioConfig {
    pub fn limit(&self, kind: TestKind) -> usize {
        match kind {
            TestKind::HappyPath => 1,
            TestKind::Structural => self.max_structural,
            TestKind::Functional => self.max_functional,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NegativeError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("no valid negative scenario was proposed")]
    NoScenarios,
    #[error("override for scenario '{scenario}' does not violate the cited constraint: {reason}")]
    ConstraintNotViolated { scenario: String, reason: String },
    #[error("key '{0}' is not part of the happy-path values")]
    UnknownKey(TraceKey),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Replaces exactly the override keys; every other value is kept as is.
pub fn substitute(happy: &ResolvedValues, invalid: &InvalidValueSet) -> Result<ResolvedValues, NegativeError> {
    if let Some(k) = invalid.overrides.keys().find(|k| !happy.contains_key(*k)) {
        return Err(NegativeError::UnknownKey(k.clone()));
    }
    Ok(happy
        .iter()
        .map(|(k, v)| (k.clone(), invalid.overrides.get(k).unwrap_or(v).clone()))
        .collect())
}

/// Same substitution on the tagged trace: overridden entries, dependent or
/// not, become generated literals in place.
pub fn apply_overrides(trace: &ExecutionTrace, invalid: &InvalidValueSet) -> Result<ExecutionTrace, NegativeError> {
    if let Some(k) = invalid.overrides.keys().find(|k| !trace.contains(k)) {
        return Err(NegativeError::UnknownKey(k.clone()));
    }
    let mut out = ExecutionTrace::new();
    for (k, v) in trace.entries() {
        let v = match invalid.overrides.get(k) {
            Some(l) => TraceValue::Generated(l.clone()),
            None => v.clone(),
        };
        out.insert(k.clone(), v)?;
    }
    Ok(out)
}

/// Locator of the schema that constrains a request key.
pub fn locator_of(key: &TraceKey) -> Option<ParamLocator> {
    if key.direction() != Direction::Request {
        return None;
    }
    let location = match key.section() {
        Section::Path => ParamLocation::Path,
        Section::Query => ParamLocation::Query,
        Section::Header => ParamLocation::Header,
        Section::Cookie => ParamLocation::Cookie,
        Section::Body => ParamLocation::Body,
        Section::Status => return None,
    };
    let path = key
        .segments()
        .iter()
        .map(|s| match s {
            KeySegment::Field(f) => LocatorSegment::Field(f.clone()),
            KeySegment::Index(_) => LocatorSegment::Items,
        })
        .collect();
    Some(ParamLocator { location, path })
}
