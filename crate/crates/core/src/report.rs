//! Named check reports shared by measure validation and coefficient
//! hypothesis checks.

use std::fmt;

#[derive(Debug, Clone)]
pub struct NamedCheck {
    pub name: String,
    pub passed: bool,
    /// Whether a failure of this check must block downstream simulation.
    pub required: bool,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<NamedCheck>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        name: &str,
        passed: bool,
        required: bool,
        value: Option<f64>,
        detail: impl Into<String>,
    ) {
        self.checks.push(NamedCheck {
            name: name.to_string(),
            passed,
            required,
            value,
            detail: detail.into(),
        });
    }

    /// True when every required check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.required)
    }

    pub fn check(&self, name: &str) -> Option<&NamedCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &NamedCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "pass" } else { "FAIL" };
            let kind = if c.required { "" } else { " (informational)" };
            match c.value {
                Some(v) => writeln!(f, "  [{status}] {}{kind}: {v:.9e} {}", c.name, c.detail)?,
                None => writeln!(f, "  [{status}] {}{kind}: {}", c.name, c.detail)?,
            }
        }
        Ok(())
    }
}
