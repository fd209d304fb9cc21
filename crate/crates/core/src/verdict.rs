use serde::{Deserialize, Serialize};

/// Named pass/fail outcome with a short numeric justification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

pub fn all_passed(v: &[Verdict]) -> bool {
    v.iter().all(|x| x.passed)
}

/// Each entry is below `ratio` times its predecessor; exact zeros count as converged.
pub fn decreasing_with_ratio(values: &[f64], ratio: f64) -> bool {
    values.windows(2).all(|w| (w[0] == 0.0 && w[1] == 0.0) || w[1] < ratio * w[0])
}
