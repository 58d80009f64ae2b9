use std::fmt;

use serde::{Deserialize, Serialize};

/// An exact accuracy `correct / total`, rendered to four decimals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub correct: u64,
    pub total: u64,
}

impl Ratio {
    pub fn new(correct: u64, total: u64) -> Self {
        Self { correct, total }
    }

    pub fn value(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// Accuracy in units of 1e-4, rounded half up with integer arithmetic.
    pub fn basis_points(&self) -> i64 {
        if self.total == 0 {
            return 0;
        }
        ((self.correct as u128 * 20_000 + self.total as u128) / (2 * self.total as u128)) as i64
    }

    pub fn record(&mut self, correct: bool) {
        self.total += 1;
        self.correct += u64::from(correct);
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_units(self.basis_points(), false))
    }
}

/// Renders 1e-4 units the way the comparison tables do: `.9007`, `1.0000`,
/// `0.0000`, and with `signed`, `+.0067` / `-.0012`.
pub fn format_units(units: i64, signed: bool) -> String {
    if units == 0 {
        return "0.0000".into();
    }
    let sign = match (signed, units < 0) {
        (_, true) => "-",
        (true, false) => "+",
        (false, false) => "",
    };
    let abs = units.unsigned_abs();
    let (whole, frac) = (abs / 10_000, abs % 10_000);
    if whole == 0 {
        format!("{sign}.{frac:04}")
    } else {
        format!("{sign}{whole}.{frac:04}")
    }
}
