//! Canonical physical quantities. Everything is normalized at parse time:
//! pressure in Pa, temperature in K, length in Å, time in fs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Kelvin,
    Pascal,
    Angstrom,
    Femtosecond,
    Count,
    Electronvolt,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Kelvin => "K",
            Unit::Pascal => "Pa",
            Unit::Angstrom => "Å",
            Unit::Femtosecond => "fs",
            Unit::Count => "count",
            Unit::Electronvolt => "eV",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Unit> {
        Some(match s {
            "K" => Unit::Kelvin,
            "Pa" => Unit::Pascal,
            "Å" | "A" => Unit::Angstrom,
            "fs" => Unit::Femtosecond,
            "count" => Unit::Count,
            "eV" => Unit::Electronvolt,
            _ => return None,
        })
    }
}

/// A value tagged with its canonical unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    pub const fn new(value: f64, unit: Unit) -> Self {
        Quantity { value, unit }
    }
    pub const fn kelvin(v: f64) -> Self {
        Quantity::new(v, Unit::Kelvin)
    }
    pub const fn pascal(v: f64) -> Self {
        Quantity::new(v, Unit::Pascal)
    }
    pub const fn angstrom(v: f64) -> Self {
        Quantity::new(v, Unit::Angstrom)
    }
    pub const fn femtoseconds(v: f64) -> Self {
        Quantity::new(v, Unit::Femtosecond)
    }
    pub const fn count(v: f64) -> Self {
        Quantity::new(v, Unit::Count)
    }

    /// Plain number rendering used inside decks (no unit suffix).
    pub fn number(&self) -> String {
        format_number(self.value)
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", format_number(self.value), self.unit.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse quantity `{0}`")]
pub struct QuantityParseError(pub String);

impl FromStr for Quantity {
    type Err = QuantityParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || QuantityParseError(s.to_string());
        let (num, unit) = s.trim().split_once(' ').ok_or_else(err)?;
        let value: f64 = num.parse().map_err(|_| err())?;
        let unit = Unit::from_symbol(unit.trim()).ok_or_else(err)?;
        Ok(Quantity { value, unit })
    }
}

/// A tool output: value plus a free-form display unit (e.g. `m²/g`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub unit: String,
}

impl Measurement {
    pub fn new(value: f64, unit: &str) -> Self {
        Measurement { value, unit: unit.to_string() }
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.unit.is_empty() {
            write!(f, "{}", format_number(self.value))
        } else {
            write!(f, "{} {}", format_number(self.value), self.unit)
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v}")
}

/// Converts a pressure in `unit` to Pa.
pub fn pressure_to_pa(value: f64, unit: &str) -> Option<f64> {
    let factor = match unit.to_ascii_lowercase().as_str() {
        "pa" => 1.0,
        "kpa" => 1e3,
        "mpa" => 1e6,
        "bar" => 1e5,
        "mbar" => 1e2,
        "atm" => 101_325.0,
        _ => return None,
    };
    Some(value * factor)
}

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + 273.15
}
