//! User-supplied reference settings.
//!
//! One `key value...` pair per line. Recognized keys:
//!
//! | key         | value                         | stored as                  |
//! |-------------|-------------------------------|----------------------------|
//! | pair_style  | `style [cutoff]`              | `pair_style`, `cutoff` (Å) |
//! | cutoff      | number, optional `A`/`Å`      | Å                          |
//! | timestep    | number, optional `fs`         | fs                         |
//! | ensemble    | word (`nvt`, `npt`, ...)      | text                       |
//! | temperature | number, optional `K`          | K                          |
//! | pressure    | number, optional unit         | Pa (bare numbers are Pa)   |
//!
//! Lines that do not match the grammar are kept verbatim in `unparsed`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::units::{pressure_to_pa, Quantity};

pub const SETTING_KEYS: [&str; 6] = ["pair_style", "cutoff", "timestep", "ensemble", "temperature", "pressure"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SettingValue {
    Quantity(Quantity),
    Text(String),
}

impl SettingValue {
    /// Deck-facing rendering (numbers without unit suffix).
    pub fn deck_value(&self) -> String {
        match self {
            SettingValue::Quantity(q) => q.number(),
            SettingValue::Text(t) => t.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSettings {
    pub entries: BTreeMap<String, SettingValue>,
    pub unparsed: Vec<String>,
}

impl ReferenceSettings {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.unparsed.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&SettingValue> {
        self.entries.get(key)
    }

    pub fn merge(&mut self, other: ReferenceSettings) {
        self.entries.extend(other.entries);
        self.unparsed.extend(other.unparsed);
    }
}

fn number_with_unit(rest: &[&str], allowed: &[&str]) -> Option<f64> {
    match rest {
        [v] => v.parse().ok(),
        [v, u] if allowed.contains(u) => v.parse().ok(),
        _ => None,
    }
}

fn parse_line(line: &str) -> Option<Vec<(String, SettingValue)>> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let (key, rest) = toks.split_first()?;
    let q = |k: &str, q: Quantity| Some(vec![(k.to_string(), SettingValue::Quantity(q))]);
    match *key {
        "pair_style" => match rest {
            [style] => Some(vec![("pair_style".into(), SettingValue::Text(style.to_string()))]),
            [style, cut] => {
                let cut: f64 = cut.parse().ok()?;
                Some(vec![
                    ("pair_style".into(), SettingValue::Text(style.to_string())),
                    ("cutoff".into(), SettingValue::Quantity(Quantity::angstrom(cut))),
                ])
            }
            _ => None,
        },
        "cutoff" => q("cutoff", Quantity::angstrom(number_with_unit(rest, &["A", "Å"])?)),
        "timestep" => q("timestep", Quantity::femtoseconds(number_with_unit(rest, &["fs"])?)),
        "temperature" => q("temperature", Quantity::kelvin(number_with_unit(rest, &["K"])?)),
        "pressure" => {
            let pa = match rest {
                [v] => v.parse().ok()?,
                [v, u] => pressure_to_pa(v.parse().ok()?, u)?,
                _ => return None,
            };
            q("pressure", Quantity::pascal(pa))
        }
        "ensemble" => match rest {
            [e] => Some(vec![("ensemble".into(), SettingValue::Text(e.to_lowercase()))]),
            _ => None,
        },
        _ => None,
    }
}

/// Parses pasted reference settings. Never fails; blank lines are skipped.
pub fn extract_reference_settings(text: &str) -> ReferenceSettings {
    let mut out = ReferenceSettings::default();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match parse_line(line) {
            Some(pairs) => out.entries.extend(pairs),
            None => out.unparsed.push(raw.to_string()),
        }
    }
    out
}

/// True when the line starts with one of the published setting keys.
pub(crate) fn looks_like_setting(line: &str) -> bool {
    line.split_whitespace().next().is_some_and(|k| SETTING_KEYS.contains(&k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_style_with_cutoff() {
        let s = extract_reference_settings("pair_style lj/cut 12.0");
        assert_eq!(s.get("pair_style"), Some(&SettingValue::Text("lj/cut".into())));
        assert_eq!(s.get("cutoff"), Some(&SettingValue::Quantity(Quantity::angstrom(12.0))));
        assert!(s.unparsed.is_empty());
    }

    #[test]
    fn empty_input() {
        assert!(extract_reference_settings("").is_empty());
    }

    #[test]
    fn timestep_and_unparsed() {
        let s = extract_reference_settings("timestep 1.0\nfoo bar");
        assert_eq!(s.entries.len(), 1);
        assert_eq!(s.get("timestep"), Some(&SettingValue::Quantity(Quantity::femtoseconds(1.0))));
        assert_eq!(s.unparsed, vec!["foo bar".to_string()]);
    }

    #[test]
    fn units_are_normalized() {
        let s = extract_reference_settings("pressure 65 bar\ntemperature 298 K\nensemble NVT\ncutoff 12.8 Å");
        assert_eq!(s.get("pressure"), Some(&SettingValue::Quantity(Quantity::pascal(6.5e6))));
        assert_eq!(s.get("temperature"), Some(&SettingValue::Quantity(Quantity::kelvin(298.0))));
        assert_eq!(s.get("ensemble"), Some(&SettingValue::Text("nvt".into())));
        assert_eq!(s.get("cutoff"), Some(&SettingValue::Quantity(Quantity::angstrom(12.8))));
    }

    #[test]
    fn malformed_known_key_is_kept() {
        let s = extract_reference_settings("timestep fast\npressure 3 psi");
        assert!(s.entries.is_empty());
        assert_eq!(s.unparsed.len(), 2);
    }
}
