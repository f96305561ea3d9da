//! Rule registry and the predicate DSL.

use serde::{Deserialize, Serialize};

use super::GuardError;
use crate::inputgen::InputDeck;
use crate::planner::Tool;

const BUILTIN_RULES: &str = include_str!("../../data/rules.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Fatal,
    PhysicsChange,
    Cosmetic,
}

/// Facts about the simulated system that rules may consult.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemFlags {
    pub requires_electrostatics: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    GuestElectrostatics(bool),
    Contains(String, String),
    Lacks(String, String),
    Equals(String, String),
    NotEquals(String, String),
    Less(String, f64),
    Greater(String, f64),
    Missing(String),
    Present(String),
}

impl Predicate {
    pub fn parse(src: &str) -> Result<Predicate, GuardError> {
        let bad = || GuardError::Rule(format!("cannot parse predicate `{src}`"));
        let s = src.trim();
        match s {
            "guest.requires_electrostatics" => return Ok(Predicate::GuestElectrostatics(true)),
            "!guest.requires_electrostatics" => return Ok(Predicate::GuestElectrostatics(false)),
            _ => {}
        }
        let rest = s.strip_prefix("deck.").ok_or_else(bad)?;
        let (key, tail) = rest.split_once(' ').ok_or_else(bad)?;
        let (op, arg) = tail.trim().split_once(' ').unwrap_or((tail.trim(), ""));
        let key = key.to_string();
        let arg = arg.trim().to_string();
        let num = || arg.parse::<f64>().map_err(|_| bad());
        Ok(match op {
            "contains" => Predicate::Contains(key, arg),
            "lacks" => Predicate::Lacks(key, arg),
            "==" => Predicate::Equals(key, arg),
            "!=" => Predicate::NotEquals(key, arg),
            "<" => Predicate::Less(key, num()?),
            ">" => Predicate::Greater(key, num()?),
            "missing" if arg.is_empty() => Predicate::Missing(key),
            "present" if arg.is_empty() => Predicate::Present(key),
            _ => return Err(bad()),
        })
    }

    pub fn eval(&self, deck: &InputDeck, sys: SystemFlags) -> bool {
        let num = |k: &str| deck.get(k).and_then(|v| v.trim().parse::<f64>().ok());
        match self {
            Predicate::GuestElectrostatics(want) => sys.requires_electrostatics == *want,
            Predicate::Contains(k, s) => deck.get(k).is_some_and(|v| v.contains(s.as_str())),
            Predicate::Lacks(k, s) => deck.get(k).is_some_and(|v| !v.contains(s.as_str())),
            Predicate::Equals(k, s) => deck.get(k) == Some(s.as_str()),
            Predicate::NotEquals(k, s) => deck.get(k).is_some_and(|v| v != s),
            Predicate::Less(k, x) => num(k).is_some_and(|v| v < *x),
            Predicate::Greater(k, x) => num(k).is_some_and(|v| v > *x),
            Predicate::Missing(k) => deck.get(k).is_none(),
            Predicate::Present(k) => deck.get(k).is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRule {
    pub id: String,
    pub tool: Tool,
    pub when: String,
    pub severity: Severity,
    pub finding: String,
    /// Deck rewrite; an empty value removes the key.
    #[serde(default)]
    pub set: std::collections::BTreeMap<String, String>,
    #[serde(skip)]
    predicates: Vec<Predicate>,
}

impl ValidationRule {
    pub fn applies(&self, deck: &InputDeck, sys: SystemFlags) -> bool {
        self.tool == deck.tool && self.predicates.iter().all(|p| p.eval(deck, sys))
    }
}

#[derive(Debug, Deserialize)]
struct RulesFile {
    #[serde(default)]
    rule: Vec<ValidationRule>,
}

#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    rules: Vec<ValidationRule>,
}

impl RuleSet {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_RULES).expect("builtin rules are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, GuardError> {
        let file: RulesFile = toml::from_str(text).map_err(|e| GuardError::Rule(e.to_string()))?;
        let mut rules = Vec::new();
        for mut r in file.rule {
            r.predicates = r.when.split("&&").map(Predicate::parse).collect::<Result<_, _>>()?;
            if rules.iter().any(|x: &ValidationRule| x.id == r.id) {
                return Err(GuardError::Rule(format!("duplicate rule id `{}`", r.id)));
            }
            rules.push(r);
        }
        Ok(RuleSet { rules })
    }

    pub fn rules(&self) -> &[ValidationRule] {
        &self.rules
    }

    pub fn get(&self, id: &str) -> Option<&ValidationRule> {
        self.rules.iter().find(|r| r.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicates_parse() {
        assert_eq!(Predicate::parse("deck.pair_style lacks coul").unwrap(), Predicate::Lacks("pair_style".into(), "coul".into()));
        assert_eq!(Predicate::parse(" deck.timestep > 2 ").unwrap(), Predicate::Greater("timestep".into(), 2.0));
        assert_eq!(Predicate::parse("deck.kspace_style missing").unwrap(), Predicate::Missing("kspace_style".into()));
        assert_eq!(Predicate::parse("!guest.requires_electrostatics").unwrap(), Predicate::GuestElectrostatics(false));
        assert!(Predicate::parse("deck.cutoff < many").is_err());
        assert!(Predicate::parse("host.cutoff < 1").is_err());
        assert!(Predicate::parse("deck.cutoff ~ 1").is_err());
    }

    #[test]
    fn builtin_rules_load() {
        let r = RuleSet::builtin();
        let md = r.get("md-coulomb").unwrap();
        assert_eq!(md.severity, Severity::PhysicsChange);
        assert_eq!(md.set["pair_style"], "lj/cut/coul/long");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let one = "[[rule]]\nid = \"a\"\ntool = \"md\"\nwhen = \"deck.x present\"\nseverity = \"cosmetic\"\nfinding = \"f\"\n";
        assert!(RuleSet::from_toml(&format!("{one}{one}")).is_err());
    }
}
