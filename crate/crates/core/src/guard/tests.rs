use super::*;
use crate::planner::Tool;
use proptest::prelude::*;

fn md_deck(pair_style: &str) -> InputDeck {
    let mut d = InputDeck::new("calc.X/md", Tool::Md);
    for (k, v) in [
        ("task", "diffusion"),
        ("structure", "X"),
        ("guest", "CO2"),
        ("forcefield", "TraPPE"),
        ("pair_style", pair_style),
        ("cutoff", "12"),
        ("ensemble", "nvt"),
        ("temperature", "298"),
        ("timestep", "1"),
        ("steps", "1000000"),
    ] {
        d.set(k, v, Provenance::ReferenceSettings).unwrap();
    }
    d.forcefield_refs = vec!["CO2".into()];
    d
}

const CHARGED: SystemFlags = SystemFlags { requires_electrostatics: true };
const NEUTRAL: SystemFlags = SystemFlags { requires_electrostatics: false };

#[test]
fn lj_cut_with_co2_needs_coulomb() {
    let findings = validate_deck(&md_deck("lj/cut"), CHARGED, &RuleSet::builtin());
    assert_eq!(findings.len(), 1);
    let f = &findings[0];
    assert_eq!(f.rule_id, "md-coulomb");
    assert_eq!(f.severity, Severity::PhysicsChange);
    let c = f.correction.as_ref().unwrap();
    assert_eq!(
        c.changes,
        vec![
            Change { key: "kspace_style".into(), before: None, after: "pppm 1.0e-4".into() },
            Change { key: "pair_style".into(), before: Some("lj/cut".into()), after: "lj/cut/coul/long".into() },
        ]
    );
}

#[test]
fn lj_cut_with_methane_is_fine() {
    assert!(validate_deck(&md_deck("lj/cut"), NEUTRAL, &RuleSet::builtin()).is_empty());
}

#[test]
fn no_applicable_rules() {
    let d = InputDeck::new("x", Tool::Mlip);
    assert!(validate_deck(&d, CHARGED, &RuleSet::builtin()).is_empty());
}

#[test]
fn findings_sorted_by_severity_then_id() {
    let mut d = md_deck("lj/cut");
    d.set("timestep", "5", Provenance::Default).unwrap();
    let rules = RuleSet::from_toml(
        r#"
[[rule]]
id = "z-fatal"
tool = "md"
when = "deck.timestep > 4"
severity = "fatal"
finding = "x"
[[rule]]
id = "b-cos"
tool = "md"
when = "deck.cutoff present"
severity = "cosmetic"
finding = "x"
[[rule]]
id = "a-cos"
tool = "md"
when = "deck.cutoff present"
severity = "cosmetic"
finding = "x"
"#,
    )
    .unwrap();
    let ids: Vec<String> = validate_deck(&d, CHARGED, &rules).into_iter().map(|f| f.rule_id).collect();
    assert_eq!(ids, ["z-fatal", "a-cos", "b-cos"]);
}

#[test]
fn confirmed_physics_change_is_applied() {
    let d = md_deck("lj/cut");
    let corrections: Vec<Correction> =
        validate_deck(&d, CHARGED, &RuleSet::builtin()).into_iter().filter_map(|f| f.correction).collect();
    let ok = BTreeSet::from(["md-coulomb".to_string()]);
    match apply_corrections(&d, &corrections, &ok) {
        ApplyOutcome::Applied { deck, applied } => {
            assert_eq!(deck.get("pair_style"), Some("lj/cut/coul/long"));
            assert_eq!(deck.provenance_of("pair_style"), Some(Provenance::Correction));
            assert_eq!(deck.get("kspace_style"), Some("pppm 1.0e-4"));
            assert!(applied[0].confirmed);
            assert!(applied[0].applied_at.is_some());
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unconfirmed_physics_change_waits() {
    let d = md_deck("lj/cut");
    match correct_until_fixpoint(&d, CHARGED, &RuleSet::builtin(), &BTreeSet::new()).unwrap() {
        ApplyOutcome::AwaitingConfirmation { deck, applied, pending } => {
            assert_eq!(pending.iter().map(|c| c.rule_id.as_str()).collect::<Vec<_>>(), ["md-coulomb"]);
            assert!(applied.is_empty());
            assert_eq!(deck, d);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_corrections_are_identity() {
    let d = md_deck("lj/cut");
    assert_eq!(apply_corrections(&d, &[], &BTreeSet::new()), ApplyOutcome::Applied { deck: d, applied: vec![] });
}

#[test]
fn cosmetic_and_fatal_apply_without_confirmation() {
    let mut d = InputDeck::new("g", Tool::Gcmc);
    for (k, v) in [("task", "uptake"), ("guest", "CH4"), ("forcefield", "trappe"), ("cutoff", "3"), ("charge_method", "None")] {
        d.set(k, v, Provenance::Default).unwrap();
    }
    let out = correct_until_fixpoint(&d, NEUTRAL, &RuleSet::builtin(), &BTreeSet::new()).unwrap();
    let ApplyOutcome::Applied { deck, applied } = out else { panic!() };
    assert_eq!(deck.get("forcefield"), Some("TraPPE"));
    assert_eq!(deck.get("cutoff"), Some("12"));
    assert_eq!(applied.len(), 2);
    assert!(applied.iter().all(|c| !c.confirmed));
}

#[test]
fn oscillating_rules_do_not_converge() {
    let rules = RuleSet::from_toml(
        r#"
[[rule]]
id = "to-npt"
tool = "md"
when = "deck.ensemble == nvt"
severity = "cosmetic"
finding = "x"
set = { ensemble = "npt" }
[[rule]]
id = "to-nvt"
tool = "md"
when = "deck.ensemble == npt"
severity = "cosmetic"
finding = "x"
set = { ensemble = "nvt" }
"#,
    )
    .unwrap();
    let err = correct_until_fixpoint(&md_deck("lj/cut"), NEUTRAL, &rules, &BTreeSet::new()).unwrap_err();
    assert!(matches!(err, GuardError::NonConvergence { iterations: 5, .. }));
}

#[test]
fn log_patterns() {
    let ok = format!("step 1\nstep 2\n{}\n", success_marker(Tool::Gcmc));
    assert_eq!(inspect_log(&ok, Tool::Gcmc), LogVerdict::Success);
    let LogVerdict::Failure(d) = inspect_log("reading deck\nERROR: missing key temperature\n", Tool::Gcmc) else { panic!() };
    assert_eq!((d.category, d.proposed_action), (FailureCategory::InputError, ProposedAction::FixInput));
    assert_eq!(d.evidence, "ERROR: missing key temperature");
    let LogVerdict::Failure(d) = inspect_log("step 1\nstep 2\nste", Tool::Md) else { panic!() };
    assert_eq!((d.category, d.proposed_action), (FailureCategory::Unknown, ProposedAction::Retry));
    let LogVerdict::Failure(d) = inspect_log("EDDDAV: Call to ZHEGV failed\n", Tool::Dft) else { panic!() };
    assert_eq!(d.category, FailureCategory::Convergence);
    // success marker of another tool does not count
    assert!(matches!(inspect_log(&ok, Tool::Md), LogVerdict::Failure(_)));
}

fn dft_deck() -> InputDeck {
    let mut d = InputDeck::new("bands", Tool::Dft);
    for (k, v) in [("task", "band_gap"), ("structure", "X"), ("target", "host"), ("encut", "520"), ("ediff", "0.00001"), ("nelm", "60")] {
        d.set(k, v, Provenance::Default).unwrap();
    }
    d
}

#[test]
fn recovery_actions() {
    let policy = RetryPolicy::default();
    let input = FailureDiagnosis {
        category: FailureCategory::InputError,
        evidence: "ERROR: missing key temperature".into(),
        proposed_action: ProposedAction::FixInput,
    };
    let d = md_deck("lj/cut");
    assert_eq!(
        plan_recovery(&input, &d, 1, policy),
        RecoveryAction::Rewrite {
            attempt: 1,
            changes: vec![Change { key: "temperature".into(), before: Some("298".into()), after: "298".into() }]
        }
    );
    assert!(plan_recovery(&input, &d, 4, policy).is_abort());
    assert!(!plan_recovery(&input, &d, 3, policy).is_abort());

    let conv = FailureDiagnosis {
        category: FailureCategory::Convergence,
        evidence: "did not converge".into(),
        proposed_action: ProposedAction::AdjustParams,
    };
    let RecoveryAction::Rewrite { changes, .. } = plan_recovery(&conv, &dft_deck(), 1, policy) else { panic!() };
    // hand-applied adjustment table: EDIFF x10, NELM +60
    assert_eq!(
        changes,
        vec![
            Change { key: "ediff".into(), before: Some("0.00001".into()), after: "0.0001".into() },
            Change { key: "nelm".into(), before: Some("60".into()), after: "120".into() },
        ]
    );
    let unknown = FailureDiagnosis { category: FailureCategory::Unknown, evidence: String::new(), proposed_action: ProposedAction::Retry };
    assert_eq!(plan_recovery(&unknown, &d, 2, policy), RecoveryAction::Requeue { attempt: 2 });
}

proptest! {
    // termination: any rule set over a small key space finishes within the
    // iteration bound, either at a fixpoint or with NonConvergence
    #[test]
    fn loop_terminates(vals in prop::collection::vec((0usize..3, 0usize..3), 1..6), start in 0usize..3) {
        let names = ["nvt", "npt", "nve"];
        let mut text = String::new();
        for (i, (from, to)) in vals.iter().enumerate() {
            text.push_str(&format!(
                "[[rule]]\nid = \"r{i}\"\ntool = \"md\"\nwhen = \"deck.ensemble == {}\"\nseverity = \"cosmetic\"\nfinding = \"x\"\nset = {{ ensemble = \"{}\" }}\n",
                names[*from], names[*to]
            ));
        }
        let rules = RuleSet::from_toml(&text).unwrap();
        let mut d = md_deck("lj/cut");
        d.set("ensemble", names[start], Provenance::Default).unwrap();
        match correct_until_fixpoint(&d, NEUTRAL, &rules, &BTreeSet::new()) {
            Ok(ApplyOutcome::Applied { deck, .. }) => {
                prop_assert!(validate_deck(&deck, NEUTRAL, &rules).iter().all(|f| f.correction.is_none()));
            }
            Ok(other) => prop_assert!(false, "{:?}", other),
            Err(GuardError::NonConvergence { iterations, .. }) => prop_assert_eq!(iterations, MAX_VALIDATION_ITERATIONS),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn physics_changes_never_apply_unconfirmed(pair in prop::sample::select(vec!["lj/cut", "lj/cut/coul/long", "buck"]), confirm in any::<bool>()) {
        let d = md_deck(pair);
        let conf: BTreeSet<String> = if confirm { BTreeSet::from(["md-coulomb".to_string()]) } else { BTreeSet::new() };
        let out = correct_until_fixpoint(&d, CHARGED, &RuleSet::builtin(), &conf).unwrap();
        for c in out.applied() {
            prop_assert!(c.severity != Severity::PhysicsChange || c.confirmed);
        }
        for e in &out.deck().entries {
            if e.provenance == Provenance::Correction {
                prop_assert!(confirm);
            }
        }
    }
}
