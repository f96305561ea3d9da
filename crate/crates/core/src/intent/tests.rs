use super::*;
use crate::structdb::{Descriptors, Lattice, StructureRecord};
use crate::units::Unit;
use proptest::prelude::*;

fn db() -> StructDb {
    let mut db = StructDb::new();
    for (id, names) in [
        ("UIO66", vec!["UiO-66"]),
        ("HKUST1", vec!["HKUST-1", "Cu-BTC"]),
        ("ZIF8", vec!["ZIF-8"]),
        ("NUYQUU", vec![]),
    ] {
        db.insert_structure(StructureRecord {
            structure_id: id.into(),
            names: names.into_iter().map(String::from).collect(),
            formula: String::new(),
            atom_count: 0,
            lattice: Lattice::cubic(10.0),
            atoms: vec![],
            descriptors: Descriptors::default(),
            valid: true,
        });
    }
    db
}

fn parse(text: &str) -> Result<ParseOutcome, IntentError> {
    parse_query(&Query::new("s1", text), &db())
}

#[test]
fn generic_material_asks_for_identifier() {
    let c = parse("What is the surface area of a MOF?").unwrap().clarification().unwrap();
    assert_eq!(c.missing, vec![Missing::MaterialIdentifier]);
    assert!(c.blocking);
    assert_eq!(c.partial.task_kind, Some(TaskKind::SurfaceArea));
    assert!(c.prompt_text.contains("generic"));
}

#[test]
fn named_material_gives_intent() {
    let i = parse("I want to calculate the surface area of UiO-66").unwrap().intent().unwrap();
    assert_eq!(i.task_kind, TaskKind::SurfaceArea);
    assert_eq!(i.materials.len(), 1);
    assert_eq!(i.materials[0].raw_text, "UiO-66");
    assert_eq!(i.materials[0].resolved_id.as_deref(), Some("UIO66"));
    assert_eq!(i.materials[0].kind, MaterialKind::CommonName);
    assert!(i.conditions.is_empty());
}

#[test]
fn blank_query_is_an_error() {
    assert_eq!(parse("   "), Err(IntentError::EmptyQuery));
    assert_eq!(parse(""), Err(IntentError::EmptyQuery));
}

#[test]
fn unrecognized_without_material_is_an_error() {
    assert_eq!(parse("hello there"), Err(IntentError::UnrecognizedTask));
    let c = parse("tell me about UiO-66").unwrap().clarification().unwrap();
    assert_eq!(c.missing, vec![Missing::Condition]);
}

#[test]
fn diffusion_with_pasted_settings() {
    let q = Query::new("s1", "Calculate the diffusion coefficient of CO2 in UiO-66 using these settings")
        .with_attachment("reference", "pair_style lj/cut 12.0\ntimestep 1.0");
    let i = parse_query(&q, &db()).unwrap().intent().unwrap();
    assert_eq!(i.task_kind, TaskKind::DiffusionCoefficient);
    assert_eq!(i.guests, vec!["CO2"]);
    let refs = i.reference_settings.expect("settings present");
    assert_eq!(refs.get("pair_style"), Some(&SettingValue::Text("lj/cut".into())));
}

#[test]
fn inline_settings_lines_are_extracted() {
    let i = parse("Diffusion coefficient of CO₂ in UiO-66\npair_style lj/cut 12.0").unwrap().intent().unwrap();
    assert_eq!(i.guests, vec!["CO2"]);
    assert!(i.reference_settings.unwrap().get("cutoff").is_some());
}

#[test]
fn conditions_are_normalized() {
    let i = parse("CH4 uptake of UiO-66 at 298 K and 65 bar").unwrap().intent().unwrap();
    assert_eq!(i.task_kind, TaskKind::GcmcUptake);
    assert_eq!(i.conditions["temperature"], Quantity::kelvin(298.0));
    assert_eq!(i.conditions["pressure"], Quantity::pascal(6.5e6));
    let i = parse("N2 uptake in NUYQUU at 77K, 200Pa").unwrap().intent().unwrap();
    assert_eq!(i.conditions["temperature"], Quantity::kelvin(77.0));
    assert_eq!(i.conditions["pressure"], Quantity::pascal(200.0));
    let i = parse("surface area of UiO-66 with a probe radius of 1.5 Å").unwrap().intent().unwrap();
    assert_eq!(i.conditions["probe_radius"], Quantity::angstrom(1.5));
    for q in i.conditions.values() {
        assert!(matches!(q.unit, Unit::Kelvin | Unit::Pascal | Unit::Angstrom | Unit::Count));
    }
}

#[test]
fn binding_comparison_is_analysis() {
    let i = parse("Compare the CO2 binding energies of HKUST-1 and ZIF-8 and explain why they differ")
        .unwrap()
        .intent()
        .unwrap();
    assert_eq!(i.task_kind, TaskKind::BindingEnergy);
    assert!(i.analysis_requested);
    assert_eq!(i.resolved_ids(), vec!["HKUST1", "ZIF8"]);
}

#[test]
fn screening_query() {
    let i = parse("Screen the CoRE MOF 2024 FSR database for the top 1000 MOFs for methane uptake")
        .unwrap()
        .intent()
        .unwrap();
    assert_eq!(i.task_kind, TaskKind::Screening);
    assert_eq!(i.database_scope.as_deref(), Some("coremof-2024-fsr"));
    assert_eq!(i.objective.as_deref(), Some("ch4-uptake"));
    assert_eq!(i.conditions["top_n"], Quantity::count(1000.0));
    assert!(i.materials.is_empty());
}

#[test]
fn unknown_refcode_asks_again() {
    let c = parse("band gap of QQQQQQ").unwrap().clarification().unwrap();
    assert_eq!(c.missing, vec![Missing::MaterialIdentifier]);
    assert_eq!(c.partial.unresolved, vec!["QQQQQQ"]);
}

#[test]
fn h2o_is_not_h2() {
    let i = parse("H2O binding energy of NUYQUU").unwrap().intent().unwrap();
    assert_eq!(i.guests, vec!["H2O"]);
    assert_eq!(i.materials[0].kind, MaterialKind::Refcode);
}

#[test]
fn guest_required_for_uptake() {
    let c = parse("uptake of UiO-66").unwrap().clarification().unwrap();
    assert_eq!(c.missing, vec![Missing::GuestSpecies]);
}

#[test]
fn merge_supplies_material() {
    let c = parse("What is the surface area of a MOF?").unwrap().clarification().unwrap();
    let i = merge_clarification(&c.partial, &Query::new("s1", "UiO-66"), &db()).unwrap().intent().unwrap();
    assert_eq!(i.task_kind, TaskKind::SurfaceArea);
    assert_eq!(i.resolved_ids(), vec!["UIO66"]);
    assert!(i.materials.iter().all(|m| m.kind != MaterialKind::Generic));
}

#[test]
fn merge_with_blank_answer_is_unchanged() {
    let c = parse("What is the surface area of a MOF?").unwrap().clarification().unwrap();
    let again = merge_clarification(&c.partial, &Query::new("s1", ""), &db()).unwrap().clarification().unwrap();
    assert_eq!(again, c);
}

#[test]
fn merge_fills_gcmc_intent() {
    let partial = PartialIntent {
        session_id: "s1".into(),
        task_kind: Some(TaskKind::GcmcUptake),
        ..Default::default()
    };
    let i = merge_clarification(&partial, &Query::new("s1", "CO2 at 298 K 1 bar in HKUST-1"), &db())
        .unwrap()
        .intent()
        .unwrap();
    assert_eq!(i.task_kind, TaskKind::GcmcUptake);
    assert_eq!(i.guests, vec!["CO2"]);
    assert_eq!(i.resolved_ids(), vec!["HKUST1"]);
    assert_eq!(i.conditions["temperature"], Quantity::kelvin(298.0));
    assert_eq!(i.conditions["pressure"], Quantity::pascal(1e5));
}

#[test]
fn merge_checks_session() {
    let partial = PartialIntent { session_id: "s1".into(), ..Default::default() };
    assert!(matches!(
        merge_clarification(&partial, &Query::new("s2", "UiO-66"), &db()),
        Err(IntentError::SessionMismatch { .. })
    ));
}

#[test]
fn never_emits_generic_only_intent() {
    for text in ["band gap of a material", "CH4 uptake in any MOF", "surface area of some MOF"] {
        match parse(text).unwrap() {
            ParseOutcome::Intent(i) => panic!("{text} gave {i:?}"),
            ParseOutcome::Clarification(c) => assert!(c.missing.contains(&Missing::MaterialIdentifier)),
        }
    }
}

proptest! {
    #[test]
    fn parse_is_deterministic(text in "[a-zA-Z0-9 .,-]{1,60}") {
        let a = parse(&text);
        let b = parse(&text);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn conditions_round_trip(t in 1.0f64..2000.0, p in 0.0f64..1e9, r in 0.1f64..5.0) {
        let mut c = BTreeMap::new();
        c.insert("temperature".to_string(), Quantity::kelvin(t));
        c.insert("pressure".to_string(), Quantity::pascal(p));
        c.insert("probe_radius".to_string(), Quantity::angstrom(r));
        prop_assert_eq!(parse_conditions(&render_conditions(&c)).unwrap(), c);
    }

    #[test]
    fn parsed_temperatures_are_exact(t in 1u32..2000, frac in 0u32..100) {
        let text = format!("CH4 uptake of UiO-66 at {t}.{frac:02} K");
        let i = parse(&text).unwrap().intent().unwrap();
        let expected: f64 = format!("{t}.{frac:02}").parse().unwrap();
        prop_assert_eq!(i.conditions["temperature"], Quantity::kelvin(expected));
    }
}
