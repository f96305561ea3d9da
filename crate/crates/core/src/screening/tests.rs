use super::*;
use proptest::prelude::*;

fn row(id: &str, valid: bool, atoms: usize, pld: f64, henry: f64) -> DescriptorRow {
    DescriptorRow {
        structure_id: id.into(),
        valid,
        atom_count: Some(atoms),
        pld: Some(pld),
        lcd: Some(pld + 1.0),
        values: BTreeMap::from([("henry_CH4".to_string(), henry)]),
    }
}

fn ch4(top_n: usize) -> ScreeningConfig {
    configure_funnel("ch4-uptake", Downstream::Gcmc, top_n, &[]).unwrap()
}

#[test]
fn gcmc_methane_funnel_shape() {
    let c = ch4(1000);
    let ids: Vec<String> = c.stages.iter().map(FilterStage::stage_id).collect();
    assert_eq!(ids, ["validity", "atom_count", "accessibility", "henry_rank"]);
    assert_eq!(c.stages[1], FilterStage::AtomCount { max_atoms: GCMC_MAX_ATOMS });
    assert_eq!(c.stages[2], FilterStage::Accessibility { guest: "CH4".into(), probe_diameter: 3.8 });
    assert_eq!(c.top_n(), Some(1000));
}

#[test]
fn dft_downstream_caps_atoms() {
    let c = configure_funnel("co2-binding", Downstream::Dft, 50, &[]).unwrap();
    assert_eq!(c.stages[1], FilterStage::AtomCount { max_atoms: 300 });
    let mut bad = c.clone();
    bad.stages[1] = FilterStage::AtomCount { max_atoms: 301 };
    assert!(bad.check().is_err());
}

#[test]
fn objective_without_surrogate() {
    assert!(matches!(configure_funnel("ch4-selectivity", Downstream::Gcmc, 5, &[]), Err(ScreeningError::NoSurrogate(_))));
    assert!(matches!(configure_funnel("band_gap", Downstream::Dft, 5, &[]), Err(ScreeningError::NoSurrogate(_))));
    assert!(matches!(configure_funnel("xe-uptake", Downstream::Gcmc, 5, &[]), Err(ScreeningError::NoSurrogate(_))));
}

#[test]
fn evidence_tightens_atom_limit_only() {
    let hit = |id: &str, text: &str| RetrievalHit { chunk_id: id.into(), filename: "f".into(), score: 1.0, text: text.into() };
    let hits = [hit("a#1", "structures with at most 2,000 atoms were kept"), hit("b#1", "up to 9000 atoms")];
    let c = configure_funnel("ch4-uptake", Downstream::Gcmc, 10, &hits).unwrap();
    assert_eq!(c.stages[1], FilterStage::AtomCount { max_atoms: 2000 });
    assert_eq!(c.evidence, vec!["a#1".to_string()]);
}

#[test]
fn empty_table() {
    let r = run_funnel(&[], &ch4(10)).unwrap();
    assert_eq!(r.counts(), vec![0, 0, 0, 0, 0]);
    assert!(r.shortlist.is_empty());
}

#[test]
fn rank_is_descending_with_id_tiebreak() {
    let rows = vec![row("B", true, 10, 5.0, 2.0), row("A", true, 10, 5.0, 2.0), row("C", true, 10, 5.0, 3.0)];
    let r = run_funnel(&rows, &ch4(2)).unwrap();
    assert_eq!(r.shortlist, ["C", "A"]);
    assert_eq!(r.survivors, ["A", "B", "C"]);
}

#[test]
fn missing_descriptor_names_row_and_field() {
    let mut r = row("X", true, 10, 5.0, 1.0);
    r.values.clear();
    assert_eq!(
        run_funnel(&[r], &ch4(5)),
        Err(ScreeningError::MissingDescriptor { row: "X".into(), field: "henry_CH4".into() })
    );
    let mut r = row("Y", true, 10, 5.0, 1.0);
    r.pld = None;
    assert_eq!(run_funnel(&[r], &ch4(5)), Err(ScreeningError::MissingDescriptor { row: "Y".into(), field: "pld".into() }));
}

#[test]
fn table_parsing() {
    let text = "structure_id\tvalid\tatom_count\tpld\tlcd\thenry_CH4\nA\ttrue\t100\t4.1\t6\t1e-5\nB\tfalse\t-\t3\t\t2e-5\n";
    let rows = parse_descriptor_table(text).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].get("henry_CH4"), Some(1e-5));
    assert!(!rows[1].valid);
    assert_eq!(rows[1].atom_count, None);
    assert_eq!(rows[1].lcd, None);
    assert!(parse_descriptor_table("id\tpld\n").is_err());
    assert!(parse_descriptor_table("structure_id\tpld\nA\tx\n").is_err());
    assert!(parse_descriptor_table("structure_id\tpld\nA\n").is_err());
}

#[test]
fn identical_evaluator_gives_full_overlap() {
    let rows: Vec<DescriptorRow> = (0..30).map(|i| row(&format!("M{i:02}"), true, 100, 5.0, i as f64)).collect();
    let rep = shortlist_vs_exhaustive(&rows, &ch4(15), &|r: &DescriptorRow| r.get("henry_CH4").unwrap(), 10).unwrap();
    assert_eq!(rep.overlap, 10);
    assert!(rep.missed.is_empty());
}

#[test]
fn blocked_top_structure_is_reported() {
    let mut rows: Vec<DescriptorRow> = (0..30).map(|i| row(&format!("M{i:02}"), true, 100, 5.0, i as f64)).collect();
    rows[29].pld = Some(2.0);
    let rep = shortlist_vs_exhaustive(&rows, &ch4(15), &|r: &DescriptorRow| r.get("henry_CH4").unwrap(), 10).unwrap();
    assert_eq!(rep.overlap, 9);
    assert_eq!(rep.missed, ["M29"]);
}

fn arb_rows() -> impl Strategy<Value = Vec<DescriptorRow>> {
    prop::collection::vec((any::<bool>(), 0usize..8000, 2.0f64..8.0, 0u32..20), 0..60).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (valid, atoms, pld, h))| row(&format!("R{i:03}"), valid, atoms, pld, h as f64))
            .collect()
    })
}

proptest! {
    // oracle: every non-rank predicate applied to the full table, independently
    #[test]
    fn survivors_are_predicate_conjunction(rows in arb_rows(), top_n in 1usize..30) {
        let c = ch4(top_n);
        let report = run_funnel(&rows, &c).unwrap();
        let mut expected: Vec<String> = rows
            .iter()
            .filter(|r| r.valid && r.atom_count.unwrap() <= 5000 && r.pld.unwrap() >= 3.8)
            .map(|r| r.structure_id.clone())
            .collect();
        expected.sort();
        prop_assert_eq!(&report.survivors, &expected);
        prop_assert_eq!(report.shortlist.len(), expected.len().min(top_n));
        for w in report.stages.windows(2) {
            prop_assert_eq!(w[0].output_count, w[1].input_count);
        }
        for s in &report.stages {
            prop_assert!(s.output_count <= s.input_count);
        }
    }

    #[test]
    fn survivors_do_not_depend_on_stage_order(rows in arb_rows(), perm in Just([0usize, 1, 2]).prop_shuffle()) {
        let c = ch4(5);
        let mut shuffled = c.clone();
        shuffled.stages = perm.iter().map(|&i| c.stages[i].clone()).chain([c.stages[3].clone()]).collect();
        let a = run_funnel(&rows, &c).unwrap();
        let b = run_funnel(&rows, &shuffled).unwrap();
        prop_assert_eq!(a.survivors, b.survivors);
        prop_assert_eq!(a.shortlist, b.shortlist);
    }

    #[test]
    fn shortlist_is_permutation_invariant(rows in arb_rows(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let c = ch4(7);
        prop_assert_eq!(run_funnel(&rows, &c).unwrap(), run_funnel(&shuffled, &c).unwrap());
    }
}
