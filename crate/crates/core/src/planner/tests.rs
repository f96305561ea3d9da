use super::*;
use crate::intent::{MaterialKind, MaterialRef};
use crate::units::Quantity;
use proptest::prelude::*;

fn mat(id: &str) -> MaterialRef {
    MaterialRef { raw_text: id.to_string(), kind: MaterialKind::CommonName, resolved_id: Some(id.to_string()) }
}

fn intent(task: TaskKind, mats: &[&str], guests: &[&str]) -> Intent {
    Intent {
        task_kind: task,
        materials: mats.iter().map(|m| mat(m)).collect(),
        guests: guests.iter().map(|g| g.to_string()).collect(),
        conditions: BTreeMap::new(),
        reference_settings: None,
        analysis_requested: false,
        database_scope: None,
        objective: None,
    }
}

fn build(i: &Intent) -> Result<Plan, PlannerError> {
    build_plan(i, &DefaultTable::builtin(), &TemplateRegistry::builtin())
}

fn fig5() -> Plan {
    let mut i = intent(TaskKind::BindingEnergy, &["HKUST1", "ZIF8"], &["CO2"]);
    i.analysis_requested = true;
    build(&i).unwrap()
}

fn e(a: &str, b: &str) -> (String, String) {
    (a.to_string(), b.to_string())
}

#[test]
fn surface_area_is_two_units() {
    let plan = build(&intent(TaskKind::SurfaceArea, &["UIO66"], &[])).unwrap();
    let ids: Vec<&str> = plan.units.iter().map(|u| u.unit_id.as_str()).collect();
    assert_eq!(ids, ["calc.UIO66", "report"]);
    assert_eq!(plan.edges, vec![e("calc.UIO66", "report")]);
    let job = &plan.units[0].jobs[0];
    assert_eq!(job.tool, Tool::Geometry);
    assert_eq!(job.spec["probe_radius"], Param { value: SettingValue::Quantity(Quantity::angstrom(1.2)), source: ParamSource::Default });
    let applied: Vec<&str> = plan.applied_defaults.iter().map(|d| d.parameter.as_str()).collect();
    assert_eq!(applied, ["probe_radius", "samples"]);
    assert_eq!(plan.units[1].jobs[0].tool, Tool::Report);
}

#[test]
fn intent_values_are_not_defaults() {
    let mut i = intent(TaskKind::SurfaceArea, &["UIO66"], &[]);
    i.conditions.insert("probe_radius".into(), Quantity::angstrom(1.4));
    let plan = build(&i).unwrap();
    let p = &plan.units[0].jobs[0].spec["probe_radius"];
    assert_eq!(p.source, ParamSource::Intent);
    assert_eq!(p.value, SettingValue::Quantity(Quantity::angstrom(1.4)));
    assert!(plan.applied_defaults.iter().all(|d| d.parameter != "probe_radius"));
}

#[test]
fn reference_settings_fill_template_params() {
    let mut i = intent(TaskKind::DiffusionCoefficient, &["UIO66"], &["CO2"]);
    i.reference_settings = Some(crate::intent::extract_reference_settings("pair_style lj/cut 12.0\ntimestep 2.0"));
    let plan = build(&i).unwrap();
    let job = &plan.units[0].jobs[0];
    assert_eq!(job.spec["cutoff"].source, ParamSource::ReferenceSettings);
    assert_eq!(job.spec["timestep"].value, SettingValue::Quantity(Quantity::femtoseconds(2.0)));
    assert_eq!(job.guests, vec!["CO2".to_string()]);
    let applied: Vec<&str> = plan.applied_defaults.iter().map(|d| d.parameter.as_str()).collect();
    assert_eq!(applied, ["temperature", "ensemble", "steps"]);
}

#[test]
fn unresolved_material_is_rejected() {
    let mut i = intent(TaskKind::SurfaceArea, &[], &[]);
    i.materials.push(MaterialRef::generic("a MOF"));
    assert_eq!(build(&i), Err(PlannerError::UnresolvedMaterial("a MOF".into())));
    assert!(matches!(build(&intent(TaskKind::SurfaceArea, &[], &[])), Err(PlannerError::UnresolvedMaterial(_))));
}

#[test]
fn missing_template_is_reported() {
    let reg = TemplateRegistry::from_toml("").unwrap();
    let err = build_plan(&intent(TaskKind::BandGap, &["X"], &[]), &DefaultTable::builtin(), &reg).unwrap_err();
    assert_eq!(err, PlannerError::NoTemplate("band_gap".into()));
}

#[test]
fn binding_comparison_chain() {
    let plan = fig5();
    let edges = plan.job_edges();
    for m in ["HKUST1", "ZIF8"] {
        let j = |r: &str| format!("binding.{m}/{r}");
        assert!(!graph::has_path(&j("host_opt"), &j("guest_opt"), &edges));
        assert!(!graph::has_path(&j("guest_opt"), &j("host_opt"), &edges));
        assert!(edges.contains(&(j("host_opt"), j("sample"))));
        assert!(edges.contains(&(j("guest_opt"), j("sample"))));
        for (a, b) in [("sample", "complex_opt"), ("complex_opt", "binding"), ("binding", "charge_density"), ("charge_density", "bader")] {
            assert!(edges.contains(&(j(a), j(b))), "{a} -> {b}");
        }
        assert!(edges.contains(&(j("complex_opt"), j("charge_density"))));
        let sample = plan.job(&j("sample")).unwrap();
        assert_eq!(sample.tool, Tool::Mlip);
        assert_eq!(sample.spec["n_configs"].value, SettingValue::Quantity(Quantity::count(10.0)));
        assert_eq!(sample.spec["seed"].value, SettingValue::Quantity(Quantity::count(42.0)));
        let complex = plan.job(&j("complex_opt")).unwrap();
        assert_eq!(complex.inputs, vec![InputLink { from_job: j("sample"), metric: "selected_index".into(), key: "config_index".into() }]);
    }
    // material subgraphs are edge-disjoint and only meet at the report
    let compute: Vec<_> = edges.iter().filter(|(_, b)| b != REPORT_JOB).collect();
    for (a, b) in &compute {
        assert_eq!(a.split('/').next(), b.split('/').next());
    }
    assert_eq!(plan.units.iter().filter(|u| u.jobs.iter().any(|j| j.tool == Tool::Report)).count(), 1);
    assert!(plan.answer_metrics.contains(&"charge_transfer".to_string()));
}

#[test]
fn removing_one_material_keeps_the_other_intact() {
    let plan = fig5();
    let edges = plan.job_edges();
    let zif: Vec<_> = edges.iter().filter(|(a, b)| a.contains("ZIF8") && b.contains("ZIF8")).cloned().collect();
    let kept: Vec<_> = edges.iter().filter(|(a, b)| !a.contains("HKUST1") && !b.contains("HKUST1") && b != REPORT_JOB).cloned().collect();
    assert_eq!(zif, kept);
    assert_eq!(zif.len(), 7);
}

#[test]
fn analysis_only_when_requested() {
    let plan = build(&intent(TaskKind::BindingEnergy, &["HKUST1"], &["CO2"])).unwrap();
    assert!(plan.job("binding.HKUST1/bader").is_none());
    assert_eq!(plan.units[0].jobs.len(), 5);
}

#[test]
fn follow_up_analysis_records_evidence() {
    let mut plan = build(&intent(TaskKind::BindingEnergy, &["HKUST1", "ZIF8"], &["CO2"])).unwrap();
    let added = extend_with_analysis(
        &mut plan,
        "binding_comparison",
        &DefaultTable::builtin(),
        &TemplateRegistry::builtin(),
        &["methods.txt#3".to_string()],
    )
    .unwrap();
    assert_eq!(added.len(), 4);
    for id in &added {
        assert_eq!(plan.job(id).unwrap().evidence, vec!["methods.txt#3".to_string()]);
    }
    let err = extend_with_analysis(&mut plan.clone(), "nope", &DefaultTable::builtin(), &TemplateRegistry::builtin(), &[]);
    assert_eq!(err, Err(PlannerError::UnsupportedAnalysis("nope".into())));
}

#[test]
fn screening_fans_out_over_shortlist() {
    let mut i = intent(TaskKind::Screening, &[], &["CH4"]);
    i.database_scope = Some("fixture-db".into());
    i.objective = Some("CH4-uptake".into());
    i.conditions.insert("top_n".into(), Quantity::count(5.0));
    let plan = build(&i).unwrap();
    let ids: Vec<&str> = plan.units.iter().map(|u| u.unit_id.as_str()).collect();
    assert_eq!(ids, ["screen", "evaluate.0001", "evaluate.0002", "evaluate.0003", "evaluate.0004", "evaluate.0005", "report"]);
    let screen = plan.job("screen/funnel").unwrap();
    assert_eq!(screen.param("database"), Some(&SettingValue::Text("fixture-db".into())));
    assert_eq!(screen.spec["objective"].source, ParamSource::Intent);
    for r in 1..=5 {
        let u = format!("evaluate.{r:04}");
        assert!(plan.edges.contains(&e("screen", &u)));
        assert!(plan.edges.contains(&e(&u, "report")));
        assert_eq!(plan.job(&format!("{u}/gcmc")).unwrap().shortlist_rank, Some(r));
    }
    assert!(!plan.edges.contains(&e("screen", "report")));
}

#[test]
fn screening_without_objective_is_incomplete() {
    let mut i = intent(TaskKind::Screening, &[], &[]);
    i.database_scope = Some("fixture-db".into());
    assert!(matches!(build(&i), Err(PlannerError::MissingParameter { param, .. }) if param == "objective"));
}

#[test]
fn every_task_plans_and_defaults_are_total() {
    for t in TaskKind::ALL {
        let mut i = intent(t, &["UIO66", "ZIF8"], &["CO2"]);
        if t == TaskKind::Screening {
            i.objective = Some("CO2-uptake".into());
            i.conditions.insert("top_n".into(), Quantity::count(3.0));
        }
        let plan = build(&i).unwrap();
        let tpl = TemplateRegistry::builtin().plan(t).cloned().unwrap();
        for u in &tpl.units {
            for jt in &u.jobs {
                for job in plan.jobs().filter(|j| j.role == jt.role) {
                    for p in &jt.params {
                        assert!(job.spec.contains_key(p), "{t}: {} lacks {p}", job.job_id);
                    }
                }
            }
        }
        let mut from_defaults: Vec<&str> = plan
            .jobs()
            .flat_map(|j| j.spec.iter())
            .filter(|(_, p)| p.source == ParamSource::Default)
            .map(|(k, _)| k.as_str())
            .collect();
        from_defaults.sort();
        from_defaults.dedup();
        let mut applied: Vec<&str> = plan.applied_defaults.iter().map(|d| d.parameter.as_str()).collect();
        applied.sort();
        assert_eq!(from_defaults, applied, "{t}");
        for (k, _) in &i.conditions {
            assert!(!applied.contains(&k.as_str()));
        }
    }
}

#[test]
fn ready_jobs_basics() {
    let plan = build(&intent(TaskKind::SurfaceArea, &["UIO66"], &[])).unwrap();
    let none = BTreeMap::new();
    let ids = |v: Vec<&Job>| v.into_iter().map(|j| j.job_id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(ready_jobs(&plan, &none)), ["calc.UIO66/geometry"]);
    let done = BTreeMap::from([("calc.UIO66/geometry".to_string(), JobStatus::Succeeded)]);
    assert_eq!(ids(ready_jobs(&plan, &done)), [REPORT_JOB]);
    let failed = BTreeMap::from([("calc.UIO66/geometry".to_string(), JobStatus::Failed)]);
    assert!(ready_jobs(&plan, &failed).is_empty());

    let empty = Plan { units: vec![], edges: vec![], applied_defaults: vec![], answer_metrics: vec![], ..plan };
    assert!(ready_jobs(&empty, &BTreeMap::new()).is_empty());
}

#[test]
fn ready_after_hkust_optimizations() {
    let plan = fig5();
    let statuses = BTreeMap::from([
        ("binding.HKUST1/host_opt".to_string(), JobStatus::Succeeded),
        ("binding.HKUST1/guest_opt".to_string(), JobStatus::Succeeded),
        ("binding.ZIF8/host_opt".to_string(), JobStatus::Running),
        ("binding.ZIF8/guest_opt".to_string(), JobStatus::Running),
    ]);
    let ready: Vec<&str> = ready_jobs(&plan, &statuses).iter().map(|j| j.job_id.as_str()).collect();
    assert_eq!(ready, ["binding.HKUST1/sample"]);
}

#[test]
fn topological_order_respects_edges() {
    let plan = fig5();
    let order = plan.topological_order().unwrap();
    let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    for (a, b) in plan.job_edges() {
        assert!(pos[a.as_str()] < pos[b.as_str()]);
    }
    assert_eq!(order.last().map(String::as_str), Some(REPORT_JOB));
    assert_eq!(order[0], "binding.HKUST1/guest_opt");
}

#[test]
fn cycle_in_plan_is_detected() {
    let mut plan = build(&intent(TaskKind::BindingEnergy, &["HKUST1"], &["CO2"])).unwrap();
    plan.units[0].intra_edges.push(e("binding.HKUST1/binding", "binding.HKUST1/host_opt"));
    match plan.topological_order() {
        Err(PlannerError::CycleDetected(c)) => {
            assert_eq!(c.first(), c.last());
            assert!(c.contains(&"binding.HKUST1/host_opt".to_string()));
        }
        other => panic!("{other:?}"),
    }
    assert!(plan.validate().is_err());
}

#[test]
fn plan_json_round_trips() {
    let plan = fig5();
    let text = plan.to_json();
    assert_eq!(Plan::from_json(&text).unwrap(), plan);
    let first_keys: Vec<&str> = text.lines().skip(1).take(2).map(|l| l.trim()).collect();
    assert!(first_keys[0].starts_with("\"plan_id\""));
    assert!(first_keys[1].starts_with("\"intent\""));
    assert!(Plan::from_json("{}").is_err());
}

#[test]
fn plan_id_is_deterministic() {
    assert_eq!(fig5().plan_id, fig5().plan_id);
    assert_ne!(fig5().plan_id, build(&intent(TaskKind::SurfaceArea, &["UIO66"], &[])).unwrap().plan_id);
}

// Independent oracle: repeatedly emit the smallest id whose predecessors
// are all emitted. Quadratic, but obviously correct.
fn oracle_order(nodes: &[String], edges: &[(String, String)]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut left: Vec<String> = nodes.to_vec();
    left.sort();
    while !left.is_empty() {
        let i = left
            .iter()
            .position(|n| edges.iter().filter(|(_, b)| b == n).all(|(a, _)| out.contains(a)))
            .expect("acyclic");
        out.push(left.remove(i));
    }
    out
}

fn random_plan(n: usize, perm: &[usize], mask: &[bool]) -> Plan {
    let base = build(&intent(TaskKind::SurfaceArea, &["UIO66"], &[])).unwrap();
    let template = base.units[0].jobs[0].clone();
    let name = |i: usize| format!("u/j{:02}", perm[i]);
    let jobs: Vec<Job> = (0..n).map(|i| Job { job_id: name(i), ..template.clone() }).collect();
    let mut intra = Vec::new();
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            if mask[k % mask.len()] {
                intra.push((name(a), name(b)));
            }
            k += 1;
        }
    }
    let mut units = vec![PlanUnit { unit_id: "u".into(), material: None, jobs, intra_edges: intra }];
    units.push(base.units[1].clone());
    Plan { units, edges: vec![e("u", "report")], ..base }
}

proptest! {
    #[test]
    fn topological_order_matches_oracle(perm in Just((0..20).collect::<Vec<usize>>()).prop_shuffle(), mask in prop::collection::vec(prop::bool::weighted(0.15), 190)) {
        let plan = random_plan(20, &perm, &mask);
        plan.validate().unwrap();
        let got = plan.topological_order().unwrap();
        prop_assert_eq!(got, oracle_order(&plan.job_ids(), &plan.job_edges()));
    }

    #[test]
    fn ready_set_is_monotone(seed in prop::collection::vec(0u8..3, 20), pick in 0usize..20) {
        let plan = fig5();
        let ids = plan.job_ids();
        let statuses: BTreeMap<String, JobStatus> = ids
            .iter()
            .zip(seed.iter().cycle())
            .map(|(id, s)| (id.clone(), [JobStatus::Pending, JobStatus::Succeeded, JobStatus::Running][*s as usize]))
            .collect();
        let before: BTreeSet<String> = ready_jobs(&plan, &statuses).iter().map(|j| j.job_id.clone()).collect();
        let target = &ids[pick % ids.len()];
        prop_assume!(!before.contains(target));
        let mut more = statuses.clone();
        more.insert(target.clone(), JobStatus::Succeeded);
        let after: BTreeSet<String> = ready_jobs(&plan, &more).iter().map(|j| j.job_id.clone()).collect();
        prop_assert!(before.is_subset(&after));
    }
}
