use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use super::{MaterialKind, MaterialRef, MaterialResolver, Missing, PartialIntent, Resolution, TaskKind};
use crate::units::{celsius_to_kelvin, pressure_to_pa, Quantity};

/// Canonical guest name and the spellings that map to it.
pub const GUEST_SPECIES: [(&str, &[&str]); 6] = [
    ("CO2", &["co2", "co₂", "carbon dioxide"]),
    ("CH4", &["ch4", "ch₄", "methane"]),
    ("N2", &["n2", "n₂", "nitrogen"]),
    ("H2", &["h2", "h₂", "hydrogen"]),
    ("O2", &["o2", "o₂", "oxygen"]),
    ("H2O", &["h2o", "h₂o", "water"]),
];

const GENERIC_TERMS: [&str; 10] = [
    "a mof",
    "some mof",
    "any mof",
    "a material",
    "some material",
    "any material",
    "a framework",
    "any framework",
    "a metal-organic framework",
    "any metal-organic framework",
];

fn re(p: &str) -> Regex {
    Regex::new(p).expect("static pattern")
}

static TASK_PATTERNS: LazyLock<Vec<(Regex, TaskKind)>> = LazyLock::new(|| {
    vec![
        (re(r"pore[\s-]size distribution|\bpsd\b"), TaskKind::PoreSizeDistribution),
        (re(r"surface area"), TaskKind::SurfaceArea),
        (re(r"pore volume|accessible volume|probe[\s-]occupiable volume|void fraction"), TaskKind::PoreVolume),
        (
            re(r"pore[\s-]limiting diameter|largest cavity diameter|pore diameter|\bpld\b|\blcd\b"),
            TaskKind::PoreDiameter,
        ),
        (re(r"henry"), TaskKind::HenryCoefficient),
        (re(r"binding energ"), TaskKind::BindingEnergy),
        (re(r"diffusion coefficient|diffusivit|self[\s-]diffusion|\bdiffusion\b"), TaskKind::DiffusionCoefficient),
        (re(r"interaction energ"), TaskKind::InteractionEnergy),
        (re(r"radial distribution|\brdf\b"), TaskKind::Rdf),
        (re(r"band[\s-]?gap"), TaskKind::BandGap),
        (re(r"\bbader\b"), TaskKind::BaderCharge),
        (re(r"uptake|adsorption|isotherm|\bgcmc\b|\bloading\b"), TaskKind::GcmcUptake),
        (re(r"geometry optimi[sz]|\boptimi[sz]e|\brelax"), TaskKind::GeometryOptimization),
    ]
});

static SCREEN_TRIGGER: LazyLock<Regex> =
    LazyLock::new(|| re(r"\bscreen|\btop[\s-]*\d+|\bbest\b|top[\s-]performing|\bhighest\b|\brank"));
static ANALYSIS_TRIGGER: LazyLock<Regex> = LazyLock::new(|| re(r"\b(why|compare|comparison|explain)\b"));
static DATABASE: LazyLock<Regex> =
    LazyLock::new(|| re(r"core[\s-]?mof(?:[\s-]?(20\d\d))?(?:[\s-]?fsr)?|fixture[\s-]db"));

static TEMPERATURE_K: LazyLock<Regex> = LazyLock::new(|| re(r"(?:^|[^\w.])(\d+(?:\.\d+)?)\s*K\b"));
static TEMPERATURE_C: LazyLock<Regex> = LazyLock::new(|| re(r"(?:^|[^\w.])(-?\d+(?:\.\d+)?)\s*°\s*C\b"));
static PRESSURE: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?:^|[^\w.])(\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)\s*(mbar|bar|kPa|MPa|Pa|atm)\b"));
static PROBE: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)probe(?:\s+radius)?(?:\s+(?:of|=|is))?\s*(\d+(?:\.\d+)?)\s*(?:Å|angstroms?\b|A\b)")
});
static TOP_N: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\btop[\s-]*(\d+)\b"));
static REFCODE: LazyLock<Regex> = LazyLock::new(|| re(r"\b[A-Z]{6}(?:\d{2})?\b"));
static CIF_FILE: LazyLock<Regex> = LazyLock::new(|| re(r"([\w.-]+)\.cif\b"));

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '_'
}

fn lower_chars(text: &str) -> (Vec<char>, Vec<char>) {
    let orig: Vec<char> = text.chars().collect();
    let low = orig.iter().map(|c| c.to_lowercase().next().unwrap_or(*c)).collect();
    (orig, low)
}

/// Longest-first, non-overlapping, word-bounded occurrences of `terms`.
fn scan_terms<T: Clone>(low: &[char], terms: &[(String, T)], used: &mut [bool]) -> Vec<(usize, usize, T)> {
    let mut sorted: Vec<(Vec<char>, T)> = terms
        .iter()
        .map(|(t, p)| (t.chars().map(|c| c.to_lowercase().next().unwrap_or(c)).collect(), p.clone()))
        .collect();
    sorted.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
    let mut hits = Vec::new();
    for (term, payload) in sorted {
        if term.is_empty() || term.len() > low.len() {
            continue;
        }
        let mut i = 0;
        while i + term.len() <= low.len() {
            let end = i + term.len();
            let matches = low[i..end] == term[..]
                && !used[i..end].iter().any(|u| *u)
                && (i == 0 || !is_word_char(low[i - 1]))
                && (end == low.len() || !is_word_char(low[end]) || trailing_punct(low, end));
            if matches {
                used[i..end].iter_mut().for_each(|u| *u = true);
                hits.push((i, end, payload.clone()));
                i = end;
            } else {
                i += 1;
            }
        }
    }
    hits.sort_by_key(|h| h.0);
    hits
}

// "UiO-66-" followed by nothing word-like still counts as a boundary.
fn trailing_punct(low: &[char], end: usize) -> bool {
    low[end] == '-' && low.get(end + 1).is_none_or(|c| !c.is_alphanumeric())
}

fn char_range_to_string(orig: &[char], start: usize, end: usize) -> String {
    orig[start..end].iter().collect()
}

pub(crate) fn extract(text: &str, resolver: &dyn MaterialResolver) -> PartialIntent {
    let lower = text.to_lowercase();
    let (orig, low) = lower_chars(text);
    let mut used = vec![false; low.len()];
    let mut out = PartialIntent::default();

    // generic terms first so "a MOF" never resolves to anything
    let generic: Vec<(String, ())> = GENERIC_TERMS.iter().map(|t| (t.to_string(), ())).collect();
    for (s, e, ()) in scan_terms(&low, &generic, &mut used) {
        out.materials.push(MaterialRef::generic(&char_range_to_string(&orig, s, e)));
    }

    if let Some(m) = DATABASE.find(&lower) {
        out.database_scope = Some(canonical_database(m.as_str()));
        let start = lower[..m.start()].chars().count();
        let end = start + m.as_str().chars().count();
        if end <= used.len() {
            used[start..end].iter_mut().for_each(|u| *u = true);
        }
    }

    let aliases: Vec<(String, ())> = resolver.aliases().into_iter().map(|a| (a, ())).collect();
    let mut found: Vec<(usize, MaterialRef)> = Vec::new();
    for (s, e, ()) in scan_terms(&low, &aliases, &mut used) {
        let raw = char_range_to_string(&orig, s, e);
        found.push((s, resolve_ref(&raw, resolver, None, &mut out)));
    }

    let guests: Vec<(String, &str)> = GUEST_SPECIES
        .iter()
        .flat_map(|(canon, spellings)| spellings.iter().map(move |s| (s.to_string(), *canon)))
        .collect();
    for (_, _, canon) in scan_terms(&low, &guests, &mut used) {
        if !out.guests.iter().any(|g| g == canon) {
            out.guests.push(canon.to_string());
        }
    }

    let byte_to_char = |b: usize| text[..b].chars().count();
    for m in CIF_FILE.captures_iter(text) {
        let whole = m.get(0).expect("group 0");
        let (s, e) = (byte_to_char(whole.start()), byte_to_char(whole.end()));
        if used[s..e].iter().any(|u| *u) {
            continue;
        }
        used[s..e].iter_mut().for_each(|u| *u = true);
        let stem = m.get(1).expect("stem").as_str();
        found.push((s, resolve_ref(stem, resolver, Some(MaterialKind::FileReference), &mut out)));
    }
    for m in REFCODE.find_iter(text) {
        let (s, e) = (byte_to_char(m.start()), byte_to_char(m.end()));
        if used[s..e].iter().any(|u| *u) {
            continue;
        }
        used[s..e].iter_mut().for_each(|u| *u = true);
        found.push((s, resolve_ref(m.as_str(), resolver, Some(MaterialKind::Refcode), &mut out)));
    }
    found.sort_by_key(|f| f.0);
    for (_, m) in found {
        if m.resolved_id.is_some() && out.materials.iter().any(|x| x.resolved_id == m.resolved_id) {
            continue;
        }
        out.materials.push(m);
    }

    out.conditions = extract_conditions(text);
    out.analysis_requested = ANALYSIS_TRIGGER.is_match(&lower);

    let property = TASK_PATTERNS.iter().find(|(r, _)| r.is_match(&lower)).map(|(_, k)| *k);
    let specific = out.materials.iter().any(|m| m.kind != MaterialKind::Generic);
    let screening = SCREEN_TRIGGER.is_match(&lower) && (out.database_scope.is_some() || !specific);
    out.task_kind = if screening {
        Some(TaskKind::Screening)
    } else if property.is_some() {
        property
    } else if out.analysis_requested {
        Some(TaskKind::AnalysisComparison)
    } else {
        None
    };
    if screening {
        out.objective = property.map(|p| p.slug().to_string()).or_else(|| Some(TaskKind::GcmcUptake.slug().into()));
    }
    derive_objective(&mut out);
    out
}

/// Turns a screening property into an objective slug once a guest is known.
pub(crate) fn derive_objective(p: &mut PartialIntent) {
    if p.task_kind != Some(TaskKind::Screening) {
        return;
    }
    let property = p
        .objective
        .as_deref()
        .and_then(|o| TaskKind::from_slug(o).or_else(|| o.split_once('-').and_then(|(_, k)| objective_kind(k))))
        .unwrap_or(TaskKind::GcmcUptake);
    if let Some(guest) = p.guests.first() {
        let suffix = match property {
            TaskKind::HenryCoefficient => "henry",
            TaskKind::BindingEnergy => "binding",
            _ => "uptake",
        };
        p.objective = Some(format!("{}-{suffix}", guest.to_lowercase()));
    } else {
        p.objective = Some(property.slug().to_string());
    }
}

fn objective_kind(suffix: &str) -> Option<TaskKind> {
    match suffix {
        "uptake" => Some(TaskKind::GcmcUptake),
        "henry" => Some(TaskKind::HenryCoefficient),
        "binding" => Some(TaskKind::BindingEnergy),
        _ => None,
    }
}

fn resolve_ref(
    raw: &str,
    resolver: &dyn MaterialResolver,
    kind_hint: Option<MaterialKind>,
    out: &mut PartialIntent,
) -> MaterialRef {
    match resolver.resolve(raw) {
        Resolution::Found { id, kind } => {
            MaterialRef { raw_text: raw.to_string(), kind: kind_hint.unwrap_or(kind), resolved_id: Some(id) }
        }
        Resolution::Ambiguous(c) => {
            out.ambiguous.push((raw.to_string(), c));
            MaterialRef { raw_text: raw.to_string(), kind: kind_hint.unwrap_or(MaterialKind::Synonym), resolved_id: None }
        }
        Resolution::NotFound => {
            out.unresolved.push(raw.to_string());
            MaterialRef { raw_text: raw.to_string(), kind: kind_hint.unwrap_or(MaterialKind::Refcode), resolved_id: None }
        }
    }
}

fn canonical_database(m: &str) -> String {
    let squashed: String = m.chars().filter(|c| c.is_alphanumeric()).collect();
    match squashed.as_str() {
        "fixturedb" => "fixture-db".into(),
        "coremof" | "coremof2024" | "coremof2024fsr" | "coremoffsr" => "coremof-2024-fsr".into(),
        other => other.to_string(),
    }
}

fn extract_conditions(text: &str) -> BTreeMap<String, Quantity> {
    let mut c = BTreeMap::new();
    if let Some(m) = TEMPERATURE_K.captures(text) {
        if let Ok(v) = m[1].parse::<f64>() {
            c.insert("temperature".to_string(), Quantity::kelvin(v));
        }
    } else if let Some(m) = TEMPERATURE_C.captures(text) {
        if let Ok(v) = m[1].parse::<f64>() {
            c.insert("temperature".to_string(), Quantity::kelvin(celsius_to_kelvin(v)));
        }
    }
    if let Some(m) = PRESSURE.captures(text) {
        if let Some(pa) = m[1].parse::<f64>().ok().and_then(|v| pressure_to_pa(v, &m[2])) {
            c.insert("pressure".to_string(), Quantity::pascal(pa));
        }
    }
    if let Some(m) = PROBE.captures(text) {
        if let Ok(v) = m[1].parse::<f64>() {
            c.insert("probe_radius".to_string(), Quantity::angstrom(v));
        }
    }
    if let Some(m) = TOP_N.captures(text) {
        if let Ok(v) = m[1].parse::<f64>() {
            c.insert("top_n".to_string(), Quantity::count(v));
        }
    }
    c
}

/// `name=value unit; ...` in key order.
pub fn render_conditions(c: &BTreeMap<String, Quantity>) -> String {
    c.iter().map(|(k, q)| format!("{k}={q}")).collect::<Vec<_>>().join("; ")
}

pub fn parse_conditions(s: &str) -> Option<BTreeMap<String, Quantity>> {
    let mut out = BTreeMap::new();
    for part in s.split("; ").filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=')?;
        out.insert(k.to_string(), v.parse().ok()?);
    }
    Some(out)
}

pub(crate) fn clarification_prompt(p: &PartialIntent, missing: &[Missing]) -> String {
    let task = p.task_kind.map(|k| k.label()).unwrap_or("this request");
    let mut lines = Vec::new();
    for m in missing {
        match m {
            Missing::MaterialIdentifier => {
                if let Some(g) = p.materials.iter().find(|m| m.kind == MaterialKind::Generic) {
                    lines.push(format!("`{}` is a generic term, not a material identifier.", g.raw_text));
                }
                for raw in &p.unresolved {
                    lines.push(format!("`{raw}` was not found in the structure database."));
                }
                for (raw, cands) in &p.ambiguous {
                    lines.push(format!("`{raw}` matches several structures: {}.", cands.join(", ")));
                }
                lines.push(format!(
                    "Cannot run {task} without a specific material. Give a common name, REFCODE or CIF file."
                ));
            }
            Missing::GuestSpecies => {
                lines.push(format!("Which guest molecule should be used for the {task} (e.g. CO2, CH4, N2)?"))
            }
            Missing::Condition => {
                let who = p
                    .materials
                    .iter()
                    .find_map(|m| m.resolved_id.as_ref().map(|_| m.raw_text.clone()))
                    .unwrap_or_else(|| "the material".into());
                lines.push(format!("Which property should be computed for {who}?"));
            }
        }
    }
    lines.join(" ")
}
