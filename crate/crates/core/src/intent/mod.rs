//! Natural-language query interpretation.
//!
//! The built-in rule engine recognizes task verbs, guest species, physical
//! conditions, database scopes and material identifiers (through a
//! [`MaterialResolver`]). The full grammar is documented in
//! `docs/intent-grammar.md`; a language-model client can replace
//! [`RuleEngine`] behind the [`IntentParser`] trait.

mod grammar;
mod settings;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use grammar::{parse_conditions, render_conditions, GUEST_SPECIES};
pub use settings::{extract_reference_settings, ReferenceSettings, SettingValue, SETTING_KEYS};

use crate::structdb::{MatchKind, StructDb, StructDbError};
use crate::units::Quantity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SurfaceArea,
    PoreDiameter,
    PoreVolume,
    PoreSizeDistribution,
    GcmcUptake,
    HenryCoefficient,
    DiffusionCoefficient,
    InteractionEnergy,
    Rdf,
    BindingEnergy,
    BandGap,
    GeometryOptimization,
    BaderCharge,
    Screening,
    AnalysisComparison,
}

impl TaskKind {
    pub const ALL: [TaskKind; 15] = [
        TaskKind::SurfaceArea,
        TaskKind::PoreDiameter,
        TaskKind::PoreVolume,
        TaskKind::PoreSizeDistribution,
        TaskKind::GcmcUptake,
        TaskKind::HenryCoefficient,
        TaskKind::DiffusionCoefficient,
        TaskKind::InteractionEnergy,
        TaskKind::Rdf,
        TaskKind::BindingEnergy,
        TaskKind::BandGap,
        TaskKind::GeometryOptimization,
        TaskKind::BaderCharge,
        TaskKind::Screening,
        TaskKind::AnalysisComparison,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            TaskKind::SurfaceArea => "surface_area",
            TaskKind::PoreDiameter => "pore_diameter",
            TaskKind::PoreVolume => "pore_volume",
            TaskKind::PoreSizeDistribution => "pore_size_distribution",
            TaskKind::GcmcUptake => "gcmc_uptake",
            TaskKind::HenryCoefficient => "henry_coefficient",
            TaskKind::DiffusionCoefficient => "diffusion_coefficient",
            TaskKind::InteractionEnergy => "interaction_energy",
            TaskKind::Rdf => "rdf",
            TaskKind::BindingEnergy => "binding_energy",
            TaskKind::BandGap => "band_gap",
            TaskKind::GeometryOptimization => "geometry_optimization",
            TaskKind::BaderCharge => "bader_charge",
            TaskKind::Screening => "screening",
            TaskKind::AnalysisComparison => "analysis_comparison",
        }
    }

    pub fn from_slug(s: &str) -> Option<TaskKind> {
        TaskKind::ALL.into_iter().find(|k| k.slug() == s)
    }

    pub fn label(self) -> &'static str {
        match self {
            TaskKind::SurfaceArea => "surface area",
            TaskKind::PoreDiameter => "pore diameter",
            TaskKind::PoreVolume => "pore volume",
            TaskKind::PoreSizeDistribution => "pore size distribution",
            TaskKind::GcmcUptake => "adsorption uptake",
            TaskKind::HenryCoefficient => "Henry coefficient",
            TaskKind::DiffusionCoefficient => "diffusion coefficient",
            TaskKind::InteractionEnergy => "interaction energy",
            TaskKind::Rdf => "radial distribution function",
            TaskKind::BindingEnergy => "binding energy",
            TaskKind::BandGap => "band gap",
            TaskKind::GeometryOptimization => "geometry optimization",
            TaskKind::BaderCharge => "Bader charge",
            TaskKind::Screening => "screening",
            TaskKind::AnalysisComparison => "comparison",
        }
    }

    /// Tasks that cannot run without a guest molecule.
    pub fn requires_guest(self) -> bool {
        matches!(
            self,
            TaskKind::GcmcUptake
                | TaskKind::HenryCoefficient
                | TaskKind::DiffusionCoefficient
                | TaskKind::InteractionEnergy
                | TaskKind::Rdf
                | TaskKind::BindingEnergy
                | TaskKind::Screening
        )
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialKind {
    CommonName,
    Synonym,
    Formula,
    Refcode,
    FileReference,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialRef {
    pub raw_text: String,
    pub kind: MaterialKind,
    pub resolved_id: Option<String>,
}

impl MaterialRef {
    pub fn generic(raw: &str) -> Self {
        MaterialRef { raw_text: raw.to_string(), kind: MaterialKind::Generic, resolved_id: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub session_id: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

impl Query {
    pub fn new(session_id: &str, text: &str) -> Self {
        Query { text: text.to_string(), session_id: session_id.to_string(), attachments: Vec::new() }
    }

    pub fn with_attachment(mut self, name: &str, text: &str) -> Self {
        self.attachments.push(Attachment { name: name.to_string(), text: text.to_string() });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub task_kind: TaskKind,
    pub materials: Vec<MaterialRef>,
    pub guests: Vec<String>,
    pub conditions: BTreeMap<String, Quantity>,
    pub reference_settings: Option<ReferenceSettings>,
    pub analysis_requested: bool,
    pub database_scope: Option<String>,
    /// Ranking objective for screening intents, e.g. `ch4-uptake`.
    pub objective: Option<String>,
}

impl Intent {
    pub fn resolved_ids(&self) -> Vec<&str> {
        self.materials.iter().filter_map(|m| m.resolved_id.as_deref()).collect()
    }
}

/// Everything gathered so far in a session that still lacks information.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialIntent {
    pub session_id: String,
    pub task_kind: Option<TaskKind>,
    pub materials: Vec<MaterialRef>,
    pub guests: Vec<String>,
    pub conditions: BTreeMap<String, Quantity>,
    pub reference_settings: Option<ReferenceSettings>,
    pub analysis_requested: bool,
    pub database_scope: Option<String>,
    pub objective: Option<String>,
    /// Identifiers that were mentioned but could not be resolved.
    pub unresolved: Vec<String>,
    pub ambiguous: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Missing {
    MaterialIdentifier,
    GuestSpecies,
    Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarificationRequest {
    pub missing: Vec<Missing>,
    pub prompt_text: String,
    pub blocking: bool,
    pub partial: PartialIntent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseOutcome {
    Intent(Intent),
    Clarification(ClarificationRequest),
}

impl ParseOutcome {
    pub fn intent(self) -> Option<Intent> {
        match self {
            ParseOutcome::Intent(i) => Some(i),
            ParseOutcome::Clarification(_) => None,
        }
    }

    pub fn clarification(self) -> Option<ClarificationRequest> {
        match self {
            ParseOutcome::Clarification(c) => Some(c),
            ParseOutcome::Intent(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IntentError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("no task or material could be recognized in the query")]
    UnrecognizedTask,
    #[error("answer belongs to session `{got}`, expected `{expected}`")]
    SessionMismatch { expected: String, got: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Found { id: String, kind: MaterialKind },
    Ambiguous(Vec<String>),
    NotFound,
}

/// Callback used by the rule engine to ground material mentions.
pub trait MaterialResolver {
    fn resolve(&self, raw: &str) -> Resolution;
    /// Every string that [`resolve`](Self::resolve) recognizes; used to
    /// find material mentions in free text.
    fn aliases(&self) -> Vec<String>;
}

impl MaterialResolver for StructDb {
    fn resolve(&self, raw: &str) -> Resolution {
        match self.resolve_with_kind(raw) {
            Ok((rec, how)) => Resolution::Found {
                id: rec.structure_id.clone(),
                kind: match how {
                    MatchKind::StructureId => MaterialKind::Refcode,
                    MatchKind::PrimaryName => MaterialKind::CommonName,
                    MatchKind::Synonym | MatchKind::Pormake => MaterialKind::Synonym,
                    MatchKind::Formula => MaterialKind::Formula,
                },
            },
            Err(StructDbError::Ambiguous { candidates, .. }) => Resolution::Ambiguous(candidates),
            Err(_) => Resolution::NotFound,
        }
    }

    fn aliases(&self) -> Vec<String> {
        StructDb::aliases(self)
    }
}

/// Contract shared by the rule engine and any model-backed parser.
pub trait IntentParser {
    fn parse_query(&self, q: &Query, resolver: &dyn MaterialResolver) -> Result<ParseOutcome, IntentError>;
    fn merge_clarification(
        &self,
        partial: &PartialIntent,
        answer: &Query,
        resolver: &dyn MaterialResolver,
    ) -> Result<ParseOutcome, IntentError>;
}

/// Deterministic keyword grammar.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleEngine;

impl IntentParser for RuleEngine {
    fn parse_query(&self, q: &Query, resolver: &dyn MaterialResolver) -> Result<ParseOutcome, IntentError> {
        parse_query(q, resolver)
    }

    fn merge_clarification(
        &self,
        partial: &PartialIntent,
        answer: &Query,
        resolver: &dyn MaterialResolver,
    ) -> Result<ParseOutcome, IntentError> {
        merge_clarification(partial, answer, resolver)
    }
}

fn query_settings(q: &Query) -> Option<ReferenceSettings> {
    let mut refs = ReferenceSettings::default();
    for a in &q.attachments {
        refs.merge(extract_reference_settings(&a.text));
    }
    let inline: Vec<&str> = q.text.lines().filter(|l| settings::looks_like_setting(l.trim())).collect();
    if !inline.is_empty() {
        refs.merge(extract_reference_settings(&inline.join("\n")));
    }
    (!refs.is_empty()).then_some(refs)
}

pub fn parse_query(q: &Query, resolver: &dyn MaterialResolver) -> Result<ParseOutcome, IntentError> {
    if q.text.trim().is_empty() {
        return Err(IntentError::EmptyQuery);
    }
    let mut partial = grammar::extract(&q.text, resolver);
    partial.session_id = q.session_id.clone();
    partial.reference_settings = query_settings(q);
    if partial.task_kind.is_none() && partial.materials.iter().all(|m| m.resolved_id.is_none()) {
        return Err(IntentError::UnrecognizedTask);
    }
    Ok(finalize(partial))
}

/// Fills the gaps of a pending clarification with the user's answer.
pub fn merge_clarification(
    partial: &PartialIntent,
    answer: &Query,
    resolver: &dyn MaterialResolver,
) -> Result<ParseOutcome, IntentError> {
    if answer.session_id != partial.session_id {
        return Err(IntentError::SessionMismatch { expected: partial.session_id.clone(), got: answer.session_id.clone() });
    }
    let mut merged = partial.clone();
    if answer.text.trim().is_empty() && answer.attachments.is_empty() {
        return Ok(finalize(merged));
    }
    let add = grammar::extract(&answer.text, resolver);
    if add.task_kind.is_some() && merged.task_kind.is_none() {
        merged.task_kind = add.task_kind;
    }
    let answered_material = add.materials.iter().any(|m| m.kind != MaterialKind::Generic)
        || !add.unresolved.is_empty()
        || !add.ambiguous.is_empty()
        || add.database_scope.is_some();
    if answered_material {
        merged.materials = add.materials;
        merged.unresolved = add.unresolved;
        merged.ambiguous = add.ambiguous;
        if add.database_scope.is_some() {
            merged.database_scope = add.database_scope;
        }
    }
    if !add.guests.is_empty() {
        merged.guests = add.guests;
    }
    merged.conditions.extend(add.conditions);
    merged.analysis_requested |= add.analysis_requested;
    if add.objective.is_some() {
        merged.objective = add.objective;
    }
    if let Some(refs) = query_settings(answer) {
        merged.reference_settings.get_or_insert_with(ReferenceSettings::default).merge(refs);
    }
    grammar::derive_objective(&mut merged);
    Ok(finalize(merged))
}

fn finalize(partial: PartialIntent) -> ParseOutcome {
    let mut missing = Vec::new();
    let resolved = partial.materials.iter().any(|m| m.resolved_id.is_some());
    let all_resolved = partial.unresolved.is_empty() && partial.ambiguous.is_empty();
    if (!resolved || !all_resolved) && partial.database_scope.is_none() {
        missing.push(Missing::MaterialIdentifier);
    }
    match partial.task_kind {
        None => missing.push(Missing::Condition),
        Some(kind) if kind.requires_guest() && partial.guests.is_empty() => missing.push(Missing::GuestSpecies),
        Some(_) => {}
    }
    if missing.is_empty() {
        return ParseOutcome::Intent(Intent {
            task_kind: partial.task_kind.expect("checked above"),
            materials: partial.materials.into_iter().filter(|m| m.kind != MaterialKind::Generic).collect(),
            guests: partial.guests,
            conditions: partial.conditions,
            reference_settings: partial.reference_settings,
            analysis_requested: partial.analysis_requested,
            database_scope: partial.database_scope,
            objective: partial.objective,
        });
    }
    let prompt_text = grammar::clarification_prompt(&partial, &missing);
    ParseOutcome::Clarification(ClarificationRequest { missing, prompt_text, blocking: true, partial })
}

#[cfg(test)]
mod tests;
