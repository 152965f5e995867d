//! Exemplar cases and synthesized reasoning trajectories.
//!
//! * type 1: direct diagnosis, `final = primary`.
//! * type 2: a differential is compared and rejected, `final = primary`.
//! * type 3: a differential is compared and adopted, `final = differential`.
//!
//! Differentials come from [`resolve_ddx_neighbor`]; when it finds nothing a
//! diagnosis is drawn uniformly (seeded) from the other diagnoses that have
//! cases. The differential case is the lowest-id case with that diagnosis.

mod generator;
mod render;

pub use generator::{GenerationError, MockGenerator, TextGenerator};
pub use render::{hierarchy_sentence, render_sft, SftRecord};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::comparator_prompt;
use crate::taxonomy::{
    canonicalize, resolve_ddx_neighbor, CaseIndex, DdxGraph, TaxonomyAnnotation, TaxonomyTree, FORMAT_VERSION,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticCase {
    pub id: String,
    pub image_ref: String,
    pub rationale: String,
    pub diagnosis: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Type1,
    Type2,
    Type3,
}

impl TrajectoryKind {
    pub const ALL: [TrajectoryKind; 3] = [TrajectoryKind::Type1, TrajectoryKind::Type2, TrajectoryKind::Type3];

    pub fn as_str(self) -> &'static str {
        match self {
            TrajectoryKind::Type1 => "type1",
            TrajectoryKind::Type2 => "type2",
            TrajectoryKind::Type3 => "type3",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub id: String,
    pub kind: TrajectoryKind,
    pub image_ref: String,
    pub primary_rationale: String,
    pub primary_diagnosis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub differential_case_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub differential_rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub differential_diagnosis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<String>,
    pub final_diagnosis: String,
    pub annotation: TaxonomyAnnotation,
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

impl Trajectory {
    /// Kind-specific field rules plus `annotation == path_of(final)`.
    pub fn check_invariants(&self, tree: &TaxonomyTree) -> std::result::Result<(), String> {
        let has_diff = self.differential_diagnosis.is_some()
            && self.differential_rationale.is_some()
            && self.comparison.is_some();
        let none_diff = self.differential_diagnosis.is_none()
            && self.differential_rationale.is_none()
            && self.comparison.is_none();
        let ok = match self.kind {
            TrajectoryKind::Type1 => none_diff && self.final_diagnosis == self.primary_diagnosis,
            TrajectoryKind::Type2 => has_diff && self.final_diagnosis == self.primary_diagnosis,
            TrajectoryKind::Type3 => {
                has_diff && Some(&self.final_diagnosis) == self.differential_diagnosis.as_ref()
            }
        };
        if !ok {
            return Err(format!("{}: {} field rules violated", self.id, self.kind.as_str()));
        }
        match tree.path_of(&self.final_diagnosis) {
            Ok(a) if a == self.annotation => Ok(()),
            Ok(_) => Err(format!("{}: annotation differs from path_of(final)", self.id)),
            Err(e) => Err(format!("{}: {e}", self.id)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub case_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthOutput {
    pub trajectories: Vec<Trajectory>,
    pub skipped: Vec<Skipped>,
}

impl SynthOutput {
    pub fn skip_count(&self) -> usize {
        self.skipped.len()
    }

    fn extend(&mut self, other: SynthOutput) {
        self.trajectories.extend(other.trajectories);
        self.skipped.extend(other.skipped);
    }
}

/// Splits cases into those usable as exemplars and skip records.
fn partition<'a>(cases: &'a [DiagnosticCase], tree: &TaxonomyTree) -> (Vec<&'a DiagnosticCase>, Vec<Skipped>) {
    let mut sorted: Vec<&DiagnosticCase> = cases.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for case in sorted {
        let reason = if !tree.contains(&case.diagnosis) {
            Some(format!("diagnosis `{}` not in taxonomy", canonicalize(&case.diagnosis)))
        } else if case.rationale.trim().is_empty() {
            Some("empty rationale".to_string())
        } else {
            None
        };
        match reason {
            Some(reason) => skipped.push(Skipped {
                case_id: case.id.clone(),
                reason,
            }),
            None => ok.push(case),
        }
    }
    (ok, skipped)
}

pub fn synth_type1(cases: &[DiagnosticCase], tree: &TaxonomyTree) -> SynthOutput {
    let (usable, skipped) = partition(cases, tree);
    let trajectories = usable
        .into_iter()
        .map(|case| {
            let d = canonicalize(&case.diagnosis);
            Trajectory {
                format_version: FORMAT_VERSION,
                id: format!("{}:type1", case.id),
                kind: TrajectoryKind::Type1,
                image_ref: case.image_ref.clone(),
                primary_rationale: case.rationale.clone(),
                primary_diagnosis: d.clone(),
                differential_case_id: None,
                differential_rationale: None,
                differential_diagnosis: None,
                comparison: None,
                annotation: tree.path_of(&d).expect("partition keeps resolvable cases"),
                final_diagnosis: d,
            }
        })
        .collect();
    SynthOutput { trajectories, skipped }
}

/// Knobs shared by the differential synthesizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DifferentialOptions {
    pub seed: u64,
    /// Upper bound on concurrent generator calls; 1 runs sequentially.
    pub max_in_flight: usize,
}

impl DifferentialOptions {
    pub fn seeded(seed: u64) -> Self {
        Self { seed, max_in_flight: 1 }
    }
}

pub fn synth_type2(
    cases: &[DiagnosticCase],
    tree: &TaxonomyTree,
    ddx: &DdxGraph,
    generator: &dyn TextGenerator,
    seed: u64,
) -> Result<SynthOutput> {
    synth_differential(TrajectoryKind::Type2, cases, cases, tree, ddx, generator, DifferentialOptions::seeded(seed))
}

pub fn synth_type3(
    cases: &[DiagnosticCase],
    tree: &TaxonomyTree,
    ddx: &DdxGraph,
    generator: &dyn TextGenerator,
    seed: u64,
) -> Result<SynthOutput> {
    synth_differential(TrajectoryKind::Type3, cases, cases, tree, ddx, generator, DifferentialOptions::seeded(seed))
}

struct Pairing<'a> {
    primary: &'a DiagnosticCase,
    primary_diagnosis: String,
    differential: &'a DiagnosticCase,
    differential_diagnosis: String,
    prompt: String,
}

/// Type-2/3 synthesis for `primaries`, drawing differential cases from
/// `corpus` (which may be larger than `primaries`).
pub fn synth_differential(
    kind: TrajectoryKind,
    primaries: &[DiagnosticCase],
    corpus: &[DiagnosticCase],
    tree: &TaxonomyTree,
    ddx: &DdxGraph,
    generator: &dyn TextGenerator,
    options: DifferentialOptions,
) -> Result<SynthOutput> {
    assert!(kind != TrajectoryKind::Type1, "type1 has no differential");
    let (usable, mut skipped) = partition(primaries, tree);
    let (pool, _) = partition(corpus, tree);
    let by_id: BTreeMap<&str, &DiagnosticCase> = pool.iter().map(|c| (c.id.as_str(), *c)).collect();
    let index = CaseIndex::from_pairs(pool.iter().map(|c| (c.diagnosis.as_str(), c.id.clone())));
    let diagnoses: Vec<&str> = index.diagnoses().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut pairings = Vec::with_capacity(usable.len());
    for case in usable {
        let d_p = canonicalize(&case.diagnosis);
        let d_d = match resolve_ddx_neighbor(&d_p, ddx, tree, &index) {
            Some(d) => d,
            None => {
                let others: Vec<&str> = diagnoses.iter().copied().filter(|d| *d != d_p).collect();
                if others.is_empty() {
                    return Err(Error::FallbackSampling(diagnoses.len()));
                }
                others[rng.random_range(0..others.len())].to_string()
            }
        };
        let diff_id = index.first_case(&d_d).expect("differential has a case");
        let differential = by_id[diff_id];
        let anchor = if kind == TrajectoryKind::Type2 { &d_p } else { &d_d };
        let prompt = comparator_prompt(&case.rationale, &differential.rationale, anchor);
        pairings.push(Pairing {
            primary: case,
            primary_diagnosis: d_p,
            differential,
            differential_diagnosis: d_d,
            prompt,
        });
    }

    let prompts: Vec<&str> = pairings.iter().map(|p| p.prompt.as_str()).collect();
    let completions = generate_all(generator, &prompts, options.max_in_flight);

    let mut trajectories = Vec::with_capacity(pairings.len());
    for (p, completion) in pairings.into_iter().zip(completions) {
        let comparison = match completion {
            Ok(text) => text,
            Err(e) => {
                skipped.push(Skipped {
                    case_id: p.primary.id.clone(),
                    reason: format!("generator failed: {e}"),
                });
                continue;
            }
        };
        let final_diagnosis = match kind {
            TrajectoryKind::Type2 => p.primary_diagnosis.clone(),
            _ => p.differential_diagnosis.clone(),
        };
        trajectories.push(Trajectory {
            format_version: FORMAT_VERSION,
            id: format!("{}:{}", p.primary.id, kind.as_str()),
            kind,
            image_ref: p.primary.image_ref.clone(),
            primary_rationale: p.primary.rationale.clone(),
            primary_diagnosis: p.primary_diagnosis,
            differential_case_id: Some(p.differential.id.clone()),
            differential_rationale: Some(p.differential.rationale.clone()),
            differential_diagnosis: Some(p.differential_diagnosis),
            comparison: Some(comparison),
            annotation: tree.path_of(&final_diagnosis)?,
            final_diagnosis,
        });
    }
    skipped.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(SynthOutput { trajectories, skipped })
}

/// Runs the generator over `prompts` with at most `max_in_flight` calls at
/// once. Results come back in input order.
fn generate_all(
    generator: &dyn TextGenerator,
    prompts: &[&str],
    max_in_flight: usize,
) -> Vec<std::result::Result<String, GenerationError>> {
    if max_in_flight <= 1 {
        return prompts.iter().map(|p| generator.generate(p)).collect();
    }
    let mut out = Vec::with_capacity(prompts.len());
    for chunk in prompts.chunks(max_in_flight) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|p| s.spawn(move || generator.generate(p))).collect();
            for h in handles {
                out.push(h.join().unwrap_or_else(|_| Err(GenerationError::Other("generator panicked".into()))));
            }
        });
    }
    out
}

/// Relative weights of type 1/2/3 trajectories in a mixed run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindMix(pub [u32; 3]);

impl Default for KindMix {
    fn default() -> Self {
        KindMix([1, 1, 1])
    }
}

impl std::str::FromStr for KindMix {
    type Err = String;

    /// Parses `a:b:c`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("mix `{s}` must look like 1:1:1"));
        }
        let mut w = [0u32; 3];
        for (slot, part) in w.iter_mut().zip(parts) {
            *slot = part.trim().parse().map_err(|_| format!("bad weight `{part}` in mix `{s}`"))?;
        }
        if w.iter().all(|x| *x == 0) {
            return Err("mix weights must not all be zero".into());
        }
        Ok(KindMix(w))
    }
}

/// Deterministically splits cases among the three kinds in proportion to
/// `mix` (largest-remainder rounding).
pub fn assign_kinds(cases: &[DiagnosticCase], mix: KindMix, seed: u64) -> [Vec<DiagnosticCase>; 3] {
    let mut sorted: Vec<&DiagnosticCase> = cases.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    sorted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n = sorted.len() as u64;
    let total: u64 = mix.0.iter().map(|w| *w as u64).sum();
    let mut counts = [0usize; 3];
    let mut remainders = [(0u64, 0usize); 3];
    for k in 0..3 {
        let exact = n * mix.0[k] as u64;
        counts[k] = (exact / total) as usize;
        remainders[k] = (exact % total, k);
    }
    let assigned: usize = counts.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, k) in remainders.iter().take(sorted.len() - assigned) {
        counts[*k] += 1;
    }

    let mut out: [Vec<DiagnosticCase>; 3] = Default::default();
    let mut it = sorted.into_iter();
    for k in 0..3 {
        out[k] = it.by_ref().take(counts[k]).cloned().collect();
        out[k].sort_by(|a, b| a.id.cmp(&b.id));
    }
    out
}

/// Mixed-kind synthesis: cases are split by `mix`, each share is
/// synthesized as its kind, and differentials are drawn from the full corpus.
pub fn synthesize(
    cases: &[DiagnosticCase],
    tree: &TaxonomyTree,
    ddx: &DdxGraph,
    generator: &dyn TextGenerator,
    mix: KindMix,
    options: DifferentialOptions,
) -> Result<SynthOutput> {
    let [t1, t2, t3] = assign_kinds(cases, mix, options.seed);
    let mut out = synth_type1(&t1, tree);
    out.extend(synth_differential(TrajectoryKind::Type2, &t2, cases, tree, ddx, generator, options)?);
    out.extend(synth_differential(TrajectoryKind::Type3, &t3, cases, tree, ddx, generator, options)?);
    out.trajectories.sort_by(|a, b| a.id.cmp(&b.id));
    out.skipped.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(out)
}
