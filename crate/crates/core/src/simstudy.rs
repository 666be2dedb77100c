//! Random surrogate-outcome instances and the coverage study comparing the
//! transport-based procedure against the derivation search.
//!
//! Each instance is generated from its own seed, derived from the master
//! seed with SplitMix64 (`seed_i` is output `i` of the stream started at the
//! master seed), so instances
//! can be produced in parallel and in any order without changing results.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::formula::{render, Atom, Expr, Style};
use crate::graph::{GraphError, SemiMarkovGraph};
use crate::oracle::{docalc_search, verify_with, OracleError, SearchBounds, VerifyOptions};
use crate::surrogate::{information_set, surrogate_identify, validate_query, SurrogateError, SurrogateOutcome, SurrogateQuery};
use crate::transport::{identify_plain, TransportError};
use crate::vset::VertexSet;

/// Coverage (TRSO successes over search successes) reported for a prior
/// study with an unspecified generator; logged for comparison only.
pub const REFERENCE_COVERAGE: f64 = 0.88;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("seed {seed}: no instance accepted after {attempts} attempts")]
    Budget { seed: u64, attempts: usize },
    #[error("seed {seed}: TRSO identifies the effect but the search does not")]
    Containment { seed: u64 },
    #[error("seed {seed}: {method} formula fails numeric verification (max error {max_abs_err:e})")]
    Verification { seed: u64, method: &'static str, max_abs_err: f64 },
    #[error("seed {seed}: {source}")]
    Oracle { seed: u64, source: OracleError },
    #[error("seed {seed}: {source}")]
    Surrogate { seed: u64, source: SurrogateError },
    #[error("seed {seed}: {source}")]
    Transport { seed: u64, source: TransportError },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid study parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyParams {
    pub n_vertices: usize,
    pub p_dir: f64,
    pub p_bi: f64,
    /// Surrogate pairs per instance are drawn uniformly from `1..=max_pairs`.
    pub max_pairs: usize,
    pub max_attempts: usize,
    #[serde(skip)]
    pub bounds: SearchBounds,
    pub verify_models: usize,
    pub tol: f64,
}

impl Default for StudyParams {
    fn default() -> Self {
        StudyParams {
            n_vertices: 6,
            p_dir: 0.5,
            p_bi: 0.25,
            max_pairs: 2,
            max_attempts: 10_000,
            bounds: SearchBounds { max_depth: 64, max_terms: 32, ..SearchBounds::default() },
            verify_models: 5,
            tol: 1e-9,
        }
    }
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of instance `i` of a study with master seed `master`: output `i`
/// of the SplitMix64 stream started at `master`.
pub fn instance_seed(master: u64, i: u64) -> u64 {
    splitmix64(master.wrapping_add(i.wrapping_mul(GOLDEN_GAMMA)))
}

/// A graph on `v1..vn`: each directed edge (oriented along a random vertex
/// permutation, hence acyclic) with probability `p_dir`, each bidirected
/// edge with probability `p_bi`.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, n: usize, p_dir: f64, p_bi: f64) -> Result<SemiMarkovGraph, GraphError> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut directed = Vec::new();
    let mut bidirected = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p_dir) {
                directed.push((perm[i], perm[j]));
            }
            if rng.random_bool(p_bi) {
                bidirected.push((i, j));
            }
        }
    }
    let names = (1..=n).map(|k| format!("v{k}")).collect();
    SemiMarkovGraph::new(names, &directed, &bidirected)
}

/// Every pair `(Z, W)` that is valid on its own for a query on `x`, `y`.
pub fn valid_pairs(g: &SemiMarkovGraph, x: VertexSet, y: VertexSet) -> Vec<(VertexSet, VertexSet)> {
    let all = g.vertices();
    let mut out = Vec::new();
    for z in all.subsets().filter(|s| !s.is_empty()) {
        for w in all.minus(z).subsets().filter(|s| !s.is_empty()) {
            let q = SurrogateQuery::new(g.clone(), x, y, vec![(z, w)]);
            if validate_query(&q).is_empty() {
                out.push((z, w));
            }
        }
    }
    out
}

/// A random query that is not identifiable from `P(v)` alone and has at
/// least one valid surrogate pair, together with the number of attempts it
/// took. Deterministic in `seed`.
pub fn random_instance(params: &StudyParams, seed: u64) -> Result<(SurrogateQuery, usize), StudyError> {
    if params.n_vertices < 4 || params.n_vertices > 64 {
        return Err(StudyError::Params("the vertex count must be between 4 and 64".into()));
    }
    if params.max_pairs == 0 {
        return Err(StudyError::Params("at least one surrogate pair is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=params.max_attempts {
        let g = random_graph(&mut rng, params.n_vertices, params.p_dir, params.p_bi)?;
        let mut ids: Vec<usize> = g.vertices().iter().collect();
        ids.shuffle(&mut rng);
        let x = VertexSet::from_iter(ids[..2].iter().copied());
        let y = VertexSet::from_iter(ids[2..4].iter().copied());
        let plain = identify_plain(&g, x, y).map_err(|source| StudyError::Transport { seed, source })?;
        if plain.is_identified() {
            continue;
        }
        let mut pairs = valid_pairs(&g, x, y);
        if pairs.is_empty() {
            continue;
        }
        let k = rng.random_range(1..=params.max_pairs.min(pairs.len()));
        pairs.shuffle(&mut rng);
        pairs.truncate(k);
        let q = SurrogateQuery::new(g, x, y, pairs);
        if validate_query(&q).is_empty() {
            return Ok((q, attempt));
        }
    }
    Err(StudyError::Budget { seed, attempts: params.max_attempts })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceRecord {
    pub index: u64,
    pub seed: u64,
    pub attempts: usize,
    pub graph: String,
    pub query: serde_json::Value,
    pub trso_identified: bool,
    pub search_identified: bool,
    pub trso_formula: Option<String>,
    pub search_formula: Option<String>,
    pub search_steps: Option<usize>,
    /// `line L` of the recursion where TRSO gave up.
    pub trso_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub master_seed: u64,
    pub params: StudyParams,
    pub n_total: usize,
    pub n_search_id: usize,
    pub n_trso_id: usize,
    pub coverage_ratio: Option<f64>,
    /// Wilson score 95% interval for the coverage ratio.
    pub coverage_interval: Option<(f64, f64)>,
    pub containment_violations: usize,
    pub verification_failures: usize,
    pub reference_coverage: f64,
    #[serde(skip)]
    pub instances: Vec<InstanceRecord>,
}

/// Wilson score interval for `k` successes out of `n` at 95% confidence.
pub fn wilson_interval(k: usize, n: usize) -> Option<(f64, f64)> {
    if n == 0 {
        return None;
    }
    let z = 1.959_963_984_540_054_f64;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    Some(((centre - half).max(0.0), (centre + half).min(1.0)))
}

fn check_formula(
    q: &SurrogateQuery,
    info: &crate::surrogate::InfoSet,
    e: &Expr,
    params: &StudyParams,
    seed: u64,
    method: &'static str,
) -> Result<(), StudyError> {
    let opts = VerifyOptions { n_models: params.verify_models, tol: params.tol, first_seed: seed, ..VerifyOptions::default() };
    let r = verify_with(&q.graph, q.x, q.y, info, e, opts).map_err(|source| StudyError::Oracle { seed, source })?;
    if !r.pass {
        return Err(StudyError::Verification { seed, method, max_abs_err: r.max_abs_err });
    }
    Ok(())
}

/// Runs both procedures on one instance, enforcing containment and numeric
/// soundness of every success.
pub fn run_instance(params: &StudyParams, index: u64, seed: u64) -> Result<InstanceRecord, StudyError> {
    let (q, attempts) = random_instance(params, seed)?;
    let g = &q.graph;
    let info = information_set(&q).map_err(|source| StudyError::Surrogate { seed, source })?;
    let trso = surrogate_identify(&q).map_err(|source| StudyError::Surrogate { seed, source })?;
    let target = Atom::new(0, q.y, q.x, VertexSet::EMPTY);
    let search = docalc_search(g, &target, &info, params.bounds);

    let (trso_formula, trso_failure) = match &trso {
        SurrogateOutcome::Identified(e) => {
            check_formula(&q, &info, e, params, seed, "TRSO")?;
            (Some(render(e, g, Style::Text)), None)
        }
        SurrogateOutcome::NotDetermined(f) => (None, Some(format!("line {}", f.line))),
    };
    let derivation = search.derivation();
    if let Some(d) = derivation {
        check_formula(&q, &info, &d.result, params, seed, "search")?;
    }
    if trso_formula.is_some() && derivation.is_none() {
        return Err(StudyError::Containment { seed });
    }
    Ok(InstanceRecord {
        index,
        seed,
        attempts,
        graph: g.to_dsl(),
        query: q.to_json(),
        trso_identified: trso_formula.is_some(),
        search_identified: derivation.is_some(),
        search_formula: derivation.map(|d| render(&d.result, g, Style::Text)),
        search_steps: derivation.map(|d| d.steps.len()),
        trso_formula,
        trso_failure,
    })
}

/// Runs `n` instances in parallel. Any containment or verification
/// violation aborts the study with the offending instance seed.
pub fn run_study(n: usize, params: &StudyParams, master_seed: u64) -> Result<StudyReport, StudyError> {
    if n == 0 {
        return Err(StudyError::Params("the study needs at least one instance".into()));
    }
    let instances: Vec<InstanceRecord> = (0..n as u64)
        .into_par_iter()
        .map(|i| run_instance(params, i, instance_seed(master_seed, i)))
        .collect::<Result<_, _>>()?;
    let n_search_id = instances.iter().filter(|r| r.search_identified).count();
    let n_trso_id = instances.iter().filter(|r| r.trso_identified).count();
    let coverage_ratio = (n_search_id > 0).then(|| n_trso_id as f64 / n_search_id as f64);
    Ok(StudyReport {
        master_seed,
        params: *params,
        n_total: n,
        n_search_id,
        n_trso_id,
        coverage_ratio,
        coverage_interval: wilson_interval(n_trso_id, n_search_id),
        containment_violations: 0,
        verification_failures: 0,
        reference_coverage: REFERENCE_COVERAGE,
        instances,
    })
}

impl StudyReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// One JSON object per line, one line per instance.
    pub fn instance_log(&self) -> String {
        let mut out = String::new();
        for r in &self.instances {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let ratio = match (self.coverage_ratio, self.coverage_interval) {
            (Some(r), Some((lo, hi))) => format!("{:.3} (95% CI {:.3}-{:.3})", r, lo, hi),
            _ => "n/a (no search successes)".to_string(),
        };
        format!(
            "instances              {}\n\
             identified by search   {}\n\
             identified by TRSO     {}\n\
             coverage TRSO/search   {}\n\
             reference coverage     {:.2}\n\
             containment violations {}\n\
             verification failures  {}\n",
            self.n_total,
            self.n_search_id,
            self.n_trso_id,
            ratio,
            self.reference_coverage,
            self.containment_violations,
            self.verification_failures,
        )
    }
}
