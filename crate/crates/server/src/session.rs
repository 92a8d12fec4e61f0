//! Breeding sessions: generation 0 from a seed population (or a stored
//! genome), then one new generation per selection. Generation `k` always
//! draws from `generation_rng(rng_seed, k)` and the innovation ledger is
//! private to the session, so `(config, seed genome, selection log)`
//! reproduces every genome id.

use std::sync::atomic::{AtomicU64, Ordering};

use cppnlab::evolve::{generation_rng, next_generation, seed_population, EvolveConfig, EvolveError, InnovationLedger, Offspring};
use cppnlab::Genome;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::store::{now, LineageNode, Store, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub config: EvolveConfig,
    pub seed_genome: Option<String>,
    pub generation: u64,
    /// Genome ids of the current generation, in display order.
    pub genomes: Vec<String>,
    /// Genome ids of every generation so far, the current one last.
    pub history: Vec<Vec<String>>,
    /// Innovation counter checkpoint after the current generation was built.
    pub next_innovation: u64,
    pub created: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    /// Generation the selection was made from.
    pub generation: u64,
    /// Selected genome ids, dominant parent first.
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub generations: usize,
    pub identical: bool,
    /// First generation whose regenerated ids differ from the recorded ones.
    pub first_mismatch: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("selection is empty")]
    EmptySelection,
    #[error("genome `{0}` selected twice")]
    DuplicateSelection(String),
    #[error("selection targets generation {requested}, session is at generation {current}")]
    StaleGeneration { requested: u64, current: u64 },
    #[error("genome `{0}` is not in the current generation")]
    NotInGeneration(String),
}

static SESSION_COUNTER: AtomicU64 = AtomicU64::new(0);

fn fresh_session_id(seed: u64) -> String {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_nanos());
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(nanos.to_le_bytes());
    h.update(SESSION_COUNTER.fetch_add(1, Ordering::Relaxed).to_le_bytes());
    h.update(std::process::id().to_le_bytes());
    hex::encode(&h.finalize()[..16])
}

fn first_generation(config: &EvolveConfig, seed: Option<&Genome>, ledger: &mut InnovationLedger) -> Result<Vec<Offspring>, EvolveError> {
    let mut rng = generation_rng(config.rng_seed, 0);
    match seed {
        Some(g) => next_generation(std::slice::from_ref(g), config, ledger, &mut rng),
        None => Ok(seed_population(config, ledger, &mut rng)
            .into_iter()
            .map(|genome| Offspring { genome, parents: Vec::new() })
            .collect()),
    }
}

fn persist_generation(
    store: &Store,
    session: &str,
    generation: u64,
    offspring: &[Offspring],
    parent_ids: &[String],
) -> Result<Vec<String>, StoreError> {
    let created = now();
    offspring
        .iter()
        .map(|o| {
            let id = store.put_genome(&o.genome)?;
            store.append_lineage(&LineageNode {
                genome: id.clone(),
                parents: o.parents.iter().map(|&p| parent_ids[p].clone()).collect(),
                generation,
                session: session.to_string(),
                created,
            })?;
            Ok(id)
        })
        .collect()
}

/// Creates and persists a session. With `seed_genome`, generation 0 consists
/// of mutants of that stored genome.
pub fn create_session(store: &Store, config: EvolveConfig, seed_genome: Option<&str>) -> Result<Session, SessionError> {
    config.validate()?;
    let seed = seed_genome.map(|id| store.genome(id)).transpose()?;
    let id = fresh_session_id(config.rng_seed);
    let mut ledger = InnovationLedger::default();
    let offspring = first_generation(&config, seed.as_ref(), &mut ledger)?;
    let parent_ids: Vec<String> = seed_genome.map(str::to_string).into_iter().collect();
    let genomes = persist_generation(store, &id, 0, &offspring, &parent_ids)?;
    let session = Session {
        id,
        config,
        seed_genome: seed_genome.map(str::to_string),
        generation: 0,
        history: vec![genomes.clone()],
        genomes,
        next_innovation: ledger.next_innovation(),
        created: now(),
    };
    store.save_state(&session.id, &session)?;
    Ok(session)
}

pub fn load_session(store: &Store, id: &str) -> Result<Session, SessionError> {
    Ok(store.load_state(id)?)
}

/// Breeds the next generation from `selected` (dominant first). When
/// `expected_generation` is given it must match the session's generation.
/// Callers serialize calls per session.
pub fn select_and_advance(
    store: &Store,
    session_id: &str,
    selected: &[String],
    expected_generation: Option<u64>,
) -> Result<Session, SessionError> {
    let mut session = load_session(store, session_id)?;
    if let Some(requested) = expected_generation {
        if requested != session.generation {
            return Err(SessionError::StaleGeneration { requested, current: session.generation });
        }
    }
    if selected.is_empty() {
        return Err(SessionError::EmptySelection);
    }
    for (i, id) in selected.iter().enumerate() {
        if selected[..i].contains(id) {
            return Err(SessionError::DuplicateSelection(id.clone()));
        }
        if !session.genomes.contains(id) {
            let stale = session.history[..session.history.len() - 1].iter().any(|g| g.contains(id));
            return Err(if stale {
                SessionError::StaleGeneration { requested: session.generation.saturating_sub(1), current: session.generation }
            } else {
                SessionError::NotInGeneration(id.clone())
            });
        }
    }
    let parents: Vec<Genome> = selected.iter().map(|id| store.genome(id)).collect::<Result<_, _>>()?;
    let mut ledger = InnovationLedger::new(session.next_innovation);
    let next = session.generation + 1;
    let offspring = next_generation(&parents, &session.config, &mut ledger, &mut generation_rng(session.config.rng_seed, next))?;
    let genomes = persist_generation(store, &session.id, next, &offspring, selected)?;
    store.append_selection(&session.id, &SelectionRecord { generation: session.generation, selected: selected.to_vec() })?;
    session.generation = next;
    session.history.push(genomes.clone());
    session.genomes = genomes;
    session.next_innovation = ledger.next_innovation();
    store.save_state(&session.id, &session)?;
    Ok(session)
}

/// Rebuilds every generation from the stored config, seed genome and
/// selection log, without writing, and compares ids with the recorded ones.
pub fn replay(store: &Store, session_id: &str) -> Result<ReplayReport, SessionError> {
    let session = load_session(store, session_id)?;
    let log: Vec<SelectionRecord> = store.selections(session_id)?;
    let seed = session.seed_genome.as_deref().map(|id| store.genome(id)).transpose()?;
    let mut ledger = InnovationLedger::default();
    let mut current: Vec<Genome> = first_generation(&session.config, seed.as_ref(), &mut ledger)?
        .into_iter()
        .map(|o| o.genome)
        .collect();
    let mut regenerated = vec![current.iter().map(Genome::content_id).collect::<Vec<_>>()];
    for record in &log {
        let ids = &regenerated[record.generation as usize];
        let parents: Vec<Genome> = record
            .selected
            .iter()
            .map(|s| ids.iter().position(|i| i == s).map(|k| current[k].clone()).ok_or_else(|| SessionError::NotInGeneration(s.clone())))
            .collect::<Result<_, _>>()?;
        current = next_generation(&parents, &session.config, &mut ledger, &mut generation_rng(session.config.rng_seed, record.generation + 1))?
            .into_iter()
            .map(|o| o.genome)
            .collect();
        regenerated.push(current.iter().map(Genome::content_id).collect());
    }
    let first_mismatch = (0..session.history.len().max(regenerated.len()))
        .find(|&k| session.history.get(k) != regenerated.get(k))
        .map(|k| k as u64);
    Ok(ReplayReport { generations: regenerated.len(), identical: first_mismatch.is_none(), first_mismatch })
}
