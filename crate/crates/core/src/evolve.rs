//! NEAT operators for interactive breeding: mutation, innovation-aligned
//! crossover, generation construction and seed populations.
//!
//! There is no speciation and no fitness. Selection comes from a human, or
//! from a [`ScriptedSelector`] in unattended runs.

use std::collections::{HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::eval::CompiledGenome;
use crate::genome::{
    direct_innovation, ConnectionGene, Genome, Innovation, NodeGene, NodeId, NodeRole, INPUT_IDS,
    OUTPUT_IDS, RESERVED_INNOVATIONS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub p_add_connection: f64,
    pub p_add_node: f64,
    pub p_split_connection: f64,
    /// Per-weight probability of a gaussian perturbation.
    pub p_perturb_weight: f64,
    pub weight_sigma: f64,
    pub weight_init_range: f64,
    pub generation_size: usize,
    pub rng_seed: u64,
    /// Add-node inserts an unconnected node instead of splitting a connection.
    pub free_floating_nodes: bool,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            p_add_connection: 0.3,
            p_add_node: 0.1,
            p_split_connection: 0.1,
            p_perturb_weight: 0.8,
            weight_sigma: 0.4,
            weight_init_range: 2.0,
            generation_size: 15,
            rng_seed: 0,
            free_floating_nodes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvolveError {
    #[error("config field `{field}` = {value} is out of range")]
    Config { field: &'static str, value: f64 },
    #[error("at least one parent is required")]
    NoParents,
    #[error("config file: {0}")]
    Parse(String),
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        for (field, p) in [
            ("p_add_connection", self.p_add_connection),
            ("p_add_node", self.p_add_node),
            ("p_split_connection", self.p_split_connection),
            ("p_perturb_weight", self.p_perturb_weight),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvolveError::Config { field, value: p });
            }
        }
        if !(self.weight_sigma >= 0.0 && self.weight_sigma.is_finite()) {
            return Err(EvolveError::Config { field: "weight_sigma", value: self.weight_sigma });
        }
        if !(self.weight_init_range > 0.0 && self.weight_init_range.is_finite()) {
            return Err(EvolveError::Config {
                field: "weight_init_range",
                value: self.weight_init_range,
            });
        }
        if self.generation_size == 0 {
            return Err(EvolveError::Config { field: "generation_size", value: 0.0 });
        }
        Ok(())
    }

    /// Parses a JSON config; missing fields take their defaults.
    pub fn from_text(text: &str) -> Result<Self, EvolveError> {
        let cfg: EvolveConfig =
            serde_json::from_str(text).map_err(|e| EvolveError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Everything off; useful as a base for targeted tests.
    pub fn frozen() -> Self {
        EvolveConfig {
            p_add_connection: 0.0,
            p_add_node: 0.0,
            p_split_connection: 0.0,
            p_perturb_weight: 0.0,
            ..EvolveConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub node: NodeId,
    pub activation: ActivationKind,
    pub into: Innovation,
    pub out_of: Innovation,
}

/// Global innovation counter plus the per-generation memo that gives
/// identical structural mutations identical numbers. Hidden node ids are
/// drawn from the same counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationLedger {
    next_innovation: u64,
    #[serde(skip)]
    connections: HashMap<(NodeId, NodeId), Innovation>,
    #[serde(skip)]
    splits: HashMap<Innovation, SplitRecord>,
}

impl Default for InnovationLedger {
    fn default() -> Self {
        InnovationLedger::new(RESERVED_INNOVATIONS)
    }
}

impl InnovationLedger {
    pub fn new(next_innovation: u64) -> Self {
        InnovationLedger {
            next_innovation: next_innovation.max(RESERVED_INNOVATIONS),
            connections: HashMap::new(),
            splits: HashMap::new(),
        }
    }

    pub fn next_innovation(&self) -> u64 {
        self.next_innovation
    }

    /// Clears the structural memo; numbers keep increasing.
    pub fn start_generation(&mut self) {
        self.connections.clear();
        self.splits.clear();
    }

    /// Moves the counter past every number and node id used by `genome`.
    pub fn observe(&mut self, genome: &Genome) {
        let max_node = genome.nodes().iter().map(|n| n.id.0 + 1).max().unwrap_or(0);
        self.next_innovation = self.next_innovation.max(genome.innovation_counter()).max(max_node);
    }

    fn fresh(&mut self) -> u64 {
        let n = self.next_innovation;
        self.next_innovation += 1;
        n
    }

    fn connection(&mut self, from: NodeId, to: NodeId) -> Innovation {
        if let Some(&inn) = self.connections.get(&(from, to)) {
            return inn;
        }
        let inn = Innovation(self.fresh());
        self.connections.insert((from, to), inn);
        inn
    }

    fn split(&mut self, split: Innovation, rng: &mut impl Rng) -> SplitRecord {
        if let Some(&rec) = self.splits.get(&split) {
            return rec;
        }
        let rec = SplitRecord {
            node: NodeId(self.fresh()),
            activation: *ActivationKind::CPPN.choose(rng).expect("nonempty"),
            into: Innovation(self.fresh()),
            out_of: Innovation(self.fresh()),
        };
        self.splits.insert(split, rec);
        rec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MutationKind {
    AddConnection,
    SplitConnection,
    AddFreeNode,
    PerturbWeights,
}

#[derive(Debug, Clone)]
pub struct Mutation {
    pub genome: Genome,
    pub applied: Vec<MutationKind>,
}

impl Mutation {
    /// Nothing was applied; `genome` equals the input.
    pub fn is_noop(&self) -> bool {
        self.applied.is_empty()
    }
}

/// Applies weight perturbation, then the structural mutations whose coin
/// flips succeed. A selected mutation with no applicable site is skipped.
pub fn mutate(
    genome: &Genome,
    cfg: &EvolveConfig,
    ledger: &mut InnovationLedger,
    rng: &mut impl Rng,
) -> Mutation {
    ledger.observe(genome);
    let mut g = genome.clone();
    let mut applied = Vec::new();

    if cfg.p_perturb_weight > 0.0 && perturb_weights(&mut g, cfg, rng) {
        applied.push(MutationKind::PerturbWeights);
    }
    if rng.random::<f64>() < cfg.p_add_node {
        if cfg.free_floating_nodes {
            add_free_node(&mut g, ledger, rng);
            applied.push(MutationKind::AddFreeNode);
        } else if split_connection(&mut g, ledger, rng) {
            applied.push(MutationKind::SplitConnection);
        }
    }
    if rng.random::<f64>() < cfg.p_split_connection && split_connection(&mut g, ledger, rng) {
        applied.push(MutationKind::SplitConnection);
    }
    if rng.random::<f64>() < cfg.p_add_connection && add_connection(&mut g, cfg, ledger, rng) {
        applied.push(MutationKind::AddConnection);
    }
    debug_assert!(g.validate().is_ok());
    Mutation { genome: g, applied }
}

fn perturb_weights(g: &mut Genome, cfg: &EvolveConfig, rng: &mut impl Rng) -> bool {
    let noise = Normal::new(0.0, cfg.weight_sigma).expect("sigma validated");
    let mut any = false;
    for c in g.connections_mut() {
        if rng.random::<f64>() < cfg.p_perturb_weight {
            c.weight += noise.sample(rng);
            any = true;
        }
    }
    any
}

/// Disables a random enabled connection `u -> w` (weight `ω`) and routes it
/// through a new node: `u -> n` with weight 1 and `n -> w` with weight `ω`.
pub fn split_connection(
    g: &mut Genome,
    ledger: &mut InnovationLedger,
    rng: &mut impl Rng,
) -> bool {
    let enabled: Vec<usize> = (0..g.connections().len())
        .filter(|&i| g.connections()[i].enabled)
        .collect();
    let Some(&pick) = enabled.choose(rng) else {
        return false;
    };
    let old = g.connections()[pick].clone();
    let mut rec = ledger.split(old.innovation, rng);
    if g.node(rec.node).is_some() {
        // this genome already carries the memoized node
        rec = SplitRecord {
            node: NodeId(ledger.fresh()),
            into: Innovation(ledger.fresh()),
            out_of: Innovation(ledger.fresh()),
            ..rec
        };
    }
    g.connections_mut()[pick].enabled = false;
    g.push_node(NodeGene::hidden(rec.node, rec.activation));
    g.push_connection(ConnectionGene {
        innovation: rec.into,
        from: old.from,
        to: rec.node,
        weight: 1.0,
        enabled: true,
    });
    g.push_connection(ConnectionGene {
        innovation: rec.out_of,
        from: rec.node,
        to: old.to,
        weight: old.weight,
        enabled: true,
    });
    true
}

fn add_free_node(g: &mut Genome, ledger: &mut InnovationLedger, rng: &mut impl Rng) {
    let activation = *ActivationKind::CPPN.choose(rng).expect("nonempty");
    let id = ledger.fresh();
    g.push_node(NodeGene::hidden(NodeId(id), activation));
    g.bump_counter(id + 1);
}

/// Feed-forward pairs `(from, to)` not yet connected whose addition keeps the
/// full connection graph acyclic. Outputs are never sources and inputs never
/// targets.
pub fn open_connection_pairs(g: &Genome) -> Vec<(NodeId, NodeId)> {
    let existing: HashSet<(NodeId, NodeId)> =
        g.connections().iter().map(|c| (c.from, c.to)).collect();
    let mut pairs = Vec::new();
    for from in g.nodes().iter().filter(|n| n.role != NodeRole::Output) {
        for to in g.nodes().iter().filter(|n| n.role != NodeRole::Input) {
            if from.id != to.id
                && !existing.contains(&(from.id, to.id))
                && !g.reaches(to.id, from.id)
            {
                pairs.push((from.id, to.id));
            }
        }
    }
    pairs
}

pub fn add_connection(
    g: &mut Genome,
    cfg: &EvolveConfig,
    ledger: &mut InnovationLedger,
    rng: &mut impl Rng,
) -> bool {
    let pairs = open_connection_pairs(g);
    let Some(&(from, to)) = pairs.choose(rng) else {
        return false;
    };
    let innovation = ledger.connection(from, to);
    let weight = rng.random_range(-cfg.weight_init_range..=cfg.weight_init_range);
    g.push_connection(ConnectionGene { innovation, from, to, weight, enabled: true });
    true
}

/// Aligns genes by innovation number. Matching genes are taken from either
/// parent with equal probability; disjoint and excess genes come from the
/// dominant parent `a`.
pub fn crossover(a: &Genome, b: &Genome, rng: &mut impl Rng) -> Genome {
    let mut genes: Vec<ConnectionGene> = Vec::with_capacity(a.connections().len());
    for ca in a.connections() {
        let gene = match b.connection(ca.innovation) {
            Some(cb) if rng.random::<bool>() => cb.clone(),
            _ => ca.clone(),
        };
        genes.push(gene);
    }

    let mut node_ids: HashSet<NodeId> = a
        .nodes()
        .iter()
        .filter(|n| n.role != NodeRole::Hidden)
        .map(|n| n.id)
        .collect();
    for c in &genes {
        node_ids.insert(c.from);
        node_ids.insert(c.to);
    }
    let nodes: Vec<NodeGene> = node_ids
        .iter()
        .map(|&id| a.node(id).or_else(|| b.node(id)).expect("endpoint exists in a parent").clone())
        .collect();

    // drop, in ascending innovation order, any enabled gene closing a cycle
    let mut kept: Vec<ConnectionGene> = Vec::with_capacity(genes.len());
    let mut out: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
    for gene in genes {
        if gene.enabled {
            if reaches(&out, gene.to, gene.from) {
                continue;
            }
            out.entry(gene.from).or_default().push(gene.to);
        }
        kept.push(gene);
    }
    let counter = a.innovation_counter().max(b.innovation_counter());
    Genome::new(nodes, kept, counter).expect("crossover of valid parents is valid")
}

fn reaches(out: &HashMap<NodeId, Vec<NodeId>>, from: NodeId, to: NodeId) -> bool {
    let mut stack = vec![from];
    let mut seen = HashSet::new();
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if seen.insert(n) {
            if let Some(next) = out.get(&n) {
                stack.extend(next);
            }
        }
    }
    false
}

/// One member of a generation and the indices (into the parent list) it
/// descends from, dominant parent first.
#[derive(Debug, Clone)]
pub struct Offspring {
    pub genome: Genome,
    pub parents: Vec<usize>,
}

/// Builds `generation_size` offspring. With one parent every child is a
/// mutant of it; with several, each child is a mutated crossover of two
/// distinct parents drawn uniformly, the earlier-selected one dominant.
pub fn next_generation(
    parents: &[Genome],
    cfg: &EvolveConfig,
    ledger: &mut InnovationLedger,
    rng: &mut impl Rng,
) -> Result<Vec<Offspring>, EvolveError> {
    if parents.is_empty() {
        return Err(EvolveError::NoParents);
    }
    cfg.validate()?;
    ledger.start_generation();
    for p in parents {
        ledger.observe(p);
    }
    let mut out = Vec::with_capacity(cfg.generation_size);
    for _ in 0..cfg.generation_size {
        let (base, lineage) = if parents.len() == 1 {
            (parents[0].clone(), vec![0])
        } else {
            let i = rng.random_range(0..parents.len());
            let mut j = rng.random_range(0..parents.len() - 1);
            if j >= i {
                j += 1;
            }
            let (dom, other) = (i.min(j), i.max(j));
            (crossover(&parents[dom], &parents[other], rng), vec![dom, other])
        };
        let child = mutate(&base, cfg, ledger, rng).genome;
        out.push(Offspring { genome: child, parents: lineage });
    }
    Ok(out)
}

/// Minimal genomes: each output wired from a random non-empty subset of the
/// inputs, with random weights and a random output activation.
pub fn seed_population(
    cfg: &EvolveConfig,
    ledger: &mut InnovationLedger,
    rng: &mut impl Rng,
) -> Vec<Genome> {
    ledger.start_generation();
    (0..cfg.generation_size)
        .map(|_| {
            let acts = [(); 3].map(|_| *ActivationKind::CPPN.choose(rng).expect("nonempty"));
            let mut g = Genome::minimal(acts);
            for (o, &out_id) in OUTPUT_IDS.iter().enumerate() {
                let mut chosen: Vec<usize> =
                    (0..INPUT_IDS.len()).filter(|_| rng.random::<bool>()).collect();
                if chosen.is_empty() {
                    chosen.push(rng.random_range(0..INPUT_IDS.len()));
                }
                for i in chosen {
                    let weight = rng.random_range(-cfg.weight_init_range..=cfg.weight_init_range);
                    g.push_connection(ConnectionGene {
                        innovation: direct_innovation(i, o),
                        from: INPUT_IDS[i],
                        to: out_id,
                        weight,
                        enabled: true,
                    });
                }
            }
            ledger.observe(&g);
            g
        })
        .collect()
}

/// Deterministic random stream for one generation of a seeded run.
pub fn generation_rng(seed: u64, generation: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation);
    rng
}

/// Stands in for the human during unattended runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptedSelector {
    /// One or two distinct candidates chosen uniformly.
    Random,
    /// The single candidate whose thumbnail has the largest pixel variance.
    LargestImageVariance,
}

impl std::str::FromStr for ScriptedSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(ScriptedSelector::Random),
            "largest-image-variance" | "variance" => Ok(ScriptedSelector::LargestImageVariance),
            other => Err(format!("unknown selector `{other}`")),
        }
    }
}

const SELECTOR_THUMBNAIL: usize = 24;

impl ScriptedSelector {
    /// Indices into `candidates`, in selection order.
    pub fn select(&self, candidates: &[Genome], rng: &mut impl Rng) -> Vec<usize> {
        match self {
            ScriptedSelector::Random => {
                let k = if candidates.len() > 1 && rng.random::<bool>() { 2 } else { 1 };
                rand::seq::index::sample(rng, candidates.len(), k).into_vec()
            }
            ScriptedSelector::LargestImageVariance => {
                let mut best = (0, f64::NEG_INFINITY);
                for (i, g) in candidates.iter().enumerate() {
                    let var = CompiledGenome::new(g)
                        .map(|c| c.render(SELECTOR_THUMBNAIL).expect("valid resolution"))
                        .map(|img| img.channel_variance())
                        .unwrap_or(f64::NEG_INFINITY);
                    if var > best.1 {
                        best = (i, var);
                    }
                }
                vec![best.0]
            }
        }
    }
}

/// An unattended breeding run: every generation and every selection.
#[derive(Debug, Clone)]
pub struct ScriptedRun {
    pub generations: Vec<Vec<Offspring>>,
    pub selections: Vec<Vec<usize>>,
    pub ledger: InnovationLedger,
}

impl ScriptedRun {
    /// The first genome picked in the last selection.
    pub fn champion(&self) -> &Genome {
        let last = self.selections.len() - 1;
        &self.generations[last][self.selections[last][0]].genome
    }
}

/// Seeds a population, then runs `generations` rounds of select-and-breed.
/// Generation `k` draws from [`generation_rng`]`(cfg.rng_seed, k)`; the
/// selector draws from its own stream.
pub fn scripted_run(
    cfg: &EvolveConfig,
    selector: ScriptedSelector,
    generations: usize,
) -> Result<ScriptedRun, EvolveError> {
    cfg.validate()?;
    let mut ledger = InnovationLedger::default();
    let seeds = seed_population(cfg, &mut ledger, &mut generation_rng(cfg.rng_seed, 0));
    let mut gens = vec![seeds
        .into_iter()
        .map(|genome| Offspring { genome, parents: Vec::new() })
        .collect::<Vec<_>>()];
    let mut selections = Vec::with_capacity(generations);
    let mut pick_rng = generation_rng(cfg.rng_seed ^ 0x5e1e_c70e, 0);
    for k in 0..generations {
        let current: Vec<Genome> = gens[k].iter().map(|o| o.genome.clone()).collect();
        let picked = selector.select(&current, &mut pick_rng);
        let parents: Vec<Genome> = picked.iter().map(|&i| current[i].clone()).collect();
        let next = next_generation(
            &parents,
            cfg,
            &mut ledger,
            &mut generation_rng(cfg.rng_seed, k as u64 + 1),
        )?;
        selections.push(picked);
        gens.push(next);
    }
    if generations == 0 {
        let current: Vec<Genome> = gens[0].iter().map(|o| o.genome.clone()).collect();
        selections.push(selector.select(&current, &mut pick_rng));
    }
    Ok(ScriptedRun { generations: gens, selections, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActivationKind::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn wired() -> Genome {
        let mut g = Genome::minimal([Identity, Sine, Gaussian]);
        for (i, o, w) in [(0, 0, 0.7), (1, 1, -1.2), (2, 2, 0.4), (3, 0, 0.1)] {
            g.push_connection(ConnectionGene {
                innovation: direct_innovation(i, o),
                from: INPUT_IDS[i],
                to: OUTPUT_IDS[o],
                weight: w,
                enabled: true,
            });
        }
        g
    }

    #[test]
    fn zero_sigma_perturbation_keeps_weights() {
        let cfg = EvolveConfig { p_perturb_weight: 1.0, weight_sigma: 0.0, ..EvolveConfig::frozen() };
        let g = wired();
        let m = mutate(&g, &cfg, &mut InnovationLedger::default(), &mut rng(1));
        assert_eq!(m.applied, vec![MutationKind::PerturbWeights]);
        assert_eq!(m.genome, g);
    }

    #[test]
    fn split_uses_unit_in_weight_and_original_out_weight() {
        let cfg = EvolveConfig { p_split_connection: 1.0, ..EvolveConfig::frozen() };
        let g = wired();
        let m = mutate(&g, &cfg, &mut InnovationLedger::default(), &mut rng(3));
        assert_eq!(m.applied, vec![MutationKind::SplitConnection]);
        let out = &m.genome;
        let disabled: Vec<_> = out.connections().iter().filter(|c| !c.enabled).collect();
        assert_eq!(disabled.len(), 1);
        let old = disabled[0];
        assert_eq!(g.connection(old.innovation).unwrap().weight, old.weight);
        let hidden = out.nodes().iter().find(|n| n.role == NodeRole::Hidden).unwrap();
        let into = out.connections().iter().find(|c| c.to == hidden.id).unwrap();
        let from = out.connections().iter().find(|c| c.from == hidden.id).unwrap();
        assert_eq!((into.from, into.weight), (old.from, 1.0));
        assert_eq!((from.to, from.weight), (old.to, old.weight));
        out.validate().unwrap();
    }

    #[test]
    fn add_connection_on_saturated_genome_is_noop() {
        let mut g = Genome::minimal([Identity, Identity, Identity]);
        for i in 0..4 {
            for o in 0..3 {
                g.push_connection(ConnectionGene {
                    innovation: direct_innovation(i, o),
                    from: INPUT_IDS[i],
                    to: OUTPUT_IDS[o],
                    weight: 0.5,
                    enabled: true,
                });
            }
        }
        assert!(open_connection_pairs(&g).is_empty());
        let cfg = EvolveConfig { p_add_connection: 1.0, ..EvolveConfig::frozen() };
        let m = mutate(&g, &cfg, &mut InnovationLedger::default(), &mut rng(0));
        assert!(m.is_noop());
        assert_eq!(m.genome, g);
    }

    #[test]
    fn crossover_with_self_is_identity() {
        let g = wired();
        for seed in 0..5 {
            assert_eq!(crossover(&g, &g, &mut rng(seed)), g);
        }
    }

    #[test]
    fn matching_genes_take_either_weight_and_excess_comes_from_dominant() {
        let mut a = wired();
        let mut b = wired();
        a.set_weight(direct_innovation(0, 0), 0.2);
        b.set_weight(direct_innovation(0, 0), 0.9);
        a.push_node(NodeGene::hidden(NodeId(16), Tanh));
        a.push_connection(ConnectionGene {
            innovation: Innovation(17),
            from: INPUT_IDS[1],
            to: NodeId(16),
            weight: 0.3,
            enabled: true,
        });
        let mut seen = HashSet::new();
        for seed in 0..32 {
            let child = crossover(&a, &b, &mut rng(seed));
            let w = child.connection(direct_innovation(0, 0)).unwrap().weight;
            assert!(w == 0.2 || w == 0.9);
            seen.insert(w.to_bits());
            assert!(child.connection(Innovation(17)).is_some());
            // b's excess is never inherited
            let child_rev = crossover(&b, &a, &mut rng(seed));
            assert!(child_rev.connection(Innovation(17)).is_none());
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn frozen_config_copies_single_parent() {
        let g = wired();
        let kids =
            next_generation(&[g.clone()], &EvolveConfig::frozen(), &mut InnovationLedger::default(), &mut rng(0))
                .unwrap();
        assert_eq!(kids.len(), 15);
        assert!(kids.iter().all(|k| k.genome == g && k.parents == vec![0]));
    }

    #[test]
    fn empty_parent_list_is_error() {
        let err = next_generation(&[], &EvolveConfig::default(), &mut InnovationLedger::default(), &mut rng(0));
        assert_eq!(err.unwrap_err(), EvolveError::NoParents);
    }

    #[test]
    fn same_structural_mutation_shares_innovation_within_generation() {
        // one parent, only add-connection: x -> v is the single open pair
        let mut g = Genome::minimal([Identity, Identity, Identity]);
        for i in 0..4 {
            for o in 0..3 {
                if (i, o) != (0, 2) {
                    g.push_connection(ConnectionGene {
                        innovation: direct_innovation(i, o),
                        from: INPUT_IDS[i],
                        to: OUTPUT_IDS[o],
                        weight: 0.5,
                        enabled: true,
                    });
                }
            }
        }
        let cfg = EvolveConfig { p_add_connection: 1.0, ..EvolveConfig::frozen() };
        let mut ledger = InnovationLedger::default();
        let kids = next_generation(&[g.clone()], &cfg, &mut ledger, &mut rng(9)).unwrap();
        let numbers: HashSet<Innovation> = kids
            .iter()
            .map(|k| {
                k.genome
                    .connections()
                    .iter()
                    .find(|c| c.from == INPUT_IDS[0] && c.to == OUTPUT_IDS[2])
                    .unwrap()
                    .innovation
            })
            .collect();
        assert_eq!(numbers.len(), 1);
        // a new generation hands out a fresh number
        let before = ledger.next_innovation();
        let again = next_generation(&[g], &cfg, &mut ledger, &mut rng(10)).unwrap();
        let inn = again[0].genome.connections().iter().map(|c| c.innovation).max().unwrap();
        assert!(inn.0 >= before);
    }

    #[test]
    fn seeds_are_minimal_and_reproducible() {
        let cfg = EvolveConfig::default();
        let a = seed_population(&cfg, &mut InnovationLedger::default(), &mut rng(4));
        let b = seed_population(&cfg, &mut InnovationLedger::default(), &mut rng(4));
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
        for g in &a {
            g.validate().unwrap();
            assert_eq!(g.hidden_count(), 0);
            assert_eq!(g.nodes().iter().filter(|n| n.role == NodeRole::Input).count(), 4);
            assert_eq!(g.nodes().iter().filter(|n| n.role == NodeRole::Output).count(), 3);
            for out in OUTPUT_IDS {
                assert!(g.connections().iter().any(|c| c.to == out));
            }
        }
    }

    #[test]
    fn two_parents_are_both_recorded() {
        let cfg = EvolveConfig::default();
        let seeds = seed_population(&cfg, &mut InnovationLedger::default(), &mut rng(2));
        let kids = next_generation(&seeds[..2], &cfg, &mut InnovationLedger::default(), &mut rng(3)).unwrap();
        assert!(kids.iter().all(|k| k.parents == vec![0, 1]));
    }

    #[test]
    fn config_file_defaults_missing_fields() {
        let cfg = EvolveConfig::from_text("{\"p_add_connection\": 0.5, \"rng_seed\": 7}").unwrap();
        assert_eq!(cfg.p_add_connection, 0.5);
        assert_eq!(cfg.rng_seed, 7);
        assert_eq!(cfg.generation_size, 15);
        assert!(EvolveConfig::from_text("{\"p_add_node\": 1.5}").is_err());
    }

    #[test]
    fn scripted_runs_replay() {
        let cfg = EvolveConfig { rng_seed: 11, ..EvolveConfig::default() };
        let a = scripted_run(&cfg, ScriptedSelector::Random, 8).unwrap();
        let b = scripted_run(&cfg, ScriptedSelector::Random, 8).unwrap();
        assert_eq!(a.selections, b.selections);
        for (ga, gb) in a.generations.iter().zip(&b.generations) {
            for (x, y) in ga.iter().zip(gb) {
                assert_eq!(x.genome.content_id(), y.genome.content_id());
                x.genome.validate().unwrap();
            }
        }
    }
}
