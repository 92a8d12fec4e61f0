//! NEAT-style CPPN genomes: node genes, connection genes, validation and the
//! on-disk genome format.
//!
//! A genome always has four input nodes labelled `x`, `y`, `d`, `b` and three
//! output nodes labelled `h`, `s`, `v`. Connections carry innovation numbers
//! (historical markings) that align genes during crossover.
//!
//! The text format is JSON:
//!
//! ```json
//! {
//!   "nodes": [{"id": 0, "role": "input", "activation": "identity", "label": "x"}, ...],
//!   "connections": [{"innovation": 0, "from": 0, "to": 4, "weight": 0.5, "enabled": true}, ...],
//!   "innovation_counter": 12
//! }
//! ```

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activation::ActivationKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Innovation(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Innovation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const INPUT_LABELS: [&str; 4] = ["x", "y", "d", "b"];
pub const OUTPUT_LABELS: [&str; 3] = ["h", "s", "v"];

/// Node ids used by genomes created in this crate: inputs 0..4, outputs 4..7.
pub const INPUT_IDS: [NodeId; 4] = [NodeId(0), NodeId(1), NodeId(2), NodeId(3)];
pub const OUTPUT_IDS: [NodeId; 3] = [NodeId(4), NodeId(5), NodeId(6)];

/// Innovation numbers below this value are reserved for the twelve possible
/// input -> output connections of a minimal genome.
pub const RESERVED_INNOVATIONS: u64 = 12;

/// Fixed innovation number of the direct connection `input[i] -> output[o]`.
pub fn direct_innovation(input: usize, output: usize) -> Innovation {
    Innovation((input * OUTPUT_LABELS.len() + output) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Input,
    Hidden,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGene {
    pub id: NodeId,
    pub role: NodeRole,
    pub activation: ActivationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl NodeGene {
    pub fn hidden(id: NodeId, activation: ActivationKind) -> Self {
        NodeGene { id, role: NodeRole::Hidden, activation, label: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionGene {
    pub innovation: Innovation,
    pub from: NodeId,
    pub to: NodeId,
    pub weight: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenomeError {
    #[error("malformed genome text: {0}")]
    Malformed(String),
    #[error("node {node}: unknown activation tag `{tag}`")]
    UnknownActivation { node: NodeId, tag: String },
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate innovation number {0}")]
    DuplicateInnovation(Innovation),
    #[error("connection {innovation} references missing node {node}")]
    MissingNode { innovation: Innovation, node: NodeId },
    #[error("connection {0} connects a node to itself")]
    SelfLoop(Innovation),
    #[error("connection {0} feeds into an input node")]
    IntoInput(Innovation),
    #[error("enabled connections form a cycle through node {0}")]
    Cycle(NodeId),
    #[error("node {node}: {role:?} node has label {label:?}")]
    BadLabel { node: NodeId, role: NodeRole, label: Option<String> },
    #[error("input node {0} must use the identity activation")]
    InputActivation(NodeId),
    #[error("missing {role:?} node labelled `{label}`")]
    MissingLabel { role: NodeRole, label: &'static str },
    #[error("innovation counter {counter} does not exceed innovation {innovation}")]
    StaleCounter { counter: u64, innovation: Innovation },
}

/// A CPPN genome. Nodes are kept sorted by id and connections by innovation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    nodes: Vec<NodeGene>,
    connections: Vec<ConnectionGene>,
    innovation_counter: u64,
}

#[derive(Deserialize)]
struct RawNode {
    id: NodeId,
    role: NodeRole,
    activation: String,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Deserialize)]
struct RawGenome {
    nodes: Vec<RawNode>,
    connections: Vec<ConnectionGene>,
    innovation_counter: u64,
}

impl Genome {
    /// Builds and validates a genome from parts.
    pub fn new(
        mut nodes: Vec<NodeGene>,
        mut connections: Vec<ConnectionGene>,
        innovation_counter: u64,
    ) -> Result<Self, GenomeError> {
        nodes.sort_by_key(|n| n.id);
        connections.sort_by_key(|c| c.innovation);
        let genome = Genome { nodes, connections, innovation_counter };
        genome.validate()?;
        Ok(genome)
    }

    /// Four inputs and three outputs with the given output activations and no connections.
    pub fn minimal(output_activations: [ActivationKind; 3]) -> Self {
        let mut nodes: Vec<NodeGene> = INPUT_IDS
            .iter()
            .zip(INPUT_LABELS)
            .map(|(&id, label)| NodeGene {
                id,
                role: NodeRole::Input,
                activation: ActivationKind::Identity,
                label: Some(label.to_string()),
            })
            .collect();
        nodes.extend(OUTPUT_IDS.iter().zip(OUTPUT_LABELS).zip(output_activations).map(
            |((&id, label), activation)| NodeGene {
                id,
                role: NodeRole::Output,
                activation,
                label: Some(label.to_string()),
            },
        ));
        Genome { nodes, connections: Vec::new(), innovation_counter: RESERVED_INNOVATIONS }
    }

    pub fn nodes(&self) -> &[NodeGene] {
        &self.nodes
    }

    pub fn connections(&self) -> &[ConnectionGene] {
        &self.connections
    }

    pub fn innovation_counter(&self) -> u64 {
        self.innovation_counter
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeGene> {
        self.nodes.binary_search_by_key(&id, |n| n.id).ok().map(|i| &self.nodes[i])
    }

    pub fn connection(&self, innovation: Innovation) -> Option<&ConnectionGene> {
        self.connections
            .binary_search_by_key(&innovation, |c| c.innovation)
            .ok()
            .map(|i| &self.connections[i])
    }

    pub fn hidden_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.role == NodeRole::Hidden).count()
    }

    /// Input node ids in `x, y, d, b` order.
    pub fn input_ids(&self) -> [NodeId; 4] {
        self.labelled(NodeRole::Input, INPUT_LABELS)
    }

    /// Output node ids in `h, s, v` order.
    pub fn output_ids(&self) -> [NodeId; 3] {
        self.labelled(NodeRole::Output, OUTPUT_LABELS)
    }

    fn labelled<const N: usize>(&self, role: NodeRole, labels: [&str; N]) -> [NodeId; N] {
        labels.map(|label| {
            self.nodes
                .iter()
                .find(|n| n.role == role && n.label.as_deref() == Some(label))
                .map(|n| n.id)
                .expect("validated genome has every labelled node")
        })
    }

    pub fn set_weight(&mut self, innovation: Innovation, weight: f64) -> bool {
        match self.connections.binary_search_by_key(&innovation, |c| c.innovation) {
            Ok(i) => {
                self.connections[i].weight = weight;
                true
            }
            Err(_) => false,
        }
    }

    pub(crate) fn connections_mut(&mut self) -> &mut [ConnectionGene] {
        &mut self.connections
    }

    /// Adds genes without re-validating; callers keep the invariants.
    pub(crate) fn push_node(&mut self, node: NodeGene) {
        let at = self.nodes.partition_point(|n| n.id < node.id);
        self.nodes.insert(at, node);
    }

    pub(crate) fn push_connection(&mut self, conn: ConnectionGene) {
        let at = self.connections.partition_point(|c| c.innovation < conn.innovation);
        self.innovation_counter = self.innovation_counter.max(conn.innovation.0 + 1);
        self.connections.insert(at, conn);
    }

    pub(crate) fn bump_counter(&mut self, counter: u64) {
        self.innovation_counter = self.innovation_counter.max(counter);
    }

    pub fn validate(&self) -> Result<(), GenomeError> {
        let mut ids = HashSet::new();
        for node in &self.nodes {
            if !ids.insert(node.id) {
                return Err(GenomeError::DuplicateNode(node.id));
            }
            let expected: &[&str] = match node.role {
                NodeRole::Input => &INPUT_LABELS,
                NodeRole::Output => &OUTPUT_LABELS,
                NodeRole::Hidden => &[],
            };
            let ok = match (&node.label, node.role) {
                (_, NodeRole::Hidden) => true,
                (Some(l), _) => expected.contains(&l.as_str()),
                (None, _) => false,
            };
            if !ok {
                return Err(GenomeError::BadLabel {
                    node: node.id,
                    role: node.role,
                    label: node.label.clone(),
                });
            }
            if node.role == NodeRole::Input && node.activation != ActivationKind::Identity {
                return Err(GenomeError::InputActivation(node.id));
            }
        }
        for (role, labels) in [
            (NodeRole::Input, &INPUT_LABELS[..]),
            (NodeRole::Output, &OUTPUT_LABELS[..]),
        ] {
            for &label in labels {
                let count = self
                    .nodes
                    .iter()
                    .filter(|n| n.role == role && n.label.as_deref() == Some(label))
                    .count();
                match count {
                    0 => return Err(GenomeError::MissingLabel { role, label }),
                    1 => {}
                    _ => {
                        let dup = self
                            .nodes
                            .iter()
                            .filter(|n| n.role == role && n.label.as_deref() == Some(label))
                            .nth(1)
                            .expect("count > 1");
                        return Err(GenomeError::BadLabel {
                            node: dup.id,
                            role,
                            label: dup.label.clone(),
                        });
                    }
                }
            }
        }

        let roles: HashMap<NodeId, NodeRole> = self.nodes.iter().map(|n| (n.id, n.role)).collect();
        let mut innovations = HashSet::new();
        for c in &self.connections {
            if !innovations.insert(c.innovation) {
                return Err(GenomeError::DuplicateInnovation(c.innovation));
            }
            if c.innovation.0 >= self.innovation_counter {
                return Err(GenomeError::StaleCounter {
                    counter: self.innovation_counter,
                    innovation: c.innovation,
                });
            }
            for end in [c.from, c.to] {
                if !roles.contains_key(&end) {
                    return Err(GenomeError::MissingNode { innovation: c.innovation, node: end });
                }
            }
            if c.from == c.to {
                return Err(GenomeError::SelfLoop(c.innovation));
            }
            if roles[&c.to] == NodeRole::Input {
                return Err(GenomeError::IntoInput(c.innovation));
            }
        }
        self.topological_order().map(|_| ())
    }

    /// Node ids in a topological order of the enabled connections. Ready
    /// nodes are released in ascending id order, so the result is unique.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, GenomeError> {
        let mut indegree: BTreeMap<NodeId, usize> = self.nodes.iter().map(|n| (n.id, 0)).collect();
        let mut out: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        for c in self.connections.iter().filter(|c| c.enabled) {
            *indegree.get_mut(&c.to).ok_or(GenomeError::MissingNode {
                innovation: c.innovation,
                node: c.to,
            })? += 1;
            if !indegree.contains_key(&c.from) {
                return Err(GenomeError::MissingNode { innovation: c.innovation, node: c.from });
            }
            out.entry(c.from).or_default().push(c.to);
        }
        let mut ready: BinaryHeap<Reverse<NodeId>> =
            indegree.iter().filter(|(_, &d)| d == 0).map(|(&id, _)| Reverse(id)).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(id)) = ready.pop() {
            order.push(id);
            for &next in out.get(&id).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indegree.get_mut(&next).expect("endpoint checked");
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(next));
                }
            }
        }
        if order.len() != self.nodes.len() {
            let stuck = indegree
                .iter()
                .find(|(id, &d)| d > 0 && !order.contains(id))
                .map(|(&id, _)| id)
                .expect("some node is left on a cycle");
            return Err(GenomeError::Cycle(stuck));
        }
        Ok(order)
    }

    /// True if `to` is reachable from `from` through any connection,
    /// enabled or not.
    pub fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        let mut stack = vec![from];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.connections.iter().filter(|c| c.from == n).map(|c| c.to));
            }
        }
        false
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("genome serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, GenomeError> {
        let raw: RawGenome =
            serde_json::from_str(text).map_err(|e| GenomeError::Malformed(e.to_string()))?;
        let nodes = raw
            .nodes
            .into_iter()
            .map(|n| {
                let activation = n.activation.parse().map_err(|_| {
                    GenomeError::UnknownActivation { node: n.id, tag: n.activation.clone() }
                })?;
                Ok(NodeGene { id: n.id, role: n.role, activation, label: n.label })
            })
            .collect::<Result<Vec<_>, GenomeError>>()?;
        Genome::new(nodes, raw.connections, raw.innovation_counter)
    }

    /// Stable content hash (hex SHA-256 of the compact canonical encoding).
    pub fn content_id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("genome serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActivationKind::*;

    fn conn(innovation: u64, from: u64, to: u64, weight: f64, enabled: bool) -> ConnectionGene {
        ConnectionGene {
            innovation: Innovation(innovation),
            from: NodeId(from),
            to: NodeId(to),
            weight,
            enabled,
        }
    }

    fn with_hidden() -> Genome {
        let mut g = Genome::minimal([Identity, Sigmoid, Gaussian]);
        g.push_node(NodeGene::hidden(NodeId(20), Sine));
        g.push_connection(conn(0, 0, 4, 0.5, true));
        g.push_connection(conn(13, 0, 20, 1.0, true));
        g.push_connection(conn(14, 20, 6, -0.25, true));
        g.push_connection(conn(15, 1, 5, 2.0, false));
        g.validate().unwrap();
        g
    }

    #[test]
    fn minimal_round_trips() {
        let g = Genome::minimal([Identity, Tanh, Cosine]);
        g.validate().unwrap();
        assert_eq!(Genome::from_text(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn disabled_connection_round_trips() {
        let g = with_hidden();
        let back = Genome::from_text(&g.to_text()).unwrap();
        assert_eq!(back, g);
        assert!(!back.connection(Innovation(15)).unwrap().enabled);
    }

    #[test]
    fn rejects_missing_node() {
        let mut g = with_hidden();
        g.connections[1].from = NodeId(99);
        let err = Genome::from_text(&g.to_text()).unwrap_err();
        assert_eq!(err, GenomeError::MissingNode { innovation: Innovation(13), node: NodeId(99) });
    }

    #[test]
    fn rejects_unknown_activation_by_node() {
        let text = with_hidden().to_text().replace("\"sine\"", "\"swish\"");
        let err = Genome::from_text(&text).unwrap_err();
        assert_eq!(err, GenomeError::UnknownActivation { node: NodeId(20), tag: "swish".into() });
    }

    #[test]
    fn rejects_duplicates_and_cycles() {
        let mut g = with_hidden();
        g.nodes.push(NodeGene::hidden(NodeId(20), Tanh));
        assert_eq!(g.validate(), Err(GenomeError::DuplicateNode(NodeId(20))));

        let mut g = with_hidden();
        g.push_node(NodeGene::hidden(NodeId(21), Tanh));
        g.push_connection(conn(16, 20, 21, 1.0, true));
        g.push_connection(conn(17, 21, 20, 1.0, true));
        assert!(matches!(g.validate(), Err(GenomeError::Cycle(_))));
        // a disabled back-edge is not a cycle
        g.connections.last_mut().unwrap().enabled = false;
        g.validate().unwrap();
    }

    #[test]
    fn rejects_bad_labels() {
        let text = with_hidden().to_text().replace("\"label\": \"d\"", "\"label\": \"z\"");
        assert!(matches!(Genome::from_text(&text), Err(GenomeError::BadLabel { .. })));
        assert!(matches!(Genome::from_text("{\"nodes\": 3}"), Err(GenomeError::Malformed(_))));
    }

    #[test]
    fn topological_order_is_deterministic() {
        let g = with_hidden();
        let order = g.topological_order().unwrap();
        let pos = |id: u64| order.iter().position(|&n| n == NodeId(id)).unwrap();
        assert!(pos(0) < pos(20) && pos(20) < pos(6));
        assert_eq!(order, g.topological_order().unwrap());
    }

    #[test]
    fn content_id_tracks_content() {
        let g = with_hidden();
        let mut h = g.clone();
        assert_eq!(g.content_id(), h.content_id());
        h.set_weight(Innovation(0), 0.51);
        assert_ne!(g.content_id(), h.content_id());
    }
}
