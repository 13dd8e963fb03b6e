//! Finite frames and models for the logic: chains of time clusters carrying
//! per-agent partitions, the satisfaction checker, rule validity by valuation
//! sweep, and well-formedness diagnostics for imported data.
//!
//! The time relation is reflexive and intransitive: a world sees its own
//! cluster and exactly the next cluster, never further. The environment
//! relation is universal within a cluster, and each agent relation is an
//! equivalence on the cluster refining it. Relations are never stored; they
//! are derived from the cluster sequence and the successor links, which makes
//! the structural laws (agent blocks inside clusters, mutual time-visibility
//! exactly within a cluster) hold by construction. `check_well_formed` exists
//! to vet hand-built or imported data that bypassed the constructors.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::bits::Bits;
use crate::syntax::{Formula, Rule, VarId};

/// Opaque world identifier, scoped to one frame. Ids survive JSON round-trips
/// bit-exactly.
pub type WorldId = u32;

/// One time cluster: its worlds plus, per agent, a partition of those worlds
/// into knowledge blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub worlds: Vec<WorldId>,
    /// `partitions[agent-1]` lists the blocks for that agent.
    pub partitions: Vec<Vec<Vec<WorldId>>>,
}

impl Cluster {
    /// Singleton cluster with the trivial partition for every agent.
    pub fn singleton(world: WorldId, agents: u32) -> Self {
        Cluster {
            worlds: vec![world],
            partitions: vec![vec![vec![world]]; agents as usize],
        }
    }
}

/// How the successor links are supposed to look; checked, not assumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameShape {
    /// Clusters form one linear chain in sequence order.
    Chain,
    /// Each cluster has at most one successor; links form a forest that
    /// converges forward (several clusters may share a successor).
    Forest,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("cluster {cluster} has no worlds")]
    EmptyCluster { cluster: usize },
    #[error("world id {world} appears in more than one place")]
    DuplicateWorld { world: WorldId },
    #[error("cluster {cluster} has {found} agent partitions, frame has {agents} agents")]
    PartitionCountMismatch {
        cluster: usize,
        found: usize,
        agents: u32,
    },
    #[error("agent {agent} block in cluster {cluster} is empty")]
    EmptyBlock { cluster: usize, agent: u32 },
    #[error(
        "agent {agent} block in cluster {cluster} contains world {world} from outside the \
         cluster; agent knowledge cannot cross the environment relation"
    )]
    BlockOutsideCluster {
        cluster: usize,
        agent: u32,
        world: WorldId,
    },
    #[error("world {world} appears in two agent-{agent} blocks of cluster {cluster}")]
    OverlappingBlocks {
        cluster: usize,
        agent: u32,
        world: WorldId,
    },
    #[error("world {world} of cluster {cluster} is missing from every agent-{agent} block")]
    UncoveredWorld {
        cluster: usize,
        agent: u32,
        world: WorldId,
    },
    #[error("cluster {cluster} links to nonexistent cluster {target}")]
    NextOutOfRange { cluster: usize, target: usize },
    #[error("successor links loop back through cluster {cluster}; time cannot revisit a cluster")]
    NextCycle { cluster: usize },
    #[error(
        "chain frame: cluster {cluster} must link to {expected:?} but links to {found:?}; the \
         time relation steps through consecutive clusters and never skips"
    )]
    NotLinear {
        cluster: usize,
        expected: Option<usize>,
        found: Option<usize>,
    },
    #[error("valuation of {var} lists world {world}, which is not in the frame")]
    ValuationUnknownWorld { var: String, world: WorldId },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("ill-formed frame: {}", fmt_violations(.0))]
    IllFormed(Vec<Violation>),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown world id {0}")]
    UnknownWorld(WorldId),
    #[error("valuation does not cover variable {0}")]
    UncoveredVariable(VarId),
    #[error("formula mentions agent {agent} but the frame has {agents} agents")]
    AgentOutOfRange { agent: u32, agents: u32 },
}

/// A finite frame: clusters plus successor links, with dense lookup tables
/// derived once at construction.
#[derive(Debug, Clone)]
pub struct Frame {
    agents: u32,
    clusters: Vec<Cluster>,
    next: Vec<Option<usize>>,
    shape: FrameShape,
    world_ids: Vec<WorldId>,
    world_pos: HashMap<WorldId, usize>,
    dense_cluster: Vec<usize>,
    members: Vec<Vec<usize>>,
    /// cluster -> agent -> block -> dense member indices
    blocks: Vec<Vec<Vec<Vec<usize>>>>,
    /// agent -> dense world -> index into `blocks[cluster][agent]`
    block_of: Vec<Vec<usize>>,
}

impl PartialEq for Frame {
    fn eq(&self, other: &Self) -> bool {
        self.agents == other.agents
            && self.clusters == other.clusters
            && self.next == other.next
            && self.shape == other.shape
    }
}
impl Eq for Frame {}

impl Frame {
    /// Build a linear chain frame; clusters succeed each other in sequence
    /// order. Fails on structural violations.
    pub fn chain(clusters: Vec<Cluster>, agents: u32) -> Result<Frame, FrameError> {
        let n = clusters.len();
        let next = (0..n)
            .map(|i| if i + 1 < n { Some(i + 1) } else { None })
            .collect();
        let f = Frame::new_unchecked(clusters, next, FrameShape::Chain, agents);
        let violations = f.check_well_formed();
        if violations.is_empty() {
            Ok(f)
        } else {
            Err(FrameError::IllFormed(violations))
        }
    }

    /// Build a frame with explicit successor links (converging-forest shape).
    pub fn forest(
        clusters: Vec<Cluster>,
        next: Vec<Option<usize>>,
        agents: u32,
    ) -> Result<Frame, FrameError> {
        let f = Frame::new_unchecked(clusters, next, FrameShape::Forest, agents);
        let violations = f.check_well_formed();
        if violations.is_empty() {
            Ok(f)
        } else {
            Err(FrameError::IllFormed(violations))
        }
    }

    /// Assemble without validation. Lookup tables are built defensively;
    /// callers are expected to run `check_well_formed` before evaluating
    /// anything on the result.
    pub fn new_unchecked(
        clusters: Vec<Cluster>,
        next: Vec<Option<usize>>,
        shape: FrameShape,
        agents: u32,
    ) -> Frame {
        let mut world_ids = Vec::new();
        let mut world_pos = HashMap::new();
        let mut dense_cluster = Vec::new();
        let mut members = Vec::new();
        for (ci, c) in clusters.iter().enumerate() {
            let mut ms = Vec::new();
            for &w in &c.worlds {
                if world_pos.contains_key(&w) {
                    continue; // duplicate, reported by check_well_formed
                }
                let pos = world_ids.len();
                world_pos.insert(w, pos);
                world_ids.push(w);
                dense_cluster.push(ci);
                ms.push(pos);
            }
            members.push(ms);
        }
        let mut blocks = Vec::new();
        let mut block_of = vec![vec![usize::MAX; world_ids.len()]; agents as usize];
        for (ci, c) in clusters.iter().enumerate() {
            let mut per_agent = Vec::new();
            for a in 0..agents as usize {
                let mut bs = Vec::new();
                if let Some(partition) = c.partitions.get(a) {
                    for block in partition {
                        let mut dense: Vec<usize> = Vec::new();
                        for &w in block {
                            match world_pos.get(&w) {
                                Some(&p) if dense_cluster[p] == ci => dense.push(p),
                                _ => {} // foreign world, reported by check_well_formed
                            }
                        }
                        if !dense.is_empty() {
                            for &p in &dense {
                                if block_of[a][p] == usize::MAX {
                                    block_of[a][p] = bs.len();
                                }
                            }
                            bs.push(dense);
                        }
                    }
                }
                per_agent.push(bs);
            }
            blocks.push(per_agent);
        }
        Frame {
            agents,
            clusters,
            next,
            shape,
            world_ids,
            world_pos,
            dense_cluster,
            members,
            blocks,
            block_of,
        }
    }

    pub fn agents(&self) -> u32 {
        self.agents
    }

    pub fn shape(&self) -> FrameShape {
        self.shape
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn next_of(&self, cluster: usize) -> Option<usize> {
        self.next.get(cluster).copied().flatten()
    }

    pub fn world_count(&self) -> usize {
        self.world_ids.len()
    }

    pub fn world_ids(&self) -> &[WorldId] {
        &self.world_ids
    }

    pub fn contains(&self, w: WorldId) -> bool {
        self.world_pos.contains_key(&w)
    }

    pub fn cluster_of(&self, w: WorldId) -> Option<usize> {
        self.world_pos.get(&w).map(|&p| self.dense_cluster[p])
    }

    pub(crate) fn dense_pos(&self, w: WorldId) -> Option<usize> {
        self.world_pos.get(&w).copied()
    }

    pub(crate) fn dense_id(&self, pos: usize) -> WorldId {
        self.world_ids[pos]
    }

    pub(crate) fn dense_cluster_of(&self, pos: usize) -> usize {
        self.dense_cluster[pos]
    }

    pub(crate) fn cluster_members(&self, cluster: usize) -> &[usize] {
        &self.members[cluster]
    }

    pub(crate) fn agent_blocks(&self, cluster: usize, agent0: usize) -> &[Vec<usize>] {
        &self.blocks[cluster][agent0]
    }

    pub(crate) fn block_members_of(&self, pos: usize, agent0: usize) -> &[usize] {
        let c = self.dense_cluster[pos];
        let b = self.block_of[agent0][pos];
        &self.blocks[c][agent0][b]
    }

    /// Worlds reachable in one time step: the whole current cluster plus the
    /// whole successor cluster, if any. Sorted by id.
    pub fn rt_successors(&self, w: WorldId) -> Result<Vec<WorldId>, EvalError> {
        let c = self.cluster_of(w).ok_or(EvalError::UnknownWorld(w))?;
        let mut out: Vec<WorldId> = self.members[c].iter().map(|&p| self.world_ids[p]).collect();
        if let Some(n) = self.next_of(c) {
            out.extend(self.members[n].iter().map(|&p| self.world_ids[p]));
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Structural diagnostics. Empty result means the frame satisfies every
    /// construction law for its declared shape.
    pub fn check_well_formed(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen: BTreeSet<WorldId> = BTreeSet::new();
        for (ci, c) in self.clusters.iter().enumerate() {
            if c.worlds.is_empty() {
                out.push(Violation::EmptyCluster { cluster: ci });
            }
            for &w in &c.worlds {
                if !seen.insert(w) {
                    out.push(Violation::DuplicateWorld { world: w });
                }
            }
        }
        for (ci, c) in self.clusters.iter().enumerate() {
            if c.partitions.len() != self.agents as usize {
                out.push(Violation::PartitionCountMismatch {
                    cluster: ci,
                    found: c.partitions.len(),
                    agents: self.agents,
                });
            }
            let cluster_worlds: BTreeSet<WorldId> = c.worlds.iter().copied().collect();
            for (a, partition) in c.partitions.iter().enumerate() {
                let agent = a as u32 + 1;
                let mut covered: BTreeSet<WorldId> = BTreeSet::new();
                for block in partition {
                    if block.is_empty() {
                        out.push(Violation::EmptyBlock {
                            cluster: ci,
                            agent,
                        });
                    }
                    for &w in block {
                        if !cluster_worlds.contains(&w) {
                            out.push(Violation::BlockOutsideCluster {
                                cluster: ci,
                                agent,
                                world: w,
                            });
                        } else if !covered.insert(w) {
                            out.push(Violation::OverlappingBlocks {
                                cluster: ci,
                                agent,
                                world: w,
                            });
                        }
                    }
                }
                for &w in &cluster_worlds {
                    if !covered.contains(&w) {
                        out.push(Violation::UncoveredWorld {
                            cluster: ci,
                            agent,
                            world: w,
                        });
                    }
                }
            }
        }
        for (ci, n) in self.next.iter().enumerate() {
            if let Some(t) = n {
                if *t >= self.clusters.len() {
                    out.push(Violation::NextOutOfRange {
                        cluster: ci,
                        target: *t,
                    });
                }
            }
        }
        // Cycle detection over in-range links. Out-degree is at most one, so
        // any walk longer than the cluster count proves a loop.
        let n = self.clusters.len();
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(t) = self.next.get(cur).copied().flatten().filter(|t| *t < n) {
                cur = t;
                steps += 1;
                if steps > n {
                    out.push(Violation::NextCycle { cluster: start });
                    break;
                }
            }
        }
        if self.shape == FrameShape::Chain {
            for ci in 0..self.clusters.len() {
                let expected = if ci + 1 < self.clusters.len() {
                    Some(ci + 1)
                } else {
                    None
                };
                let found = self.next.get(ci).copied().flatten();
                if found != expected {
                    out.push(Violation::NotLinear {
                        cluster: ci,
                        expected,
                        found,
                    });
                }
            }
        }
        out
    }

    /// Truth set of `f` as a dense bit vector, with variable truth supplied
    /// by `lookup`.
    pub(crate) fn eval_bits(
        &self,
        lookup: &dyn Fn(VarId) -> Result<Bits, EvalError>,
        f: &Formula,
    ) -> Result<Bits, EvalError> {
        let n = self.world_count();
        Ok(match f {
            Formula::Var(i) => lookup(*i)?,
            Formula::Top => Bits::ones(n),
            Formula::Bottom => Bits::zeros(n),
            Formula::Not(a) => {
                let mut b = self.eval_bits(lookup, a)?;
                b.negate();
                b
            }
            Formula::And(a, b) => {
                let mut x = self.eval_bits(lookup, a)?;
                x.intersect_with(&self.eval_bits(lookup, b)?);
                x
            }
            Formula::Or(a, b) => {
                let mut x = self.eval_bits(lookup, a)?;
                x.union_with(&self.eval_bits(lookup, b)?);
                x
            }
            Formula::Implies(a, b) => {
                let mut x = self.eval_bits(lookup, a)?;
                x.negate();
                x.union_with(&self.eval_bits(lookup, b)?);
                x
            }
            Formula::BoxT(a) => {
                let inner = self.eval_bits(lookup, a)?;
                let all_in: Vec<bool> = (0..self.clusters.len())
                    .map(|c| self.members[c].iter().all(|&p| inner.get(p)))
                    .collect();
                let mut out = Bits::zeros(n);
                for c in 0..self.clusters.len() {
                    let v = all_in[c] && self.next_of(c).map_or(true, |t| all_in[t]);
                    if v {
                        for &p in &self.members[c] {
                            out.set(p, true);
                        }
                    }
                }
                out
            }
            Formula::BoxE(a) => {
                let inner = self.eval_bits(lookup, a)?;
                let mut out = Bits::zeros(n);
                for c in 0..self.clusters.len() {
                    if self.members[c].iter().all(|&p| inner.get(p)) {
                        for &p in &self.members[c] {
                            out.set(p, true);
                        }
                    }
                }
                out
            }
            Formula::BoxAgent(agent, a) => {
                if *agent < 1 || *agent > self.agents {
                    return Err(EvalError::AgentOutOfRange {
                        agent: *agent,
                        agents: self.agents,
                    });
                }
                let inner = self.eval_bits(lookup, a)?;
                let mut out = Bits::zeros(n);
                for c in 0..self.clusters.len() {
                    for block in &self.blocks[c][*agent as usize - 1] {
                        if block.iter().all(|&p| inner.get(p)) {
                            for &p in block {
                                out.set(p, true);
                            }
                        }
                    }
                }
                out
            }
        })
    }
}

/// Truth assignment for propositional variables: each maps to the set of
/// worlds where it holds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Valuation {
    map: BTreeMap<VarId, BTreeSet<WorldId>>,
}

impl Valuation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, var: VarId, worlds: impl IntoIterator<Item = WorldId>) {
        self.map.insert(var, worlds.into_iter().collect());
    }

    pub fn with(mut self, var: VarId, worlds: impl IntoIterator<Item = WorldId>) -> Self {
        self.set(var, worlds);
        self
    }

    pub fn worlds(&self, var: VarId) -> Option<&BTreeSet<WorldId>> {
        self.map.get(&var)
    }

    pub fn covers(&self, var: VarId) -> bool {
        self.map.contains_key(&var)
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.map.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &BTreeSet<WorldId>)> {
        self.map.iter().map(|(k, v)| (*k, v))
    }
}

/// A frame with a valuation.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub frame: Frame,
    pub valuation: Valuation,
}

impl Model {
    pub fn new(frame: Frame, valuation: Valuation) -> Self {
        Model { frame, valuation }
    }

    fn lookup(&self) -> impl Fn(VarId) -> Result<Bits, EvalError> + '_ {
        move |v: VarId| {
            let worlds = self
                .valuation
                .worlds(v)
                .ok_or(EvalError::UncoveredVariable(v))?;
            let mut b = Bits::zeros(self.frame.world_count());
            for &w in worlds {
                if let Some(p) = self.frame.dense_pos(w) {
                    b.set(p, true);
                }
            }
            Ok(b)
        }
    }

    /// Truth of `f` at one world.
    pub fn satisfies(&self, w: WorldId, f: &Formula) -> Result<bool, EvalError> {
        let p = self
            .frame
            .dense_pos(w)
            .ok_or(EvalError::UnknownWorld(w))?;
        let bits = self.frame.eval_bits(&self.lookup(), f)?;
        Ok(bits.get(p))
    }

    /// Truth of `f` at every world.
    pub fn valid(&self, f: &Formula) -> Result<bool, EvalError> {
        Ok(self.frame.eval_bits(&self.lookup(), f)?.all())
    }

    /// The set of worlds where `f` holds, as ids.
    pub fn truth_worlds(&self, f: &Formula) -> Result<Vec<WorldId>, EvalError> {
        let bits = self.frame.eval_bits(&self.lookup(), f)?;
        let mut ids: Vec<WorldId> = bits.iter_ones().map(|p| self.frame.dense_id(p)).collect();
        ids.sort_unstable();
        Ok(ids)
    }

    /// Frame diagnostics plus valuation references to unknown worlds.
    pub fn check_well_formed(&self) -> Vec<Violation> {
        let mut out = self.frame.check_well_formed();
        for (var, worlds) in self.valuation.iter() {
            for &w in worlds {
                if !self.frame.contains(w) {
                    out.push(Violation::ValuationUnknownWorld {
                        var: format!("p{var}"),
                        world: w,
                    });
                }
            }
        }
        out
    }
}

/// Global rule validity on a frame: for every valuation of the rule's own
/// variables, if all premises hold at every world then so does the
/// conclusion. Decidable by exhaustive sweep since frames are finite.
pub fn rule_valid_on_frame(frame: &Frame, rule: &Rule) -> Result<bool, EvalError> {
    let max_agent = rule.max_agent();
    if max_agent > frame.agents() {
        return Err(EvalError::AgentOutOfRange {
            agent: max_agent,
            agents: frame.agents(),
        });
    }
    let vars: Vec<VarId> = rule.variables().into_iter().collect();
    let n = frame.world_count();
    let mut masks: Vec<Bits> = vars.iter().map(|_| Bits::zeros(n)).collect();
    loop {
        let lookup = |v: VarId| -> Result<Bits, EvalError> {
            let idx = vars
                .binary_search(&v)
                .map_err(|_| EvalError::UncoveredVariable(v))?;
            Ok(masks[idx].clone())
        };
        let premises_hold = rule
            .premises
            .iter()
            .try_fold(true, |acc, p| -> Result<bool, EvalError> {
                Ok(acc && frame.eval_bits(&lookup, p)?.all())
            })?;
        if premises_hold && !frame.eval_bits(&lookup, &rule.conclusion)?.all() {
            return Ok(false);
        }
        // Odometer step over the per-variable masks.
        let mut advanced = false;
        for m in masks.iter_mut() {
            if m.increment() {
                advanced = true;
                break;
            }
        }
        if !advanced {
            return Ok(true);
        }
    }
}

// ---------------------------------------------------------------------------
// Cluster shapes and canonical forms.
//
// Enumerators (chain frames, witness frames, catalogue entries) all need
// clusters "up to renaming of worlds". A shape is a size plus one set
// partition per agent; its canonical key minimizes an encoding over all
// permutations of the members, optionally weaving in per-member labels such
// as valuation masks.
// ---------------------------------------------------------------------------

/// Set partition in restricted-growth form: `assignment[i]` is the block of
/// member `i`, and block ids appear in first-occurrence order.
pub type BlockAssignment = Vec<usize>;

/// All set partitions of `size` members, in lexicographic order of their
/// restricted-growth strings.
pub fn all_set_partitions(size: usize) -> Vec<BlockAssignment> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; size];
    fn rec(cur: &mut Vec<usize>, i: usize, max_used: usize, out: &mut Vec<BlockAssignment>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max_used + 1 {
            cur[i] = b;
            rec(cur, i + 1, max_used.max(b), out);
        }
    }
    if size == 0 {
        return vec![vec![]];
    }
    cur[0] = 0;
    rec(&mut cur, 1, 0, &mut out);
    out
}

/// A cluster up to renaming of its worlds: size plus per-agent partition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterShape {
    pub size: usize,
    /// Per agent, the block assignment of members `0..size`.
    pub agent_blocks: Vec<BlockAssignment>,
}

impl ClusterShape {
    pub fn trivial(size: usize, agents: u32) -> Self {
        ClusterShape {
            size,
            agent_blocks: vec![vec![0; size]; agents as usize],
        }
    }

    /// Encoding of this shape with optional per-member labels, minimized over
    /// member permutations. Equal keys mean isomorphic labeled clusters.
    pub fn canonical_key(&self, labels: Option<&[u64]>) -> Vec<u64> {
        let perms = permutations(self.size);
        perms
            .iter()
            .map(|perm| self.encode_under(perm, labels))
            .min()
            .expect("at least the identity permutation")
    }

    /// Is this the canonical representative of its class (with member labels
    /// taken as given)?
    pub fn is_canonical(&self, labels: Option<&[u64]>) -> bool {
        let identity: Vec<usize> = (0..self.size).collect();
        self.encode_under(&identity, labels) == self.canonical_key(labels)
    }

    fn encode_under(&self, perm: &[usize], labels: Option<&[u64]>) -> Vec<u64> {
        // perm[i] = original member placed at position i.
        let mut code = Vec::with_capacity(self.size * (self.agent_blocks.len() + 1));
        for blocks in &self.agent_blocks {
            // Renumber blocks by first occurrence along the permuted order.
            let mut renumber: HashMap<usize, u64> = HashMap::new();
            for &orig in perm {
                let next_id = renumber.len() as u64;
                let id = *renumber.entry(blocks[orig]).or_insert(next_id);
                code.push(id);
            }
        }
        if let Some(ls) = labels {
            for &orig in perm {
                code.push(ls[orig]);
            }
        }
        code
    }

    /// Materialize as a cluster with world ids `first..first+size`.
    pub fn to_cluster(&self, first: WorldId, agents: u32) -> Cluster {
        assert_eq!(self.agent_blocks.len(), agents as usize);
        let worlds: Vec<WorldId> = (0..self.size as u32).map(|i| first + i).collect();
        let partitions = self
            .agent_blocks
            .iter()
            .map(|blocks| {
                let nblocks = blocks.iter().max().map_or(0, |m| m + 1);
                let mut per: Vec<Vec<WorldId>> = vec![Vec::new(); nblocks];
                for (i, &b) in blocks.iter().enumerate() {
                    per[b].push(first + i as u32);
                }
                per
            })
            .collect();
        Cluster { worlds, partitions }
    }
}

/// All non-isomorphic cluster shapes of exactly `size` worlds, canonical and
/// sorted.
pub fn enumerate_cluster_shapes(size: usize, agents: u32) -> Vec<ClusterShape> {
    let partitions = all_set_partitions(size);
    let mut shapes = Vec::new();
    let mut combo = vec![0usize; agents as usize];
    loop {
        let shape = ClusterShape {
            size,
            agent_blocks: combo.iter().map(|&i| partitions[i].clone()).collect(),
        };
        if shape.is_canonical(None) {
            shapes.push(shape);
        }
        // Odometer over per-agent partition choices; with zero agents the
        // single empty combination is the only one.
        let mut advanced = false;
        for slot in combo.iter_mut() {
            *slot += 1;
            if *slot < partitions.len() {
                advanced = true;
                break;
            }
            *slot = 0;
        }
        if !advanced {
            break;
        }
    }
    shapes.sort();
    shapes.dedup();
    shapes
}

pub(crate) fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    heap_permutations(&mut cur, n, &mut out);
    out.sort();
    out
}

fn heap_permutations(cur: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(cur.clone());
        return;
    }
    for i in 0..k {
        heap_permutations(cur, k - 1, out);
        if k % 2 == 0 {
            cur.swap(i, k - 1);
        } else {
            cur.swap(0, k - 1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_formula, parse_rule};

    /// Chain of singleton clusters with ids 0, 1, 2, ...
    pub(crate) fn singleton_chain(len: usize, agents: u32) -> Frame {
        let clusters = (0..len)
            .map(|i| Cluster::singleton(i as WorldId, agents))
            .collect();
        Frame::chain(clusters, agents).unwrap()
    }

    fn two_world_cluster_frame() -> Frame {
        // One cluster {10, 11} with both agents... just one agent, split blocks.
        let c = Cluster {
            worlds: vec![10, 11],
            partitions: vec![vec![vec![10], vec![11]]],
        };
        Frame::chain(vec![c], 1).unwrap()
    }

    #[test]
    fn rt_successors_reflexive_on_singleton() {
        let f = singleton_chain(1, 1);
        assert_eq!(f.rt_successors(0).unwrap(), vec![0]);
    }

    #[test]
    fn rt_successors_reach_next_cluster_only() {
        let f = singleton_chain(2, 1);
        assert_eq!(f.rt_successors(0).unwrap(), vec![0, 1]);
        let g = singleton_chain(3, 1);
        let succ = g.rt_successors(0).unwrap();
        assert!(!succ.contains(&2), "no edge may skip a cluster");
        assert_eq!(succ, vec![0, 1]);
        assert_eq!(g.rt_successors(2).unwrap(), vec![2]);
    }

    #[test]
    fn rt_successors_unknown_world() {
        let f = singleton_chain(1, 1);
        assert_eq!(f.rt_successors(9), Err(EvalError::UnknownWorld(9)));
    }

    #[test]
    fn mutual_time_visibility_is_exactly_the_cluster() {
        let c0 = Cluster {
            worlds: vec![0, 1],
            partitions: vec![vec![vec![0, 1]]],
        };
        let c1 = Cluster {
            worlds: vec![2],
            partitions: vec![vec![vec![2]]],
        };
        let f = Frame::chain(vec![c0, c1], 1).unwrap();
        for &w in f.world_ids() {
            for &z in f.world_ids() {
                let forward = f.rt_successors(w).unwrap().contains(&z);
                let back = f.rt_successors(z).unwrap().contains(&w);
                let same_cluster = f.cluster_of(w) == f.cluster_of(z);
                assert_eq!(forward && back, same_cluster, "w={w} z={z}");
            }
        }
    }

    #[test]
    fn satisfies_box_e_on_reflexive_singleton() {
        let f = singleton_chain(1, 1);
        let m = Model::new(f, Valuation::new().with(1, [0]));
        assert!(m.satisfies(0, &parse_formula("[E] p1", 1).unwrap()).unwrap());
    }

    #[test]
    fn satisfies_box_t_looks_one_step_ahead() {
        let f = singleton_chain(2, 1);
        let m = Model::new(f, Valuation::new().with(1, [1]));
        assert!(!m.satisfies(0, &parse_formula("[T] p1", 1).unwrap()).unwrap());
        assert!(m.satisfies(0, &parse_formula("<T> p1", 1).unwrap()).unwrap());
    }

    #[test]
    fn satisfies_exhibits_intransitivity() {
        let f = singleton_chain(3, 1);
        let m = Model::new(f, Valuation::new().with(1, [0, 1]));
        assert!(m.satisfies(0, &parse_formula("[T] p1", 1).unwrap()).unwrap());
        assert!(!m
            .satisfies(0, &parse_formula("[T] [T] p1", 1).unwrap())
            .unwrap());
    }

    #[test]
    fn valid_on_model_examples() {
        let m = Model::new(singleton_chain(3, 1), Valuation::new().with(1, [0, 1]));
        assert!(m.valid(&parse_formula("p1 -> p1", 1).unwrap()).unwrap());
        assert!(!m
            .valid(&parse_formula("[T] p1 -> [T] [T] p1", 1).unwrap())
            .unwrap());
        // Reflexivity of the time relation; holds under any valuation here.
        assert!(m.valid(&parse_formula("[T] p1 -> p1", 1).unwrap()).unwrap());
    }

    #[test]
    fn satisfies_uncovered_variable_is_an_error() {
        let m = Model::new(singleton_chain(1, 1), Valuation::new());
        assert_eq!(
            m.satisfies(0, &Formula::var(1)),
            Err(EvalError::UncoveredVariable(1))
        );
    }

    #[test]
    fn rule_validity_examples() {
        for frame in [singleton_chain(1, 1), singleton_chain(3, 1), two_world_cluster_frame()] {
            let identity = parse_rule("x1 / x1", 1).unwrap();
            assert!(rule_valid_on_frame(&frame, &identity).unwrap());
            let absurd = parse_rule("x1 | ~x1 / F", 1).unwrap();
            assert!(!rule_valid_on_frame(&frame, &absurd).unwrap());
            let necessitation = parse_rule("x1 / [E] x1", 1).unwrap();
            assert!(rule_valid_on_frame(&frame, &necessitation).unwrap());
        }
    }

    #[test]
    fn constructor_built_frames_are_well_formed() {
        assert!(singleton_chain(3, 2).check_well_formed().is_empty());
        assert!(two_world_cluster_frame().check_well_formed().is_empty());
    }

    #[test]
    fn agent_block_crossing_clusters_is_flagged() {
        let c0 = Cluster {
            worlds: vec![0],
            partitions: vec![vec![vec![0, 1]]], // world 1 lives in the next cluster
        };
        let c1 = Cluster {
            worlds: vec![1],
            partitions: vec![vec![vec![1]]],
        };
        let f = Frame::new_unchecked(vec![c0, c1], vec![Some(1), None], FrameShape::Chain, 1);
        let violations = f.check_well_formed();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::BlockOutsideCluster { world: 1, .. })));
    }

    #[test]
    fn skipping_time_edge_is_flagged() {
        let clusters: Vec<Cluster> = (0..3).map(|i| Cluster::singleton(i, 1)).collect();
        let f = Frame::new_unchecked(
            clusters,
            vec![Some(2), Some(2), None],
            FrameShape::Chain,
            1,
        );
        let violations = f.check_well_formed();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::NotLinear { cluster: 0, .. })));
    }

    #[test]
    fn next_cycle_is_flagged() {
        let clusters: Vec<Cluster> = (0..2).map(|i| Cluster::singleton(i, 1)).collect();
        let f = Frame::new_unchecked(
            clusters,
            vec![Some(1), Some(0)],
            FrameShape::Forest,
            1,
        );
        assert!(f
            .check_well_formed()
            .iter()
            .any(|v| matches!(v, Violation::NextCycle { .. })));
    }

    #[test]
    fn environment_knowledge_is_an_equivalence() {
        // <E> p -> [E] <E> p holds on every model over these frames.
        let frames = [singleton_chain(2, 1), two_world_cluster_frame()];
        let f = parse_formula("<E> p1 -> [E] <E> p1", 1).unwrap();
        for frame in frames {
            let n = frame.world_count();
            let ids: Vec<WorldId> = frame.world_ids().to_vec();
            let mut mask = Bits::zeros(n);
            loop {
                let val = Valuation::new()
                    .with(1, mask.iter_ones().map(|p| ids[p]).collect::<Vec<_>>());
                let m = Model::new(frame.clone(), val);
                assert!(m.valid(&f).unwrap());
                if !mask.increment() {
                    break;
                }
            }
        }
    }

    #[test]
    fn set_partition_counts_are_bell_numbers() {
        assert_eq!(all_set_partitions(1).len(), 1);
        assert_eq!(all_set_partitions(2).len(), 2);
        assert_eq!(all_set_partitions(3).len(), 5);
        assert_eq!(all_set_partitions(4).len(), 15);
    }

    #[test]
    fn cluster_shape_enumeration_counts() {
        // One agent: shapes of size 2 are the merged and the split partition.
        assert_eq!(enumerate_cluster_shapes(1, 1).len(), 1);
        assert_eq!(enumerate_cluster_shapes(2, 1).len(), 2);
        // Partitions of 3 members up to renaming: 3, 2+1, 1+1+1.
        assert_eq!(enumerate_cluster_shapes(3, 1).len(), 3);
        // Two agents, size 2: each agent merged or split, all combinations
        // distinct because agents are named.
        assert_eq!(enumerate_cluster_shapes(2, 2).len(), 4);
    }

    #[test]
    fn cluster_shape_canonicalization_merges_isomorphic_partitions() {
        // {0|12} and {01|2} are the same shape up to renaming.
        let a = ClusterShape {
            size: 3,
            agent_blocks: vec![vec![0, 1, 1]],
        };
        let b = ClusterShape {
            size: 3,
            agent_blocks: vec![vec![0, 0, 1]],
        };
        assert_eq!(a.canonical_key(None), b.canonical_key(None));
        // Labels break the symmetry.
        assert_ne!(
            a.canonical_key(Some(&[1, 0, 0])),
            b.canonical_key(Some(&[1, 1, 0]))
        );
    }

    #[test]
    fn materialized_shape_passes_well_formedness() {
        for shape in enumerate_cluster_shapes(3, 2) {
            let cluster = shape.to_cluster(5, 2);
            let frame = Frame::chain(vec![cluster], 2).unwrap();
            assert!(frame.check_well_formed().is_empty());
        }
    }
}
