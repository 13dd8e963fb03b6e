//! Deciding rule admissibility by witness search.
//!
//! A rule in reduced normal form fails to be admissible exactly when a
//! finite frame of a specific shape carries a labeling of worlds by premise
//! disjuncts that refutes the conclusion variable somewhere while satisfying
//! a handful of side conditions. The shape is a main chain of clusters
//! `C_0 .. C_d`, one singleton-world tail feeding each `C_i`, and a single
//! top world after `C_d`. The search enumerates these frames up to
//! isomorphism within bounds, then enumerates coherent labelings cluster by
//! cluster; any hit is returned as an independently checkable certificate.
//!
//! Two caveats are inherent and recorded in every verdict: the exact frame
//! size that would make the search complete is not pinned down here, so
//! `Admissible` always means "no witness within the recorded bounds"; and
//! the final condition (the last main cluster must not look like the top
//! world) can be read frame-wise or model-wise, selectable by flag with the
//! model reading as default.

use std::collections::HashMap;
use std::rc::Rc;

use rayon::prelude::*;

use crate::bits::Bits;
use crate::kripke::enumerate_cluster_shapes;
use crate::kripke::{Cluster, ClusterShape, EvalError, Frame, Valuation, WorldId};
use crate::normal_form::{
    cluster_assignments, reduce, theta_satisfied, ClusterAssign, ClusterEnv, ReducedRule,
};
use crate::syntax::{Formula, Rule};

/// Bounds of the witness search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBounds {
    /// Highest index of the last main cluster (`d`), so at most `max_d + 1`
    /// main clusters.
    pub max_d: usize,
    pub max_cluster_size: usize,
    /// At least 2; the first two worlds of every tail carry the anchor
    /// disjunct.
    pub max_tail_len: usize,
}

// Caps applied to the disjunct-count-derived defaults. The raw derivation
// (chain length and tail length growing with the disjunct count, cluster
// size up to it) explodes for any non-toy rule, so defaults stay at desk
// scale; callers widen explicitly when they need more.
const DEFAULT_MAX_D: usize = 2;
const DEFAULT_MAX_CLUSTER: usize = 2;
const DEFAULT_MAX_TAIL: usize = 4;

impl SearchBounds {
    pub fn new(max_d: usize, max_cluster_size: usize, max_tail_len: usize) -> Self {
        assert!(max_cluster_size >= 1, "clusters are nonempty");
        assert!(max_tail_len >= 2, "tails carry at least two worlds");
        SearchBounds {
            max_d,
            max_cluster_size,
            max_tail_len,
        }
    }

    /// Defaults for a rule with `s` premise disjuncts: the distinct-disjunct
    /// condition caps the useful size of the last main cluster at `s`; the
    /// other margins grow with `s` but are capped at desk scale.
    pub fn for_disjunct_count(s: usize) -> Self {
        SearchBounds {
            max_d: (s + 2).min(DEFAULT_MAX_D),
            max_cluster_size: s.clamp(1, DEFAULT_MAX_CLUSTER),
            max_tail_len: (s + 2).clamp(2, DEFAULT_MAX_TAIL),
        }
    }
}

/// Which reading of the "last cluster differs from the top world" condition
/// applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Condition5Mode {
    /// Compare as models over the rule variables: a singleton last cluster
    /// is excluded only when its labeling matches the top world's.
    #[default]
    Model,
    /// Compare as bare frames: any singleton last cluster is excluded.
    FrameOnly,
}

/// The witness frame shape: a main chain, one singleton-world tail feeding
/// each main cluster, and a top world after the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SpFrame {
    frame: Frame,
    /// Cluster indices of `C_0 .. C_d` within `frame`.
    main: Vec<usize>,
    /// Per main cluster, the indices of its tail clusters in time order
    /// (head first); every tail cluster is a singleton.
    tails: Vec<Vec<usize>>,
    /// Cluster index of the top world.
    top: usize,
}

impl SpFrame {
    /// Assemble from main cluster shapes and tail lengths. World ids run
    /// sequentially: main clusters first, then the tails in order, then the
    /// top world.
    pub fn assemble(main_shapes: &[ClusterShape], tail_lens: &[usize], agents: u32) -> SpFrame {
        assert_eq!(main_shapes.len(), tail_lens.len());
        assert!(!main_shapes.is_empty());
        assert!(tail_lens.iter().all(|&t| t >= 2));
        let d = main_shapes.len() - 1;
        let mut clusters = Vec::new();
        let mut next_id: WorldId = 0;
        let mut main = Vec::new();
        for shape in main_shapes {
            main.push(clusters.len());
            let c = shape.to_cluster(next_id, agents);
            next_id += c.worlds.len() as WorldId;
            clusters.push(c);
        }
        let mut tails = Vec::new();
        for &len in tail_lens {
            let mut tail = Vec::new();
            for _ in 0..len {
                tail.push(clusters.len());
                clusters.push(Cluster::singleton(next_id, agents));
                next_id += 1;
            }
            tails.push(tail);
        }
        let top = clusters.len();
        clusters.push(Cluster::singleton(next_id, agents));

        let mut next = vec![None; clusters.len()];
        for j in 0..=d {
            next[main[j]] = if j < d { Some(main[j + 1]) } else { Some(top) };
        }
        for (i, tail) in tails.iter().enumerate() {
            for w in tail.windows(2) {
                next[w[0]] = Some(w[1]);
            }
            next[*tail.last().expect("tails nonempty")] = Some(main[i]);
        }
        let frame = Frame::forest(clusters, next, agents).expect("assembled witness frame");
        SpFrame {
            frame,
            main,
            tails,
            top,
        }
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn d(&self) -> usize {
        self.main.len() - 1
    }

    pub fn main_cluster_worlds(&self, j: usize) -> &[WorldId] {
        &self.frame.clusters()[self.main[j]].worlds
    }

    /// Tail worlds of main cluster `i`, head first.
    pub fn tail_worlds(&self, i: usize) -> Vec<WorldId> {
        self.tails[i]
            .iter()
            .map(|&c| self.frame.clusters()[c].worlds[0])
            .collect()
    }

    pub fn top_world(&self) -> WorldId {
        self.frame.clusters()[self.top].worlds[0]
    }

    pub(crate) fn parts(&self) -> (&[usize], &[Vec<usize>], usize) {
        (&self.main, &self.tails, self.top)
    }

    /// Rebuild from raw parts (JSON import); validates the shape.
    pub fn from_parts(
        frame: Frame,
        main: Vec<usize>,
        tails: Vec<Vec<usize>>,
        top: usize,
    ) -> Result<SpFrame, String> {
        if main.is_empty() {
            return Err("main chain is empty".into());
        }
        if tails.len() != main.len() {
            return Err("one tail per main cluster required".into());
        }
        let nclusters = frame.cluster_count();
        let in_range = |c: usize| c < nclusters;
        if !main.iter().all(|&c| in_range(c)) || !in_range(top) {
            return Err("cluster index out of range".into());
        }
        for (i, tail) in tails.iter().enumerate() {
            if tail.len() < 2 {
                return Err(format!("tail {i} is shorter than two worlds"));
            }
            for &c in tail {
                if !in_range(c) {
                    return Err("cluster index out of range".into());
                }
                if frame.clusters()[c].worlds.len() != 1 {
                    return Err(format!("tail {i} contains a non-singleton cluster"));
                }
            }
            for w in tail.windows(2) {
                if frame.next_of(w[0]) != Some(w[1]) {
                    return Err(format!("tail {i} is not chained in order"));
                }
            }
            if frame.next_of(tail[tail.len() - 1]) != Some(main[i]) {
                return Err(format!("tail {i} does not feed its main cluster"));
            }
        }
        if frame.clusters()[top].worlds.len() != 1 {
            return Err("top cluster is not a singleton".into());
        }
        for j in 0..main.len() {
            let expected = if j + 1 < main.len() {
                Some(main[j + 1])
            } else {
                Some(top)
            };
            if frame.next_of(main[j]) != expected {
                return Err(format!("main cluster {j} has the wrong successor"));
            }
        }
        if frame.next_of(top).is_some() {
            return Err("top cluster must be final".into());
        }
        let mut covered = vec![false; nclusters];
        for &c in main.iter().chain(tails.iter().flatten()) {
            covered[c] = true;
        }
        covered[top] = true;
        if covered.iter().any(|&c| !c) {
            return Err("frame has clusters outside the witness shape".into());
        }
        Ok(SpFrame {
            frame,
            main,
            tails,
            top,
        })
    }
}

/// Assignment of a premise disjunct to every world.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Labeling {
    map: std::collections::BTreeMap<WorldId, usize>,
}

impl Labeling {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, w: WorldId, theta: usize) {
        self.map.insert(w, theta);
    }

    pub fn get(&self, w: WorldId) -> Option<usize> {
        self.map.get(&w).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (WorldId, usize)> + '_ {
        self.map.iter().map(|(w, t)| (*w, *t))
    }

    /// The valuation the labels induce: `x<i>` holds where the world's
    /// disjunct asserts it.
    pub fn induced_valuation(&self, rr: &ReducedRule) -> Valuation {
        let layout = rr.layout();
        let mut v = Valuation::new();
        for i in 0..rr.var_count {
            let worlds: Vec<WorldId> = self
                .map
                .iter()
                .filter(|(_, &t)| rr.thetas[t].lit_positive(&layout, i))
                .map(|(&w, _)| w)
                .collect();
            v.set(i as u32, worlds);
        }
        v
    }
}

/// A non-admissibility certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub sp: SpFrame,
    pub labeling: Labeling,
    pub failing_world: WorldId,
    /// Index of the anchor disjunct carried by the first two worlds of every
    /// tail and by the top world.
    pub theta_a: usize,
    pub bounds: SearchBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// No witness within the recorded bounds.
    Admissible { bounds: SearchBounds },
    NotAdmissible { witness: Box<Witness> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TheoremVerdict {
    Theorem { bounds: SearchBounds },
    NotTheorem { witness: Box<Witness> },
}

/// Why a claimed witness fails, keyed to the five certificate conditions.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WitnessViolation {
    #[error("conclusion variable holds at the claimed failing world {world}")]
    ConclusionHolds { world: WorldId },
    #[error("world {world} carries no label")]
    Unlabeled { world: WorldId },
    #[error("world {world} carries disjunct index {index}, out of range")]
    BadIndex { world: WorldId, index: usize },
    #[error("world {world} does not satisfy its own disjunct {index}")]
    DisjunctUnsatisfied { world: WorldId, index: usize },
    #[error("anchor disjunct {theta_a} fails at world {world}")]
    AnchorFails { theta_a: usize, world: WorldId },
    #[error("worlds {a} and {b} of the last main cluster share disjunct {index}")]
    LastClusterShares { a: WorldId, b: WorldId, index: usize },
    #[error("last main cluster is isomorphic to the top world")]
    LastClusterLikeTop,
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// Independent verification of a witness: the conditions are evaluated
/// through the satisfaction relation on the induced valuation, not through
/// the search's bookkeeping.
pub fn check_witness(
    rr: &ReducedRule,
    witness: &Witness,
    mode: Condition5Mode,
) -> Result<(), Vec<WitnessViolation>> {
    let mut violations = Vec::new();
    let frame = witness.sp.frame();
    let layout = rr.layout();

    // Labels exist and are in range before anything else is evaluated.
    for &w in frame.world_ids() {
        match witness.labeling.get(w) {
            None => violations.push(WitnessViolation::Unlabeled { world: w }),
            Some(t) if t >= rr.thetas.len() => {
                violations.push(WitnessViolation::BadIndex { world: w, index: t })
            }
            Some(_) => {}
        }
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    let valuation = witness.labeling.induced_valuation(rr);

    // Conclusion refuted at the named world.
    if valuation
        .worlds(0)
        .is_some_and(|ws| ws.contains(&witness.failing_world))
    {
        violations.push(WitnessViolation::ConclusionHolds {
            world: witness.failing_world,
        });
    }

    // Every world satisfies its own disjunct: global premise truth.
    for &w in frame.world_ids() {
        let index = witness.labeling.get(w).expect("labels checked");
        match theta_satisfied(rr, frame, &valuation, w, &rr.thetas[index]) {
            Ok(true) => {}
            Ok(false) => violations.push(WitnessViolation::DisjunctUnsatisfied { world: w, index }),
            Err(e) => violations.push(e.into()),
        }
    }

    // The anchor disjunct holds at the first two worlds of every tail and at
    // the top world.
    if witness.theta_a >= rr.thetas.len() {
        violations.push(WitnessViolation::BadIndex {
            world: witness.sp.top_world(),
            index: witness.theta_a,
        });
    } else {
        let anchor = &rr.thetas[witness.theta_a];
        let mut anchor_worlds = vec![witness.sp.top_world()];
        for i in 0..=witness.sp.d() {
            let tail = witness.sp.tail_worlds(i);
            anchor_worlds.push(tail[0]);
            anchor_worlds.push(tail[1]);
        }
        for w in anchor_worlds {
            match theta_satisfied(rr, frame, &valuation, w, anchor) {
                Ok(true) => {}
                Ok(false) => violations.push(WitnessViolation::AnchorFails {
                    theta_a: witness.theta_a,
                    world: w,
                }),
                Err(e) => violations.push(e.into()),
            }
        }
    }

    // Worlds of the last main cluster carry pairwise distinct disjuncts.
    let last = witness.sp.main_cluster_worlds(witness.sp.d());
    for (ai, &a) in last.iter().enumerate() {
        for &b in &last[ai + 1..] {
            let (ta, tb) = (
                witness.labeling.get(a).expect("labeled"),
                witness.labeling.get(b).expect("labeled"),
            );
            if ta == tb {
                violations.push(WitnessViolation::LastClusterShares { a, b, index: ta });
            }
        }
    }

    // The last main cluster must differ from the top world.
    let top_label = witness
        .labeling
        .get(witness.sp.top_world())
        .expect("labeled");
    let like_top = match mode {
        Condition5Mode::FrameOnly => last.len() == 1,
        Condition5Mode::Model => {
            last.len() == 1 && {
                let z_label = witness.labeling.get(last[0]).expect("labeled");
                (0..rr.var_count).all(|i| {
                    rr.thetas[z_label].lit_positive(&layout, i)
                        == rr.thetas[top_label].lit_positive(&layout, i)
                })
            }
        }
    };
    if like_top {
        violations.push(WitnessViolation::LastClusterLikeTop);
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// All witness frame shapes within bounds, one per isomorphism class, in
/// canonical order: by `d`, then main cluster sizes, then tail lengths, then
/// partition signatures.
pub fn enumerate_sp_frames(bounds: &SearchBounds, agents: u32) -> Vec<SpFrame> {
    let mut shapes = Vec::new();
    for size in 1..=bounds.max_cluster_size {
        shapes.extend(enumerate_cluster_shapes(size, agents));
    }
    let mut combos: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for d in 0..=bounds.max_d {
        let positions = d + 1;
        let mut shape_combo = vec![0usize; positions];
        loop {
            let mut tail_combo = vec![2usize; positions];
            loop {
                combos.push((shape_combo.clone(), tail_combo.clone()));
                let mut advanced = false;
                for t in tail_combo.iter_mut() {
                    *t += 1;
                    if *t <= bounds.max_tail_len {
                        advanced = true;
                        break;
                    }
                    *t = 2;
                }
                if !advanced {
                    break;
                }
            }
            let mut advanced = false;
            for s in shape_combo.iter_mut() {
                *s += 1;
                if *s < shapes.len() {
                    advanced = true;
                    break;
                }
                *s = 0;
            }
            if !advanced {
                break;
            }
        }
    }
    combos.sort_by_key(|(shape_combo, tail_combo)| {
        let sizes: Vec<usize> = shape_combo.iter().map(|&s| shapes[s].size).collect();
        let signatures: Vec<Vec<u64>> = shape_combo
            .iter()
            .map(|&s| shapes[s].canonical_key(None))
            .collect();
        (shape_combo.len(), sizes, tail_combo.clone(), signatures)
    });
    combos
        .into_iter()
        .map(|(shape_combo, tail_combo)| {
            let main: Vec<ClusterShape> = shape_combo.iter().map(|&s| shapes[s].clone()).collect();
            SpFrame::assemble(&main, &tail_combo, agents)
        })
        .collect()
}

/// Options of the decision procedure.
#[derive(Debug, Clone, Copy, Default)]
pub struct DecisionOptions {
    /// Overrides the disjunct-count-derived default bounds.
    pub bounds: Option<SearchBounds>,
    pub condition5: Condition5Mode,
}

/// Decide admissibility of a rule: reduce it, then search for a witness
/// within bounds. The verdict records the bounds; `NotAdmissible` carries a
/// certificate that re-verifies independently of the search path. The result
/// does not depend on the worker count.
pub fn decide_admissible(rule: &Rule, agents: u32, opts: DecisionOptions) -> Verdict {
    let rr = reduce(rule, agents);
    decide_reduced(&rr, opts)
}

/// The witness search on an already reduced rule.
pub fn decide_reduced(rr: &ReducedRule, opts: DecisionOptions) -> Verdict {
    let bounds = opts
        .bounds
        .unwrap_or_else(|| SearchBounds::for_disjunct_count(rr.thetas.len()));
    // An unsatisfiable premise never holds globally, so no witness exists.
    if rr.thetas.is_empty() {
        return Verdict::Admissible { bounds };
    }
    // If every disjunct asserts the conclusion variable, no labeling can
    // refute it; skip the search.
    let layout = rr.layout();
    if rr.thetas.iter().all(|t| t.lit_positive(&layout, 0)) {
        return Verdict::Admissible { bounds };
    }
    let frames = enumerate_sp_frames(&bounds, rr.agents);
    let hit = frames
        .par_iter()
        .find_map_first(|sp| search_witness(rr, sp, bounds, opts.condition5));
    match hit {
        Some(w) => Verdict::NotAdmissible {
            witness: Box::new(w),
        },
        None => Verdict::Admissible { bounds },
    }
}

/// Theoremhood through admissibility: a formula is a theorem exactly when
/// the rule with trivial premise and that conclusion is admissible.
pub fn decide_theorem(f: &Formula, agents: u32, opts: DecisionOptions) -> TheoremVerdict {
    let rule = Rule::new(vec![Formula::Top], f.clone());
    match decide_admissible(&rule, agents, opts) {
        Verdict::Admissible { bounds } => TheoremVerdict::Theorem { bounds },
        Verdict::NotAdmissible { witness } => TheoremVerdict::NotTheorem { witness },
    }
}

// One step of the labeling search: a cluster whose successor is assigned by
// the time it is processed.
#[derive(Debug, Clone, Copy)]
enum StepRole {
    Top,
    /// Last main cluster: distinct disjuncts, comparison with the top.
    MainLast,
    MainInner,
    /// First or second world of a tail: carries the anchor disjunct.
    TailAnchor,
    TailInner,
}

struct Step {
    cluster: usize,
    succ: Option<usize>,
    role: StepRole,
}

struct SearchCtx<'a> {
    rr: &'a ReducedRule,
    sp: &'a SpFrame,
    mode: Condition5Mode,
    steps: Vec<Step>,
    envs: Vec<ClusterEnv>,
    candidates: HashMap<(usize, Bits), Rc<Vec<ClusterAssign>>>,
    assigned: Vec<Option<Rc<ClusterAssign>>>,
}

fn search_witness(
    rr: &ReducedRule,
    sp: &SpFrame,
    bounds: SearchBounds,
    mode: Condition5Mode,
) -> Option<Witness> {
    let frame = sp.frame();
    let (main, tails, top) = sp.parts();
    // Processing order: top, then the main chain back to front, then each
    // tail from its attachment back to its head; successors always first.
    let mut steps = Vec::new();
    steps.push(Step {
        cluster: top,
        succ: None,
        role: StepRole::Top,
    });
    for j in (0..main.len()).rev() {
        steps.push(Step {
            cluster: main[j],
            succ: frame.next_of(main[j]),
            role: if j == main.len() - 1 {
                StepRole::MainLast
            } else {
                StepRole::MainInner
            },
        });
    }
    for tail in tails {
        for (pos, &c) in tail.iter().enumerate().rev() {
            steps.push(Step {
                cluster: c,
                succ: frame.next_of(c),
                role: if pos < 2 {
                    StepRole::TailAnchor
                } else {
                    StepRole::TailInner
                },
            });
        }
    }
    let envs = (0..frame.cluster_count())
        .map(|c| ClusterEnv::from_frame(frame, c))
        .collect();
    let mut ctx = SearchCtx {
        rr,
        sp,
        mode,
        steps,
        envs,
        candidates: HashMap::new(),
        assigned: vec![None; frame.cluster_count()],
    };
    let labeling = step_search(&mut ctx, 0)?;
    // The least world id failing the conclusion variable.
    let layout = rr.layout();
    let failing_world = frame
        .world_ids()
        .iter()
        .copied()
        .filter(|&w| {
            let t = labeling.get(w).expect("total labeling");
            !rr.thetas[t].lit_positive(&layout, 0)
        })
        .min()
        .expect("search only succeeds with a failing world");
    let theta_a = labeling.get(sp.top_world()).expect("top labeled");
    Some(Witness {
        sp: sp.clone(),
        labeling,
        failing_world,
        theta_a,
        bounds,
    })
}

fn step_search(ctx: &mut SearchCtx<'_>, depth: usize) -> Option<Labeling> {
    if depth == ctx.steps.len() {
        return finish_labeling(ctx);
    }
    let Step {
        cluster,
        succ,
        role,
    } = ctx.steps[depth];
    let u_next = match succ {
        Some(s) => ctx.assigned[s]
            .as_ref()
            .expect("successor assigned first")
            .presence
            .clone(),
        None => Bits::zeros(ctx.rr.var_count),
    };
    let candidates = match ctx.candidates.get(&(cluster, u_next.clone())) {
        Some(c) => Rc::clone(c),
        None => {
            let c = Rc::new(cluster_assignments(ctx.rr, &ctx.envs[cluster], &u_next));
            ctx.candidates.insert((cluster, u_next), Rc::clone(&c));
            c
        }
    };
    for cand in candidates.iter() {
        if !admits(ctx, role, cand) {
            continue;
        }
        ctx.assigned[cluster] = Some(Rc::new(cand.clone()));
        if let Some(hit) = step_search(ctx, depth + 1) {
            ctx.assigned[cluster] = None;
            return Some(hit);
        }
        ctx.assigned[cluster] = None;
    }
    None
}

fn admits(ctx: &SearchCtx<'_>, role: StepRole, cand: &ClusterAssign) -> bool {
    let (_, _, top) = ctx.sp.parts();
    let anchor = || ctx.assigned[top].as_ref().expect("top assigned first");
    match role {
        StepRole::Top | StepRole::MainInner | StepRole::TailInner => true,
        StepRole::TailAnchor => cand.sigma[0] == anchor().sigma[0],
        StepRole::MainLast => {
            for (i, a) in cand.sigma.iter().enumerate() {
                for b in &cand.sigma[i + 1..] {
                    if a == b {
                        return false;
                    }
                }
            }
            match ctx.mode {
                Condition5Mode::FrameOnly => cand.sigma.len() > 1,
                Condition5Mode::Model => cand.sigma.len() > 1 || cand.lits[0] != anchor().lits[0],
            }
        }
    }
}

fn finish_labeling(ctx: &SearchCtx<'_>) -> Option<Labeling> {
    let frame = ctx.sp.frame();
    let mut labeling = Labeling::new();
    let mut any_miss = false;
    for c in 0..frame.cluster_count() {
        let assign = ctx.assigned[c].as_ref().expect("complete assignment");
        for (local, &pos) in frame.cluster_members(c).iter().enumerate() {
            let w = frame.world_ids()[pos];
            let sigma = &assign.sigma[local];
            let theta = ctx
                .rr
                .theta_index(sigma)
                .expect("search produces genuine disjuncts");
            labeling.set(w, theta);
            if !assign.lits[local].get(0) {
                any_miss = true;
            }
        }
    }
    // A witness must refute the conclusion variable somewhere.
    any_miss.then_some(labeling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal_form::sign_vector_at;
    use crate::syntax::{parse_formula, parse_rule};

    #[test]
    fn sp_frame_counts() {
        // One main cluster of one world, one tail of length 2, the top.
        let b = SearchBounds::new(0, 1, 2);
        assert_eq!(enumerate_sp_frames(&b, 1).len(), 1);
        // A size-two cluster brings the merged and the split partition.
        let b = SearchBounds::new(0, 2, 2);
        assert_eq!(enumerate_sp_frames(&b, 1).len(), 3);
        // Duplicate-free under canonical comparison.
        let b = SearchBounds::new(1, 2, 3);
        let frames = enumerate_sp_frames(&b, 1);
        let mut seen = std::collections::BTreeSet::new();
        for f in &frames {
            let key = format!("{:?}{:?}{:?}", f.main, f.tails, f.frame.clusters());
            assert!(seen.insert(key), "duplicate frame shape");
        }
    }

    #[test]
    fn assembled_sp_frames_are_well_formed() {
        for sp in enumerate_sp_frames(&SearchBounds::new(1, 2, 3), 2) {
            assert!(sp.frame().check_well_formed().is_empty());
            let top = sp.top_world();
            for &w in sp.main_cluster_worlds(sp.d()) {
                assert!(sp.frame().rt_successors(w).unwrap().contains(&top));
            }
        }
    }

    #[test]
    fn roundtrip_from_parts() {
        let sp = SpFrame::assemble(
            &[ClusterShape::trivial(2, 1), ClusterShape::trivial(1, 1)],
            &[2, 3],
            1,
        );
        let rebuilt =
            SpFrame::from_parts(sp.frame.clone(), sp.main.clone(), sp.tails.clone(), sp.top)
                .unwrap();
        assert_eq!(rebuilt, sp);
        assert!(
            SpFrame::from_parts(sp.frame.clone(), vec![0], sp.tails.clone(), sp.top).is_err()
        );
    }

    #[test]
    fn excluded_middle_to_falsum_is_not_admissible() {
        let rule = parse_rule("x1 | ~x1 / F", 1).unwrap();
        let rr = reduce(&rule, 1);
        let Verdict::NotAdmissible { witness } = decide_reduced(&rr, DecisionOptions::default())
        else {
            panic!("expected a witness");
        };
        assert_eq!(check_witness(&rr, &witness, Condition5Mode::Model), Ok(()));
        // The frame reading is stricter but some witness still exists.
        let frame_opts = DecisionOptions {
            condition5: Condition5Mode::FrameOnly,
            ..Default::default()
        };
        let Verdict::NotAdmissible { witness: w2 } = decide_reduced(&rr, frame_opts) else {
            panic!("expected a witness under the frame reading");
        };
        assert_eq!(check_witness(&rr, &w2, Condition5Mode::FrameOnly), Ok(()));
    }

    #[test]
    fn falsum_premise_is_admissible() {
        let rule = parse_rule("F / x1", 1).unwrap();
        let verdict = decide_admissible(&rule, 1, DecisionOptions::default());
        assert!(matches!(verdict, Verdict::Admissible { .. }));
    }

    #[test]
    fn identity_rule_is_admissible() {
        let rule = parse_rule("x1 / x1", 1).unwrap();
        let verdict = decide_admissible(&rule, 1, DecisionOptions::default());
        assert!(matches!(verdict, Verdict::Admissible { .. }));
    }

    #[test]
    fn environment_necessitation_is_admissible() {
        let rule = parse_rule("x1 / [E] x1", 1).unwrap();
        let verdict = decide_admissible(&rule, 1, DecisionOptions::default());
        assert!(matches!(verdict, Verdict::Admissible { .. }));
    }

    #[test]
    fn projection_rule_is_not_admissible() {
        // From x1 infer x2: substitute a theorem for x1, a refutable formula
        // for x2.
        let rule = parse_rule("x1 / x2", 1).unwrap();
        let rr = reduce(&rule, 1);
        let Verdict::NotAdmissible { witness } = decide_reduced(&rr, DecisionOptions::default())
        else {
            panic!("expected a witness");
        };
        assert_eq!(check_witness(&rr, &witness, Condition5Mode::Model), Ok(()));
    }

    #[test]
    fn hand_built_witness_checks_out() {
        // Rule: excluded middle over x1, falsum conclusion. Frame: one main
        // cluster of two worlds with distinct x1 values, one tail of length 4
        // kept uniform so its first two worlds match the top.
        let rule = parse_rule("x1 | ~x1 / F", 1).unwrap();
        let rr = reduce(&rule, 1);
        let sp = SpFrame::assemble(
            &[ClusterShape {
                size: 2,
                agent_blocks: vec![vec![0, 0]],
            }],
            &[4],
            1,
        );
        let frame = sp.frame().clone();
        // Worlds 0,1 = main cluster; 2..=5 = tail head to attachment; 6 = top.
        let var_index = |f: &Formula| {
            rr.origin.iter().position(|g| g == f).expect("renamed") as u32
        };
        let x1 = var_index(&Formula::var(1));
        let not_x1 = var_index(&Formula::not(Formula::var(1)));
        let phi = rr.premise_var as u32;
        let mut valuation = Valuation::new();
        valuation.set(0, Vec::<WorldId>::new());
        valuation.set(x1, vec![0, 2, 3, 4, 5, 6]);
        valuation.set(not_x1, vec![1]);
        valuation.set(phi, frame.world_ids().to_vec());
        let mut labeling = Labeling::new();
        for &w in frame.world_ids() {
            let sigma = sign_vector_at(&rr, &frame, &valuation, w).unwrap();
            labeling.set(w, rr.theta_index(&sigma).expect("coherent labeling"));
        }
        let witness = Witness {
            theta_a: labeling.get(sp.top_world()).unwrap(),
            sp,
            labeling,
            failing_world: 0,
            bounds: SearchBounds::new(0, 2, 4),
        };
        assert_eq!(check_witness(&rr, &witness, Condition5Mode::Model), Ok(()));
        assert_eq!(
            check_witness(&rr, &witness, Condition5Mode::FrameOnly),
            Ok(())
        );
    }

    #[test]
    fn tampered_witnesses_are_rejected() {
        // Start from the hand-built witness shape and break it two ways.
        let rule = parse_rule("x1 | ~x1 / F", 1).unwrap();
        let rr = reduce(&rule, 1);
        let Verdict::NotAdmissible { witness } = decide_reduced(&rr, DecisionOptions::default())
        else {
            panic!("expected a witness");
        };
        // Sharing one disjunct across a two-world last cluster violates
        // distinctness (or premise truth, once the valuation shifts).
        let last = witness.sp.main_cluster_worlds(witness.sp.d()).to_vec();
        if last.len() >= 2 {
            let mut shared = (*witness).clone();
            let t = shared.labeling.get(last[0]).unwrap();
            for &w in &last {
                shared.labeling.set(w, t);
            }
            let violations = check_witness(&rr, &shared, Condition5Mode::Model).unwrap_err();
            assert!(violations.iter().any(|v| matches!(
                v,
                WitnessViolation::LastClusterShares { .. }
                    | WitnessViolation::DisjunctUnsatisfied { .. }
            )));
        }
        // A projection-rule witness relabeled with a conclusion-positive
        // disjunct stops refuting the conclusion.
        let rule2 = parse_rule("x1 / x2", 1).unwrap();
        let rr2 = reduce(&rule2, 1);
        let Verdict::NotAdmissible { witness: w2 } = decide_reduced(&rr2, DecisionOptions::default())
        else {
            panic!("expected a witness");
        };
        let layout = rr2.layout();
        let positive = (0..rr2.thetas.len())
            .find(|&t| rr2.thetas[t].lit_positive(&layout, 0))
            .expect("conclusion-positive disjunct exists");
        let mut unrefuted = (*w2).clone();
        for &w in unrefuted.sp.frame().world_ids().to_vec().iter() {
            unrefuted.labeling.set(w, positive);
        }
        unrefuted.theta_a = positive;
        let violations = check_witness(&rr2, &unrefuted, Condition5Mode::Model).unwrap_err();
        assert!(violations
            .iter()
            .any(|v| matches!(v, WitnessViolation::ConclusionHolds { .. })));
    }

    #[test]
    fn reflexivity_is_a_theorem() {
        let f = parse_formula("[T] p1 -> p1", 1).unwrap();
        let verdict = decide_theorem(&f, 1, DecisionOptions::default());
        assert!(matches!(verdict, TheoremVerdict::Theorem { .. }));
    }

    #[test]
    fn double_time_step_is_not_a_theorem() {
        let f = parse_formula("[T] p1 -> [T] [T] p1", 1).unwrap();
        let verdict = decide_theorem(&f, 1, DecisionOptions::default());
        let TheoremVerdict::NotTheorem { witness } = verdict else {
            panic!("expected a countermodel witness");
        };
        let rule = Rule::new(vec![Formula::Top], f.clone());
        let rr = reduce(&rule, 1);
        assert_eq!(check_witness(&rr, &witness, Condition5Mode::Model), Ok(()));
        // The induced model genuinely refutes the formula at the failing
        // world; the labels of the renamed original variable give the
        // valuation of p1.
        let x1 = rr
            .origin
            .iter()
            .position(|g| *g == Formula::var(1))
            .unwrap();
        let induced = witness.labeling.induced_valuation(&rr);
        let mut p_val = Valuation::new();
        p_val.set(
            1,
            induced
                .worlds(x1 as u32)
                .unwrap()
                .iter()
                .copied()
                .collect::<Vec<_>>(),
        );
        let model = crate::kripke::Model::new(witness.sp.frame().clone(), p_val);
        assert!(!model.satisfies(witness.failing_world, &f).unwrap());
    }

    #[test]
    fn monotone_in_bounds() {
        let rule = parse_rule("x1 | ~x1 / F", 1).unwrap();
        let rr = reduce(&rule, 1);
        for bounds in [SearchBounds::new(0, 2, 4), SearchBounds::new(1, 2, 4)] {
            let opts = DecisionOptions {
                bounds: Some(bounds),
                ..Default::default()
            };
            assert!(matches!(
                decide_reduced(&rr, opts),
                Verdict::NotAdmissible { .. }
            ));
        }
    }

    #[test]
    fn verdicts_are_deterministic_across_worker_counts() {
        let rule = parse_rule("x1 / x2", 1).unwrap();
        let rr = reduce(&rule, 1);
        let baseline = decide_reduced(&rr, DecisionOptions::default());
        for jobs in [1usize, 3] {
            let v = crate::with_jobs(Some(jobs), || {
                decide_reduced(&rr, DecisionOptions::default())
            });
            assert_eq!(v, baseline);
        }
    }
}
