//! Reduction of an arbitrary rule to sign-vector normal form.
//!
//! The reduced rule has a single variable `x0` as conclusion and a premise
//! that is a disjunction of *complete conjunctions*: every disjunct fixes,
//! for each variable `xi`, the sign of the four atom families `xi`,
//! `<T> xi`, `<E> xi` and `<Al> xi`. A world satisfies such a disjunct
//! exactly when its full sign vector matches, which turns evaluation of the
//! (potentially huge) premise into sign-vector comparisons.
//!
//! The transformation renames every subformula of the merged premise and of
//! the conclusion to a fresh variable. A box `[.] b` cannot be an atom of the
//! reduced form (atoms are diamonds of plain variables), so each boxed
//! argument `b` gets a companion variable standing for `~b`, and the box
//! becomes the negated diamond of the companion. The defining equations tie
//! every renamed variable to its operands; the disjunct set is the set of
//! sign vectors satisfying the equations whose merged-premise variable is
//! positive. Rule validity is preserved frame by frame, which is what the
//! oracle checks exploit.

use std::collections::HashMap;

use crate::bits::Bits;
use crate::kripke::{EvalError, Frame, Valuation, WorldId};
use crate::syntax::{Formula, Rule};

/// Bit layout of sign vectors: variable `i` occupies a contiguous group of
/// `3 + agents` bits starting at `i * (3 + agents)`, in the order literal,
/// time diamond, environment diamond, agent diamonds. Bit value 0 asserts the
/// atom, 1 asserts its negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaLayout {
    pub var_count: usize,
    pub agents: u32,
}

impl ThetaLayout {
    pub fn width(&self) -> usize {
        self.var_count * (3 + self.agents as usize)
    }

    #[inline]
    pub fn lit(&self, var: usize) -> usize {
        var * (3 + self.agents as usize)
    }

    #[inline]
    pub fn diamond_t(&self, var: usize) -> usize {
        self.lit(var) + 1
    }

    #[inline]
    pub fn diamond_e(&self, var: usize) -> usize {
        self.lit(var) + 2
    }

    /// Agent index is 1-based.
    #[inline]
    pub fn diamond_agent(&self, var: usize, agent: u32) -> usize {
        self.lit(var) + 2 + agent as usize
    }
}

/// One complete disjunct: a full sign vector.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Theta {
    bits: Bits,
}

impl Theta {
    pub fn from_bits(bits: Bits) -> Self {
        Theta { bits }
    }

    pub fn bits(&self) -> &Bits {
        &self.bits
    }

    /// True when the disjunct asserts `x<var>` itself (positive literal).
    pub fn lit_positive(&self, layout: &ThetaLayout, var: usize) -> bool {
        !self.bits.get(layout.lit(var))
    }

    pub fn diamond_t_positive(&self, layout: &ThetaLayout, var: usize) -> bool {
        !self.bits.get(layout.diamond_t(var))
    }

    pub fn diamond_e_positive(&self, layout: &ThetaLayout, var: usize) -> bool {
        !self.bits.get(layout.diamond_e(var))
    }

    pub fn diamond_agent_positive(&self, layout: &ThetaLayout, var: usize, agent: u32) -> bool {
        !self.bits.get(layout.diamond_agent(var, agent))
    }
}

/// How a reduced variable is defined by the renaming equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VarDef {
    /// An original rule variable; its literal sign is unconstrained.
    Free,
    Top,
    Bottom,
    NotOf(usize),
    AndOf(usize, usize),
    OrOf(usize, usize),
    ImpliesOf(usize, usize),
    /// `[T] b` via the companion variable standing for `~b`: the literal is
    /// the negation of the companion's time-diamond atom.
    BoxTOf(usize),
    BoxEOf(usize),
    BoxAgentOf(u32, usize),
}

/// A rule in reduced normal form: conclusion `x0`, premise the disjunction of
/// `thetas`. The disjunct set may be empty (unsatisfiable premise, e.g. a
/// falsum premise); the empty disjunction never holds, matching the original
/// rule's vacuous validity.
#[derive(Debug, Clone)]
pub struct ReducedRule {
    pub var_count: usize,
    pub agents: u32,
    /// Sorted lexicographically by sign bits; the index of a disjunct in this
    /// list is its canonical label.
    pub thetas: Vec<Theta>,
    /// For diagnostics: the subformula each variable renames.
    pub origin: Vec<Formula>,
    pub(crate) defs: Vec<VarDef>,
    pub(crate) eval_order: Vec<usize>,
    pub(crate) premise_var: usize,
    pub(crate) free_vars: Vec<usize>,
}

impl ReducedRule {
    pub fn layout(&self) -> ThetaLayout {
        ThetaLayout {
            var_count: self.var_count,
            agents: self.agents,
        }
    }

    /// Canonical label of a sign vector, if it is one of the disjuncts.
    pub fn theta_index(&self, sigma: &Bits) -> Option<usize> {
        self.thetas
            .binary_search_by(|t| t.bits.cmp(sigma))
            .ok()
    }

    /// Disjunct as human-readable text: `+x0 -<T>x0 ...`.
    pub fn theta_text(&self, index: usize) -> String {
        let layout = self.layout();
        let t = &self.thetas[index];
        let mut parts = Vec::new();
        for i in 0..self.var_count {
            let sign = |b: bool| if b { "+" } else { "-" };
            parts.push(format!("{}x{i}", sign(t.lit_positive(&layout, i))));
            parts.push(format!("{}<T>x{i}", sign(t.diamond_t_positive(&layout, i))));
            parts.push(format!("{}<E>x{i}", sign(t.diamond_e_positive(&layout, i))));
            for a in 1..=self.agents {
                parts.push(format!(
                    "{}<A{a}>x{i}",
                    sign(t.diamond_agent_positive(&layout, i, a))
                ));
            }
        }
        parts.join(" ")
    }
}

/// Transform `rule` into reduced normal form over `agents` agents.
///
/// Runs in time proportional to the number of disjuncts, which is single
/// exponential in the renamed variable count.
pub fn reduce(rule: &Rule, agents: u32) -> ReducedRule {
    assert!(
        rule.max_agent() <= agents,
        "rule mentions agent {} but only {agents} agents are ambient",
        rule.max_agent()
    );
    let premise = rule.merged_premise();
    let conclusion = rule.conclusion.clone();

    // Collect the formulas that get variables: all subformulas of the merged
    // premise and the conclusion, then a companion `~b` for every boxed
    // argument `b` (reusing `g` when `b` is `~g`).
    let mut formulas: Vec<Formula> = Vec::new();
    let mut seen: HashMap<Formula, usize> = HashMap::new();
    let push = |f: Formula, formulas: &mut Vec<Formula>, seen: &mut HashMap<Formula, usize>| {
        if !seen.contains_key(&f) {
            seen.insert(f.clone(), formulas.len());
            formulas.push(f);
        }
    };
    for f in premise.subformulas() {
        push(f.clone(), &mut formulas, &mut seen);
    }
    for f in conclusion.subformulas() {
        push(f.clone(), &mut formulas, &mut seen);
    }
    let mut i = 0;
    while i < formulas.len() {
        let companion = match &formulas[i] {
            Formula::BoxT(b) | Formula::BoxE(b) | Formula::BoxAgent(_, b) => match b.as_ref() {
                Formula::Not(g) => Some(g.as_ref().clone()),
                other => Some(Formula::not(other.clone())),
            },
            _ => None,
        };
        if let Some(c) = companion {
            push(c, &mut formulas, &mut seen);
        }
        i += 1;
    }

    // Conclusion becomes x0; everything else keeps discovery order.
    let var_count = formulas.len();
    let mut var_of: HashMap<&Formula, usize> = HashMap::new();
    var_of.insert(&conclusion, 0);
    let mut next = 1;
    for f in &formulas {
        if *f != conclusion {
            var_of.insert(f, next);
            next += 1;
        }
    }
    let mut origin = vec![Formula::Top; var_count];
    for f in &formulas {
        origin[var_of[f]] = f.clone();
    }

    let companion_of = |b: &Formula| -> usize {
        match b {
            Formula::Not(g) => var_of[g.as_ref()],
            other => var_of[&Formula::not(other.clone())],
        }
    };
    let mut defs = vec![VarDef::Free; var_count];
    for f in &formulas {
        let v = var_of[f];
        defs[v] = match f {
            Formula::Var(_) => VarDef::Free,
            Formula::Top => VarDef::Top,
            Formula::Bottom => VarDef::Bottom,
            Formula::Not(a) => VarDef::NotOf(var_of[a.as_ref()]),
            Formula::And(a, b) => VarDef::AndOf(var_of[a.as_ref()], var_of[b.as_ref()]),
            Formula::Or(a, b) => VarDef::OrOf(var_of[a.as_ref()], var_of[b.as_ref()]),
            Formula::Implies(a, b) => VarDef::ImpliesOf(var_of[a.as_ref()], var_of[b.as_ref()]),
            Formula::BoxT(b) => VarDef::BoxTOf(companion_of(b)),
            Formula::BoxE(b) => VarDef::BoxEOf(companion_of(b)),
            Formula::BoxAgent(l, b) => VarDef::BoxAgentOf(*l, companion_of(b)),
        };
    }
    let premise_var = var_of[&premise];
    let eval_order = topo_order(&defs);
    let free_vars: Vec<usize> = (0..var_count)
        .filter(|&v| matches!(defs[v], VarDef::Free))
        .collect();

    let layout = ThetaLayout { var_count, agents };
    let thetas = enumerate_thetas(&layout, &defs, &eval_order, &free_vars, premise_var);

    ReducedRule {
        var_count,
        agents,
        thetas,
        origin,
        defs,
        eval_order,
        premise_var,
        free_vars,
    }
}

/// Dependency order for the defining equations: operands before the defined
/// variable. Box definitions depend on their companion (through its diamond
/// atom group), boolean definitions on their operands.
fn topo_order(defs: &[VarDef]) -> Vec<usize> {
    let deps = |v: usize| -> Vec<usize> {
        match defs[v] {
            VarDef::Free | VarDef::Top | VarDef::Bottom => vec![],
            VarDef::NotOf(a) => vec![a],
            VarDef::AndOf(a, b) | VarDef::OrOf(a, b) | VarDef::ImpliesOf(a, b) => vec![a, b],
            VarDef::BoxTOf(c) | VarDef::BoxEOf(c) | VarDef::BoxAgentOf(_, c) => vec![c],
        }
    };
    let mut placed = vec![false; defs.len()];
    let mut order = Vec::with_capacity(defs.len());
    while order.len() < defs.len() {
        let before = order.len();
        for v in 0..defs.len() {
            if !placed[v] && deps(v).iter().all(|&d| placed[d]) {
                placed[v] = true;
                order.push(v);
            }
        }
        assert!(order.len() > before, "cyclic defining equations");
    }
    order
}

/// All sign vectors satisfying the defining equations with a positive merged
/// premise, sorted.
fn enumerate_thetas(
    layout: &ThetaLayout,
    defs: &[VarDef],
    eval_order: &[usize],
    free_vars: &[usize],
    premise_var: usize,
) -> Vec<Theta> {
    // Free positions: every diamond bit plus the literal bit of each free
    // variable. Everything else is computed.
    let mut free_positions: Vec<usize> = Vec::new();
    for v in 0..layout.var_count {
        free_positions.push(layout.diamond_t(v));
        free_positions.push(layout.diamond_e(v));
        for a in 1..=layout.agents {
            free_positions.push(layout.diamond_agent(v, a));
        }
    }
    for &v in free_vars {
        free_positions.push(layout.lit(v));
    }
    free_positions.sort_unstable();

    if layout.width() <= 64 && free_positions.len() < 64 {
        enumerate_thetas_u64(layout, defs, eval_order, &free_positions, premise_var)
    } else {
        enumerate_thetas_bits(layout, defs, eval_order, &free_positions, premise_var)
    }
}

fn enumerate_thetas_bits(
    layout: &ThetaLayout,
    defs: &[VarDef],
    eval_order: &[usize],
    free_positions: &[usize],
    premise_var: usize,
) -> Vec<Theta> {
    let mut out = Vec::new();
    let mut counter = Bits::zeros(free_positions.len());
    loop {
        let mut sigma = Bits::zeros(layout.width());
        for (slot, &pos) in free_positions.iter().enumerate() {
            sigma.set(pos, counter.get(slot));
        }
        complete_signs(layout, defs, eval_order, &mut sigma);
        if !sigma.get(layout.lit(premise_var)) {
            out.push(Theta { bits: sigma });
        }
        if !counter.increment() {
            break;
        }
    }
    out.sort();
    out
}

/// Single-word fast path of the enumeration; the sweep is the hot loop of
/// the whole reduction.
fn enumerate_thetas_u64(
    layout: &ThetaLayout,
    defs: &[VarDef],
    eval_order: &[usize],
    free_positions: &[usize],
    premise_var: usize,
) -> Vec<Theta> {
    let lit = |v: usize| layout.lit(v) as u32;
    // Pre-resolve the equation list to bit positions: (target, op, a, b).
    enum Op {
        Top,
        Bottom,
        Not(u32),
        And(u32, u32),
        Or(u32, u32),
        Implies(u32, u32),
        Dia(u32),
    }
    let steps: Vec<(u32, Op)> = eval_order
        .iter()
        .filter_map(|&v| {
            let op = match defs[v] {
                VarDef::Free => return None,
                VarDef::Top => Op::Top,
                VarDef::Bottom => Op::Bottom,
                VarDef::NotOf(a) => Op::Not(lit(a)),
                VarDef::AndOf(a, b) => Op::And(lit(a), lit(b)),
                VarDef::OrOf(a, b) => Op::Or(lit(a), lit(b)),
                VarDef::ImpliesOf(a, b) => Op::Implies(lit(a), lit(b)),
                VarDef::BoxTOf(c) => Op::Dia(layout.diamond_t(c) as u32),
                VarDef::BoxEOf(c) => Op::Dia(layout.diamond_e(c) as u32),
                VarDef::BoxAgentOf(l, c) => Op::Dia(layout.diamond_agent(c, l) as u32),
            };
            Some((lit(v), op))
        })
        .collect();
    let premise_bit = lit(premise_var);

    let mut out: Vec<u64> = Vec::new();
    for counter in 0u64..1u64 << free_positions.len() {
        let mut sigma = 0u64;
        for (slot, &pos) in free_positions.iter().enumerate() {
            sigma |= (counter >> slot & 1) << pos;
        }
        for (target, op) in &steps {
            // Sign bit 1 encodes a false atom.
            let falsity = match op {
                Op::Top => 0,
                Op::Bottom => 1,
                Op::Not(a) => !(sigma >> a) & 1,
                Op::And(a, b) => (sigma >> a | sigma >> b) & 1,
                Op::Or(a, b) => (sigma >> a & sigma >> b) & 1,
                Op::Implies(a, b) => (!(sigma >> a) & sigma >> b) & 1,
                Op::Dia(d) => !(sigma >> d) & 1,
            };
            sigma |= falsity << target;
        }
        if sigma >> premise_bit & 1 == 0 {
            out.push(sigma);
        }
    }
    // Bit-lexicographic order, bit 0 first.
    out.sort_unstable_by_key(|s| s.reverse_bits());
    out.into_iter()
        .map(|s| {
            let mut b = Bits::zeros(layout.width());
            for i in 0..layout.width() {
                b.set(i, s >> i & 1 == 1);
            }
            Theta { bits: b }
        })
        .collect()
}

/// Fill the determined literal bits of a sign vector from its free literal
/// and diamond bits. Truth of an atom corresponds to sign bit 0.
fn complete_signs(layout: &ThetaLayout, defs: &[VarDef], eval_order: &[usize], sigma: &mut Bits) {
    for &v in eval_order {
        let truth = match defs[v] {
            VarDef::Free => continue,
            VarDef::Top => true,
            VarDef::Bottom => false,
            VarDef::NotOf(a) => sigma.get(layout.lit(a)),
            VarDef::AndOf(a, b) => !sigma.get(layout.lit(a)) && !sigma.get(layout.lit(b)),
            VarDef::OrOf(a, b) => !sigma.get(layout.lit(a)) || !sigma.get(layout.lit(b)),
            VarDef::ImpliesOf(a, b) => sigma.get(layout.lit(a)) || !sigma.get(layout.lit(b)),
            // A box holds exactly when the companion's diamond fails.
            VarDef::BoxTOf(c) => sigma.get(layout.diamond_t(c)),
            VarDef::BoxEOf(c) => sigma.get(layout.diamond_e(c)),
            VarDef::BoxAgentOf(l, c) => sigma.get(layout.diamond_agent(c, l)),
        };
        sigma.set(layout.lit(v), !truth);
    }
}

/// Truth of one disjunct at one world, evaluated semantically: the literal
/// signs are checked against the valuation and the diamond signs against the
/// frame relations.
pub fn theta_satisfied(
    rr: &ReducedRule,
    frame: &Frame,
    valuation: &Valuation,
    w: WorldId,
    theta: &Theta,
) -> Result<bool, EvalError> {
    let sigma = sign_vector_at(rr, frame, valuation, w)?;
    Ok(sigma == *theta.bits())
}

/// The full sign vector of a world under a valuation of the reduced
/// variables `x0..x(m-1)`.
pub fn sign_vector_at(
    rr: &ReducedRule,
    frame: &Frame,
    valuation: &Valuation,
    w: WorldId,
) -> Result<Bits, EvalError> {
    let layout = rr.layout();
    let pos = frame.dense_pos(w).ok_or(EvalError::UnknownWorld(w))?;
    let n = frame.world_count();
    // Dense truth mask per reduced variable.
    let mut masks: Vec<Bits> = Vec::with_capacity(rr.var_count);
    for v in 0..rr.var_count {
        let worlds = valuation
            .worlds(v as u32)
            .ok_or(EvalError::UncoveredVariable(v as u32))?;
        let mut b = Bits::zeros(n);
        for &id in worlds {
            if let Some(p) = frame.dense_pos(id) {
                b.set(p, true);
            }
        }
        masks.push(b);
    }
    let cluster = frame.dense_cluster_of(pos);
    let mut sigma = Bits::zeros(layout.width());
    for v in 0..rr.var_count {
        sigma.set(layout.lit(v), !masks[v].get(pos));
        let in_cluster = frame
            .cluster_members(cluster)
            .iter()
            .any(|&p| masks[v].get(p));
        let in_next = frame.next_of(cluster).is_some_and(|nc| {
            frame.cluster_members(nc).iter().any(|&p| masks[v].get(p))
        });
        sigma.set(layout.diamond_t(v), !(in_cluster || in_next));
        sigma.set(layout.diamond_e(v), !in_cluster);
        for a in 1..=rr.agents {
            let in_block = frame
                .block_members_of(pos, a as usize - 1)
                .iter()
                .any(|&p| masks[v].get(p));
            sigma.set(layout.diamond_agent(v, a), !in_block);
        }
    }
    Ok(sigma)
}

/// The reduced rule written back out as plain rule syntax: the disjunction of
/// all theta conjunctions over `x0`. An empty disjunct set materializes as a
/// falsum premise.
pub fn materialize(rr: &ReducedRule) -> Rule {
    let layout = rr.layout();
    let mut disjuncts = Vec::with_capacity(rr.thetas.len());
    for t in &rr.thetas {
        let mut atoms: Vec<Formula> = Vec::new();
        for i in 0..rr.var_count {
            let signed = |f: Formula, positive: bool| if positive { f } else { Formula::not(f) };
            atoms.push(signed(Formula::var(i as u32), t.lit_positive(&layout, i)));
            atoms.push(signed(
                Formula::diamond_t(Formula::var(i as u32)),
                t.diamond_t_positive(&layout, i),
            ));
            atoms.push(signed(
                Formula::diamond_e(Formula::var(i as u32)),
                t.diamond_e_positive(&layout, i),
            ));
            for a in 1..=rr.agents {
                atoms.push(signed(
                    Formula::diamond_agent(a, Formula::var(i as u32)),
                    t.diamond_agent_positive(&layout, i, a),
                ));
            }
        }
        let mut it = atoms.into_iter();
        let first = it.next().expect("at least one variable");
        disjuncts.push(it.fold(first, Formula::and));
    }
    let premise = match disjuncts.is_empty() {
        true => Formula::Bottom,
        false => {
            let mut it = disjuncts.into_iter();
            let first = it.next().unwrap();
            it.fold(first, Formula::or)
        }
    };
    Rule::new(vec![premise], Formula::var(0))
}

// ---------------------------------------------------------------------------
// Cluster-local assignment enumeration and frame validity.
//
// Because the time successors of every world in a cluster are the same set
// (the cluster plus its successor cluster), a sign vector depends only on the
// world's own literals, per-variable presence in its block, in its cluster
// and in the successor cluster. Candidate assignments of one cluster can
// therefore be enumerated from the free literals alone, with the determined
// literals computed by the defining equations; the resulting vectors satisfy
// the equations by construction, so only the merged-premise sign needs
// checking.
// ---------------------------------------------------------------------------

/// Block structure of one cluster, detached from any frame: per agent, the
/// block index of each member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ClusterEnv {
    pub size: usize,
    pub blocks: Vec<Vec<usize>>,
}

impl ClusterEnv {
    pub(crate) fn from_frame(frame: &Frame, cluster: usize) -> Self {
        let members = frame.cluster_members(cluster);
        let size = members.len();
        let mut blocks = Vec::new();
        for a in 0..frame.agents() as usize {
            let agent_blocks = frame.agent_blocks(cluster, a);
            let mut of = vec![usize::MAX; size];
            for (bi, block) in agent_blocks.iter().enumerate() {
                for &p in block {
                    let local = members.iter().position(|&q| q == p).expect("member");
                    of[local] = bi;
                }
            }
            blocks.push(of);
        }
        ClusterEnv { size, blocks }
    }
}

/// One satisfiable assignment of a cluster: literal masks per member, full
/// sign vectors, per-variable presence, and whether the conclusion variable
/// fails at some member.
#[derive(Debug, Clone)]
pub(crate) struct ClusterAssign {
    /// Per member: truth mask over the reduced variables (bit set = true).
    pub lits: Vec<Bits>,
    /// Per member: full sign vector.
    pub sigma: Vec<Bits>,
    /// Per variable: true when some member satisfies it.
    pub presence: Bits,
    pub conclusion_miss: bool,
}

/// Enumerate the assignments of a cluster whose sign vectors are all
/// disjuncts of `rr`, given the per-variable presence of the successor
/// cluster. Deterministic order: the free-literal odometer, member-major.
pub(crate) fn cluster_assignments(
    rr: &ReducedRule,
    env: &ClusterEnv,
    u_next: &Bits,
) -> Vec<ClusterAssign> {
    let layout = rr.layout();
    let m = rr.var_count;
    let nf = rr.free_vars.len();
    let mut out = Vec::new();
    let mut counter = Bits::zeros(nf * env.size);
    loop {
        // Literal truth per member, free variables from the counter.
        let mut lits: Vec<Bits> = (0..env.size).map(|_| Bits::zeros(m)).collect();
        for (w, l) in lits.iter_mut().enumerate() {
            for (slot, &v) in rr.free_vars.iter().enumerate() {
                l.set(v, counter.get(w * nf + slot));
            }
        }
        // Determined literals, variable-major so cluster presences of earlier
        // variables are available to box definitions.
        for &v in &rr.eval_order {
            match rr.defs[v] {
                VarDef::Free => continue,
                VarDef::Top => lits.iter_mut().for_each(|l| l.set(v, true)),
                VarDef::Bottom => {}
                VarDef::NotOf(a) => {
                    for l in lits.iter_mut() {
                        let t = !l.get(a);
                        l.set(v, t);
                    }
                }
                VarDef::AndOf(a, b) => {
                    for l in lits.iter_mut() {
                        let t = l.get(a) && l.get(b);
                        l.set(v, t);
                    }
                }
                VarDef::OrOf(a, b) => {
                    for l in lits.iter_mut() {
                        let t = l.get(a) || l.get(b);
                        l.set(v, t);
                    }
                }
                VarDef::ImpliesOf(a, b) => {
                    for l in lits.iter_mut() {
                        let t = !l.get(a) || l.get(b);
                        l.set(v, t);
                    }
                }
                VarDef::BoxTOf(c) => {
                    let present = lits.iter().any(|l| l.get(c)) || u_next.get(c);
                    lits.iter_mut().for_each(|l| l.set(v, !present));
                }
                VarDef::BoxEOf(c) => {
                    let present = lits.iter().any(|l| l.get(c));
                    lits.iter_mut().for_each(|l| l.set(v, !present));
                }
                VarDef::BoxAgentOf(agent, c) => {
                    let of = &env.blocks[agent as usize - 1];
                    for w in 0..env.size {
                        let present = (0..env.size)
                            .any(|z| of[z] == of[w] && lits[z].get(c));
                        lits[w].set(v, !present);
                    }
                }
            }
        }
        if lits.iter().all(|l| l.get(rr.premise_var)) {
            let mut presence = Bits::zeros(m);
            for v in 0..m {
                if lits.iter().any(|l| l.get(v)) {
                    presence.set(v, true);
                }
            }
            let sigma = (0..env.size)
                .map(|w| {
                    let mut s = Bits::zeros(layout.width());
                    for v in 0..m {
                        s.set(layout.lit(v), !lits[w].get(v));
                        s.set(layout.diamond_t(v), !(presence.get(v) || u_next.get(v)));
                        s.set(layout.diamond_e(v), !presence.get(v));
                        for a in 1..=rr.agents {
                            let of = &env.blocks[a as usize - 1];
                            let in_block =
                                (0..env.size).any(|z| of[z] == of[w] && lits[z].get(v));
                            s.set(layout.diamond_agent(v, a), !in_block);
                        }
                    }
                    s
                })
                .collect();
            let conclusion_miss = lits.iter().any(|l| !l.get(0));
            out.push(ClusterAssign {
                lits,
                sigma,
                presence,
                conclusion_miss,
            });
        }
        if !counter.increment() {
            break;
        }
    }
    out
}

/// Validity of the reduced rule on a frame, computed without materializing
/// the premise: the premise holds globally under a valuation exactly when
/// every world's sign vector is a disjunct, so validity reduces to a tree
/// walk over the clusters with the successor-presence mask as interface.
pub fn reduced_rule_valid_on_frame(rr: &ReducedRule, frame: &Frame) -> bool {
    // Flags: bit 0 = a premise-satisfying assignment of the subtree exists
    // with no conclusion failure; bit 1 = one exists with a failure.
    const NONE: u8 = 0;
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); frame.cluster_count()];
    let mut roots: Vec<usize> = Vec::new();
    for c in 0..frame.cluster_count() {
        match frame.next_of(c) {
            Some(t) => preds[t].push(c),
            None => roots.push(c),
        }
    }
    let envs: Vec<ClusterEnv> = (0..frame.cluster_count())
        .map(|c| ClusterEnv::from_frame(frame, c))
        .collect();

    struct Ctx<'a> {
        rr: &'a ReducedRule,
        envs: &'a [ClusterEnv],
        preds: &'a [Vec<usize>],
        memo: HashMap<(usize, Bits), u8>,
    }

    fn flags_of(ctx: &mut Ctx, cluster: usize, u_next: &Bits) -> u8 {
        if let Some(&f) = ctx.memo.get(&(cluster, u_next.clone())) {
            return f;
        }
        let mut flags = NONE;
        for assign in cluster_assignments(ctx.rr, &ctx.envs[cluster], u_next) {
            // Each predecessor subtree chooses independently given our
            // presence mask; collect which miss-flags each can deliver.
            let mut ok = true;
            let mut any_must: u8 = if assign.conclusion_miss { 0b10 } else { 0b01 };
            for &p in &ctx.preds[cluster] {
                let child = flags_of(ctx, p, &assign.presence);
                if child == NONE {
                    ok = false;
                    break;
                }
                // A failure anywhere taints the combination; success
                // everywhere keeps it clean. Combine achievable outcomes.
                let clean = any_must & 0b01 != 0 && child & 0b01 != 0;
                let tainted = (any_must & 0b10 != 0 && child != NONE)
                    || (child & 0b10 != 0 && any_must != NONE);
                any_must = (clean as u8) | ((tainted as u8) << 1);
            }
            if ok {
                flags |= any_must;
            }
            if flags == 0b11 {
                break;
            }
        }
        ctx.memo.insert((cluster, u_next.clone()), flags);
        flags
    }

    let mut ctx = Ctx {
        rr,
        envs: &envs,
        preds: &preds,
        memo: HashMap::new(),
    };
    let zero = Bits::zeros(rr.var_count);
    let root_flags: Vec<u8> = roots
        .iter()
        .map(|&r| flags_of(&mut ctx, r, &zero))
        .collect();
    // The premise holds globally only if every root subtree has a satisfying
    // assignment; the rule fails on the frame if additionally some subtree
    // can fail the conclusion.
    let premise_possible = root_flags.iter().all(|&f| f != NONE);
    let failure_possible = root_flags.iter().any(|&f| f & 0b10 != 0);
    !(premise_possible && failure_possible)
}
