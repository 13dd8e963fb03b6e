//! Brute-force baselines at desk scale: exhaustive chain-frame enumeration,
//! countermodel search for formulas, and substitution-sweep non-admissibility
//! evidence. These are reference fixtures for tests and the acceptance suite,
//! not production decision paths; every verdict is relative to the stated
//! bounds and the reports embed them.

use rayon::prelude::*;

use crate::kripke::{rule_valid_on_frame, EvalError, Frame, Model, Valuation, WorldId};
use crate::normal_form::{reduce, reduced_rule_valid_on_frame};
use crate::syntax::{Formula, Rule, Substitution, VarId};
use crate::{bits::Bits, kripke::enumerate_cluster_shapes};

/// Bounds of a chain-frame sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameBounds {
    pub max_clusters: usize,
    pub max_cluster_size: usize,
    pub agents: u32,
}

impl FrameBounds {
    pub fn new(max_clusters: usize, max_cluster_size: usize, agents: u32) -> Self {
        assert!(max_clusters >= 1 && max_cluster_size >= 1);
        FrameBounds {
            max_clusters,
            max_cluster_size,
            agents,
        }
    }
}

/// Every chain frame within the bounds, one per isomorphism class, in
/// canonical order (by length, then position-wise cluster shape). Chains are
/// rigid: the time direction fixes the cluster order, so choosing canonical
/// cluster shapes position by position enumerates each class exactly once.
pub fn enumerate_chain_frames(b: &FrameBounds) -> Vec<Frame> {
    let mut shapes = Vec::new();
    for size in 1..=b.max_cluster_size {
        shapes.extend(enumerate_cluster_shapes(size, b.agents));
    }
    let mut frames = Vec::new();
    for len in 1..=b.max_clusters {
        let mut combo = vec![0usize; len];
        loop {
            let mut clusters = Vec::with_capacity(len);
            let mut next_id: WorldId = 0;
            for &si in &combo {
                let cluster = shapes[si].to_cluster(next_id, b.agents);
                next_id += cluster.worlds.len() as WorldId;
                clusters.push(cluster);
            }
            frames.push(Frame::chain(clusters, b.agents).expect("enumerated frame"));
            // Odometer, most significant position last: canonical order.
            let mut advanced = false;
            for slot in combo.iter_mut() {
                *slot += 1;
                if *slot < shapes.len() {
                    advanced = true;
                    break;
                }
                *slot = 0;
            }
            if !advanced {
                break;
            }
        }
    }
    frames
}

/// A refutation: a model and a world where the formula fails.
#[derive(Debug, Clone)]
pub struct Countermodel {
    pub model: Model,
    pub world: WorldId,
}

/// Search the bounded frame class for a world refuting `f`. `None` is sound
/// evidence of validity only within the bounds. The first hit in canonical
/// order (frame, then valuation sweep, then world) is returned, independent
/// of the worker count.
pub fn refute_formula(f: &Formula, b: &FrameBounds) -> Option<Countermodel> {
    assert!(
        f.max_agent() <= b.agents,
        "formula mentions agent {} beyond the bound's {} agents",
        f.max_agent(),
        b.agents
    );
    let frames = enumerate_chain_frames(b);
    frames
        .par_iter()
        .find_map_first(|frame| refute_on_frame(f, frame))
}

fn refute_on_frame(f: &Formula, frame: &Frame) -> Option<Countermodel> {
    let vars: Vec<VarId> = f.variables().into_iter().collect();
    let n = frame.world_count();
    let mut masks: Vec<Bits> = vars.iter().map(|_| Bits::zeros(n)).collect();
    loop {
        let lookup = |v: VarId| -> Result<Bits, EvalError> {
            let idx = vars.binary_search(&v).expect("variable of the formula");
            Ok(masks[idx].clone())
        };
        let truth = frame.eval_bits(&lookup, f).expect("closed evaluation");
        if !truth.all() {
            let world = (0..n)
                .find(|&p| !truth.get(p))
                .map(|p| frame.dense_id(p))
                .expect("some world refutes");
            let mut valuation = Valuation::new();
            for (i, &v) in vars.iter().enumerate() {
                valuation.set(
                    v,
                    masks[i]
                        .iter_ones()
                        .map(|p| frame.dense_id(p))
                        .collect::<Vec<_>>(),
                );
            }
            return Some(Countermodel {
                model: Model::new(frame.clone(), valuation),
                world,
            });
        }
        let mut advanced = false;
        for m in masks.iter_mut() {
            if m.increment() {
                advanced = true;
                break;
            }
        }
        if !advanced {
            return None;
        }
    }
}

/// Evidence that a rule is not admissible: a substitution whose premise
/// instances survived refutation at the bounds while the conclusion instance
/// has an explicit countermodel. The premise side is bounded evidence only;
/// the conclusion side is a hard certificate.
#[derive(Debug, Clone)]
pub struct NonAdmissibilityEvidence {
    pub substitution: Substitution,
    pub countermodel: Countermodel,
}

/// Canonical formula enumeration for substitution sweeps: depth-graded over
/// `p1..p<vars>` and the constants, unary and binary composites, with
/// conjunction and disjunction operands ordered to prune commutative
/// duplicates.
pub fn enumerate_formulas(max_depth: usize, vars: u32, agents: u32) -> Vec<Formula> {
    let mut levels: Vec<Vec<Formula>> = Vec::new();
    let mut level0 = vec![Formula::Top, Formula::Bottom];
    level0.extend((1..=vars).map(Formula::Var));
    levels.push(level0);
    for d in 1..=max_depth {
        let mut level = Vec::new();
        for f in &levels[d - 1] {
            level.push(Formula::not(f.clone()));
            level.push(Formula::box_t(f.clone()));
            level.push(Formula::box_e(f.clone()));
            for a in 1..=agents {
                level.push(Formula::box_agent(a, f.clone()));
            }
        }
        // Binary nodes need one operand of depth d-1; the other may be
        // anything at most as deep.
        for a_depth in 0..d {
            for b_depth in 0..d {
                if a_depth.max(b_depth) + 1 != d {
                    continue;
                }
                for a in &levels[a_depth] {
                    for b in &levels[b_depth] {
                        if a <= b {
                            level.push(Formula::and(a.clone(), b.clone()));
                            level.push(Formula::or(a.clone(), b.clone()));
                        }
                        level.push(Formula::implies(a.clone(), b.clone()));
                    }
                }
            }
        }
        levels.push(level);
    }
    levels.into_iter().flatten().collect()
}

/// Sweep substitutions built from the canonical formula enumeration. Returns
/// the first evidence in sweep order, or `None` (inconclusive towards
/// admissibility: premise theoremhood is only checked up to the bounds).
pub fn brute_not_admissible(
    rule: &Rule,
    subst_depth: usize,
    subst_vars: u32,
    b: &FrameBounds,
) -> Option<NonAdmissibilityEvidence> {
    let candidates = enumerate_formulas(subst_depth, subst_vars, b.agents);
    let rule_vars: Vec<VarId> = rule.variables().into_iter().collect();
    let total: u64 = (candidates.len() as u64)
        .checked_pow(rule_vars.len() as u32)
        .expect("substitution space fits in 64 bits");
    (0..total).into_par_iter().find_map_first(|index| {
        let mut sigma = Substitution::new();
        let mut rest = index;
        for &v in &rule_vars {
            let choice = (rest % candidates.len() as u64) as usize;
            rest /= candidates.len() as u64;
            sigma.insert(v, candidates[choice].clone());
        }
        let conclusion = sigma.apply(&rule.conclusion).expect("total substitution");
        // Cheap side first: the conclusion instance must be refutable.
        let countermodel = refute_on_frames_serial(&conclusion, b)?;
        for p in &rule.premises {
            let premise = sigma.apply(p).expect("total substitution");
            if refute_on_frames_serial(&premise, b).is_some() {
                return None;
            }
        }
        Some(NonAdmissibilityEvidence {
            substitution: sigma,
            countermodel,
        })
    })
}

fn refute_on_frames_serial(f: &Formula, b: &FrameBounds) -> Option<Countermodel> {
    enumerate_chain_frames(b)
        .iter()
        .find_map(|frame| refute_on_frame(f, frame))
}

/// Frame-by-frame agreement of a rule with its reduced normal form across
/// the bounded frame class. The original side is the plain valuation sweep;
/// the reduced side evaluates the disjunct set directly.
pub fn equivalid_nf(rule: &Rule, b: &FrameBounds, agents: u32) -> bool {
    let rr = reduce(rule, agents);
    let frames = enumerate_chain_frames(b);
    frames.par_iter().all(|frame| {
        let direct = rule_valid_on_frame(frame, rule).expect("agents cover the rule");
        let reduced = reduced_rule_valid_on_frame(&rr, frame);
        direct == reduced
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_formula, parse_rule};

    #[test]
    fn chain_frame_counts() {
        assert_eq!(enumerate_chain_frames(&FrameBounds::new(1, 1, 1)).len(), 1);
        assert_eq!(enumerate_chain_frames(&FrameBounds::new(2, 1, 1)).len(), 2);
        // Three shapes per position (singleton, merged pair, split pair).
        assert_eq!(
            enumerate_chain_frames(&FrameBounds::new(2, 2, 1)).len(),
            3 + 9
        );
    }

    #[test]
    fn enumerated_frames_are_well_formed_and_non_isomorphic() {
        let frames = enumerate_chain_frames(&FrameBounds::new(3, 2, 1));
        let mut keys = Vec::new();
        for f in &frames {
            assert!(f.check_well_formed().is_empty());
            let key: Vec<Vec<u64>> = f
                .clusters()
                .iter()
                .map(|c| {
                    let blocks = c
                        .partitions
                        .iter()
                        .map(|p| {
                            let mut of = vec![0usize; c.worlds.len()];
                            for (bi, block) in p.iter().enumerate() {
                                for w in block {
                                    let local =
                                        c.worlds.iter().position(|x| x == w).unwrap();
                                    of[local] = bi;
                                }
                            }
                            of
                        })
                        .collect();
                    crate::kripke::ClusterShape {
                        size: c.worlds.len(),
                        agent_blocks: blocks,
                    }
                    .canonical_key(None)
                })
                .collect();
            keys.push(key);
        }
        let total = keys.len();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), total, "two enumerated chains are isomorphic");
    }

    #[test]
    fn refutes_double_time_step() {
        let f = parse_formula("[T] p1 -> [T] [T] p1", 1).unwrap();
        let hit = refute_formula(&f, &FrameBounds::new(3, 1, 1)).expect("refutable");
        // Re-check the countermodel against the satisfaction relation.
        assert!(!hit.model.satisfies(hit.world, &f).unwrap());
        assert_eq!(hit.model.frame.cluster_count(), 3);
    }

    #[test]
    fn does_not_refute_tautology() {
        let f = parse_formula("p1 -> p1", 1).unwrap();
        assert!(refute_formula(&f, &FrameBounds::new(3, 2, 1)).is_none());
    }

    #[test]
    fn does_not_refute_agent_monotonicity() {
        // Environment knowledge entails each agent's knowledge.
        let f = parse_formula("[E] p1 -> [A1] p1", 2).unwrap();
        assert!(refute_formula(&f, &FrameBounds::new(2, 2, 2)).is_none());
    }

    #[test]
    fn countermodels_always_refute() {
        for text in [
            "[T] p1 -> [T] [T] p1",
            "[E] p1 -> [T] [T] p1",
            "p1",
            "[A1] p1 -> p2",
        ] {
            let f = parse_formula(text, 1).unwrap();
            if let Some(hit) = refute_formula(&f, &FrameBounds::new(3, 2, 1)) {
                assert!(!hit.model.satisfies(hit.world, &f).unwrap(), "{text}");
            }
        }
    }

    #[test]
    fn excluded_middle_to_falsum_evidence() {
        let rule = parse_rule("x1 | ~x1 / F", 1).unwrap();
        let hit = brute_not_admissible(&rule, 1, 1, &FrameBounds::new(2, 1, 1))
            .expect("evidence exists");
        assert_eq!(hit.substitution.get(1), Some(&Formula::Top));
        assert!(!hit
            .countermodel
            .model
            .satisfies(hit.countermodel.world, &Formula::Bottom)
            .unwrap());
    }

    #[test]
    fn identity_rule_has_no_evidence() {
        let rule = parse_rule("x1 / x1", 1).unwrap();
        assert!(brute_not_admissible(&rule, 1, 1, &FrameBounds::new(2, 2, 1)).is_none());
    }

    #[test]
    fn environment_necessitation_has_no_evidence() {
        // If the premise instance survives refutation at some bounds, so does
        // its environment-boxed conclusion at the same bounds, so the sweep
        // can never produce evidence, even at depth 2.
        let rule = parse_rule("x1 / [E] x1", 1).unwrap();
        assert!(brute_not_admissible(&rule, 2, 1, &FrameBounds::new(2, 2, 1)).is_none());
    }

    #[test]
    fn equivalid_examples() {
        let b = FrameBounds::new(3, 2, 1);
        for text in [
            "x1 / x1",
            "x1 | ~x1 / F",
            "<T> x1 / x1",
            "F / x1",
            "x1 / [E] x1",
        ] {
            let rule = parse_rule(text, 1).unwrap();
            assert!(equivalid_nf(&rule, &b, 1), "reduction must preserve {text}");
        }
    }

    #[test]
    fn formula_enumeration_is_duplicate_free() {
        let fs = enumerate_formulas(2, 1, 1);
        let mut sorted = fs.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), fs.len());
        // Depth-0 formulas (2 constants + 1 variable) come first.
        assert_eq!(&fs[..3], &[Formula::Top, Formula::Bottom, Formula::var(1)]);
    }
}
