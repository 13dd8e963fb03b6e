//! Decision procedures for a linear temporal-epistemic modal logic.
//!
//! The logic lives on chains of time clusters: a reflexive, intransitive
//! time relation steps from each cluster to exactly the next one, an
//! environment relation connects everything inside a cluster, and per-agent
//! equivalence relations refine each cluster into knowledge blocks.
//!
//! The crate provides, in rough pipeline order:
//!
//! * [`syntax`] — formulas, rules, parsing and printing;
//! * [`kripke`] — finite frames and models, the satisfaction checker and
//!   rule validity by exhaustive valuation sweep;
//! * [`normal_form`] — the reduction of an arbitrary rule to a sign-vector
//!   normal form whose premise is a disjunction of complete conjunctions;
//! * [`admissibility`] — the witness search deciding rule admissibility and
//!   theoremhood, with independently checkable certificates;
//! * [`charmodel`] — layered approximations of the characterizing models,
//!   plus bounded bisimulation experiments;
//! * [`oracle`] — brute-force baselines used by tests and the acceptance
//!   suite;
//! * [`json`] — the stable JSON formats for models and witnesses;
//! * [`sample`] — seeded random formula and rule generators for tests and
//!   benchmarks.

pub mod bits;
pub mod json;
pub mod kripke;
pub mod normal_form;
pub mod oracle;
pub mod sample;
pub mod syntax;

pub mod admissibility;
pub mod charmodel;

pub use kripke::{Cluster, Frame, Model, Valuation, WorldId};
pub use syntax::{Formula, Rule, Substitution};

/// Run `f` on a thread pool with the requested worker count. `None` keeps the
/// process-global default. Every parallel routine in the crate returns
/// results that are independent of the worker count.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match jobs {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool construction")
            .install(f),
    }
}
