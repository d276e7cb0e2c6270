//! The (cost, risk) objective pair and the evaluator contract the optimizer drives.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use crate::genome::Genome;
use crate::scalar::Scalar;

/// Both objectives are minimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveVector<T> {
    pub cost: T,
    /// Number of exposed buildings.
    pub risk: u32,
}

impl<T: Scalar> ObjectiveVector<T> {
    pub fn new(cost: T, risk: u32) -> Self {
        Self { cost, risk }
    }

    /// No worse in both objectives and strictly better in at least one.
    pub fn dominates(&self, other: &Self) -> bool {
        self.cost <= other.cost
            && self.risk <= other.risk
            && (self.cost < other.cost || self.risk < other.risk)
    }

    /// Total order by cost then risk; NaN costs never occur for valid inputs.
    pub fn cmp_cost_risk(&self, other: &Self) -> Ordering {
        self.cost
            .partial_cmp(&other.cost)
            .unwrap_or(Ordering::Equal)
            .then(self.risk.cmp(&other.risk))
    }
}

impl<T: Scalar> fmt::Display for ObjectiveVector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.cost, self.risk)
    }
}

/// Sorted, de-duplicated set of objective vectors, for set comparisons.
pub fn objective_set<T: Scalar>(vectors: impl IntoIterator<Item = ObjectiveVector<T>>) -> Vec<ObjectiveVector<T>> {
    let mut set: Vec<_> = vectors.into_iter().collect();
    set.sort_by(|a, b| a.cmp_cost_risk(b));
    set.dedup();
    set
}

pub type EvalError = Box<dyn std::error::Error + Send + Sync>;

/// Maps a genome to its objective vector. Must be deterministic and safe to
/// call concurrently on distinct genomes.
pub trait Evaluator<T: Scalar>: Sync {
    fn zone_count(&self) -> usize;
    fn evaluate(&self, genome: &Genome) -> Result<ObjectiveVector<T>, EvalError>;
}

impl<T: Scalar, E: Evaluator<T> + ?Sized> Evaluator<T> for &E {
    fn zone_count(&self) -> usize {
        (**self).zone_count()
    }

    fn evaluate(&self, genome: &Genome) -> Result<ObjectiveVector<T>, EvalError> {
        (**self).evaluate(genome)
    }
}

/// Evaluator backed by a closure.
pub struct FnEvaluator<F> {
    zones: usize,
    f: F,
}

impl<F> FnEvaluator<F> {
    pub fn new(zones: usize, f: F) -> Self {
        Self { zones, f }
    }
}

impl<T, F> Evaluator<T> for FnEvaluator<F>
where
    T: Scalar,
    F: Fn(&Genome) -> Result<ObjectiveVector<T>, EvalError> + Sync,
{
    fn zone_count(&self) -> usize {
        self.zones
    }

    fn evaluate(&self, genome: &Genome) -> Result<ObjectiveVector<T>, EvalError> {
        (self.f)(genome)
    }
}

/// Wraps an evaluator and records every invocation, flagging any genome
/// evaluated more than once.
pub struct CountingEvaluator<E> {
    inner: E,
    calls: AtomicUsize,
    seen: Mutex<HashSet<Genome>>,
    repeats: AtomicUsize,
}

impl<E> CountingEvaluator<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, calls: AtomicUsize::new(0), seen: Mutex::new(HashSet::new()), repeats: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(AtomicOrdering::SeqCst)
    }

    /// Invocations on a genome that had already been evaluated.
    pub fn repeats(&self) -> usize {
        self.repeats.load(AtomicOrdering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, AtomicOrdering::SeqCst);
        self.repeats.store(0, AtomicOrdering::SeqCst);
        self.seen.lock().expect("counter lock poisoned").clear();
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<T: Scalar, E: Evaluator<T>> Evaluator<T> for CountingEvaluator<E> {
    fn zone_count(&self) -> usize {
        self.inner.zone_count()
    }

    fn evaluate(&self, genome: &Genome) -> Result<ObjectiveVector<T>, EvalError> {
        self.calls.fetch_add(1, AtomicOrdering::SeqCst);
        if !self.seen.lock().expect("counter lock poisoned").insert(genome.clone()) {
            self.repeats.fetch_add(1, AtomicOrdering::SeqCst);
        }
        self.inner.evaluate(genome)
    }
}
