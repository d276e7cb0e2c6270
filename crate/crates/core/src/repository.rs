//! Run-wide archive of every genome generated, so no genome is evaluated twice.

use indexmap::map::Entry;
use indexmap::IndexMap;

use crate::genome::Genome;
use crate::objectives::ObjectiveVector;

#[derive(Debug, Clone, PartialEq)]
pub struct RepositoryEntry<T> {
    /// `None` until the evaluator has run.
    pub objectives: Option<ObjectiveVector<T>>,
    /// Generation in which the genome was first produced (0 = initial population).
    pub generation: usize,
}

/// Genomes keyed by their bits, kept in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRepository<T> {
    genome_len: usize,
    entries: IndexMap<Genome, RepositoryEntry<T>>,
}

impl<T: Copy> SolutionRepository<T> {
    pub fn new(genome_len: usize) -> Self {
        Self { genome_len, entries: IndexMap::new() }
    }

    pub fn genome_len(&self) -> usize {
        self.genome_len
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 2^n, saturating at `u128::MAX` for absurd lengths.
    pub fn space_size(&self) -> u128 {
        space_size(self.genome_len)
    }

    pub fn is_full(&self) -> bool {
        self.len() as u128 >= self.space_size()
    }

    /// |repository| / 2^n.
    pub fn fraction(&self) -> f64 {
        self.len() as f64 / (self.genome_len as f64).exp2()
    }

    pub fn contains(&self, genome: &Genome) -> bool {
        self.entries.contains_key(genome)
    }

    pub fn get(&self, genome: &Genome) -> Option<&RepositoryEntry<T>> {
        self.entries.get(genome)
    }

    /// Inserts an unevaluated genome. Returns false (and changes nothing)
    /// when it is already present.
    pub fn insert(&mut self, genome: Genome, generation: usize) -> bool {
        assert_eq!(genome.len(), self.genome_len, "genome length differs from repository");
        match self.entries.entry(genome) {
            Entry::Occupied(_) => false,
            Entry::Vacant(slot) => {
                slot.insert(RepositoryEntry { objectives: None, generation });
                true
            }
        }
    }

    pub fn set_objectives(&mut self, genome: &Genome, objectives: ObjectiveVector<T>) {
        let entry = self.entries.get_mut(genome).expect("genome must be inserted before it is scored");
        entry.objectives = Some(objectives);
    }

    /// Genomes still waiting for evaluation, in insertion order.
    pub fn pending(&self) -> Vec<Genome> {
        self.entries
            .iter()
            .filter(|(_, e)| e.objectives.is_none())
            .map(|(g, _)| g.clone())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Genome, &RepositoryEntry<T>)> {
        self.entries.iter()
    }

    /// Evaluated entries only, in insertion order.
    pub fn evaluated(&self) -> impl Iterator<Item = (&Genome, ObjectiveVector<T>, usize)> {
        self.entries
            .iter()
            .filter_map(|(g, e)| e.objectives.map(|o| (g, o, e.generation)))
    }
}

pub fn space_size(n: usize) -> u128 {
    if n >= 128 {
        u128::MAX
    } else {
        1u128 << n
    }
}
