//! NSGA-II over binary placement genomes.
//!
//! One generation: binary tournaments pick parent pairs, one-point crossover
//! and a single bit-flip produce a child, the repository rejects anything seen
//! before, new children are evaluated (in parallel), and the best `p` of
//! parents plus offspring survive.

use std::cmp::Ordering;
use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::genome::Genome;
use crate::objectives::{EvalError, Evaluator, ObjectiveVector};
use crate::repository::{space_size, SolutionRepository};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum OptimizerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("a population of {population} distinct genomes does not fit in a space of {space}")]
    InfeasiblePopulation { population: usize, space: u128 },
    #[error("genome lengths differ: {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("all {0} genomes have already been generated")]
    SearchSpaceExhausted(u128),
    #[error("a tournament needs at least two members, population has {0}")]
    PopulationTooSmall(usize),
    #[error("evaluating genome {genome} failed: {source}")]
    Evaluation { genome: Genome, source: EvalError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GAConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    pub rng_seed: u64,
    /// Crossover attempts per parent pair before the pair is replaced.
    pub uniqueness_retry_cap: usize,
    /// Evaluation threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for GAConfig {
    fn default() -> Self {
        Self {
            population_size: 27,
            max_generations: 25,
            crossover_probability: 1.0,
            mutation_probability: 0.4,
            rng_seed: 0,
            uniqueness_retry_cap: 50,
            jobs: None,
        }
    }
}

impl GAConfig {
    /// Population size and generation budget by zone count: 27/25 up to 10
    /// zones, 66/50 up to 15, 100/100 beyond.
    pub fn for_zones(n: usize, rng_seed: u64) -> Self {
        let (population_size, max_generations) = match n {
            0..=10 => (27, 25),
            11..=15 => (66, 50),
            _ => (100, 100),
        };
        Self { population_size, max_generations, rng_seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.into()));
        if self.population_size < 2 {
            return bad("population size must be at least 2");
        }
        if self.max_generations < 1 {
            return bad("at least one generation is required");
        }
        if !(0.0..=1.0).contains(&self.crossover_probability) {
            return bad("crossover probability must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mutation_probability) {
            return bad("mutation probability must lie in [0, 1]");
        }
        if self.uniqueness_retry_cap < 1 {
            return bad("uniqueness retry cap must be positive");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual<T> {
    pub genome: Genome,
    pub objectives: ObjectiveVector<T>,
    pub rank: usize,
    pub crowding: T,
}

impl<T: Scalar> Individual<T> {
    pub fn new(genome: Genome, objectives: ObjectiveVector<T>) -> Self {
        Self { genome, objectives, rank: 0, crowding: T::zero() }
    }
}

pub type Population<T> = Vec<Individual<T>>;

/// Draws a genome absent from `repo` uniformly at random and inserts it.
pub fn random_unique_genome<T: Copy, R: Rng + ?Sized>(
    repo: &mut SolutionRepository<T>,
    generation: usize,
    rng: &mut R,
) -> Result<Genome, OptimizerError> {
    let n = repo.genome_len();
    let space = repo.space_size();
    if repo.is_full() {
        return Err(OptimizerError::SearchSpaceExhausted(space));
    }
    // dense small spaces: pick among the free genomes directly
    if n <= 20 && (repo.len() as u128) * 2 > space {
        let free: Vec<u64> = (0..space as u64)
            .filter(|&i| !repo.contains(&Genome::from_index(i, n)))
            .collect();
        let genome = Genome::from_index(free[rng.gen_range(0..free.len())], n);
        repo.insert(genome.clone(), generation);
        return Ok(genome);
    }
    loop {
        let genome = Genome::random(n, rng);
        if repo.insert(genome.clone(), generation) {
            return Ok(genome);
        }
    }
}

/// All-zeros first, all-ones last, distinct random genomes between. Every
/// genome is inserted into `repo` unevaluated.
pub fn initialize_population<T: Copy, R: Rng + ?Sized>(
    n: usize,
    config: &GAConfig,
    repo: &mut SolutionRepository<T>,
    rng: &mut R,
) -> Result<Vec<Genome>, OptimizerError> {
    config.validate()?;
    if n == 0 {
        return Err(OptimizerError::InvalidConfig("genomes need at least one zone".into()));
    }
    if !repo.is_empty() || repo.genome_len() != n {
        return Err(OptimizerError::InvalidConfig("initialization needs an empty repository of matching length".into()));
    }
    let p = config.population_size;
    if p as u128 > space_size(n) {
        return Err(OptimizerError::InfeasiblePopulation { population: p, space: space_size(n) });
    }
    let (zeros, ones) = (Genome::zeros(n), Genome::ones(n));
    repo.insert(zeros.clone(), 0);
    repo.insert(ones.clone(), 0);
    let mut genomes = Vec::with_capacity(p);
    genomes.push(zeros);
    for _ in 0..p - 2 {
        genomes.push(random_unique_genome(repo, 0, rng)?);
    }
    genomes.push(ones);
    Ok(genomes)
}

/// Partitions indices into successive non-dominated fronts. Indices within a
/// front are ascending.
pub fn fast_nondominated_sort<T: Scalar>(objectives: &[ObjectiveVector<T>]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if objectives[i].dominates(&objectives[j]) {
                dominated_by_me[i].push(j);
                domination_count[j] += 1;
            } else if objectives[j].dominates(&objectives[i]) {
                dominated_by_me[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (aligned with it). Every
/// member holding the minimum or maximum of an objective gets +infinity; an
/// objective with zero range adds nothing.
pub fn crowding_distance<T: Scalar>(objectives: &[ObjectiveVector<T>], front: &[usize]) -> Vec<T> {
    let m = front.len();
    let inf = T::infinity();
    if m <= 2 {
        return vec![inf; m];
    }
    let mut distance = vec![T::zero(); m];
    let columns: [Vec<T>; 2] = [
        front.iter().map(|&i| objectives[i].cost).collect(),
        front.iter().map(|&i| T::of(objectives[i].risk as f64)).collect(),
    ];
    for values in &columns {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let lo = values[order[0]];
        let hi = values[order[m - 1]];
        for (k, &v) in values.iter().enumerate() {
            if v == lo || v == hi {
                distance[k] = inf;
            }
        }
        if hi > lo {
            let range = hi - lo;
            for w in order.windows(3) {
                distance[w[1]] = distance[w[1]] + (values[w[2]] - values[w[0]]) / range;
            }
        }
    }
    distance
}

/// Sorts `population`, writes rank and crowding back, returns the fronts.
pub fn assign_rank_and_crowding<T: Scalar>(population: &mut [Individual<T>]) -> Vec<Vec<usize>> {
    let objectives: Vec<_> = population.iter().map(|ind| ind.objectives).collect();
    let fronts = fast_nondominated_sort(&objectives);
    for (rank, front) in fronts.iter().enumerate() {
        let distance = crowding_distance(&objectives, front);
        for (&i, d) in front.iter().zip(distance) {
            population[i].rank = rank;
            population[i].crowding = d;
        }
    }
    fronts
}

/// Lower rank wins, then larger crowding; a full tie goes to the first drawn.
/// Returns the winner's index.
pub fn binary_tournament<T: Scalar, R: Rng + ?Sized>(
    population: &[Individual<T>],
    rng: &mut R,
) -> Result<usize, OptimizerError> {
    let n = population.len();
    if n < 2 {
        return Err(OptimizerError::PopulationTooSmall(n));
    }
    let first = rng.gen_range(0..n);
    let mut second = rng.gen_range(0..n - 1);
    if second >= first {
        second += 1;
    }
    let (a, b) = (&population[first], &population[second]);
    let second_wins = b.rank < a.rank || (b.rank == a.rank && b.crowding > a.crowding);
    Ok(if second_wins { second } else { first })
}

/// One child: head of `a` up to a random cut, tail of `b`. Without crossover
/// (or for one-bit genomes) the child is a copy of `a`.
pub fn single_point_crossover<R: Rng + ?Sized>(
    a: &Genome,
    b: &Genome,
    rng: &mut R,
    probability: f64,
) -> Result<Genome, OptimizerError> {
    if a.len() != b.len() {
        return Err(OptimizerError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 || !rng.gen_bool(probability) {
        return Ok(a.clone());
    }
    let cut = rng.gen_range(1..a.len());
    Ok(a.splice(b, cut))
}

/// With the given probability flips exactly one uniformly chosen bit.
pub fn bit_flip_mutation<R: Rng + ?Sized>(genome: &Genome, rng: &mut R, probability: f64) -> Genome {
    let mut out = genome.clone();
    if !out.is_empty() && rng.gen_bool(probability) {
        out.flip(rng.gen_range(0..out.len()));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Breeding {
    /// A new genome, already inserted into the repository.
    Unique(Genome),
    /// Every attempt on this pair reproduced a known genome.
    RetryExhausted,
}

/// Crossover plus mutation on one parent pair until the child is new to the
/// repository, up to `config.uniqueness_retry_cap` attempts.
pub fn make_unique_offspring<T: Copy, R: Rng + ?Sized>(
    parent_a: &Genome,
    parent_b: &Genome,
    repo: &mut SolutionRepository<T>,
    config: &GAConfig,
    generation: usize,
    rng: &mut R,
) -> Result<Breeding, OptimizerError> {
    if repo.is_full() {
        return Err(OptimizerError::SearchSpaceExhausted(repo.space_size()));
    }
    for _ in 0..config.uniqueness_retry_cap {
        let child = single_point_crossover(parent_a, parent_b, rng, config.crossover_probability)?;
        let child = bit_flip_mutation(&child, rng, config.mutation_probability);
        if repo.insert(child.clone(), generation) {
            return Ok(Breeding::Unique(child));
        }
    }
    Ok(Breeding::RetryExhausted)
}

/// One new genome: a tournament-selected pair, a second pair if the first is
/// exhausted, then a random unseen genome.
pub fn breed_offspring<T: Scalar, R: Rng + ?Sized>(
    population: &[Individual<T>],
    repo: &mut SolutionRepository<T>,
    config: &GAConfig,
    generation: usize,
    rng: &mut R,
) -> Result<Genome, OptimizerError> {
    for _ in 0..2 {
        let a = binary_tournament(population, rng)?;
        let b = binary_tournament(population, rng)?;
        let outcome =
            make_unique_offspring(&population[a].genome, &population[b].genome, repo, config, generation, rng)?;
        if let Breeding::Unique(child) = outcome {
            return Ok(child);
        }
    }
    random_unique_genome(repo, generation, rng)
}

/// Elitist survival: best `p` of the union by front, the split front cut by
/// descending crowding then ascending genome.
pub fn derive_new_generation<T: Scalar>(
    parents: Population<T>,
    offspring: Population<T>,
    p: usize,
) -> Population<T> {
    let mut pool = parents;
    pool.extend(offspring);
    let fronts = assign_rank_and_crowding(&mut pool);
    let mut chosen: Vec<usize> = Vec::with_capacity(p);
    for mut front in fronts {
        let room = p - chosen.len();
        if front.len() > room {
            front.sort_by(|&a, &b| {
                pool[b]
                    .crowding
                    .partial_cmp(&pool[a].crowding)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| pool[a].genome.cmp(&pool[b].genome))
            });
            front.truncate(room);
        }
        chosen.extend(front);
        if chosen.len() == p {
            break;
        }
    }
    chosen.into_iter().map(|i| pool[i].clone()).collect()
}

/// Snapshot of one generation boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord<T> {
    pub generation: usize,
    /// Rank-0 members sorted by objectives then genome.
    pub front: Vec<(Genome, ObjectiveVector<T>)>,
    pub repository_size: usize,
}

impl<T: Scalar> GenerationRecord<T> {
    fn capture(generation: usize, population: &[Individual<T>], repo: &SolutionRepository<T>) -> Self {
        let mut front: Vec<_> = population
            .iter()
            .filter(|ind| ind.rank == 0)
            .map(|ind| (ind.genome.clone(), ind.objectives))
            .collect();
        front.sort_by(|a, b| a.1.cmp_cost_risk(&b.1).then_with(|| a.0.cmp(&b.0)));
        Self { generation, front, repository_size: repo.len() }
    }

    pub fn objective_set(&self) -> Vec<ObjectiveVector<T>> {
        crate::objectives::objective_set(self.front.iter().map(|(_, o)| *o))
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult<T> {
    /// Rank-0 members of the final population, sorted by objectives.
    pub front: Vec<Individual<T>>,
    pub population: Population<T>,
    pub repository: SolutionRepository<T>,
    /// State after the initial population was evaluated.
    pub initial: GenerationRecord<T>,
    /// One record per completed generation, 1-based.
    pub history: Vec<GenerationRecord<T>>,
    /// True when the repository ran out of unseen genomes.
    pub exhausted: bool,
}

/// Evaluates `genomes` on the configured pool; results keep input order.
pub fn evaluate_batch<T: Scalar, E: Evaluator<T> + ?Sized>(
    evaluator: &E,
    genomes: &[Genome],
    jobs: Option<usize>,
) -> Result<Vec<ObjectiveVector<T>>, OptimizerError> {
    let run = || -> Vec<Result<ObjectiveVector<T>, EvalError>> {
        genomes.par_iter().map(|g| evaluator.evaluate(g)).collect()
    };
    let results = match jobs {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| OptimizerError::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    genomes
        .iter()
        .zip(results)
        .map(|(genome, result)| {
            let objectives = result.map_err(|source| OptimizerError::Evaluation { genome: genome.clone(), source })?;
            if !(objectives.cost >= T::zero()) || !objectives.cost.is_finite() {
                return Err(OptimizerError::Evaluation {
                    genome: genome.clone(),
                    source: format!("cost {} is not a finite non-negative number", objectives.cost).into(),
                });
            }
            Ok(objectives)
        })
        .collect()
}

fn evaluate_pending<T: Scalar, E: Evaluator<T> + ?Sized>(
    evaluator: &E,
    repo: &mut SolutionRepository<T>,
    jobs: Option<usize>,
) -> Result<(), OptimizerError> {
    let pending = repo.pending();
    let scores = evaluate_batch(evaluator, &pending, jobs)?;
    for (genome, objectives) in pending.iter().zip(scores) {
        repo.set_objectives(genome, objectives);
    }
    Ok(())
}

fn individuals_from<T: Scalar>(genomes: Vec<Genome>, repo: &SolutionRepository<T>) -> Population<T> {
    genomes
        .into_iter()
        .map(|g| {
            let objectives = repo.get(&g).and_then(|e| e.objectives).expect("evaluated before use");
            Individual::new(g, objectives)
        })
        .collect()
}

pub fn run_optimization<T: Scalar, E: Evaluator<T> + ?Sized>(
    evaluator: &E,
    config: &GAConfig,
) -> Result<OptimizationResult<T>, OptimizerError> {
    run_optimization_with(evaluator, config, |_| ControlFlow::Continue(()))
}

/// Runs the optimizer, handing every generation record (the initial one
/// included) to `observer`, which may stop the run early.
pub fn run_optimization_with<T, E, F>(
    evaluator: &E,
    config: &GAConfig,
    mut observer: F,
) -> Result<OptimizationResult<T>, OptimizerError>
where
    T: Scalar,
    E: Evaluator<T> + ?Sized,
    F: FnMut(&GenerationRecord<T>) -> ControlFlow<()>,
{
    config.validate()?;
    let n = evaluator.zone_count();
    let p = config.population_size;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut repo = SolutionRepository::new(n);

    let genomes = initialize_population(n, config, &mut repo, &mut rng)?;
    evaluate_pending(evaluator, &mut repo, config.jobs)?;
    let mut population = individuals_from(genomes, &repo);
    assign_rank_and_crowding(&mut population);
    let initial = GenerationRecord::capture(0, &population, &repo);
    let mut history = Vec::with_capacity(config.max_generations);
    let mut exhausted = false;

    if observer(&initial).is_continue() {
        for generation in 1..=config.max_generations {
            let mut children = Vec::with_capacity(p);
            for _ in 0..p {
                match breed_offspring(&population, &mut repo, config, generation, &mut rng) {
                    Ok(child) => children.push(child),
                    Err(OptimizerError::SearchSpaceExhausted(_)) => {
                        exhausted = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if children.is_empty() {
                break;
            }
            evaluate_pending(evaluator, &mut repo, config.jobs)?;
            let offspring = individuals_from(children, &repo);
            population = derive_new_generation(population, offspring, p);
            let record = GenerationRecord::capture(generation, &population, &repo);
            let stop = observer(&record).is_break();
            history.push(record);
            if stop || exhausted {
                break;
            }
        }
    }

    let mut front: Vec<Individual<T>> = population.iter().filter(|ind| ind.rank == 0).cloned().collect();
    front.sort_by(|a, b| a.objectives.cmp_cost_risk(&b.objectives).then_with(|| a.genome.cmp(&b.genome)));
    Ok(OptimizationResult { front, population, repository: repo, initial, history, exhausted })
}
