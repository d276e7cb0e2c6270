//! Exhaustive enumeration, reference fronts, convergence checks against a
//! reference, zone contribution and run-time accounting.

use std::io::{BufRead, Write};
use std::ops::ControlFlow;
use std::time::Duration;

use crate::genome::Genome;
use crate::objectives::{objective_set, Evaluator, ObjectiveVector};
use crate::optimizer::{evaluate_batch, run_optimization_with, GAConfig, GenerationRecord, OptimizationResult, OptimizerError};
use crate::repository::{space_size, SolutionRepository};
use crate::scalar::Scalar;

/// Largest zone count `enumerate_all` accepts unless told otherwise.
pub const DEFAULT_ENUMERATION_CAP: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("enumerating {zones} zones needs {required} evaluations, above the cap of {cap} zones ({} evaluations)", space_size(*cap))]
    CapExceeded { zones: usize, cap: usize, required: u128 },
    #[error("reference front is for {reference} zones but the evaluator has {zones}")]
    ReferenceMismatch { reference: usize, zones: usize },
    #[error("the front is empty")]
    EmptyFront,
    #[error("expected {expected} zone ids, got {found}")]
    ZoneIds { expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontSource {
    Oracle,
    Optimizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontMember<T> {
    pub genome: Genome,
    pub objectives: ObjectiveVector<T>,
    /// Generation that first produced the genome; `None` for oracle fronts.
    pub generation_found: Option<usize>,
}

/// Mutually non-dominated solutions sorted by cost, risk, then genome.
/// Distinct genomes with equal objectives are all kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFront<T> {
    pub members: Vec<FrontMember<T>>,
    pub source: FrontSource,
}

impl<T: Scalar> ParetoFront<T> {
    /// Keeps the non-dominated candidates. Repeated genomes are dropped
    /// (first occurrence wins).
    pub fn from_candidates(candidates: impl IntoIterator<Item = FrontMember<T>>, source: FrontSource) -> Self {
        let mut all: Vec<FrontMember<T>> = candidates.into_iter().collect();
        all.sort_by(|a, b| {
            a.objectives.cmp_cost_risk(&b.objectives).then_with(|| a.genome.cmp(&b.genome))
        });
        all.dedup_by(|b, a| a.genome == b.genome);
        let mut members = Vec::new();
        let mut best_risk = u32::MAX;
        let mut i = 0;
        while i < all.len() {
            // group of equal cost, sorted by risk
            let cost = all[i].objectives.cost;
            let mut j = i;
            while j < all.len() && all[j].objectives.cost == cost {
                j += 1;
            }
            let group_risk = all[i].objectives.risk;
            if group_risk < best_risk {
                members.extend(all[i..j].iter().filter(|m| m.objectives.risk == group_risk).cloned());
                best_risk = group_risk;
            }
            i = j;
        }
        let mut seen = std::collections::HashSet::new();
        members.retain(|m| seen.insert(m.genome.clone()));
        members.sort_by(|a, b| a.objectives.cmp_cost_risk(&b.objectives).then_with(|| a.genome.cmp(&b.genome)));
        Self { members, source }
    }

    /// Rank-0 members of a finished run, with discovery generations.
    pub fn from_optimization(result: &OptimizationResult<T>) -> Self {
        let members = result.front.iter().map(|ind| FrontMember {
            genome: ind.genome.clone(),
            objectives: ind.objectives,
            generation_found: result.repository.get(&ind.genome).map(|e| e.generation),
        });
        Self::from_candidates(members, FrontSource::Optimizer)
    }

    /// Non-dominated evaluated entries of a repository.
    pub fn from_repository(repo: &SolutionRepository<T>, source: FrontSource) -> Self {
        let members = repo.evaluated().map(|(g, o, generation)| FrontMember {
            genome: g.clone(),
            objectives: o,
            generation_found: (source == FrontSource::Optimizer).then_some(generation),
        });
        Self::from_candidates(members, source)
    }

    /// Union of several fronts, filtered again.
    pub fn merge<'a>(fronts: impl IntoIterator<Item = &'a ParetoFront<T>>, source: FrontSource) -> Self {
        Self::from_candidates(fronts.into_iter().flat_map(|f| f.members.iter().cloned()), source)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Genome length, if the front has members.
    pub fn zone_count(&self) -> Option<usize> {
        self.members.first().map(|m| m.genome.len())
    }

    pub fn objective_set(&self) -> Vec<ObjectiveVector<T>> {
        objective_set(self.members.iter().map(|m| m.objectives))
    }

    /// Pairwise check that no member dominates another and genomes are unique.
    pub fn audit(&self) -> bool {
        let m = &self.members;
        (0..m.len()).all(|i| {
            (0..m.len()).all(|j| i == j || (!m[i].objectives.dominates(&m[j].objectives) && m[i].genome != m[j].genome))
        })
    }

    /// `genome_bits,cost,risk,generation_found`; the last field is empty for oracle fronts.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "genome_bits,cost,risk,generation_found")?;
        for m in &self.members {
            let generation = m.generation_found.map(|g| g.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", m.genome, m.objectives.cost, m.objectives.risk, generation)?;
        }
        Ok(())
    }

    /// Reads a front written by [`ParetoFront::write_csv`]. Members are
    /// filtered again, so a hand-edited file cannot smuggle in dominated rows.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self, ValidationError> {
        let mut members = Vec::new();
        let mut any_generation = false;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if idx == 0 {
                if text != "genome_bits,cost,risk,generation_found" {
                    return Err(ValidationError::Parse { line: 1, message: format!("unexpected header `{text}`") });
                }
                continue;
            }
            if text.is_empty() {
                continue;
            }
            let err = |message: String| ValidationError::Parse { line: idx + 1, message };
            let fields: Vec<&str> = text.split(',').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            }
            let genome: Genome = fields[0].parse().map_err(|e| err(format!("{e}")))?;
            let cost: T = fields[1].parse().map_err(|_| err(format!("`{}` is not a cost", fields[1])))?;
            let risk: u32 = fields[2].parse().map_err(|_| err(format!("`{}` is not a risk count", fields[2])))?;
            let generation_found = match fields[3] {
                "" => None,
                g => Some(g.parse().map_err(|_| err(format!("`{g}` is not a generation")))?),
            };
            any_generation |= generation_found.is_some();
            if let Some(first) = members.first() {
                let first: &FrontMember<T> = first;
                if first.genome.len() != genome.len() {
                    return Err(err(format!("genome length {} differs from {}", genome.len(), first.genome.len())));
                }
            }
            members.push(FrontMember { genome, objectives: ObjectiveVector::new(cost, risk), generation_found });
        }
        let source = if any_generation { FrontSource::Optimizer } else { FrontSource::Oracle };
        Ok(Self::from_candidates(members, source))
    }
}

/// `genome_bits,cost,risk,generation` for every evaluated genome, in repository order.
pub fn write_repository_csv<T: Scalar, W: Write>(repo: &SolutionRepository<T>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "genome_bits,cost,risk,generation")?;
    for (g, o, generation) in repo.evaluated() {
        writeln!(w, "{g},{},{},{generation}", o.cost, o.risk)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Enumeration<T> {
    /// Every genome, in lexicographic order.
    pub repository: SolutionRepository<T>,
    pub front: ParetoFront<T>,
}

/// Evaluates all `2^n` genomes. Refuses when `n > cap`.
pub fn enumerate_all<T: Scalar, E: Evaluator<T> + ?Sized>(
    evaluator: &E,
    cap: usize,
    jobs: Option<usize>,
) -> Result<Enumeration<T>, ValidationError> {
    let n = evaluator.zone_count();
    if n > cap || n >= 64 {
        return Err(ValidationError::CapExceeded { zones: n, cap, required: space_size(n) });
    }
    let total = 1u64 << n;
    let mut repository = SolutionRepository::new(n);
    const CHUNK: u64 = 4096;
    let mut start = 0;
    while start < total {
        let end = (start + CHUNK).min(total);
        let genomes: Vec<Genome> = (start..end).map(|i| Genome::from_index(i, n)).collect();
        let objectives = evaluate_batch(evaluator, &genomes, jobs)?;
        for (g, o) in genomes.into_iter().zip(objectives) {
            repository.insert(g.clone(), 0);
            repository.set_objectives(&g, o);
        }
        if total > CHUNK {
            log::info!("enumerated {end} of {total} genomes");
        }
        start = end;
    }
    let front = ParetoFront::from_repository(&repository, FrontSource::Oracle);
    Ok(Enumeration { repository, front })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStatus {
    pub generation: usize,
    pub front_size: usize,
    pub repository_size: usize,
    pub repository_fraction: f64,
    /// Rank-0 objective set equals the reference set; `None` without a reference.
    pub converged: Option<bool>,
}

impl GenerationStatus {
    pub fn from_record<T: Scalar>(record: &GenerationRecord<T>, zones: usize, reference: Option<&[ObjectiveVector<T>]>) -> Self {
        Self {
            generation: record.generation,
            front_size: record.front.len(),
            repository_size: record.repository_size,
            repository_fraction: record.repository_size as f64 / (zones as f64).exp2(),
            converged: reference.map(|r| record.objective_set() == r),
        }
    }
}

/// `generation,front_size,repo_fraction,converged_flag`.
pub fn write_history_csv<W: Write>(history: &[GenerationStatus], mut w: W) -> std::io::Result<()> {
    writeln!(w, "generation,front_size,repo_fraction,converged_flag")?;
    for s in history {
        let flag = match s.converged {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        writeln!(w, "{},{},{},{flag}", s.generation, s.front_size, s.repository_fraction)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub seed: u64,
    pub zones: usize,
    /// Generation 0 (initial population) onwards.
    pub history: Vec<GenerationStatus>,
    pub first_converged: Option<usize>,
    /// Repository fraction when convergence was first reached.
    pub fraction_at_convergence: Option<f64>,
    /// Evaluations spent when convergence was first reached.
    pub evaluations_at_convergence: Option<usize>,
    /// Whether the last generation run matches the reference.
    pub final_converged: bool,
    pub evaluations: usize,
}

/// Runs the optimizer and compares each generation's rank-0 objective set
/// with the reference front. With `stop_at_convergence` the run ends at the
/// first matching generation.
pub fn convergence_test<T: Scalar, E: Evaluator<T> + ?Sized>(
    evaluator: &E,
    config: &GAConfig,
    reference: &ParetoFront<T>,
    stop_at_convergence: bool,
) -> Result<(ConvergenceReport, OptimizationResult<T>), ValidationError> {
    let zones = evaluator.zone_count();
    let reference_zones = reference.zone_count().ok_or(ValidationError::EmptyFront)?;
    if reference_zones != zones {
        return Err(ValidationError::ReferenceMismatch { reference: reference_zones, zones });
    }
    let target = reference.objective_set();
    let mut history = Vec::new();
    let result = run_optimization_with(evaluator, config, |record| {
        let status = GenerationStatus::from_record(record, zones, Some(&target));
        let hit = status.converged == Some(true);
        history.push(status);
        if hit && stop_at_convergence {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    let first = history.iter().find(|s| s.converged == Some(true));
    let report = ConvergenceReport {
        seed: config.rng_seed,
        zones,
        first_converged: first.map(|s| s.generation),
        fraction_at_convergence: first.map(|s| s.repository_fraction),
        evaluations_at_convergence: first.map(|s| s.repository_size),
        final_converged: history.last().and_then(|s| s.converged) == Some(true),
        evaluations: result.repository.len(),
        history,
    };
    Ok((report, result))
}

/// Five equal-width bands over [0, 1]; the last is closed.
pub const BAND_LABELS: [&str; 5] = ["0.0-0.2", "0.2-0.4", "0.4-0.6", "0.6-0.8", "0.8-1.0"];

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneContribution {
    pub zone_ids: Vec<String>,
    pub fractions: Vec<f64>,
    /// Band index into [`BAND_LABELS`].
    pub bands: Vec<usize>,
}

impl ZoneContribution {
    /// `zone_id,fraction,band`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "zone_id,fraction,band")?;
        for ((id, f), b) in self.zone_ids.iter().zip(&self.fractions).zip(&self.bands) {
            writeln!(w, "{id},{f},{}", BAND_LABELS[*b])?;
        }
        Ok(())
    }
}

/// Share of front members that activate each zone.
pub fn zone_contribution<T: Scalar>(front: &ParetoFront<T>, zone_ids: &[String]) -> Result<ZoneContribution, ValidationError> {
    let n = front.zone_count().ok_or(ValidationError::EmptyFront)?;
    if zone_ids.len() != n {
        return Err(ValidationError::ZoneIds { expected: n, found: zone_ids.len() });
    }
    let total = front.len();
    let mut counts = vec![0usize; n];
    for m in &front.members {
        for j in m.genome.active() {
            counts[j] += 1;
        }
    }
    Ok(ZoneContribution {
        zone_ids: zone_ids.to_vec(),
        fractions: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        bands: counts.iter().map(|&c| (5 * c / total).min(4)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    pub evaluations: usize,
    pub space: u128,
    pub fraction: f64,
    pub wall_time: Duration,
    pub mean_eval_time: Duration,
    /// Mean evaluation time times `2^n`, in seconds.
    pub projected_exhaustive_s: f64,
    pub budget: Duration,
    pub enumeration_feasible: bool,
}

pub fn efficiency_report(evaluations: usize, zones: usize, wall_time: Duration, budget: Duration) -> EfficiencyReport {
    let space = space_size(zones);
    let mean = if evaluations == 0 { Duration::ZERO } else { wall_time / evaluations as u32 };
    let projected = mean.as_secs_f64() * (zones as f64).exp2();
    EfficiencyReport {
        evaluations,
        space,
        fraction: evaluations as f64 / (zones as f64).exp2(),
        wall_time,
        mean_eval_time: mean,
        projected_exhaustive_s: projected,
        budget,
        enumeration_feasible: projected <= budget.as_secs_f64(),
    }
}

impl EfficiencyReport {
    /// Plain-text lines; wall-clock figures only with `timing`, so reports
    /// stay reproducible by default.
    pub fn lines(&self, timing: bool) -> Vec<String> {
        let mut out = vec![
            format!("evaluations: {}", self.evaluations),
            format!("possible solutions: {}", self.space),
            format!("fraction evaluated: {:.3}", self.fraction),
        ];
        if timing {
            out.push(format!("wall time: {:.3} s", self.wall_time.as_secs_f64()));
            out.push(format!("mean evaluation time: {:.6} s", self.mean_eval_time.as_secs_f64()));
            out.push(format!("projected exhaustive time: {:.3e} s", self.projected_exhaustive_s));
            out.push(format!(
                "exhaustive enumeration within {:.0} s budget: {}",
                self.budget.as_secs_f64(),
                if self.enumeration_feasible { "yes" } else { "no (infeasible)" }
            ));
        }
        out
    }
}

/// Objectives of every front member re-evaluated by another evaluator.
pub fn cross_evaluate<T: Scalar, E: Evaluator<T> + ?Sized>(
    front: &ParetoFront<T>,
    evaluator: &E,
    jobs: Option<usize>,
) -> Result<Vec<ObjectiveVector<T>>, ValidationError> {
    let genomes: Vec<Genome> = front.members.iter().map(|m| m.genome.clone()).collect();
    Ok(evaluate_batch(evaluator, &genomes, jobs)?)
}

/// Share of `vectors` strictly dominated by some member of `front`.
pub fn dominated_fraction<T: Scalar>(vectors: &[ObjectiveVector<T>], front: &ParetoFront<T>) -> f64 {
    if vectors.is_empty() {
        return 0.0;
    }
    let dominated = vectors
        .iter()
        .filter(|v| front.members.iter().any(|m| m.objectives.dominates(v)))
        .count();
    dominated as f64 / vectors.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPeriodContrast<T> {
    pub labels: [String; 2],
    pub front_sizes: [usize; 2],
    /// Front `i` re-evaluated under the other event.
    pub cross_objectives: [Vec<ObjectiveVector<T>>; 2],
    /// Share of front `i`, under the other event, dominated by the other front.
    pub dominated_fraction: [f64; 2],
    /// Front `i` is non-dominated and reproduces its objectives under its own event.
    pub self_consistent: [bool; 2],
}

/// Cross-evaluates two fronts optimized under different storms.
pub fn return_period_contrast<T: Scalar, E: Evaluator<T> + ?Sized>(
    labels: [&str; 2],
    evaluators: [&E; 2],
    fronts: [&ParetoFront<T>; 2],
    jobs: Option<usize>,
) -> Result<ReturnPeriodContrast<T>, ValidationError> {
    let mut cross = [Vec::new(), Vec::new()];
    let mut fraction = [0.0; 2];
    let mut consistent = [false; 2];
    for i in 0..2 {
        let other = 1 - i;
        cross[i] = cross_evaluate(fronts[i], evaluators[other], jobs)?;
        fraction[i] = dominated_fraction(&cross[i], fronts[other]);
        let own = cross_evaluate(fronts[i], evaluators[i], jobs)?;
        let reproduced = own.iter().zip(&fronts[i].members).all(|(o, m)| *o == m.objectives);
        consistent[i] = fronts[i].audit() && reproduced;
    }
    Ok(ReturnPeriodContrast {
        labels: labels.map(str::to_string),
        front_sizes: [fronts[0].len(), fronts[1].len()],
        cross_objectives: cross,
        dominated_fraction: fraction,
        self_consistent: consistent,
    })
}

impl<T: Scalar> ReturnPeriodContrast<T> {
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..2 {
            let other = 1 - i;
            out.push(format!(
                "front {} ({} members, self-consistent: {}): {:.3} dominated under {}",
                self.labels[i],
                self.front_sizes[i],
                if self.self_consistent[i] { "yes" } else { "no" },
                self.dominated_fraction[i],
                self.labels[other]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskMatch<T> {
    pub risk: u32,
    pub coarse_cost: T,
    /// Cheapest finer member with risk at or below `risk`.
    pub fine_cost: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationComparison<T> {
    pub coarse_zones: usize,
    pub fine_zones: usize,
    pub matches: Vec<RiskMatch<T>>,
    /// Coarse risk levels the finer front does not reach.
    pub unmatched: Vec<u32>,
}

impl<T: Scalar> DiscretizationComparison<T> {
    /// The finer front is no more expensive at any common risk level.
    pub fn holds(&self) -> bool {
        self.matches.iter().all(|m| m.fine_cost <= m.coarse_cost)
    }

    pub fn violations(&self) -> impl Iterator<Item = &RiskMatch<T>> {
        self.matches.iter().filter(|m| m.fine_cost > m.coarse_cost)
    }
}

/// For each risk level on the coarse front, compares the cheapest coarse and
/// fine members with risk at or below it.
pub fn compare_discretizations<T: Scalar>(coarse: &ParetoFront<T>, fine: &ParetoFront<T>) -> DiscretizationComparison<T> {
    let cheapest = |front: &ParetoFront<T>, risk: u32| {
        front
            .members
            .iter()
            .filter(|m| m.objectives.risk <= risk)
            .map(|m| m.objectives.cost)
            .fold(None, |best: Option<T>, c| Some(best.map_or(c, |b| if c < b { c } else { b })))
    };
    let mut risks: Vec<u32> = coarse.members.iter().map(|m| m.objectives.risk).collect();
    risks.sort_unstable();
    risks.dedup();
    let mut matches = Vec::new();
    let mut unmatched = Vec::new();
    for risk in risks {
        let coarse_cost = cheapest(coarse, risk).expect("risk level taken from the coarse front");
        match cheapest(fine, risk) {
            Some(fine_cost) => matches.push(RiskMatch { risk, coarse_cost, fine_cost }),
            None => unmatched.push(risk),
        }
    }
    DiscretizationComparison {
        coarse_zones: coarse.zone_count().unwrap_or(0),
        fine_zones: fine.zone_count().unwrap_or(0),
        matches,
        unmatched,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::FnEvaluator;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ov(cost: f64, risk: u32) -> ObjectiveVector<f64> {
        ObjectiveVector::new(cost, risk)
    }

    fn member(bits: &str, cost: f64, risk: u32) -> FrontMember<f64> {
        FrontMember { genome: bits.parse().unwrap(), objectives: ov(cost, risk), generation_found: None }
    }

    /// Keeps exactly the vectors nobody dominates, by brute force.
    fn peel(all: &[FrontMember<f64>]) -> Vec<Genome> {
        let mut keep: Vec<Genome> = all
            .iter()
            .filter(|a| !all.iter().any(|b| b.objectives.dominates(&a.objectives)))
            .map(|m| m.genome.clone())
            .collect();
        keep.sort();
        keep
    }

    fn table_evaluator(n: usize, seed: u64) -> FnEvaluator<impl Fn(&Genome) -> Result<ObjectiveVector<f64>, crate::objectives::EvalError>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let costs: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10.0f64).round()).collect();
        let gains: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        FnEvaluator::new(n, move |g: &Genome| {
            let cost = g.active().map(|j| costs[j]).sum();
            let saved: u32 = g.active().map(|j| gains[j]).sum();
            Ok(ov(cost, 20u32.saturating_sub(saved)))
        })
    }

    #[test]
    fn filter_matches_peeling_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let size = rng.gen_range(1..60);
            let all: Vec<FrontMember<f64>> = (0..size)
                .map(|i| FrontMember {
                    genome: Genome::from_index(i as u64, 8),
                    objectives: ov(rng.gen_range(0..8) as f64, rng.gen_range(0..8)),
                    generation_found: None,
                })
                .collect();
            let front = ParetoFront::from_candidates(all.clone(), FrontSource::Oracle);
            let mut got: Vec<Genome> = front.members.iter().map(|m| m.genome.clone()).collect();
            got.sort();
            assert_eq!(got, peel(&all));
            assert!(front.audit());
        }
    }

    #[test]
    fn single_zone_enumeration() {
        let both = FnEvaluator::new(1, |g: &Genome| Ok(if g.get(0) { ov(5.0, 1) } else { ov(0.0, 3) }));
        let e = enumerate_all(&both, DEFAULT_ENUMERATION_CAP, None).unwrap();
        assert_eq!(e.repository.len(), 2);
        assert_eq!(e.front.len(), 2);
        let one = FnEvaluator::new(1, |g: &Genome| Ok(if g.get(0) { ov(5.0, 3) } else { ov(0.0, 3) }));
        let e = enumerate_all(&one, DEFAULT_ENUMERATION_CAP, None).unwrap();
        assert_eq!(e.front.members, vec![member("0", 0.0, 3)]);
    }

    #[test]
    fn enumeration_is_lexicographic_and_matches_peeling() {
        let eval = table_evaluator(6, 11);
        let e = enumerate_all(&eval, DEFAULT_ENUMERATION_CAP, Some(2)).unwrap();
        let order: Vec<String> = e.repository.iter().map(|(g, _)| g.to_string()).collect();
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted);
        assert_eq!(order.len(), 64);
        let all: Vec<FrontMember<f64>> = e
            .repository
            .evaluated()
            .map(|(g, o, _)| FrontMember { genome: g.clone(), objectives: o, generation_found: None })
            .collect();
        let mut got: Vec<Genome> = e.front.members.iter().map(|m| m.genome.clone()).collect();
        got.sort();
        assert_eq!(got, peel(&all));
    }

    #[test]
    fn cap_refusal_names_the_count() {
        let eval = table_evaluator(20, 1);
        let err = enumerate_all(&eval, 16, None).unwrap_err();
        assert!(matches!(err, ValidationError::CapExceeded { zones: 20, cap: 16, required: 1_048_576 }));
        assert!(err.to_string().contains("1048576"));
    }

    #[test]
    fn convergence_against_own_final_front() {
        let eval = table_evaluator(10, 3);
        let config = GAConfig::for_zones(10, 7);
        let result = crate::optimizer::run_optimization(&eval, &config).unwrap();
        let own = ParetoFront::from_optimization(&result);
        let (report, _) = convergence_test(&eval, &config, &own, false).unwrap();
        assert!(report.final_converged);
        assert!(report.first_converged.unwrap() <= result.history.last().unwrap().generation);
        assert_eq!(report.history.len(), result.history.len() + 1);
    }

    #[test]
    fn whole_space_initial_population_converges_at_zero() {
        let eval = table_evaluator(2, 4);
        let oracle = enumerate_all(&eval, DEFAULT_ENUMERATION_CAP, None).unwrap().front;
        let config = GAConfig { population_size: 4, max_generations: 5, ..GAConfig::default() };
        let (report, _) = convergence_test(&eval, &config, &oracle, false).unwrap();
        assert_eq!(report.first_converged, Some(0));
        assert_eq!(report.fraction_at_convergence, Some(1.0));
    }

    #[test]
    fn convergence_rejects_mismatched_reference() {
        let eval = table_evaluator(4, 4);
        let reference = ParetoFront::from_candidates([member("101", 1.0, 1)], FrontSource::Oracle);
        let err = convergence_test(&eval, &GAConfig::for_zones(4, 1), &reference, false).unwrap_err();
        assert!(matches!(err, ValidationError::ReferenceMismatch { reference: 3, zones: 4 }));
    }

    #[test]
    fn contribution_examples() {
        let ids: Vec<String> = (1..=3).map(|i| i.to_string()).collect();
        let ones = ParetoFront::from_candidates([member("111", 3.0, 0)], FrontSource::Oracle);
        assert_eq!(zone_contribution(&ones, &ids).unwrap().fractions, vec![1.0; 3]);
        let both = ParetoFront::from_candidates([member("000", 0.0, 3), member("111", 3.0, 0)], FrontSource::Oracle);
        let c = zone_contribution(&both, &ids).unwrap();
        assert_eq!(c.fractions, vec![0.5; 3]);
        assert_eq!(c.bands, vec![2; 3]);
        let zeros = ParetoFront::from_candidates([member("000", 0.0, 3)], FrontSource::Oracle);
        assert_eq!(zone_contribution(&zeros, &ids).unwrap().bands, vec![0; 3]);
        let empty = ParetoFront::<f64> { members: vec![], source: FrontSource::Oracle };
        assert!(matches!(zone_contribution(&empty, &ids), Err(ValidationError::EmptyFront)));
        // zone 0 in 10 of 11 members: over 90%, top band
        let mut members = vec![FrontMember { genome: Genome::zeros(5), objectives: ov(0.0, 11), generation_found: None }];
        members.extend((0..10u64).map(|i| FrontMember {
            genome: Genome::from_index(16 + i, 5),
            objectives: ov(1.0 + i as f64, 10 - i as u32),
            generation_found: None,
        }));
        let front = ParetoFront::from_candidates(members, FrontSource::Oracle);
        assert_eq!(front.len(), 11);
        let ids5: Vec<String> = (1..=5).map(|i| i.to_string()).collect();
        let c = zone_contribution(&front, &ids5).unwrap();
        assert!(c.fractions[0] > 0.9);
        assert_eq!(c.bands[0], 4);
        let band = |count: usize, total: usize| (5 * count / total).min(4);
        assert_eq!(band(91, 100), 4);
        assert_eq!(band(20, 100), 1);
        assert_eq!(band(19, 100), 0);
        assert_eq!(band(100, 100), 4);
    }

    #[test]
    fn efficiency_arithmetic() {
        let r = efficiency_report(246, 10, Duration::from_secs(246), Duration::from_secs(3600));
        assert_eq!(format!("{:.3}", r.fraction), "0.240");
        assert_eq!(r.space, 1024);
        assert!((r.projected_exhaustive_s - 1024.0).abs() < 1e-9);
        assert!(r.enumeration_feasible);
        let full = efficiency_report(1024, 10, Duration::from_millis(1024), Duration::from_secs(1));
        assert_eq!(full.fraction, 1.0);
        let huge = efficiency_report(10_000, 40, Duration::from_secs(10), Duration::from_secs(86_400 * 365));
        assert!(!huge.enumeration_feasible);
        assert!(huge.lines(true).iter().any(|l| l.contains("infeasible")));
        assert_eq!(huge.lines(false).len(), 3);
    }

    #[test]
    fn csv_round_trip() {
        let front = ParetoFront::from_candidates(
            [member("0011", 0.1 + 0.2, 2), member("0000", 0.0, 5)],
            FrontSource::Oracle,
        );
        let mut buf = Vec::new();
        front.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("genome_bits,cost,risk,generation_found\n0000,0,5,\n"));
        let back = ParetoFront::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, front);
        assert!(ParetoFront::<f64>::read_csv("bits\n".as_bytes()).is_err());
    }

    #[test]
    fn dominated_share_and_discretization_matching() {
        let front = ParetoFront::from_candidates([member("00", 0.0, 4), member("11", 2.0, 1)], FrontSource::Oracle);
        assert_eq!(dominated_fraction(&[ov(1.0, 4), ov(2.0, 1), ov(0.0, 4)], &front), 1.0 / 3.0);
        let coarse = ParetoFront::from_candidates([member("00", 0.0, 4), member("01", 3.0, 2), member("11", 6.0, 0)], FrontSource::Oracle);
        let fine = ParetoFront::from_candidates([member("0000", 0.0, 4), member("0001", 2.0, 3), member("0011", 3.0, 2)], FrontSource::Oracle);
        let cmp = compare_discretizations(&coarse, &fine);
        assert_eq!(cmp.unmatched, vec![0]);
        assert_eq!(cmp.matches.len(), 2);
        assert!(cmp.holds());
        let worse = ParetoFront::from_candidates([member("0000", 0.5, 4)], FrontSource::Oracle);
        assert!(!compare_discretizations(&coarse, &worse).holds());
    }
}
