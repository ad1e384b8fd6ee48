//! Multi-objective memetic evolutionary strategy.
//!
//! Every generation each parent produces one mutant, the mutant's active
//! constants take one Newton step, and the mutant joins the candidate pool
//! only if its `(loss, complexity)` pair is not already present. The next
//! population is chosen from the pool by non-dominated sorting, truncating
//! the last admitted front by crowding distance.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgp::{CgpParams, ConstInit, Genotype};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::{self, loss_with_derivatives, newton_step};

/// Random source of a single run.
pub type RunRng = ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub genotype: Genotype,
    /// Training MSE, `+∞` when not finite.
    pub loss: f64,
    pub complexity: usize,
}

impl Individual {
    /// Evaluates `genotype` as is (no learning).
    pub fn evaluate(genotype: Genotype, params: &CgpParams, data: &Dataset) -> Result<Self> {
        let loss = loss::mse_loss(&genotype, params, data)?;
        Ok(Self::with_loss(genotype, params, loss))
    }

    /// Applies one Newton step to the active constants, then evaluates.
    pub fn learn(genotype: Genotype, params: &CgpParams, data: &Dataset) -> Result<Self> {
        let program = genotype.program(params);
        if !program.reads_constants() {
            // Nothing can be active; the step would leave c untouched.
            return Self::evaluate(genotype, params, data);
        }
        let report = loss_with_derivatives(&genotype, params, data)?;
        let constants = newton_step(&genotype.constants, &report);
        if constants == genotype.constants {
            return Ok(Self::with_loss(genotype, params, report.loss));
        }
        Self::evaluate(
            Genotype {
                genes: genotype.genes,
                constants,
            },
            params,
            data,
        )
    }

    fn with_loss(genotype: Genotype, params: &CgpParams, loss: f64) -> Self {
        let complexity = genotype.complexity(params);
        Self {
            genotype,
            loss: if loss.is_finite() { loss } else { f64::INFINITY },
            complexity,
        }
    }

    /// Exact fitness identity used by the diversity filter.
    pub fn fitness_key(&self) -> (u64, usize) {
        (self.loss.to_bits(), self.complexity)
    }

    /// Pareto dominance over `(loss, complexity)`. A finite loss dominates
    /// any non-finite one; two non-finite losses compare by complexity.
    pub fn dominates(&self, other: &Self) -> bool {
        match (self.loss.is_finite(), other.loss.is_finite()) {
            (true, false) => true,
            (false, true) => false,
            (false, false) => self.complexity < other.complexity,
            (true, true) => {
                self.loss <= other.loss
                    && self.complexity <= other.complexity
                    && (self.loss < other.loss || self.complexity < other.complexity)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomesConfig {
    pub population_size: usize,
    pub generations: usize,
    pub max_mutations: usize,
    pub cgp: CgpParams,
    #[serde(default)]
    pub const_init: ConstInit,
    pub seed: u64,
}

impl MomesConfig {
    pub fn validate(&self) -> Result<()> {
        self.cgp.validate()?;
        if self.population_size < 2 {
            return Err(Error::InvalidParams("population_size must be ≥ 2".into()));
        }
        if self.generations < 1 {
            return Err(Error::InvalidParams("generations must be ≥ 1".into()));
        }
        if self.max_mutations < 1 {
            return Err(Error::InvalidParams("max_mutations must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Fronts `F1, F2, …` as index lists into `pool`, each in ascending index
/// order.
pub fn non_dominated_sort(pool: &[Individual]) -> Vec<Vec<usize>> {
    let n = pool.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if pool[i].dominates(&pool[j]) {
                dominates[i].push(j);
                dominated_by[j] += 1;
            } else if pool[j].dominates(&pool[i]) {
                dominates[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
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

/// Crowding distance over `(loss, complexity)`. Boundary members get `+∞`.
/// The loss axis is skipped when it is not finite throughout.
pub fn crowding_distances(front: &[Individual]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let losses: Vec<f64> = front.iter().map(|i| i.loss).collect();
    let complexities: Vec<f64> = front.iter().map(|i| i.complexity as f64).collect();
    let mut axes = vec![complexities];
    if losses.iter().all(|l| l.is_finite()) {
        axes.insert(0, losses);
    }
    for values in &axes {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = values[order[n - 1]] - values[order[0]];
        if range <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            dist[w[1]] += (values[w[2]] - values[w[0]]) / range;
        }
    }
    dist
}

/// Indices (ascending) of the `k` members kept by crowding truncation. Ties
/// are broken by lower complexity, then lower loss, then position.
pub fn crowding_select(front: &[Individual], k: usize) -> Vec<usize> {
    let dist = crowding_distances(front);
    let mut order: Vec<usize> = (0..front.len()).collect();
    order.sort_by(|&a, &b| {
        dist[b]
            .total_cmp(&dist[a])
            .then(front[a].complexity.cmp(&front[b].complexity))
            .then(front[a].loss.total_cmp(&front[b].loss))
            .then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = order.into_iter().take(k).collect();
    keep.sort_unstable();
    keep
}

/// Keeps the `k` most isolated members of `front`, in their original order.
pub fn crowding_truncate(front: &[Individual], k: usize) -> Vec<Individual> {
    crowding_select(front, k)
        .into_iter()
        .map(|i| front[i].clone())
        .collect()
}

/// Whole fronts while they fit, then the crowding-truncated next front.
pub fn select(pool: Vec<Individual>, size: usize) -> Vec<Individual> {
    let fronts = non_dominated_sort(&pool);
    let mut chosen = Vec::with_capacity(size);
    for front in fronts {
        let room = size - chosen.len();
        if room == 0 {
            break;
        }
        if front.len() <= room {
            chosen.extend(front);
        } else {
            let members: Vec<Individual> = front.iter().map(|&i| pool[i].clone()).collect();
            chosen.extend(crowding_select(&members, room).into_iter().map(|i| front[i]));
        }
    }
    let mut pool: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    chosen
        .into_iter()
        .map(|i| pool[i].take().expect("each index chosen once"))
        .collect()
}

/// Parents plus learned mutants, filtered for fitness diversity.
pub fn candidate_pool<R: rand::Rng + ?Sized>(
    parents: &[Individual],
    data: &Dataset,
    cfg: &MomesConfig,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    let mutants: Vec<Genotype> = parents
        .iter()
        .map(|p| p.genotype.mutate(&cfg.cgp, cfg.max_mutations, rng))
        .collect();
    let mut pool = parents.to_vec();
    let mut seen: HashSet<(u64, usize)> = pool.iter().map(Individual::fitness_key).collect();
    for g in mutants {
        let child = Individual::learn(g, &cfg.cgp, data)?;
        if seen.insert(child.fitness_key()) {
            pool.push(child);
        }
    }
    Ok(pool)
}

pub fn evolve_generation<R: rand::Rng + ?Sized>(
    parents: &[Individual],
    data: &Dataset,
    cfg: &MomesConfig,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    let pool = candidate_pool(parents, data, cfg, rng)?;
    Ok(select(pool, cfg.population_size))
}

/// Initial population: random genotypes with one Newton step each. Draws
/// are repeated until fitness tuples are distinct, up to a bounded number of
/// attempts.
pub fn initial_population<R: rand::Rng + ?Sized>(
    data: &Dataset,
    cfg: &MomesConfig,
    rng: &mut R,
) -> Result<Vec<Individual>> {
    let np = cfg.population_size;
    let mut population = Vec::with_capacity(np);
    let mut seen = HashSet::new();
    let mut attempts = 0;
    while population.len() < np {
        let g = Genotype::random(&cfg.cgp, rng, &cfg.const_init);
        let ind = Individual::learn(g, &cfg.cgp, data)?;
        attempts += 1;
        if seen.insert(ind.fitness_key()) || attempts > 100 * np {
            population.push(ind);
        }
    }
    Ok(population)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontMember {
    pub genes: Vec<usize>,
    pub constants: Vec<f64>,
    pub infix: String,
    #[serde(with = "finite_or_null")]
    pub loss: f64,
    pub complexity: usize,
}

impl FrontMember {
    pub fn genotype(&self) -> Genotype {
        Genotype {
            genes: self.genes.clone(),
            constants: self.constants.clone(),
        }
    }
}

/// Non-dominated members sorted by increasing complexity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub members: Vec<FrontMember>,
}

impl ParetoFront {
    pub fn from_population(
        population: &[Individual],
        params: &CgpParams,
        names: Option<&[String]>,
    ) -> Self {
        let Some(first) = non_dominated_sort(population).into_iter().next() else {
            return Self::default();
        };
        let mut members: Vec<FrontMember> = first
            .into_iter()
            .map(|i| {
                let ind = &population[i];
                FrontMember {
                    genes: ind.genotype.genes.clone(),
                    constants: ind.genotype.constants.clone(),
                    infix: ind.genotype.decode_infix(params, names),
                    loss: ind.loss,
                    complexity: ind.complexity,
                }
            })
            .collect();
        members.sort_by(|a, b| {
            a.complexity
                .cmp(&b.complexity)
                .then(b.loss.total_cmp(&a.loss))
        });
        Self { members }
    }

    /// Lowest-loss member (the extreme point of the front).
    pub fn extreme(&self) -> Option<&FrontMember> {
        self.members
            .iter()
            .min_by(|a, b| a.loss.total_cmp(&b.loss).then(a.complexity.cmp(&b.complexity)))
    }

    /// Complexity strictly increases and loss strictly decreases.
    pub fn is_monotone(&self) -> bool {
        self.members
            .windows(2)
            .all(|w| w[0].complexity < w[1].complexity && w[0].loss > w[1].loss)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub generation: usize,
    pub best_loss: f64,
    pub front_size: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub entries: Vec<LogEntry>,
}

impl RunLog {
    pub fn record(&mut self, generation: usize, population: &[Individual]) {
        let best_loss = population
            .iter()
            .map(|i| i.loss)
            .fold(f64::INFINITY, f64::min);
        let front_size = non_dominated_sort(population)
            .first()
            .map_or(0, Vec::len);
        self.entries.push(LogEntry {
            generation,
            best_loss,
            front_size,
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("generation,best_loss,front_size\n");
        for e in &self.entries {
            out.push_str(&format!("{},{:e},{}\n", e.generation, e.best_loss, e.front_size));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub population: Vec<Individual>,
    pub front: ParetoFront,
    pub log: RunLog,
}

/// Generations between two log samples.
pub fn log_interval(generations: usize) -> usize {
    (generations / 1000).max(1)
}

/// A full run seeded from `cfg.seed`.
pub fn run(data: &Dataset, cfg: &MomesConfig) -> Result<RunResult> {
    run_observed(data, cfg, |_, _| {})
}

/// Like [`run`], calling `observe(generation, population)` after the
/// initial population and after every generation.
pub fn run_observed(
    data: &Dataset,
    cfg: &MomesConfig,
    mut observe: impl FnMut(usize, &[Individual]),
) -> Result<RunResult> {
    cfg.validate()?;
    if data.n_features() != cfg.cgp.n_features {
        return Err(Error::DimensionMismatch {
            expected: cfg.cgp.n_features,
            got: data.n_features(),
        });
    }
    let mut rng = RunRng::seed_from_u64(cfg.seed);
    let mut population = initial_population(data, cfg, &mut rng)?;
    let mut log = RunLog::default();
    let every = log_interval(cfg.generations);
    log.record(0, &population);
    observe(0, &population);
    for generation in 1..=cfg.generations {
        population = evolve_generation(&population, data, cfg, &mut rng)?;
        observe(generation, &population);
        if generation % every == 0 || generation == cfg.generations {
            log.record(generation, &population);
        }
    }
    let front = ParetoFront::from_population(&population, &cfg.cgp, Some(data.feature_names()));
    Ok(RunResult {
        seed: cfg.seed,
        population,
        front,
        log,
    })
}

#[derive(Clone, Debug)]
pub struct MultiStart {
    /// One run per seed `cfg.seed + i`, ordered by seed.
    pub runs: Vec<RunResult>,
    /// Index into `runs` of the run whose front extreme has the lowest loss.
    pub best: usize,
}

impl MultiStart {
    pub fn best_run(&self) -> &RunResult {
        &self.runs[self.best]
    }
}

pub fn multi_start(
    data: &Dataset,
    cfg: &MomesConfig,
    n_starts: usize,
    parallelism: usize,
) -> Result<MultiStart> {
    if n_starts == 0 {
        return Err(Error::InvalidParams("n_starts must be ≥ 1".into()));
    }
    let seeds: Vec<u64> = (0..n_starts as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let one = |seed: u64| {
        let cfg = MomesConfig {
            seed,
            ..cfg.clone()
        };
        run(data, &cfg)
    };
    let runs: Vec<RunResult> = if parallelism <= 1 {
        seeds.into_iter().map(one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
        pool.install(|| seeds.into_par_iter().map(one).collect::<Result<_>>())?
    };
    let best = best_extreme(runs.iter().map(|r| &r.front));
    Ok(MultiStart { runs, best })
}

/// Index of the front whose extreme point has the lowest loss; earliest
/// wins ties.
pub fn best_extreme<'a>(fronts: impl Iterator<Item = &'a ParetoFront>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, f) in fronts.enumerate() {
        let loss = f.extreme().map_or(f64::INFINITY, |m| m.loss);
        if loss < best.1 {
            best = (i, loss);
        }
    }
    best.0
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
