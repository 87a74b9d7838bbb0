//! Row-subset selection with two-sided Gram bounds.
//!
//! Starting from the full (Parseval) set of normalized DFT rows, each
//! halving step splits the current rows into two parts whose Gram
//! operators both stay within the targets
//!
//! ```text
//! α·(1 − 5√(δ/α))/2  ≤  G_S  ≤  β·(1 + 5√(δ/α))/2
//! ```
//!
//! and keeps one part. The targets follow the α/β schedule until the lower
//! target first drops below `100δ`. No polynomial algorithm is known for the
//! unweighted split, so candidates come from exhaustive enumeration, seeded
//! random balanced splits, or greedy descent, and every accepted split is
//! certified by its exact Gram eigenvalues.

use std::cmp::Ordering;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{
    build_submatrix, clamp_min, eigen_extremes, frame_certificate, inverse_sqrt, raw_extremes,
    CMatrix, FrameCertificate, MatrixError, RowSelection,
};
use crate::rng;
use crate::spectrum::GridSpectrum;

/// Largest index set the exhaustive partition search accepts.
pub const MAX_EXHAUSTIVE_PARTITION: usize = 24;

/// Largest grid order for the global subset optimum in [`select_rows`].
pub const MAX_EXHAUSTIVE_SUBSET: usize = 20;

/// Stationarity threshold for the infinite product constant.
pub const PRODUCT_TOLERANCE: f64 = 1e-12;

/// Relative tolerance applied to the precondition bounds of a step.
const PRECONDITION_TOLERANCE: f64 = 1e-9;

/// Ratios within this relative distance are ties in the subset optimum.
const RATIO_TIE: f64 = 1e-12;

/// Attempts evaluated together in one parallel batch.
const ATTEMPT_BATCH: usize = 64;

/// Gray-code chunk length; partial Grams are rebuilt at each chunk start.
const GRAY_CHUNK: u64 = 1 << 12;

/// Partition streams use tag `STREAM_PARTITION + step`.
const STREAM_PARTITION: u32 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("delta = {0} outside (0, 1/100)")]
    DeltaOutOfRange(f64),
    #[error("no certified partition: {reason}")]
    NoCertifiedPartition {
        reason: String,
        best: Option<Box<Partition>>,
    },
    #[error("partition step precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("exhaustive search limited to {limit} indices, got {size}")]
    ExhaustiveTooLarge { size: usize, limit: usize },
    #[error("halving step {step} failed: {cause}")]
    HalvingStalled {
        step: usize,
        cause: Box<SelectionError>,
        trace: Box<SelectionTrace>,
    },
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// The α/β schedule driving iterated halving.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalvingSchedule {
    pub delta: f64,
    /// `α_0, …, α_{L+1}`.
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Greatest `L` with `α_L ≥ 100δ`; zero is allowed.
    #[serde(rename = "L")]
    pub stop_index: usize,
    #[serde(rename = "C_product")]
    pub product_constant: f64,
}

impl HalvingSchedule {
    pub fn final_alpha(&self) -> f64 {
        self.alphas[self.stop_index + 1]
    }

    pub fn final_beta(&self) -> f64 {
        self.betas[self.stop_index + 1]
    }
}

/// `Π_{j≥0} (1 + 2^{−1−j/2}) / (1 − 2^{−1−j/2})`, summed until the relative
/// change of the partial product drops below [`PRODUCT_TOLERANCE`].
pub fn product_constant() -> f64 {
    let mut product = 1.0;
    let mut j = 0u32;
    loop {
        let x = (-1.0 - j as f64 / 2.0).exp2();
        let next = product * (1.0 + x) / (1.0 - x);
        if (next - product).abs() < PRODUCT_TOLERANCE * next {
            return next;
        }
        product = next;
        j += 1;
    }
}

pub fn compute_schedule(delta: f64) -> Result<HalvingSchedule, SelectionError> {
    if !(delta > 0.0 && delta < 0.01) {
        return Err(SelectionError::DeltaOutOfRange(delta));
    }
    let floor = 100.0 * delta;
    let mut alphas = vec![1.0];
    let mut betas = vec![1.0];
    loop {
        let alpha = alphas[alphas.len() - 1];
        let beta = betas[betas.len() - 1];
        let gamma = 5.0 * (delta / alpha).sqrt();
        alphas.push(alpha * (1.0 - gamma) / 2.0);
        betas.push(beta * (1.0 + gamma) / 2.0);
        if alphas[alphas.len() - 1] < floor {
            break;
        }
    }
    Ok(HalvingSchedule {
        delta,
        stop_index: alphas.len() - 2,
        alphas,
        betas,
        product_constant: product_constant(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exhaustive,
    RandomCertified,
    GreedySwap,
}

impl FromStr for Method {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exhaustive" => Ok(Method::Exhaustive),
            "random_certified" | "random-certified" => Ok(Method::RandomCertified),
            "greedy_swap" | "greedy-swap" => Ok(Method::GreedySwap),
            other => Err(SelectionError::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub method: Method,
    pub seed: u64,
    pub max_attempts: usize,
    /// Multiplicative relaxation of the step targets.
    pub slack: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            method: Method::RandomCertified,
            seed: 0,
            max_attempts: 1000,
            slack: 0.05,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.max_attempts == 0 {
            return Err(SelectionError::InvalidConfig("max_attempts must be positive".into()));
        }
        if !(self.slack >= 0.0 && self.slack.is_finite()) {
            return Err(SelectionError::InvalidConfig(format!("slack {} must be >= 0", self.slack)));
        }
        Ok(())
    }
}

/// Lower and upper target for both parts of a split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Targets {
    pub lower: f64,
    pub upper: f64,
}

impl Targets {
    /// Targets for vectors with squared norms at most `delta` whose frame
    /// operator lies between `alpha` and `beta`.
    pub fn for_step(delta: f64, alpha: f64, beta: f64) -> Self {
        let gamma = 5.0 * (delta / alpha).sqrt();
        Targets {
            lower: alpha * (1.0 - gamma) / 2.0,
            upper: beta * (1.0 + gamma) / 2.0,
        }
    }

    /// Worst factor by which a part with extremes `(lo, hi)` misses the
    /// targets; a part is certified at slack `s` when this is `≤ 1 + s`.
    fn excess(&self, lo: f64, hi: f64) -> f64 {
        if !(lo > 0.0) {
            return f64::INFINITY;
        }
        let upper = hi / self.upper;
        let lower = if self.lower > 0.0 { self.lower / lo } else { 0.0 };
        upper.max(lower)
    }
}

/// A two-part split of `k` vectors, indices local to the input list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    /// Gram extremes `(λ_min, λ_max)` of each part on the original vectors.
    pub first_bounds: (f64, f64),
    pub second_bounds: (f64, f64),
    /// Same extremes after whitening; the two part Grams sum to the identity.
    pub whitened_first: (f64, f64),
    pub whitened_second: (f64, f64),
    pub targets: Targets,
    /// Worst target miss factor over both parts.
    pub score: f64,
    pub method: Method,
}

impl Partition {
    pub fn is_certified(&self, slack: f64) -> bool {
        self.score <= 1.0 + slack
    }
}

/// Outer products `v_i v_i*` of the rows of a `k×n` matrix (row `i` is `v_i*`).
fn outer_products(rows: &CMatrix) -> Vec<CMatrix> {
    (0..rows.nrows())
        .map(|i| {
            let r = rows.row(i);
            r.adjoint() * r
        })
        .collect()
}

fn subset_gram(products: &[CMatrix], subset: &[usize], n: usize) -> CMatrix {
    let mut g = CMatrix::zeros(n, n);
    for &i in subset {
        g += &products[i];
    }
    g
}

fn extremes(g: &CMatrix) -> (f64, f64) {
    let (lo, hi) = raw_extremes(g);
    (clamp_min(lo, hi), hi)
}

/// Whitened rows `U = V·M^{-1/2}`; then `U*U = I`.
pub fn whiten(rows: &CMatrix) -> Result<CMatrix, SelectionError> {
    let frame = rows.adjoint() * rows;
    Ok(rows * inverse_sqrt(&frame)?)
}

struct StepProblem<'a> {
    rows: &'a CMatrix,
    products: Vec<CMatrix>,
    total: CMatrix,
    targets: Targets,
    n: usize,
}

impl StepProblem<'_> {
    fn k(&self) -> usize {
        self.products.len()
    }

    /// Score of the split whose first part has Gram `g1`.
    fn score_first_gram(&self, g1: &CMatrix) -> f64 {
        let (lo1, hi1) = extremes(g1);
        let (lo2, hi2) = extremes(&(&self.total - g1));
        self.targets.excess(lo1, hi1).max(self.targets.excess(lo2, hi2))
    }

    fn finish(&self, mut first: Vec<usize>, method: Method) -> Result<Partition, SelectionError> {
        first.sort_unstable();
        let second: Vec<usize> = (0..self.k()).filter(|i| first.binary_search(i).is_err()).collect();
        let g1 = subset_gram(&self.products, &first, self.n);
        let g2 = subset_gram(&self.products, &second, self.n);
        let first_bounds = extremes(&g1);
        let second_bounds = extremes(&g2);
        let score = self
            .targets
            .excess(first_bounds.0, first_bounds.1)
            .max(self.targets.excess(second_bounds.0, second_bounds.1));
        let white = whiten(self.rows)?;
        let wp = outer_products(&white);
        let whitened_first = extremes(&subset_gram(&wp, &first, self.n));
        let whitened_second = extremes(&subset_gram(&wp, &second, self.n));
        Ok(Partition {
            first,
            second,
            first_bounds,
            second_bounds,
            whitened_first,
            whitened_second,
            targets: self.targets,
            score,
            method,
        })
    }
}

/// Split `k` vectors (the rows of `vectors`, row `i` holding `v_i*`) into two
/// parts that both meet the step targets derived from `alpha` and `beta`.
pub fn partition_step(
    vectors: &CMatrix,
    alpha: f64,
    beta: f64,
    cfg: &SelectionConfig,
) -> Result<Partition, SelectionError> {
    partition_step_salted(vectors, alpha, beta, cfg, 0)
}

fn partition_step_salted(
    vectors: &CMatrix,
    alpha: f64,
    beta: f64,
    cfg: &SelectionConfig,
    salt: u32,
) -> Result<Partition, SelectionError> {
    cfg.validate()?;
    let k = vectors.nrows();
    let n = vectors.ncols();
    if cfg.method == Method::Exhaustive && k > MAX_EXHAUSTIVE_PARTITION {
        return Err(SelectionError::ExhaustiveTooLarge { size: k, limit: MAX_EXHAUSTIVE_PARTITION });
    }
    if k < 2 {
        return Err(SelectionError::NoCertifiedPartition {
            reason: format!("{k} vector(s) cannot be split into two nonempty parts"),
            best: None,
        });
    }
    let delta = (0..k).map(|i| vectors.row(i).norm_squared()).fold(0.0, f64::max);
    if !(alpha > delta) {
        return Err(SelectionError::NoCertifiedPartition {
            reason: format!("alpha = {alpha} must exceed the largest squared norm {delta}"),
            best: None,
        });
    }
    let products = outer_products(vectors);
    let total = subset_gram(&products, &(0..k).collect::<Vec<_>>(), n);
    let (lo, hi) = eigen_extremes(&total)?;
    if lo < alpha * (1.0 - PRECONDITION_TOLERANCE) || hi > beta * (1.0 + PRECONDITION_TOLERANCE) {
        return Err(SelectionError::PreconditionViolated(format!(
            "frame operator spectrum [{lo}, {hi}] not inside [{alpha}, {beta}]"
        )));
    }
    let problem = StepProblem {
        rows: vectors,
        products,
        total,
        targets: Targets::for_step(delta, alpha, beta),
        n,
    };
    let best = match cfg.method {
        Method::Exhaustive => exhaustive_split(&problem)?,
        Method::RandomCertified => random_split(&problem, cfg, salt)?,
        Method::GreedySwap => greedy_split(&problem, cfg, salt)?,
    };
    if best.is_certified(cfg.slack) {
        Ok(best)
    } else {
        Err(SelectionError::NoCertifiedPartition {
            reason: format!(
                "best {:?} split misses targets [{}, {}] by factor {} (slack {})",
                cfg.method, problem.targets.lower, problem.targets.upper, best.score, cfg.slack
            ),
            best: Some(Box::new(best)),
        })
    }
}

/// Keep the lower score; ties go to the earlier candidate.
fn better(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    match a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) {
        Ordering::Greater => b,
        _ => a,
    }
}

fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

/// Element 0 stays in the first part; bit `b` of the Gray code puts element
/// `b + 1` there as well. Returns the best-scoring split.
fn exhaustive_split(problem: &StepProblem<'_>) -> Result<Partition, SelectionError> {
    let k = problem.k();
    let count = 1u64 << (k - 1);
    let chunks: Vec<u64> = (0..count.div_ceil(GRAY_CHUNK)).collect();
    let winners: Vec<(f64, u64)> = chunks
        .par_iter()
        .map(|&c| {
            let start = c * GRAY_CHUNK;
            let end = (start + GRAY_CHUNK).min(count);
            let members = members_of(gray(start), k);
            let mut g1 = subset_gram(&problem.products, &members, problem.n);
            let mut best = (problem.score_first_gram(&g1), start);
            for i in start + 1..end {
                let element = i.trailing_zeros() as usize + 1;
                if gray(i) >> (element - 1) & 1 == 1 {
                    g1 += &problem.products[element];
                } else {
                    g1 -= &problem.products[element];
                }
                best = better(best, (problem.score_first_gram(&g1), i));
            }
            best
        })
        .collect();
    let (_, index) = winners.into_iter().reduce(better).expect("at least one chunk");
    problem.finish(members_of(gray(index), k), Method::Exhaustive)
}

/// Split of `vectors` minimizing `max(λ_max(S_1), λ_max(S_2))` over all
/// `2^{k−1}` partitions (element 0 in the first part, which may be the whole
/// set). Returns the first part and the minimax value.
pub fn min_max_partition(vectors: &CMatrix) -> Result<(Vec<usize>, f64), SelectionError> {
    let k = vectors.nrows();
    if k > MAX_EXHAUSTIVE_PARTITION {
        return Err(SelectionError::ExhaustiveTooLarge { size: k, limit: MAX_EXHAUSTIVE_PARTITION });
    }
    if k == 0 {
        return Err(SelectionError::InvalidConfig("no vectors to split".into()));
    }
    let n = vectors.ncols();
    let products = outer_products(vectors);
    let total = subset_gram(&products, &(0..k).collect::<Vec<_>>(), n);
    let value = |g1: &CMatrix| raw_extremes(g1).1.max(raw_extremes(&(&total - g1)).1);
    let count = 1u64 << (k - 1);
    let chunks: Vec<u64> = (0..count.div_ceil(GRAY_CHUNK)).collect();
    let (best, index) = chunks
        .par_iter()
        .map(|&c| {
            let start = c * GRAY_CHUNK;
            let end = (start + GRAY_CHUNK).min(count);
            let mut g1 = subset_gram(&products, &members_of(gray(start), k), n);
            let mut best = (value(&g1), start);
            for i in start + 1..end {
                let element = i.trailing_zeros() as usize + 1;
                if gray(i) >> (element - 1) & 1 == 1 {
                    g1 += &products[element];
                } else {
                    g1 -= &products[element];
                }
                best = better(best, (value(&g1), i));
            }
            best
        })
        .reduce_with(better)
        .expect("at least one chunk");
    Ok((members_of(gray(index), k), best))
}

fn members_of(mask: u64, k: usize) -> Vec<usize> {
    std::iter::once(0)
        .chain((1..k).filter(|&e| mask >> (e - 1) & 1 == 1))
        .collect()
}

fn random_balanced(k: usize, seed: u64, salt: u32, attempt: u32) -> Vec<usize> {
    let mut order: Vec<usize> = (0..k).collect();
    let mut rng = rng::stream(seed, STREAM_PARTITION + salt, attempt);
    order.shuffle(&mut rng);
    order.truncate(k / 2);
    order.sort_unstable();
    order
}

/// Seeded balanced splits; the lowest certified attempt index wins.
fn random_split(
    problem: &StepProblem<'_>,
    cfg: &SelectionConfig,
    salt: u32,
) -> Result<Partition, SelectionError> {
    let k = problem.k();
    let mut best: Option<(f64, u64)> = None;
    let mut start = 0usize;
    while start < cfg.max_attempts {
        let end = (start + ATTEMPT_BATCH).min(cfg.max_attempts);
        let scores: Vec<(f64, u64)> = (start..end)
            .into_par_iter()
            .map(|t| {
                let first = random_balanced(k, cfg.seed, salt, t as u32);
                let g1 = subset_gram(&problem.products, &first, problem.n);
                (problem.score_first_gram(&g1), t as u64)
            })
            .collect();
        if let Some(&hit) = scores.iter().find(|s| s.0 <= 1.0 + cfg.slack) {
            best = Some(hit);
            break;
        }
        best = scores.into_iter().chain(best).reduce(better);
        start = end;
    }
    let (_, attempt) = best.expect("max_attempts is positive");
    let first = random_balanced(k, cfg.seed, salt, attempt as u32);
    problem.finish(first, Method::RandomCertified)
}

/// Single-element moves that lower `max(λ_max(W_1), λ_max(W_2))` on the
/// whitened rows, started from the seeded balanced split of attempt 0.
fn greedy_split(
    problem: &StepProblem<'_>,
    cfg: &SelectionConfig,
    salt: u32,
) -> Result<Partition, SelectionError> {
    let k = problem.k();
    let n = problem.n;
    let white = outer_products(&whiten(problem.rows)?);
    let objective = |g1: &CMatrix| -> f64 {
        let (lo, hi) = raw_extremes(g1);
        hi.max(1.0 - lo)
    };

    let mut in_first = vec![false; k];
    for i in random_balanced(k, cfg.seed, salt, 0) {
        in_first[i] = true;
    }
    let members = |flags: &[bool]| -> Vec<usize> { (0..k).filter(|&i| flags[i]).collect() };
    let mut g1 = subset_gram(&white, &members(&in_first), n);
    let mut current = objective(&g1);
    let mut first_size = in_first.iter().filter(|&&f| f).count();

    for _ in 0..cfg.max_attempts {
        let candidate = (0..k)
            .into_par_iter()
            .filter(|&i| {
                // both parts stay nonempty
                if in_first[i] { first_size > 1 } else { first_size < k - 1 }
            })
            .map(|i| {
                let moved = if in_first[i] { &g1 - &white[i] } else { &g1 + &white[i] };
                (objective(&moved), i as u64)
            })
            .reduce_with(better);
        match candidate {
            Some((value, i)) if value < current => {
                let i = i as usize;
                if in_first[i] {
                    g1 -= &white[i];
                    first_size -= 1;
                } else {
                    g1 += &white[i];
                    first_size += 1;
                }
                in_first[i] = !in_first[i];
                // rebuild to stop drift
                g1 = subset_gram(&white, &members(&in_first), n);
                current = objective(&g1);
            }
            _ => break,
        }
    }
    problem.finish(members(&in_first), Method::GreedySwap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    /// `n/m ≥ 1/100`: every row is kept.
    Trivial,
    Halving,
    /// Global optimum over all row subsets.
    ExhaustiveOptimum,
}

/// One halving step. Bounds are for the Gram of the kept rows scaled by
/// `1/√m`, i.e. `λ/m` in terms of the certificate eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub method: Method,
    pub kept: Vec<usize>,
    pub alpha_target: f64,
    pub beta_target: f64,
    pub achieved_lower: f64,
    pub achieved_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionTrace {
    pub mode: TraceMode,
    pub delta: f64,
    pub schedule: Option<HalvingSchedule>,
    pub steps: Vec<TraceStep>,
    #[serde(rename = "final_J")]
    pub final_rows: Vec<usize>,
    pub final_lower: f64,
    pub final_upper: f64,
}

fn part_preference(a: &[usize], b: &[usize]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// Iterated halving from the full row set down to `J_{L+1}`.
pub fn iterated_halving(
    m: usize,
    cells: &[usize],
    cfg: &SelectionConfig,
) -> Result<(RowSelection, SelectionTrace), SelectionError> {
    cfg.validate()?;
    let grid = GridSpectrum::new(m, cells, 1.0).map_err(|e| {
        SelectionError::InvalidConfig(format!("bad grid: {e}"))
    })?;
    let n = grid.n();
    let delta = n as f64 / m as f64;
    let all: Vec<usize> = (0..m).collect();
    let scale = Complex64::new((m as f64).sqrt().recip(), 0.0);
    let rows = build_submatrix(m, grid.cells(), &all)? * scale;

    if delta >= 0.01 {
        let (lo, hi) = eigen_extremes(&(rows.adjoint() * &rows))?;
        let trace = SelectionTrace {
            mode: TraceMode::Trivial,
            delta,
            schedule: None,
            steps: Vec::new(),
            final_rows: all.clone(),
            final_lower: lo,
            final_upper: hi,
        };
        return Ok((RowSelection::full(m), trace));
    }

    let schedule = compute_schedule(delta)?;
    let mut trace = SelectionTrace {
        mode: TraceMode::Halving,
        delta,
        schedule: Some(schedule.clone()),
        steps: Vec::new(),
        final_rows: all.clone(),
        final_lower: 1.0,
        final_upper: 1.0,
    };
    let mut current = all;
    let mut alpha = 1.0;
    let mut beta = 1.0;
    for step in 0..=schedule.stop_index {
        let vectors = CMatrix::from_fn(current.len(), n, |a, b| rows[(current[a], b)]);
        let mut step_cfg = cfg.clone();
        if cfg.method == Method::Exhaustive && current.len() > MAX_EXHAUSTIVE_PARTITION {
            step_cfg.method = Method::RandomCertified;
        }
        let part = match partition_step_salted(&vectors, alpha, beta, &step_cfg, step as u32) {
            Ok(p) => p,
            Err(cause) => {
                return Err(SelectionError::HalvingStalled {
                    step,
                    cause: Box::new(cause),
                    trace: Box::new(trace),
                })
            }
        };
        let first: Vec<usize> = part.first.iter().map(|&i| current[i]).collect();
        let second: Vec<usize> = part.second.iter().map(|&i| current[i]).collect();
        let (kept, bounds) = match part_preference(&first, &second) {
            Ordering::Greater => (second, part.second_bounds),
            _ => (first, part.first_bounds),
        };
        trace.steps.push(TraceStep {
            method: part.method,
            kept: kept.clone(),
            alpha_target: part.targets.lower,
            beta_target: part.targets.upper,
            achieved_lower: bounds.0,
            achieved_upper: bounds.1,
        });
        alpha = schedule.alphas[step + 1].min(bounds.0);
        beta = schedule.betas[step + 1].max(bounds.1);
        trace.final_rows = kept.clone();
        trace.final_lower = bounds.0;
        trace.final_upper = bounds.1;
        current = kept;
    }
    Ok((RowSelection::new(m, &current)?, trace))
}

#[derive(Debug, Clone, PartialEq)]
struct SubsetCandidate {
    ratio: f64,
    rows: Vec<usize>,
}

fn preferred(a: SubsetCandidate, b: SubsetCandidate) -> SubsetCandidate {
    let tie = if a.ratio.is_infinite() && b.ratio.is_infinite() {
        true
    } else {
        (a.ratio - b.ratio).abs() <= RATIO_TIE * a.ratio.min(b.ratio)
    };
    let order = if tie {
        part_preference(&a.rows, &b.rows)
    } else {
        a.ratio.total_cmp(&b.ratio)
    };
    if order == Ordering::Greater { b } else { a }
}

/// Global minimum of `λ_max/λ_min` over all nonempty row subsets. Ties go to
/// the smaller subset, then the lexicographically smaller one.
pub fn exhaustive_optimum(grid: &GridSpectrum) -> Result<RowSelection, SelectionError> {
    let m = grid.m();
    if m > MAX_EXHAUSTIVE_SUBSET {
        return Err(SelectionError::ExhaustiveTooLarge { size: m, limit: MAX_EXHAUSTIVE_SUBSET });
    }
    let n = grid.n();
    let all: Vec<usize> = (0..m).collect();
    let products = outer_products(&build_submatrix(m, grid.cells(), &all)?);
    let count = 1u64 << m;
    let to_rows = |mask: u64| -> Vec<usize> { (0..m).filter(|&j| mask >> j & 1 == 1).collect() };
    let ratio_of = |g: &CMatrix, size: u32| -> f64 {
        if (size as usize) < n {
            return f64::INFINITY;
        }
        let (lo, hi) = extremes(g);
        if lo > 0.0 { hi / lo } else { f64::INFINITY }
    };

    let chunks: Vec<u64> = (0..count.div_ceil(GRAY_CHUNK)).collect();
    let winners: Vec<Option<SubsetCandidate>> = chunks
        .par_iter()
        .map(|&c| {
            let start = c * GRAY_CHUNK;
            let end = (start + GRAY_CHUNK).min(count);
            let mut mask = gray(start);
            let mut g = subset_gram(&products, &to_rows(mask), n);
            let mut best: Option<SubsetCandidate> = None;
            for i in start..end {
                if i > start {
                    let bit = i.trailing_zeros();
                    mask ^= 1 << bit;
                    if mask >> bit & 1 == 1 {
                        g += &products[bit as usize];
                    } else {
                        g -= &products[bit as usize];
                    }
                }
                if mask == 0 {
                    continue;
                }
                let ratio = ratio_of(&g, mask.count_ones());
                let candidate = SubsetCandidate { ratio, rows: to_rows(mask) };
                best = Some(match best {
                    None => candidate,
                    Some(b) => preferred(b, candidate),
                });
            }
            best
        })
        .collect();
    let best = winners
        .into_iter()
        .flatten()
        .reduce(preferred)
        .expect("at least one nonempty subset");
    Ok(RowSelection::new(m, &best.rows)?)
}

/// Row subset, its certificate (always recomputed from scratch), and the
/// trace of how it was found.
pub fn select_rows(
    grid: &GridSpectrum,
    cfg: &SelectionConfig,
) -> Result<(RowSelection, FrameCertificate, SelectionTrace), SelectionError> {
    cfg.validate()?;
    let m = grid.m();
    let (rows, trace) = if cfg.method == Method::Exhaustive && m <= MAX_EXHAUSTIVE_SUBSET {
        let rows = exhaustive_optimum(grid)?;
        let cert = frame_certificate(grid, &rows)?;
        let trace = SelectionTrace {
            mode: TraceMode::ExhaustiveOptimum,
            delta: grid.n() as f64 / m as f64,
            schedule: None,
            steps: Vec::new(),
            final_rows: rows.indices().to_vec(),
            final_lower: cert.lambda_min / m as f64,
            final_upper: cert.lambda_max / m as f64,
        };
        (rows, trace)
    } else {
        iterated_halving(m, grid.cells(), cfg)?
    };
    let cert = frame_certificate(grid, &rows)?;
    Ok((rows, cert, trace))
}

/// Gram of the whitened part sums for a split of `vectors`: `(G_{S1}, G_{S2})`.
pub fn whitened_part_grams(
    vectors: &CMatrix,
    first: &[usize],
) -> Result<(CMatrix, CMatrix), SelectionError> {
    let white = outer_products(&whiten(vectors)?);
    let n = vectors.ncols();
    let second: Vec<usize> = (0..vectors.nrows()).filter(|i| !first.contains(i)).collect();
    Ok((subset_gram(&white, first, n), subset_gram(&white, &second, n)))
}

/// Rows of `B/√m` for the order-`m` DFT block with columns `cells`.
pub fn normalized_rows(m: usize, cells: &[usize], rows: &[usize]) -> Result<CMatrix, MatrixError> {
    let scale = Complex64::new((m as f64).sqrt().recip(), 0.0);
    Ok(build_submatrix(m, cells, rows)? * scale)
}

/// `Σ_{i∈S} |⟨w, v_i⟩|²` for a unit vector `w`; used by the tests as an
/// independent evaluation of a part's quadratic form.
pub fn part_quadratic_form(vectors: &CMatrix, subset: &[usize], w: &DVector<Complex64>) -> f64 {
    subset
        .iter()
        .map(|&i| (vectors.row(i) * w)[(0, 0)].norm_sqr())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle_schedule(delta: f64) -> (usize, Vec<f64>, Vec<f64>) {
        // plain recursion, independent of compute_schedule's loop shape
        let mut a = vec![1.0f64];
        let mut b = vec![1.0f64];
        while a[a.len() - 1] >= 100.0 * delta {
            let g = 5.0 * (delta / a[a.len() - 1]).sqrt();
            b.push(b[b.len() - 1] * (1.0 + g) / 2.0);
            a.push(a[a.len() - 1] * (1.0 - g) / 2.0);
        }
        (a.len() - 2, a, b)
    }

    #[test]
    fn schedule_examples() {
        let s = compute_schedule(0.009).unwrap();
        assert_eq!(s.stop_index, 0);
        // frozen from the direct recursion
        assert!((s.alphas[1] - 0.262_829_175_487_371_56).abs() < 1e-12);
        assert!(s.alphas[1] >= 0.225 && s.alphas[1] < 0.9);

        let s = compute_schedule(0.001).unwrap();
        assert_eq!(s.stop_index, 2);
        assert!((s.alphas[3] - 0.048_048_074_992_032_966).abs() < 1e-12);
        assert!(s.final_alpha() >= 0.025 && s.final_alpha() < 0.1);

        for delta in [1e-5, 3.3e-4, 0.002, 0.0099] {
            let (l, a, b) = oracle_schedule(delta);
            let s = compute_schedule(delta).unwrap();
            assert_eq!(s.stop_index, l);
            assert_eq!(s.alphas, a);
            assert_eq!(s.betas, b);
            assert!(s.final_alpha() >= 25.0 * delta);
        }
    }

    #[test]
    fn schedule_rejects_bad_delta() {
        for delta in [0.0, -1.0, 0.01, 0.5, f64::NAN] {
            assert!(matches!(compute_schedule(delta), Err(SelectionError::DeltaOutOfRange(_))));
        }
    }

    #[test]
    fn product_constant_value() {
        let mut p = 1.0;
        for j in 0..400 {
            let x = 2f64.powf(-1.0 - j as f64 / 2.0);
            p *= (1.0 + x) / (1.0 - x);
        }
        assert!((product_constant() - p).abs() < 1e-10 * p);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("exhaustive".parse::<Method>().unwrap(), Method::Exhaustive);
        assert_eq!("random-certified".parse::<Method>().unwrap(), Method::RandomCertified);
        assert_eq!("greedy_swap".parse::<Method>().unwrap(), Method::GreedySwap);
        assert!("annealing".parse::<Method>().is_err());
    }

    #[test]
    fn scalar_copies_split_evenly() {
        let half = Complex64::new(0.5, 0.0);
        let v = CMatrix::from_element(4, 1, half);
        let cfg = SelectionConfig { method: Method::Exhaustive, slack: 0.0, ..Default::default() };
        let p = partition_step(&v, 1.0, 1.0, &cfg).unwrap();
        let bound = (1.0 + 0.5f64.sqrt()).powi(2) / 2.0;
        assert!((bound - 1.457_106_781_186_547_5).abs() < 1e-12);
        for bounds in [p.first_bounds, p.second_bounds] {
            assert!(bounds.1 <= bound);
        }
        assert_eq!(p.first.len(), 2);
        assert!((p.first_bounds.1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn min_max_split_of_scalar_copies() {
        let v = CMatrix::from_element(4, 1, Complex64::new(0.5, 0.0));
        let (first, value) = min_max_partition(&v).unwrap();
        assert_eq!(first.len(), 2);
        assert!((value - 0.5).abs() < 1e-12);
        let v = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
        assert_eq!(min_max_partition(&v).unwrap(), (vec![0], 1.0));
        assert!(matches!(
            min_max_partition(&CMatrix::zeros(25, 1)),
            Err(SelectionError::ExhaustiveTooLarge { .. })
        ));
    }

    #[test]
    fn dft_rows_split_exactly_balanced() {
        let v = normalized_rows(4, &[0, 2], &[0, 1, 2, 3]).unwrap();
        let cfg = SelectionConfig { method: Method::Exhaustive, slack: 0.0, ..Default::default() };
        let p = partition_step(&v, 1.0, 1.0, &cfg).unwrap();
        assert_eq!(p.first, vec![0, 1]);
        assert_eq!(p.second, vec![2, 3]);
        for bounds in [p.first_bounds, p.second_bounds] {
            assert!((bounds.0 - 0.5).abs() < 1e-12 && (bounds.1 - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_pair_cannot_be_certified() {
        let v = CMatrix::identity(2, 2);
        for method in [Method::Exhaustive, Method::RandomCertified, Method::GreedySwap] {
            let cfg = SelectionConfig { method, ..Default::default() };
            assert!(matches!(
                partition_step(&v, 1.0, 1.0, &cfg),
                Err(SelectionError::NoCertifiedPartition { .. })
            ));
        }
    }

    #[test]
    fn precondition_on_frame_operator() {
        let v = normalized_rows(8, &[0], &(0..8).collect::<Vec<_>>()).unwrap();
        let cfg = SelectionConfig::default();
        assert!(matches!(
            partition_step(&v, 0.5, 0.9, &cfg),
            Err(SelectionError::PreconditionViolated(_))
        ));
    }

    #[test]
    fn exhaustive_size_limit() {
        let v = normalized_rows(32, &[0], &(0..32).collect::<Vec<_>>()).unwrap();
        let cfg = SelectionConfig { method: Method::Exhaustive, ..Default::default() };
        assert!(matches!(
            partition_step(&v, 1.0, 1.0, &cfg),
            Err(SelectionError::ExhaustiveTooLarge { size: 32, .. })
        ));
    }

    #[test]
    fn all_methods_certify_dft_split() {
        let v = normalized_rows(64, &[0, 5], &(0..64).collect::<Vec<_>>()).unwrap();
        for method in [Method::RandomCertified, Method::GreedySwap] {
            let cfg = SelectionConfig { method, seed: 11, ..Default::default() };
            let p = partition_step(&v, 1.0, 1.0, &cfg).unwrap();
            assert!(p.is_certified(cfg.slack));
            assert_eq!(p.first.len() + p.second.len(), 64);
            // whitened parts sum to the identity
            assert!((p.whitened_first.1 + p.whitened_second.0 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn trivial_branch() {
        let cfg = SelectionConfig::default();
        let (rows, trace) = iterated_halving(4, &[0, 2], &cfg).unwrap();
        assert_eq!(rows, RowSelection::full(4));
        assert_eq!(trace.mode, TraceMode::Trivial);
        let (rows, trace) = iterated_halving(2, &[0, 1], &cfg).unwrap();
        assert_eq!(rows.indices(), &[0, 1]);
        assert!((trace.final_lower - 1.0).abs() < 1e-12 && (trace.final_upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn select_rows_examples() {
        let cfg = SelectionConfig { method: Method::Exhaustive, ..Default::default() };
        let g = GridSpectrum::new(4, &[0, 2], 1.0).unwrap();
        let (rows, cert, trace) = select_rows(&g, &cfg).unwrap();
        assert_eq!(rows.indices(), &[0, 1]);
        assert!((cert.condition_ratio() - 1.0).abs() < 1e-12);
        assert_eq!(trace.mode, TraceMode::ExhaustiveOptimum);

        let g = GridSpectrum::new(1, &[0], 1.0).unwrap();
        let (rows, cert, _) = select_rows(&g, &cfg).unwrap();
        assert_eq!(rows.indices(), &[0]);
        assert!((cert.a_frame - 2.0 * std::f64::consts::PI).abs() < 1e-12);

        let g = GridSpectrum::new(16, &(0..8).collect::<Vec<_>>(), 1.0).unwrap();
        let (rows, _, trace) = select_rows(&g, &SelectionConfig::default()).unwrap();
        assert_eq!(rows, RowSelection::full(16));
        assert_eq!(trace.mode, TraceMode::Trivial);
    }

    #[test]
    fn halving_trace_is_nested_and_certified() {
        let cfg = SelectionConfig { seed: 3, ..Default::default() };
        let (rows, trace) = iterated_halving(1024, &[0, 1], &cfg).unwrap();
        let schedule = trace.schedule.as_ref().unwrap();
        assert_eq!(trace.steps.len(), schedule.stop_index + 1);
        let mut previous: Vec<usize> = (0..1024).collect();
        for step in &trace.steps {
            assert!(step.kept.len() < previous.len());
            assert!(step.kept.iter().all(|j| previous.binary_search(j).is_ok()));
            assert!(step.achieved_lower * (1.0 + cfg.slack) >= step.alpha_target);
            assert!(step.achieved_upper <= step.beta_target * (1.0 + cfg.slack));
            previous = step.kept.clone();
        }
        assert_eq!(rows.indices(), previous.as_slice());
    }
}
