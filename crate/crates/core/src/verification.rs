//! Independent checks of frame certificates.
//!
//! Three levels: Rayleigh quotients of the partial Fourier matrix, sampling
//! sums of explicit Paley–Wiener functions, and counting diagnostics for the
//! frequency set. The Paley–Wiener test functions have spectra that are
//! trigonometric polynomials on each cell, so both `‖f‖²` and `f(λ)` are
//! finite sums of closed-form cell integrals.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::matrix::{
    enumerate_lambda, CMatrix, frame_certificate, gram, grid_submatrix, hermitian_eigen, FrameCertificate,
    FrequencySet, MatrixError, RowSelection,
};
use crate::rng;
use crate::spectrum::GridSpectrum;

pub const DEFAULT_COUNT: usize = 200;
pub const DEFAULT_ORDER: usize = 4;
/// Default truncation radius in periods `m/d`.
pub const DEFAULT_RADIUS_PERIODS: f64 = 50.0;
pub const DEFAULT_TOLERANCE: f64 = 0.02;

/// Points per η on the grid used by [`indicator_eta`].
const ETA_GRID: usize = 1024;
const ETA_BISECTIONS: usize = 48;

const STREAM_RAYLEIGH: u32 = 1;
const STREAM_MONTE_CARLO: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerificationError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("truncation tail {tail:e} exceeds {limit:e}; increase R")]
    TruncationTooSevere { tail: f64, limit: f64 },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// `∫_a^{a+w} e^{iωt} dt`, evaluated as `w·e^{iω(a+w/2)}·sinc(ωw/2)`.
pub fn cell_integral(omega: f64, a: f64, w: f64) -> Complex64 {
    let half = 0.5 * omega * w;
    let sinc = if half.abs() < 1e-8 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    };
    Complex64::from_polar(w * sinc, omega * (a + 0.5 * w))
}

/// `f = F̌` where `F` restricted to cell `r` is `Σ_{|k|≤K} s_{r,k} e^{ik(m/d)t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwTestFunction {
    grid: GridSpectrum,
    order: usize,
    /// `coefficients[c][k + K]` for the `c`-th cell of `I`.
    coefficients: Vec<Vec<Complex64>>,
}

impl PwTestFunction {
    pub fn new(grid: GridSpectrum, order: usize, coefficients: Vec<Vec<Complex64>>) -> Result<Self, VerificationError> {
        if coefficients.len() != grid.n() || coefficients.iter().any(|c| c.len() != 2 * order + 1) {
            return Err(VerificationError::InvalidParameter(format!(
                "expected {} cells of {} coefficients",
                grid.n(),
                2 * order + 1
            )));
        }
        Ok(PwTestFunction { grid, order, coefficients })
    }

    /// Standard complex Gaussian coefficients.
    pub fn random<R: rand::Rng + ?Sized>(grid: &GridSpectrum, order: usize, rng: &mut R) -> Self {
        let coefficients = (0..grid.n())
            .map(|_| (0..2 * order + 1).map(|_| rng::complex_gaussian(rng)).collect())
            .collect();
        PwTestFunction { grid: grid.clone(), order, coefficients }
    }

    /// Constant on every cell, with value `conj(w_r)` on cell `r`. Samples
    /// pick up `e^{−2πijr/m}`, so the conjugate makes the sampling ratio of
    /// `f` equal `(d/m)·‖Bw‖²/‖w‖²`.
    pub fn from_cell_vector(grid: &GridSpectrum, w: &DVector<Complex64>) -> Self {
        let coefficients = w.iter().map(|z| vec![z.conj()]).collect();
        PwTestFunction { grid: grid.clone(), order: 0, coefficients }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `F` at a point of the spectrum (zero outside).
    pub fn spectrum_value(&self, t: f64) -> Complex64 {
        let w = self.grid.cell_width();
        let step = self.grid.m() as f64 / self.grid.d();
        for (c, &r) in self.grid.cells().iter().enumerate() {
            let a = self.grid.cell_start(r);
            if t >= a && t < a + w {
                return (0..=2 * self.order)
                    .map(|i| {
                        let k = i as f64 - self.order as f64;
                        self.coefficients[c][i] * Complex64::from_polar(1.0, k * step * t)
                    })
                    .sum();
            }
        }
        Complex64::new(0.0, 0.0)
    }

    /// `‖f‖² = ‖F‖² = (2πd/m)·Σ|s_{r,k}|²`.
    pub fn norm_squared(&self) -> f64 {
        let total: f64 = self.coefficients.iter().flatten().map(|z| z.norm_sqr()).sum();
        self.grid.cell_width() * total
    }

    /// `f(x) = (2π)^{-1/2} ∫ e^{-itx} F(t) dt`.
    pub fn eval(&self, x: f64) -> Complex64 {
        let w = self.grid.cell_width();
        let step = self.grid.m() as f64 / self.grid.d();
        let mut sum = Complex64::new(0.0, 0.0);
        for (c, &r) in self.grid.cells().iter().enumerate() {
            let a = self.grid.cell_start(r);
            for (i, &s) in self.coefficients[c].iter().enumerate() {
                let k = i as f64 - self.order as f64;
                sum += s * cell_integral(k * step - x, a, w);
            }
        }
        sum / (2.0 * PI).sqrt()
    }

    /// `Σ_{k∈Z} |f((j + k·m)/d)|²` in closed form.
    ///
    /// For `j ≢ 0 (mod m)` every sample is `d/(i·m·√2π)·Σ_k c_k/(k − k' − j/m)`
    /// with `c_k = Σ_r s_{r,k}(e^{−2πij(r+1)/m} − e^{−2πijr/m})`, and the
    /// shifted reciprocals are orthogonal in `ℓ²(Z)` with squared norm
    /// `π²/sin²(πj/m)`. For `j ≡ 0` only the samples at `k' ∈ [−K, K]`
    /// are nonzero.
    pub fn residue_energy(&self, j: usize) -> f64 {
        let m = self.grid.m();
        let d = self.grid.d();
        let j = j % m;
        let terms = 2 * self.order + 1;
        if j == 0 {
            let w = self.grid.cell_width();
            let energy: f64 = (0..terms)
                .map(|i| self.coefficients.iter().map(|c| c[i]).sum::<Complex64>().norm_sqr())
                .sum();
            return w * w / (2.0 * PI) * energy;
        }
        let phase = |r: usize| {
            let reduced = ((j as u128 * r as u128) % m as u128) as f64;
            Complex64::from_polar(1.0, -2.0 * PI * reduced / m as f64)
        };
        let mut weight = 0.0;
        for i in 0..terms {
            let c_k: Complex64 = self
                .grid
                .cells()
                .iter()
                .enumerate()
                .map(|(c, &r)| self.coefficients[c][i] * (phase(r + 1) - phase(r)))
                .sum();
            weight += c_k.norm_sqr();
        }
        let sin = (PI * j as f64 / m as f64).sin();
        let scale = d / m as f64;
        scale * scale / (2.0 * PI) * PI * PI / (sin * sin) * weight
    }

    /// Exact `Σ_{λ∈Λ} |f(λ)|²` over the whole frequency set.
    pub fn sampling_energy(&self, rows: &RowSelection) -> f64 {
        rows.indices().iter().map(|&j| self.residue_energy(j)).sum()
    }

    /// `Σ_{λ∈Λ, |λ|≤R} |f(λ)|²`.
    pub fn truncated_sampling_energy(&self, set: &FrequencySet, radius: f64) -> Result<f64, VerificationError> {
        Ok(SamplingPlan::new(&self.grid, set, radius, self.order)?.energies(self).0)
    }

    /// Coefficients as an `n × (2K + 1)` matrix.
    fn coefficient_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.grid.n(), 2 * self.order + 1, |c, i| self.coefficients[c][i])
    }
}

/// Shared tables for sampling many test functions of one order on one set.
///
/// At `λ = (j + qm)/d` the cell integrals collapse to
/// `f(λ) = w/√2π · Σ_k C_k(j)·g(k − q − j/m)` with
/// `C_k(j) = Σ_r s_{r,k} e^{−2πijr/m}` and `g(ν) = ∫_0^1 e^{2πiνu} du`, so a
/// sample costs `2K + 1` terms once `C = conj(B)·S` is formed. Summed over all
/// `q` the same identity gives the exact energy `w²/2π · ‖C‖²`.
struct SamplingPlan {
    order: usize,
    width: f64,
    conj_b: CMatrix,
    residues: Vec<ResiduePlan>,
}

/// Samples `q ∈ [q_lo, q_hi]` of one residue, with `kernel[t] = g(t − K − q_hi − j/m)`.
struct ResiduePlan {
    q_lo: i64,
    q_hi: i64,
    kernel: Vec<Complex64>,
}

impl SamplingPlan {
    fn new(grid: &GridSpectrum, set: &FrequencySet, radius: f64, order: usize) -> Result<Self, VerificationError> {
        let conj_b = grid_submatrix(grid, &set.rows)?.map(|z| z.conj());
        let m = set.m as f64;
        let d = set.d;
        let residues = set
            .rows
            .indices()
            .iter()
            .map(|&j| {
                let j = j as f64;
                let inside = |q: i64| (-radius..=radius).contains(&((j + q as f64 * m) / d));
                let mut q_lo = ((-radius * d - j) / m).floor() as i64 - 1;
                let mut q_hi = ((radius * d - j) / m).ceil() as i64 + 1;
                while q_lo <= q_hi && !inside(q_lo) {
                    q_lo += 1;
                }
                while q_hi >= q_lo && !inside(q_hi) {
                    q_hi -= 1;
                }
                let span = if q_lo <= q_hi { (q_hi - q_lo) as usize + 2 * order + 1 } else { 0 };
                let kernel = (0..span)
                    .map(|t| {
                        let nu = (t as i64 - order as i64 - q_hi) as f64 - j / m;
                        cell_integral(2.0 * PI * nu, 0.0, 1.0)
                    })
                    .collect();
                ResiduePlan { q_lo, q_hi, kernel }
            })
            .collect();
        Ok(SamplingPlan { order, width: grid.cell_width(), conj_b, residues })
    }

    /// `(truncated, exact)` sampling energies of `f`.
    fn energies(&self, f: &PwTestFunction) -> (f64, f64) {
        debug_assert_eq!(f.order, self.order);
        let c = &self.conj_b * f.coefficient_matrix();
        let terms = 2 * self.order + 1;
        let mut partial = 0.0;
        for (a, plan) in self.residues.iter().enumerate() {
            let row: Vec<Complex64> = (0..terms).map(|i| c[(a, i)]).collect();
            for q in plan.q_lo..=plan.q_hi {
                let offset = (plan.q_hi - q) as usize;
                let value: Complex64 = row.iter().zip(&plan.kernel[offset..offset + terms]).map(|(x, g)| x * g).sum();
                partial += value.norm_sqr();
            }
        }
        let factor = self.width * self.width / (2.0 * PI);
        (factor * partial, factor * c.norm_squared())
    }
}

/// `‖Bw‖²` for `count` seeded uniform unit vectors `w ∈ C^n`.
pub fn rayleigh_matrix_samples(
    grid: &GridSpectrum,
    rows: &RowSelection,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>, VerificationError> {
    if count == 0 {
        return Err(VerificationError::InvalidParameter("count must be positive".into()));
    }
    let b = grid_submatrix(grid, rows)?;
    Ok((0..count)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, STREAM_RAYLEIGH, t as u32);
            let w = rng::unit_vector(&mut rng, grid.n());
            (&b * w).norm_squared()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Min,
    Max,
}

/// Unit eigenvector of the Gram matrix for the requested extreme and its
/// achieved `‖Bw‖²`.
pub fn extremal_witness(
    grid: &GridSpectrum,
    rows: &RowSelection,
    side: Side,
) -> Result<(DVector<Complex64>, f64), VerificationError> {
    let b = grid_submatrix(grid, rows)?;
    let (_, vectors) = hermitian_eigen(&gram(&b))?;
    let column = match side {
        Side::Min => 0,
        Side::Max => vectors.ncols() - 1,
    };
    let w: DVector<Complex64> = vectors.column(column).into_owned();
    let w = w.unscale(w.norm());
    let value = (&b * &w).norm_squared();
    Ok((w, value))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloParams {
    pub count: usize,
    #[serde(rename = "K")]
    pub order: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub tol: f64,
    pub seed: u64,
}

impl MonteCarloParams {
    pub fn defaults_for(grid: &GridSpectrum, seed: u64) -> Self {
        MonteCarloParams {
            count: DEFAULT_COUNT,
            order: DEFAULT_ORDER,
            radius: DEFAULT_RADIUS_PERIODS * grid.m() as f64 / grid.d(),
            tol: DEFAULT_TOLERANCE,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    /// `Σ_{|λ|≤R} |f(λ)|² / ‖f‖²` per trial.
    pub ratios: Vec<f64>,
    /// Untruncated ratios from the closed-form residue sums.
    pub exact_ratios: Vec<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `[a_sampling, A_sampling]`.
    pub certified: [f64; 2],
    /// Largest relative truncation tail over all trials.
    pub tail_bound: f64,
    pub pass: bool,
}

struct Trial {
    ratio: f64,
    exact: f64,
    tail: f64,
}

fn run_trial(f: &PwTestFunction, plan: &SamplingPlan) -> Trial {
    let norm = f.norm_squared();
    let (partial, total) = plan.energies(f);
    Trial {
        ratio: partial / norm,
        exact: total / norm,
        tail: (total - partial).max(0.0) / norm,
    }
}

/// Sampling-inequality check on seeded random Paley–Wiener functions.
pub fn pw_monte_carlo(
    grid: &GridSpectrum,
    rows: &RowSelection,
    params: &MonteCarloParams,
) -> Result<VerificationReport, VerificationError> {
    let period = grid.m() as f64 / grid.d();
    if params.order < 1 {
        return Err(VerificationError::InvalidParameter("K must be at least 1".into()));
    }
    if params.count == 0 {
        return Err(VerificationError::InvalidParameter("count must be positive".into()));
    }
    if !(params.radius >= 10.0 * period) {
        return Err(VerificationError::InvalidParameter(format!(
            "R = {} must be at least 10·m/d = {}",
            params.radius,
            10.0 * period
        )));
    }
    let cert = frame_certificate(grid, rows)?;
    let set = FrequencySet::new(rows.clone(), grid.m(), grid.d());
    let plan = SamplingPlan::new(grid, &set, params.radius, params.order)?;
    let trials: Vec<Trial> = (0..params.count)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(params.seed, STREAM_MONTE_CARLO, t as u32);
            let f = PwTestFunction::random(grid, params.order, &mut rng);
            run_trial(&f, &plan)
        })
        .collect();
    let tail_bound = trials.iter().map(|t| t.tail).fold(0.0, f64::max);
    let limit = params.tol * cert.a_sampling;
    if cert.is_frame && tail_bound > limit {
        return Err(VerificationError::TruncationTooSevere { tail: tail_bound, limit });
    }
    Ok(build_report(&cert, &trials, params.tol, tail_bound))
}

fn build_report(cert: &FrameCertificate, trials: &[Trial], tol: f64, tail_bound: f64) -> VerificationReport {
    let ratios: Vec<f64> = trials.iter().map(|t| t.ratio).collect();
    let pass = trials.iter().all(|t| {
        t.ratio <= cert.upper_sampling * (1.0 + tol) && t.ratio >= cert.a_sampling * (1.0 - tol) - t.tail
    });
    VerificationReport {
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        exact_ratios: trials.iter().map(|t| t.exact).collect(),
        ratios,
        certified: [cert.a_sampling, cert.upper_sampling],
        tail_bound,
        pass,
    }
}

/// Sampling ratio of the Paley–Wiener function built from the extremal
/// eigenvector: `(truncated ratio, exact ratio, relative tail)`.
pub fn witness_sampling_ratio(
    grid: &GridSpectrum,
    rows: &RowSelection,
    side: Side,
    radius: f64,
) -> Result<(f64, f64, f64), VerificationError> {
    let (w, _) = extremal_witness(grid, rows, side)?;
    let f = PwTestFunction::from_cell_vector(grid, &w);
    let set = FrequencySet::new(rows.clone(), grid.m(), grid.d());
    let t = run_trial(&f, &SamplingPlan::new(grid, &set, radius, 0)?);
    Ok((t.ratio, t.exact, t.tail))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaReport {
    pub eta: f64,
    /// `h(0) = |Ω|/√(2π)` where `h` is the transform of the indicator of `Ω`.
    pub h0: f64,
}

/// Transform of the indicator of the grid spectrum.
pub fn indicator_transform(grid: &GridSpectrum, x: f64) -> Complex64 {
    let w = grid.cell_width();
    let sum: Complex64 = grid
        .cells()
        .iter()
        .map(|&r| cell_integral(-x, grid.cell_start(r), w))
        .sum();
    sum / (2.0 * PI).sqrt()
}

fn eta_admissible(grid: &GridSpectrum, eta: f64, threshold: f64) -> bool {
    (0..=ETA_GRID).all(|i| {
        let x = -0.5 * eta + eta * i as f64 / ETA_GRID as f64;
        indicator_transform(grid, x).norm() > threshold
    })
}

/// Largest dyadic `η` (to bisection depth) with `|h| > |Ω|/3` on a grid of
/// step `η/1024` over `[−η/2, η/2]`.
pub fn indicator_eta(grid: &GridSpectrum) -> EtaReport {
    let threshold = grid.measure() / 3.0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    while eta_admissible(grid, hi, threshold) && hi < 1e12 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..ETA_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if eta_admissible(grid, mid, threshold) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    EtaReport {
        eta: lo,
        h0: indicator_transform(grid, 0.0).re,
    }
}

/// Largest number of points of `Λ` in a closed interval of length `len`.
pub fn max_count_in_window(set: &FrequencySet, len: f64) -> usize {
    let period = set.period();
    let points = enumerate_lambda(set, 0.0, period + len + 1.0);
    let starts = points.iter().take_while(|&&x| x < period);
    starts
        .map(|&x| points.iter().filter(|&&y| y >= x && y <= x + len).count())
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountCheck {
    pub eta: f64,
    pub max_count: usize,
    /// `9·A_frame/|Ω|`.
    pub frame_bound: f64,
    /// `9·A_sampling/|Ω|`, the constant of the sampling inequality.
    pub sampling_bound: f64,
    pub pass: bool,
}

/// Points of `Λ` in any window of length `η` against `9C`.
pub fn window_count_check(grid: &GridSpectrum, rows: &RowSelection) -> Result<CountCheck, VerificationError> {
    let cert = frame_certificate(grid, rows)?;
    let eta = indicator_eta(grid).eta;
    let set = FrequencySet::new(rows.clone(), grid.m(), grid.d());
    let max_count = max_count_in_window(&set, eta);
    let frame_bound = 9.0 * cert.upper_frame / grid.measure();
    let sampling_bound = 9.0 * cert.upper_sampling / grid.measure();
    Ok(CountCheck {
        eta,
        max_count,
        frame_bound,
        sampling_bound,
        pass: (max_count as f64) <= frame_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    pub window: f64,
    pub offsets: Vec<f64>,
    pub counts: Vec<usize>,
    pub min_count: usize,
    pub max_count: usize,
    pub min_density: f64,
    pub max_density: f64,
    /// `|Ω|/(2π)`.
    pub landau_floor: f64,
    /// Window is a whole number of periods `m/d`.
    pub period_aligned: bool,
    /// Only evaluated for period-aligned windows.
    pub landau_ok: Option<bool>,
    /// `|J| ≥ n`.
    pub residues_ok: bool,
}

/// Sliding-window counts of `Λ` at offsets stepping by `window/4`.
pub fn density_report(
    set: &FrequencySet,
    omega_measure: f64,
    window: f64,
    scan: (f64, f64),
) -> Result<DensityReport, VerificationError> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(VerificationError::InvalidParameter(format!("window {window} must be positive")));
    }
    if !(scan.1 - scan.0 >= 10.0 * window) {
        return Err(VerificationError::InvalidParameter(
            "scan range must cover at least 10 windows".into(),
        ));
    }
    let points = enumerate_lambda(set, scan.0, scan.1);
    let step = window / 4.0;
    let mut offsets = Vec::new();
    let mut counts = Vec::new();
    let mut i = 0usize;
    loop {
        let x = scan.0 + step * i as f64;
        if x + window > scan.1 {
            break;
        }
        let lo = points.partition_point(|&p| p < x);
        let hi = points.partition_point(|&p| p < x + window);
        offsets.push(x);
        counts.push(hi - lo);
        i += 1;
    }
    let min_count = counts.iter().copied().min().unwrap_or(0);
    let max_count = counts.iter().copied().max().unwrap_or(0);
    let periods = window / set.period();
    let period_aligned = periods.round() >= 1.0 && (periods - periods.round()).abs() <= 1e-9 * periods;
    let landau_floor = omega_measure / (2.0 * PI);
    let min_density = min_count as f64 / window;
    let n_cells = (omega_measure * set.m as f64 / (2.0 * PI * set.d)).round() as usize;
    Ok(DensityReport {
        window,
        min_density,
        max_density: max_count as f64 / window,
        landau_ok: period_aligned.then_some(min_density >= landau_floor * (1.0 - 1e-9)),
        residues_ok: set.rows.len() >= n_cells,
        offsets,
        counts,
        min_count,
        max_count,
        landau_floor,
        period_aligned,
    })
}

/// Two-sided density bounds: Landau floor `|Ω|/(2π)` below and `4·A_sampling`
/// above, the latter meaningful for long windows.
pub fn density_bounds_check(report: &DensityReport, cert: &FrameCertificate) -> (bool, bool) {
    let lower = report.min_density >= report.landau_floor * (1.0 - 1e-9);
    let upper = report.max_density <= 4.0 * cert.upper_sampling * (1.0 + 1e-9);
    (lower, upper)
}
