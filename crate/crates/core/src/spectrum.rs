//! Spectra on the frequency axis: finite interval unions and grid-aligned
//! cell unions, plus the translation/rescaling and covering steps that move
//! one into the other.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest grid order accepted anywhere in the crate.
pub const MAX_GRID_ORDER: usize = 4096;

/// First grid order tried by [`auto_grid_cover`].
pub const DEFAULT_START_ORDER: usize = 64;

/// Default cover tolerance as a fraction of `|U|`.
pub const DEFAULT_EPSILON_COVER: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("spectrum has zero total measure")]
    EmptySpectrum,
    #[error("interval ({a}, {b}) is empty or not finite")]
    BadInterval { a: f64, b: f64 },
    #[error("grid order must be positive")]
    ZeroGridOrder,
    #[error("grid scale d = {0} must be positive and finite")]
    BadScale(f64),
    #[error("cell index {index} out of range for grid order {m}")]
    IndexOutOfRange { index: usize, m: usize },
    #[error("grid order {m} exceeds the desk-scale limit {MAX_GRID_ORDER}")]
    ProblemTooLarge { m: usize },
    #[error("grid cover at order {m} has excess {excess} above tolerance {tolerance}")]
    GridTooCoarse { m: usize, excess: f64, tolerance: f64 },
    #[error("interval union is not contained in [0, 2*pi*{d}]")]
    OutsideWindow { d: f64 },
}

/// A finite union of half-open intervals `[a, b)` in canonical form:
/// sorted, pairwise disjoint, non-touching, each nonempty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    /// Canonicalize a raw list of endpoint pairs. Overlapping or touching
    /// intervals are merged.
    pub fn new(raw: &[(f64, f64)]) -> Result<Self, SpectrumError> {
        for &(a, b) in raw {
            if !(a.is_finite() && b.is_finite()) || a >= b {
                return Err(SpectrumError::BadInterval { a, b });
            }
        }
        if raw.is_empty() {
            return Err(SpectrumError::EmptySpectrum);
        }
        let mut sorted = raw.to_vec();
        sorted.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
        for (a, b) in sorted {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let union = IntervalUnion { intervals: merged };
        if union.measure() <= 0.0 {
            return Err(SpectrumError::EmptySpectrum);
        }
        Ok(union)
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn inf(&self) -> f64 {
        self.intervals[0].0
    }

    pub fn sup(&self) -> f64 {
        self.intervals[self.intervals.len() - 1].1
    }

    /// Re-validate an existing union; canonical form is a fixed point.
    pub fn validate(&self) -> Result<Self, SpectrumError> {
        Self::new(&self.intervals)
    }

    fn translated(&self, shift: f64) -> Self {
        IntervalUnion {
            intervals: self
                .intervals
                .iter()
                .map(|&(a, b)| (a - shift, b - shift))
                .collect(),
        }
    }
}

/// Result of moving a spectrum into the standard window `[0, 2πd]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub union: IntervalUnion,
    /// Amount subtracted from every endpoint.
    pub shift: f64,
    /// Smallest scale such that the translated union fits in `[0, 2πd]`.
    pub d: f64,
}

/// Translate `u` so that its infimum is 0 and report the window scale.
///
/// Translating the spectrum multiplies each exponential by a unimodular
/// constant, so frame bounds computed for the output hold for the input
/// with the same frequency set.
pub fn normalize_to_window(u: &IntervalUnion) -> Normalized {
    let shift = u.inf();
    let union = if shift == 0.0 { u.clone() } else { u.translated(shift) };
    let d = (union.sup() - union.inf()) / (2.0 * PI);
    Normalized { union, shift, d }
}

/// Union of grid cells `[2πd·r/m, 2πd·(r+1)/m)` for `r` in `I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpectrumRepr", into = "GridSpectrumRepr")]
pub struct GridSpectrum {
    m: usize,
    cells: Vec<usize>,
    d: f64,
}

#[derive(Serialize, Deserialize)]
struct GridSpectrumRepr {
    m: usize,
    #[serde(rename = "I")]
    cells: Vec<usize>,
    #[serde(default = "unit_scale")]
    d: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl TryFrom<GridSpectrumRepr> for GridSpectrum {
    type Error = SpectrumError;

    fn try_from(repr: GridSpectrumRepr) -> Result<Self, Self::Error> {
        GridSpectrum::new(repr.m, &repr.cells, repr.d)
    }
}

impl From<GridSpectrum> for GridSpectrumRepr {
    fn from(g: GridSpectrum) -> Self {
        GridSpectrumRepr { m: g.m, cells: g.cells, d: g.d }
    }
}

impl GridSpectrum {
    /// Cell indices are sorted and deduplicated.
    pub fn new(m: usize, cells: &[usize], d: f64) -> Result<Self, SpectrumError> {
        if m == 0 {
            return Err(SpectrumError::ZeroGridOrder);
        }
        if m > MAX_GRID_ORDER {
            return Err(SpectrumError::ProblemTooLarge { m });
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(SpectrumError::BadScale(d));
        }
        if let Some(&index) = cells.iter().find(|&&r| r >= m) {
            return Err(SpectrumError::IndexOutOfRange { index, m });
        }
        let mut cells = cells.to_vec();
        cells.sort_unstable();
        cells.dedup();
        if cells.is_empty() {
            return Err(SpectrumError::EmptySpectrum);
        }
        Ok(GridSpectrum { m, cells, d })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Number of cells, `n = |I|`.
    pub fn n(&self) -> usize {
        self.cells.len()
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Width of one cell, `2πd/m`.
    pub fn cell_width(&self) -> f64 {
        2.0 * PI * self.d / self.m as f64
    }

    /// Left endpoint of cell `r`.
    pub fn cell_start(&self, r: usize) -> f64 {
        cell_edge(self.d, self.m, r)
    }

    pub fn measure(&self) -> f64 {
        2.0 * PI * self.d * self.n() as f64 / self.m as f64
    }

    pub fn to_interval_union(&self) -> IntervalUnion {
        let raw: Vec<(f64, f64)> = self
            .cells
            .iter()
            .map(|&r| (self.cell_start(r), cell_edge(self.d, self.m, r + 1)))
            .collect();
        IntervalUnion::new(&raw).expect("grid cells are nonempty")
    }
}

fn cell_edge(d: f64, m: usize, r: usize) -> f64 {
    2.0 * PI * d * r as f64 / m as f64
}

/// Outer grid approximation of a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCover {
    pub grid: GridSpectrum,
    /// `|grid| - |U|`, never negative.
    pub excess: f64,
}

/// Cover `u ⊆ [0, 2πd]` by the minimal union of order-`m` cells.
///
/// A cell is kept when its intersection with `u` has positive measure.
/// Fails with `GridTooCoarse` when the excess measure exceeds `tolerance`.
pub fn grid_cover(
    u: &IntervalUnion,
    d: f64,
    m: usize,
    tolerance: f64,
) -> Result<GridCover, SpectrumError> {
    if m == 0 {
        return Err(SpectrumError::ZeroGridOrder);
    }
    if m > MAX_GRID_ORDER {
        return Err(SpectrumError::ProblemTooLarge { m });
    }
    if !(d.is_finite() && d > 0.0) {
        return Err(SpectrumError::BadScale(d));
    }
    let window = 2.0 * PI * d;
    // Containment allows one part in 1e12 so that the output of
    // `normalize_to_window` is always accepted at its own scale.
    if u.inf() < 0.0 || u.sup() > window * (1.0 + 1e-12) {
        return Err(SpectrumError::OutsideWindow { d });
    }

    let mut cells = Vec::new();
    for &(a, b) in u.intervals() {
        // Candidate range from floating division, widened by one cell on
        // each side; membership itself is decided by exact comparisons.
        let lo = ((a / window) * m as f64).floor() as isize - 1;
        let hi = ((b / window) * m as f64).ceil() as isize + 1;
        let lo = lo.max(0) as usize;
        let hi = (hi.max(0) as usize).min(m - 1);
        for r in lo..=hi {
            let c0 = cell_edge(d, m, r);
            let c1 = cell_edge(d, m, r + 1);
            if a.max(c0) < b.min(c1) {
                cells.push(r);
            }
        }
    }
    let grid = GridSpectrum::new(m, &cells, d)?;
    let excess = (grid.measure() - u.measure()).max(0.0);
    if excess > tolerance {
        return Err(SpectrumError::GridTooCoarse { m, excess, tolerance });
    }
    Ok(GridCover { grid, excess })
}

/// Double the grid order from `start` until the cover excess is at most
/// `tolerance`.
pub fn auto_grid_cover(
    u: &IntervalUnion,
    d: f64,
    start: usize,
    tolerance: f64,
) -> Result<GridCover, SpectrumError> {
    let mut m = start.max(1);
    loop {
        match grid_cover(u, d, m, tolerance) {
            Err(SpectrumError::GridTooCoarse { .. }) if m * 2 <= MAX_GRID_ORDER => m *= 2,
            other => return other,
        }
    }
}

/// JSON spectrum input: either raw intervals or an explicit grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpectrumInput {
    Intervals { intervals: Vec<[f64; 2]> },
    Grid { grid: GridSpectrum },
}

impl SpectrumInput {
    pub fn interval_union(&self) -> Result<IntervalUnion, SpectrumError> {
        match self {
            SpectrumInput::Intervals { intervals } => {
                let raw: Vec<(f64, f64)> = intervals.iter().map(|p| (p[0], p[1])).collect();
                IntervalUnion::new(&raw)
            }
            SpectrumInput::Grid { grid } => Ok(grid.to_interval_union()),
        }
    }
}
