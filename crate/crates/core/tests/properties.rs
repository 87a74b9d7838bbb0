mod common;

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::CMatrix;
use expframe::selection::{normalized_rows, whiten, whitened_part_grams, TraceMode};
use expframe::spectrum::auto_grid_cover;
use expframe::verification::{density_bounds_check, window_count_check, PwTestFunction};
use expframe::{
    density_report, frame_certificate, grid_cover, iterated_halving, normalize_to_window,
    partition_step, select_rows, FrequencySet, GridSpectrum, IntervalUnion, Method, RowSelection,
    SelectionConfig,
};

fn grid(m: usize, cells: &[usize], d: f64) -> GridSpectrum {
    GridSpectrum::new(m, cells, d).unwrap()
}

fn unit(theta: f64, phi: f64) -> DVector<Complex64> {
    DVector::from_vec(vec![
        Complex64::new(theta.cos(), 0.0),
        Complex64::from_polar(theta.sin(), phi),
    ])
}

/// Extremes of `‖Bw‖²` over unit `w ∈ C²` by a zooming parameter grid.
fn brute_force_extremes(b: &CMatrix) -> (f64, f64) {
    let search = |sign: f64| {
        let (mut theta, mut phi) = (PI / 4.0, 0.0);
        let (mut span_t, mut span_p) = (PI / 2.0, 2.0 * PI);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..8 {
            let (t0, p0) = (theta, phi);
            for a in -20..=20 {
                for c in -20..=20 {
                    let t = t0 + span_t * a as f64 / 40.0;
                    let p = p0 + span_p * c as f64 / 40.0;
                    let value = sign * common::norm_sq(b, &unit(t, p));
                    if value > best {
                        best = value;
                        theta = t;
                        phi = p;
                    }
                }
            }
            span_t /= 8.0;
            span_p /= 8.0;
        }
        sign * best
    };
    (search(-1.0), search(1.0))
}

#[test]
fn quadratic_form_brute_force_small_grids() {
    for m in 2..=8usize {
        for r in 1..m {
            let cells = [0, r];
            let mut rng = ChaCha8Rng::seed_from_u64(m as u64 * 31 + r as u64);
            let size = rng.random_range(1..=m);
            let rows = common::random_subset(&mut rng, m, size);
            let cert = frame_certificate(&grid(m, &cells, 1.0), &RowSelection::new(m, &rows).unwrap()).unwrap();
            let (lo, hi) = brute_force_extremes(&common::dft_block(m, &rows, &cells));
            assert!((lo - cert.lambda_min).abs() < 1e-6, "m={m} I={cells:?} J={rows:?}: {lo} vs {}", cert.lambda_min);
            assert!((hi - cert.lambda_max).abs() < 1e-6, "m={m} I={cells:?} J={rows:?}: {hi} vs {}", cert.lambda_max);
        }
    }
}

#[test]
fn whitened_parts_sum_to_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let k = rng.random_range(4..=16);
        let n = rng.random_range(1..=3);
        let v = CMatrix::from_fn(k, n, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let u = whiten(&v).unwrap();
        let frame = u.adjoint() * &u;
        assert!((frame - CMatrix::identity(n, n)).norm() < 1e-8);
        let first: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
        let (g1, g2) = whitened_part_grams(&v, &first).unwrap();
        assert!((g1 + g2 - CMatrix::identity(n, n)).norm() < 1e-8);
    }
}

#[test]
fn partition_bounds_recomputed_independently() {
    let v = normalized_rows(16, &[0, 5], &(0..16).collect::<Vec<_>>()).unwrap();
    for method in [Method::Exhaustive, Method::RandomCertified, Method::GreedySwap] {
        let cfg = SelectionConfig { method, seed: 3, ..Default::default() };
        let p = partition_step(&v, 1.0, 1.0, &cfg).unwrap();
        assert!(p.is_certified(cfg.slack));
        let mut all: Vec<usize> = p.first.iter().chain(&p.second).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..16).collect::<Vec<_>>());
        for (part, bounds) in [(&p.first, p.first_bounds), (&p.second, p.second_bounds)] {
            let (lo, hi) = common::extremes(16, part, &[0, 5]);
            assert!((lo / 16.0 - bounds.0).abs() < 1e-10);
            assert!((hi / 16.0 - bounds.1).abs() < 1e-10);
            assert!(bounds.0 >= p.targets.lower / (1.0 + cfg.slack));
            assert!(bounds.1 <= p.targets.upper * (1.0 + cfg.slack));
        }
    }
}

#[test]
fn halving_trace_certifies_itself() {
    for (m, cells, seed) in [(512usize, vec![0usize, 9, 10, 400], 1u64), (1024, vec![3, 4, 5, 6, 7, 500], 2)] {
        let cfg = SelectionConfig { seed, ..Default::default() };
        let (rows, trace) = iterated_halving(m, &cells, &cfg).unwrap();
        assert_eq!(trace.mode, TraceMode::Halving);
        let schedule = trace.schedule.as_ref().unwrap();
        assert_eq!(trace.steps.len(), schedule.stop_index + 1);
        let mut previous: Vec<usize> = (0..m).collect();
        for step in &trace.steps {
            assert!(step.kept.iter().all(|j| previous.binary_search(j).is_ok()));
            assert!(2 * step.kept.len() <= previous.len());
            let (lo, hi) = common::extremes(m, &step.kept, &cells);
            assert!((lo / m as f64 - step.achieved_lower).abs() < 1e-10);
            assert!((hi / m as f64 - step.achieved_upper).abs() < 1e-10);
            previous = step.kept.clone();
        }
        assert_eq!(trace.final_rows, rows.indices());
        let cert = frame_certificate(&grid(m, &cells, 1.0), &rows).unwrap();
        assert!((cert.lambda_min / m as f64 - trace.final_lower).abs() < 1e-10);
        assert!(cert.is_frame && rows.len() >= cells.len());
    }
}

#[test]
fn certificates_scale_with_d() {
    let cells = [1, 4, 6];
    let rows = RowSelection::new(10, &[0, 2, 3, 7, 9]).unwrap();
    let base = frame_certificate(&grid(10, &cells, 1.0), &rows).unwrap();
    for d in [0.25, 2.0, 7.5] {
        let c = frame_certificate(&grid(10, &cells, d), &rows).unwrap();
        assert_eq!(c.lambda_min, base.lambda_min);
        assert_eq!(c.normalized_upper, base.normalized_upper);
        assert!((c.a_frame - d * base.a_frame).abs() < 1e-12 * d * base.a_frame);
        assert!((c.upper_sampling - d * base.upper_sampling).abs() < 1e-12 * d);
        // frame bounds over |Ω| do not depend on d
        let omega = grid(10, &cells, d).measure();
        assert!((c.a_frame / omega - c.normalized_lower).abs() < 1e-12);
    }
}

#[test]
fn plancherel_for_random_test_functions() {
    let g = grid(6, &[0, 1, 4], 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let f = PwTestFunction::random(&g, 2, &mut rng);
    // ‖f‖² by the trapezoid rule on a long interval
    let (h, half) = (0.01, 3000.0);
    let steps = (2.0 * half / h) as usize;
    let integral: f64 = (0..=steps)
        .map(|i| {
            let x = -half + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            w * f.eval(x).norm_sqr()
        })
        .sum::<f64>()
        * h;
    let norm = f.norm_squared();
    assert!((integral - norm).abs() < 2e-3 * norm, "{integral} vs {norm}");
}

#[test]
fn pipeline_cover_contains_spectrum() {
    let u = IntervalUnion::new(&[(-1.0, -0.4), (0.3, 1.7), (2.0, 2.05)]).unwrap();
    let normalized = normalize_to_window(&u);
    assert_eq!(normalized.shift, -1.0);
    let d = normalized.d.max(1.0);
    let tolerance = 0.01 * u.measure();
    let cover = auto_grid_cover(&normalized.union, d, 64, tolerance).unwrap();
    assert!(cover.excess <= tolerance);
    let g = &cover.grid;
    for &(a, b) in normalized.union.intervals() {
        for i in 0..=100 {
            let t = a + (b - a) * i as f64 / 100.0;
            if t >= b {
                continue;
            }
            let r = (t / g.cell_width()).floor() as usize;
            assert!(g.cells().contains(&r), "point {t} not covered");
        }
    }
    assert!(grid_cover(&normalized.union, d, g.m() / 2, tolerance).is_err());
    let (rows, cert, _) = select_rows(g, &SelectionConfig::default()).unwrap();
    assert!(cert.is_frame && rows.len() >= g.n());
}

#[test]
fn density_and_window_counts() {
    let g = grid(64, &[0, 1, 2, 40], 2.0);
    let rows = RowSelection::new(64, &[0, 5, 9, 17, 33, 50]).unwrap();
    let cert = frame_certificate(&g, &rows).unwrap();
    let set = FrequencySet::new(rows.clone(), 64, 2.0);
    let report = density_report(&set, g.measure(), 3.0 * set.period(), (0.0, 40.0 * set.period())).unwrap();
    assert!(report.period_aligned);
    assert_eq!(report.min_count, 18);
    assert_eq!(report.max_count, 18);
    assert_eq!(report.landau_ok, Some(true));
    let (lower_ok, upper_ok) = density_bounds_check(&report, &cert);
    assert!(lower_ok && upper_ok);
    let check = window_count_check(&g, &rows).unwrap();
    assert!(check.pass);
    assert!(check.max_count as f64 <= check.frame_bound);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shifted_spectra_share_certificates(m in 2usize..24, seed in any::<u64>(), s in 1usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=m.min(4));
        let cells = common::random_subset(&mut rng, m, n);
        let size = rng.random_range(1..=m);
        let rows = common::random_subset(&mut rng, m, size);
        let s = s % m;
        let a = frame_certificate(&grid(m, &cells, 1.0), &RowSelection::new(m, &rows).unwrap()).unwrap();
        let b = frame_certificate(
            &grid(m, &common::shift(&cells, s, m), 1.0),
            &RowSelection::new(m, &rows).unwrap(),
        ).unwrap();
        prop_assert!((a.lambda_min - b.lambda_min).abs() < 1e-9 * m as f64);
        prop_assert!((a.lambda_max - b.lambda_max).abs() < 1e-9 * m as f64);
    }

    #[test]
    fn certificate_matches_general_eigensolver(m in 1usize..40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=m.min(8));
        let cells = common::random_subset(&mut rng, m, n);
        let size = rng.random_range(1..=m);
        let rows = common::random_subset(&mut rng, m, size);
        let cert = frame_certificate(&grid(m, &cells, 1.0), &RowSelection::new(m, &rows).unwrap()).unwrap();
        let (lo, hi) = common::extremes(m, &rows, &cells);
        prop_assert!((cert.lambda_max - hi).abs() < 1e-9 * m as f64);
        prop_assert!((cert.lambda_min - lo.max(0.0)).abs() < 1e-8 * m as f64);
    }
}
