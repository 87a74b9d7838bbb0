use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use expframe::matrix::{gram_spectrum, FrequencySet};
use expframe::selection::Method;
use expframe::spectrum::{auto_grid_cover, grid_cover, DEFAULT_START_ORDER};
use expframe::verification::{
    density_bounds_check, window_count_check, witness_sampling_ratio, MonteCarloParams,
};
use expframe::{
    compute_schedule, density_report, extremal_witness, frame_certificate, normalize_to_window,
    pw_monte_carlo, rayleigh_matrix_samples, select_rows, GridSpectrum, MatrixError, RowSelection,
    SelectionConfig, SelectionError, Side, SpectrumError, SpectrumInput, VerificationError,
};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::{Command, Format, SelectionArgs, VerificationArgs};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative agreement required between a witness and its eigenvalue.
const WITNESS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Failure(_) => 2,
        }
    }
}

pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass { Outcome::Pass } else { Outcome::Fail }
    }
}

fn spectrum_error(e: SpectrumError) -> CliError {
    CliError::Input(format!("spectrum normalization / grid cover: {e}"))
}

fn selection_error(e: SelectionError) -> CliError {
    match e {
        SelectionError::NoCertifiedPartition { .. } | SelectionError::HalvingStalled { .. } => {
            CliError::Failure(format!("row selection (iterated halving): {e}"))
        }
        SelectionError::Matrix(inner) => matrix_error(inner),
        other => CliError::Input(format!("row selection: {other}")),
    }
}

fn matrix_error(e: MatrixError) -> CliError {
    CliError::Input(format!("certificate (Gram eigenvalues): {e}"))
}

fn verification_error(e: VerificationError) -> CliError {
    match e {
        VerificationError::TruncationTooSevere { .. } => {
            CliError::Failure(format!("sampling verification: {e}"))
        }
        VerificationError::Matrix(inner) => matrix_error(inner),
        other => CliError::Input(format!("verification: {other}")),
    }
}

fn read_input(input: &str) -> Result<Value, CliError> {
    let text = if input.trim_start().starts_with('{') {
        input.to_string()
    } else {
        fs::read_to_string(input).map_err(|e| CliError::Input(format!("reading {input}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("parsing {input}: {e}")))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Input(format!("writing {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(value: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("output is serializable");
    text.push('\n');
    text
}

/// CSV body preceded by a comment line carrying the resolved config.
fn to_csv(config: &Value, header: &str, lines: impl IntoIterator<Item = String>) -> String {
    let mut text = format!("# config: {config}\n{header}\n");
    for line in lines {
        let _ = writeln!(text, "{line}");
    }
    text
}

fn grid_and_rows(value: &Value, override_rows: Option<&[usize]>) -> Result<(GridSpectrum, RowSelection), CliError> {
    let grid_value = value
        .get("grid")
        .ok_or_else(|| CliError::Input("input has no \"grid\" object".into()))?;
    let grid: GridSpectrum = serde_json::from_value(grid_value.clone())
        .map_err(|e| CliError::Input(format!("spectrum: bad grid: {e}")))?;
    let rows: Vec<usize> = match override_rows {
        Some(rows) => rows.to_vec(),
        None => {
            let raw = value
                .get("J")
                .ok_or_else(|| CliError::Input("no row set: pass --J or include \"J\"".into()))?;
            serde_json::from_value(raw.clone())
                .map_err(|e| CliError::Input(format!("bad \"J\": {e}")))?
        }
    };
    let rows = RowSelection::new(grid.m(), &rows).map_err(matrix_error)?;
    Ok((grid, rows))
}

fn selection_config(args: &SelectionArgs) -> Result<SelectionConfig, CliError> {
    let method: Method = args.method.parse().map_err(selection_error)?;
    let cfg = SelectionConfig {
        method,
        seed: args.seed,
        max_attempts: args.max_attempts,
        slack: args.slack,
    };
    cfg.validate().map_err(selection_error)?;
    Ok(cfg)
}

pub fn run(command: Command) -> Result<Outcome, CliError> {
    match command {
        Command::Construct { io, m, d, epsilon_cover, selection } => {
            construct(&io.input, io.out.as_deref(), io.format, m, d, epsilon_cover, &selection)
        }
        Command::Certify { io, rows } => certify(&io.input, io.out.as_deref(), io.format, rows.as_deref()),
        Command::Verify { io, verification } => verify(&io.input, io.out.as_deref(), io.format, &verification),
        Command::Density { io, window, scan } => {
            density(&io.input, io.out.as_deref(), io.format, window, scan.as_deref())
        }
        Command::Schedule { delta, out, format } => schedule(delta, out.as_deref(), format),
    }
}

fn construct(
    input: &str,
    out: Option<&Path>,
    format: Format,
    m: Option<usize>,
    d: Option<f64>,
    epsilon_cover: f64,
    selection: &SelectionArgs,
) -> Result<Outcome, CliError> {
    let cfg = selection_config(selection)?;
    let value = read_input(input)?;
    let spectrum: SpectrumInput = serde_json::from_value(value.clone())
        .map_err(|e| CliError::Input(format!("spectrum: expected intervals or grid: {e}")))?;
    if !(epsilon_cover > 0.0) {
        return Err(CliError::Input("--epsilon-cover must be positive".into()));
    }

    let (grid, spectrum_info) = match &spectrum {
        SpectrumInput::Grid { grid } => {
            let info = json!({ "shift": 0.0, "d": grid.d(), "measure": grid.measure(), "excess": 0.0 });
            (grid.clone(), info)
        }
        SpectrumInput::Intervals { .. } => {
            let union = spectrum.interval_union().map_err(spectrum_error)?;
            let normalized = normalize_to_window(&union);
            let scale = match d {
                Some(d) if d < normalized.d * (1.0 - 1e-12) => {
                    return Err(CliError::Input(format!(
                        "spectrum: --d {d} is smaller than the window scale {}",
                        normalized.d
                    )))
                }
                Some(d) => d,
                None => normalized.d.max(1.0),
            };
            let tolerance = epsilon_cover * union.measure();
            let cover = match m {
                Some(m) => grid_cover(&normalized.union, scale, m, tolerance),
                None => auto_grid_cover(&normalized.union, scale, DEFAULT_START_ORDER, tolerance),
            }
            .map_err(spectrum_error)?;
            let info = json!({
                "shift": normalized.shift,
                "d": scale,
                "measure": union.measure(),
                "excess": cover.excess,
            });
            (cover.grid, info)
        }
    };

    let (rows, cert, trace) = select_rows(&grid, &cfg).map_err(selection_error)?;
    let set = FrequencySet::new(rows.clone(), grid.m(), grid.d());
    let config = json!({
        "subcommand": "construct",
        "input": value,
        "m": m,
        "d": d,
        "epsilon_cover": epsilon_cover,
        "selection": cfg,
        "format": format,
    });
    let text = match format {
        Format::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "command": "construct",
            "config": config,
            "seed": cfg.seed,
            "spectrum": spectrum_info,
            "grid": grid,
            "J": rows,
            "frequency_set": {
                "J": rows,
                "m": grid.m(),
                "d": grid.d(),
                "separation": set.separation(),
                "period": set.period(),
            },
            "certificate": cert,
            "trace": trace,
        })),
        Format::Csv => {
            let spectrum = gram_spectrum(&grid, &rows).map_err(matrix_error)?;
            to_csv(&config, "eigenvalue", spectrum.iter().map(|v| v.to_string()))
        }
    };
    write_output(out, &text)?;
    Ok(Outcome::from_pass(cert.is_frame))
}

fn certify(input: &str, out: Option<&Path>, format: Format, rows: Option<&[usize]>) -> Result<Outcome, CliError> {
    let value = read_input(input)?;
    let (grid, rows) = grid_and_rows(&value, rows)?;
    let cert = frame_certificate(&grid, &rows).map_err(matrix_error)?;
    let config = json!({
        "subcommand": "certify",
        "grid": grid,
        "J": rows,
        "format": format,
    });
    let text = match format {
        Format::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "command": "certify",
            "config": config,
            "seed": Value::Null,
            "grid": grid,
            "J": rows,
            "certificate": cert,
        })),
        Format::Csv => {
            let spectrum = gram_spectrum(&grid, &rows).map_err(matrix_error)?;
            to_csv(&config, "eigenvalue", spectrum.iter().map(|v| v.to_string()))
        }
    };
    write_output(out, &text)?;
    Ok(Outcome::from_pass(cert.is_frame))
}

#[derive(Serialize)]
struct WitnessCheck {
    side: Side,
    eigenvalue: f64,
    matrix_value: f64,
    matrix_pass: bool,
    /// Truncated sampling ratio of the witness function, and its certified target.
    sampling_ratio: f64,
    sampling_target: f64,
    tail: f64,
    sampling_pass: bool,
}

fn verify(input: &str, out: Option<&Path>, format: Format, args: &VerificationArgs) -> Result<Outcome, CliError> {
    let value = read_input(input)?;
    let (grid, rows) = grid_and_rows(&value, None)?;
    let cert = frame_certificate(&grid, &rows).map_err(matrix_error)?;
    let mut params = MonteCarloParams::defaults_for(&grid, args.seed);
    params.count = args.count;
    params.order = args.order;
    params.tol = args.tol;
    if let Some(r) = args.radius {
        params.radius = r;
    }

    let m = grid.m() as f64;
    let rayleigh = rayleigh_matrix_samples(&grid, &rows, params.count, params.seed).map_err(verification_error)?;
    let rayleigh_pass = rayleigh
        .iter()
        .all(|&v| v >= cert.lambda_min - 1e-9 * m && v <= cert.lambda_max + 1e-9 * m);

    let mut witnesses = Vec::new();
    for (side, eigenvalue, target) in [
        (Side::Min, cert.lambda_min, cert.a_sampling),
        (Side::Max, cert.lambda_max, cert.upper_sampling),
    ] {
        let (_, matrix_value) = extremal_witness(&grid, &rows, side).map_err(verification_error)?;
        let (sampling_ratio, _, tail) =
            witness_sampling_ratio(&grid, &rows, side, params.radius).map_err(verification_error)?;
        witnesses.push(WitnessCheck {
            side,
            eigenvalue,
            matrix_value,
            matrix_pass: (matrix_value - eigenvalue).abs() <= WITNESS_TOLERANCE * cert.lambda_max.max(1e-300),
            sampling_ratio,
            sampling_target: target,
            tail,
            sampling_pass: sampling_ratio <= target * (1.0 + params.tol)
                && sampling_ratio >= target * (1.0 - params.tol) - tail,
        });
    }

    let report = pw_monte_carlo(&grid, &rows, &params).map_err(verification_error)?;
    let pass = cert.is_frame
        && rayleigh_pass
        && report.pass
        && witnesses.iter().all(|w| w.matrix_pass && w.sampling_pass);
    let config = json!({
        "subcommand": "verify",
        "grid": grid,
        "J": rows,
        "verification": params,
        "format": format,
    });
    let text = match format {
        Format::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "command": "verify",
            "config": config,
            "seed": params.seed,
            "certificate": cert,
            "rayleigh": {
                "min": rayleigh.iter().copied().fold(f64::INFINITY, f64::min),
                "max": rayleigh.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                "pass": rayleigh_pass,
            },
            "witnesses": witnesses,
            "monte_carlo": report,
            "pass": pass,
        })),
        Format::Csv => to_csv(
            &config,
            "trial,ratio,exact_ratio",
            report
                .ratios
                .iter()
                .zip(&report.exact_ratios)
                .enumerate()
                .map(|(t, (r, e))| format!("{t},{r},{e}")),
        ),
    };
    write_output(out, &text)?;
    Ok(Outcome::from_pass(pass))
}

fn density(
    input: &str,
    out: Option<&Path>,
    format: Format,
    window: Option<f64>,
    scan: Option<&[f64]>,
) -> Result<Outcome, CliError> {
    let value = read_input(input)?;
    let (grid, rows) = grid_and_rows(&value, None)?;
    let cert = frame_certificate(&grid, &rows).map_err(matrix_error)?;
    let set = FrequencySet::new(rows.clone(), grid.m(), grid.d());
    let window = window.unwrap_or(10.0 * set.period());
    let scan = match scan {
        Some([x0, x1]) => (*x0, *x1),
        Some(_) => return Err(CliError::Input("--scan takes x0,x1".into())),
        None => (0.0, 20.0 * window),
    };
    let report = density_report(&set, grid.measure(), window, scan).map_err(verification_error)?;
    let (lower_ok, upper_ok) = density_bounds_check(&report, &cert);
    let count = window_count_check(&grid, &rows).map_err(verification_error)?;
    let pass = report.landau_ok.unwrap_or(true) && report.residues_ok && count.pass && lower_ok && upper_ok;
    let config = json!({
        "subcommand": "density",
        "grid": grid,
        "J": rows,
        "window": window,
        "scan": [scan.0, scan.1],
        "format": format,
    });
    let text = match format {
        Format::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "command": "density",
            "config": config,
            "seed": Value::Null,
            "density": report,
            "density_bounds": {
                "landau_floor": grid.measure() / (2.0 * PI),
                "upper_limit": 4.0 * cert.upper_sampling,
                "lower_ok": lower_ok,
                "upper_ok": upper_ok,
            },
            "window_count": count,
            "pass": pass,
        })),
        Format::Csv => to_csv(
            &config,
            "offset,count",
            report.offsets.iter().zip(&report.counts).map(|(x, c)| format!("{x},{c}")),
        ),
    };
    write_output(out, &text)?;
    Ok(Outcome::from_pass(pass))
}

fn schedule(delta: f64, out: Option<&Path>, format: Format) -> Result<Outcome, CliError> {
    let schedule = compute_schedule(delta).map_err(selection_error)?;
    let config = json!({ "subcommand": "schedule", "delta": delta, "format": format });
    let text = match format {
        Format::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "command": "schedule",
            "config": config,
            "seed": Value::Null,
            "schedule": schedule,
            "final_ratio": schedule.final_beta() / schedule.final_alpha(),
        })),
        Format::Csv => to_csv(
            &config,
            "j,alpha,beta",
            schedule
                .alphas
                .iter()
                .zip(&schedule.betas)
                .enumerate()
                .map(|(j, (a, b))| format!("{j},{a},{b}")),
        ),
    };
    write_output(out, &text)?;
    Ok(Outcome::Pass)
}
