// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use coscat::params::DerivedParams;
use coscat::protocol::{self, Engine};
use rayon::prelude::*;

use crate::config::{OutputFormat, RunConfig};
use crate::output::{self, SimulationSummary, SweepRow};
use crate::{CliError, WORKERS_ENV};

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

/// Human-readable table of every derived quantity.
pub fn derived_table(dp: &DerivedParams) -> String {
    let mut rows: Vec<(String, f64, &str)> = vec![
        ("detuning".into(), dp.detuning, "rad/s"),
        ("cavity_linewidth".into(), dp.cavity_linewidth, "rad/s"),
        ("mean_trap_frequency/2pi".into(), dp.mean_trap_frequency / (2.0 * PI), "Hz"),
        ("mean_trap_frequency".into(), dp.mean_trap_frequency, "rad/s"),
        ("mechanical_detuning".into(), dp.mechanical_detuning, "rad/s"),
        ("effective_detuning".into(), dp.effective_detuning, "rad/s"),
        ("mean_coupling".into(), dp.mean_coupling, "rad/s"),
        ("mode_volume".into(), dp.mode_volume, "m^3"),
        ("mean_damping".into(), dp.mean_damping, "1/s"),
        ("verification_time".into(), dp.verification_time, "s"),
    ];
    for j in 0..dp.num_particles() {
        rows.extend([
            (format!("trap_frequency[{j}]/2pi"), dp.trap_frequency[j] / (2.0 * PI), "Hz"),
            (format!("trap_frequency[{j}]"), dp.trap_frequency[j], "rad/s"),
            (format!("coupling[{j}]"), dp.coupling[j], "rad/s"),
            (format!("scattering_rate[{j}]"), dp.scattering_rate[j], "Hz"),
            (format!("optical_spring[{j}]"), dp.optical_spring[j], "rad/s"),
            (format!("heating_rate[{j}]"), dp.heating_rate[j], "1/s"),
            (format!("cooling_rate[{j}]"), dp.cooling_rate[j], "1/s"),
            (format!("net_damping[{j}]"), dp.net_damping[j], "1/s"),
            (format!("steady_occupation[{j}]"), dp.steady_occupation[j], ""),
        ]);
    }
    for (i, j) in coscat::reduced::pairs(dp.num_particles()) {
        rows.push((format!("pair_detuning[{i}][{j}]"), dp.pair_detuning[i][j], "rad/s"));
        rows.push((format!("pair_damping[{i}][{j}]"), dp.pair_damping[i][j], "1/s"));
    }
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(name, v, unit)| format!("{name:<width$}  {v:>24.10e}  {unit}\n"))
        .collect()
}

pub fn cmd_derive(config: &Path, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let run = RunConfig::load(config)?;
    let dp = run.derived()?;
    if json {
        let text = String::from_utf8(output::json_bytes(&dp)).expect("utf-8");
        write_out(out, &text)
    } else {
        write_out(out, &derived_table(&dp))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    pub out_dir: Option<PathBuf>,
    pub engine: Option<Engine>,
    pub format: Option<OutputFormat>,
}

/// Writes every file or none: anything written before a failure is removed.
fn write_all_or_nothing(files: &[(PathBuf, Vec<u8>)]) -> Result<(), CliError> {
    let mut written: Vec<&Path> = Vec::new();
    for (path, bytes) in files {
        if let Err(e) = fs::write(path, bytes) {
            for p in written {
                let _ = fs::remove_file(p);
            }
            let _ = fs::remove_file(path);
            return Err(CliError::io(path, e));
        }
        written.push(path);
    }
    Ok(())
}

/// Runs the protocol and writes the traces, `summary.json` and the
/// effective config. Returns the written paths.
pub fn cmd_simulate(config: &Path, opts: &SimulateOptions) -> Result<Vec<PathBuf>, CliError> {
    let mut run = RunConfig::load(config)?;
    if let Some(e) = opts.engine {
        run.engine = e;
    }
    if let Some(f) = opts.format {
        run.format = f;
    }
    if let Some(d) = &opts.out_dir {
        run.output_dir = d.clone();
    }
    let settings = run.settings();
    let (result, pairs, warnings) = if run.physical.num_particles() >= 2 {
        let r = protocol::run_nparticle(&run.physical, &run.layout, &settings)?;
        (r.run, r.pairs, r.warnings)
    } else {
        (protocol::run_protocol(&run.physical, &run.layout, &settings)?, vec![], vec![])
    };

    let dp = &result.readout;
    let summary = SimulationSummary {
        num_particles: dp.num_particles(),
        verification_time_s: dp.verification_time,
        mechanical_detuning: dp.mechanical_detuning,
        effective_detuning: dp.effective_detuning,
        flux_prefactor_per_s: dp.flux_prefactor() * run.physical.detector_efficiency,
        engines: result.summaries.clone(),
        pairs,
        warnings,
    };

    let dir = &run.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for trace in &result.traces {
        let (ext, bytes) = match run.format {
            OutputFormat::Csv => ("csv", output::trace_csv(trace)),
            OutputFormat::Json => ("json", output::trace_json(trace)),
        };
        files.push((dir.join(format!("trace_{}.{ext}", trace.source.as_str())), bytes));
    }
    files.push((dir.join("summary.json"), output::json_bytes(&summary)));
    files.push((dir.join("config.effective.json"), output::json_bytes(&run.effective())));
    write_all_or_nothing(&files)?;
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Scalar keys accepted by [`cmd_sweep`].
pub const SWEEP_PARAMS: [&str; 12] = [
    "ground_state_population",
    "detector_efficiency",
    "tweezer_power",
    "tweezer_waist",
    "particle_radius",
    "cavity_linewidth",
    "cavity_linewidth_hz",
    "mechanical_detuning",
    "mechanical_detuning_hz",
    "t0_over_kappa",
    "horizon_s",
    "cavity_length",
];

/// Copy of `base` with one scalar replaced.
pub fn apply_sweep_value(base: &RunConfig, param: &str, value: f64) -> Result<RunConfig, CliError> {
    let mut run = base.clone();
    let p = &mut run.physical;
    let n = p.num_particles();
    match param {
        "ground_state_population" => p.ground_state_population = vec![value; n],
        "detector_efficiency" => p.detector_efficiency = value,
        "tweezer_power" => p.tweezer_power = vec![value; n],
        "tweezer_waist" => p.tweezer_waist = vec![value; n],
        "particle_radius" => p.particle_radius = vec![value; n],
        "cavity_linewidth" => p.cavity_linewidth = value,
        "cavity_linewidth_hz" => p.cavity_linewidth = 2.0 * PI * value,
        "cavity_length" => p.cavity_length = value,
        "mechanical_detuning" | "mechanical_detuning_hz" => {
            if n != 2 {
                return Err(CliError::Config(format!("sweeping {param} needs exactly two particles")));
            }
            let d = if param.ends_with("_hz") { 2.0 * PI * value } else { value };
            p.trap_frequency_offset = vec![-0.5 * d, 0.5 * d];
        }
        "t0_over_kappa" if value > 0.0 => run.t0_over_kappa = value,
        "horizon_s" if value >= 0.0 => run.horizon = value,
        "t0_over_kappa" | "horizon_s" => {
            return Err(CliError::Config(format!("{param} = {value} is out of range")));
        }
        _ => {
            return Err(CliError::Config(format!(
                "unknown sweep parameter `{param}`; expected one of {}",
                SWEEP_PARAMS.join(", ")
            )))
        }
    }
    let p = &mut run.physical;
    if !value.is_finite() {
        return Err(CliError::Config(format!("{param} = {value} is not finite")));
    }
    p.validate().map_err(|e| CliError::Config(format!("{param} = {value}: {e}")))?;
    if !run.explicit_detuning {
        *p = p.red_sideband().map_err(|e| CliError::Config(e.to_string()))?;
    }
    run.readout_params()?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepValues {
    List(Vec<f64>),
    /// `count` evenly spaced values including both ends.
    Range { start: f64, stop: f64, count: usize },
}

impl SweepValues {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            SweepValues::List(ref v) => v.clone(),
            SweepValues::Range { count: 0, .. } => vec![],
            SweepValues::Range { start, count: 1, .. } => vec![start],
            SweepValues::Range { start, stop, count } => (0..count)
                .map(|k| if k + 1 == count { stop } else { start + (stop - start) * k as f64 / (count - 1) as f64 })
                .collect(),
        }
    }

    /// Comma-separated list; the empty string is the empty sweep.
    pub fn parse_list(text: &str) -> Result<Self, CliError> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(SweepValues::List(vec![]));
        }
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad sweep value `{s}`"))))
            .collect::<Result<_, _>>()
            .map(SweepValues::List)
    }

    /// `start:stop:count`.
    pub fn parse_range(text: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("bad range `{text}`, expected start:stop:count"));
        let parts: Vec<&str> = text.split(':').collect();
        let [a, b, c] = parts.as_slice() else { return Err(bad()) };
        Ok(SweepValues::Range {
            start: a.trim().parse().map_err(|_| bad())?,
            stop: b.trim().parse().map_err(|_| bad())?,
            count: c.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub param: String,
    pub values: SweepValues,
    /// Output CSV; defaults to `<output dir>/sweep_<param>.csv`.
    pub out: Option<PathBuf>,
    pub engine: Option<Engine>,
}

fn worker_count() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got `{s}`"))),
        },
    }
}

/// One summary row per value and engine, in input order.
pub fn sweep_rows(base: &RunConfig, param: &str, values: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(CliError::Config(format!(
            "unknown sweep parameter `{param}`; expected one of {}",
            SWEEP_PARAMS.join(", ")
        )));
    }
    let runs: Vec<RunConfig> = values
        .iter()
        .map(|&v| apply_sweep_value(base, param, v))
        .collect::<Result<_, _>>()?;
    let work = || {
        runs.par_iter()
            .map(|run| protocol::run_protocol(&run.physical, &run.layout, &run.settings()))
            .collect::<Result<Vec<_>, _>>()
    };
    let results = match worker_count()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} workers: {e}")))?
            .install(work),
        None => work(),
    }?;
    Ok(values
        .iter()
        .zip(results)
        .flat_map(|(&value, res)| {
            res.summaries.into_iter().map(move |summary| SweepRow { param: param.to_string(), value, summary })
        })
        .collect())
}

pub fn cmd_sweep(config: &Path, opts: &SweepOptions) -> Result<PathBuf, CliError> {
    let mut base = RunConfig::load(config)?;
    if let Some(e) = opts.engine {
        base.engine = e;
    }
    let rows = sweep_rows(&base, &opts.param, &opts.values.values())?;
    let path = match &opts.out {
        Some(p) => p.clone(),
        None => {
            fs::create_dir_all(&base.output_dir).map_err(|e| CliError::io(&base.output_dir, e))?;
            base.output_dir.join(format!("sweep_{}.csv", opts.param))
        }
    };
    write_all_or_nothing(&[(path.clone(), output::sweep_csv(&rows))])?;
    Ok(path)
}
