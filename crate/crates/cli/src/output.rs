// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

//! Trace, summary and sweep serialization. Floats are written with 17
//! significant digits so repeated runs compare byte for byte.

use coscat::protocol::{PairBeat, RunSummary};
use coscat::reduced::FluxTrace;
use serde::Serialize;

pub const TRACE_HEADER: [&str; 5] = ["t_s", "flux_per_s", "bound_lower_per_s", "bound_upper_per_s", "engine"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Vec<u8>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(header).expect("in-memory write");
        fill(&mut w).expect("in-memory write");
        w.flush().expect("in-memory write");
    }
    buf
}

pub fn trace_csv(trace: &FluxTrace) -> Vec<u8> {
    csv_bytes(&TRACE_HEADER, |w| {
        for k in 0..trace.times.len() {
            w.write_record([
                fmt_f64(trace.times[k]),
                fmt_f64(trace.flux[k]),
                fmt_f64(trace.bound_lower[k]),
                fmt_f64(trace.bound_upper[k]),
                trace.source.as_str().to_string(),
            ])?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct TraceDoc<'a> {
    engine: &'a str,
    t_s: &'a [f64],
    flux_per_s: &'a [f64],
    bound_lower_per_s: &'a [f64],
    bound_upper_per_s: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    cavity_output_per_s: Option<&'a [f64]>,
}

pub fn trace_json(trace: &FluxTrace) -> Vec<u8> {
    let doc = TraceDoc {
        engine: trace.source.as_str(),
        t_s: &trace.times,
        flux_per_s: &trace.flux,
        bound_lower_per_s: &trace.bound_lower,
        bound_upper_per_s: &trace.bound_upper,
        cavity_output_per_s: trace.cavity_output.as_deref(),
    };
    json_bytes(&doc)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub num_particles: usize,
    pub verification_time_s: f64,
    pub mechanical_detuning: f64,
    pub effective_detuning: f64,
    pub flux_prefactor_per_s: f64,
    pub engines: Vec<RunSummary>,
    pub pairs: Vec<PairBeat>,
    pub warnings: Vec<String>,
}

pub const SWEEP_HEADER: [&str; 12] = [
    "param",
    "value",
    "engine",
    "verification_time_s",
    "first_window_onset_s",
    "next_window_onset_s",
    "last_window_end_s",
    "window_count",
    "total_window_duration_s",
    "mean_window_spacing_s",
    "beat_period_s",
    "conditioned_fidelity",
];

/// One row of the long-format sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub summary: RunSummary,
}

impl SweepRow {
    /// Onset of the first window that opens after the click.
    pub fn next_window_onset(&self) -> Option<f64> {
        self.summary.windows.iter().find(|w| w.start > 0.0).map(|w| w.start)
    }

    pub fn total_window_duration(&self) -> f64 {
        self.summary.windows.iter().map(|w| w.duration()).sum()
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> Vec<u8> {
    csv_bytes(&SWEEP_HEADER, |w| {
        for r in rows {
            let s = &r.summary;
            w.write_record([
                r.param.clone(),
                fmt_f64(r.value),
                s.engine.as_str().to_string(),
                fmt_f64(s.verification_time_s),
                fmt_opt(s.first_window_onset_s),
                fmt_opt(r.next_window_onset()),
                fmt_opt(s.last_window_end_s),
                s.window_count.to_string(),
                fmt_f64(r.total_window_duration()),
                fmt_opt(s.mean_window_spacing_s),
                fmt_opt(s.beat_period_s),
                fmt_f64(s.conditioned_fidelity),
            ])?;
        }
        Ok(())
    })
}
