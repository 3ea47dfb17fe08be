//! Trace digest: convergence per link and user, oscillation spans and
//! admission outcomes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::metrics::{amplitude, mean};
use crate::scalar::Scalar;
use crate::trace::Trace;

/// Iterations `from..=to` at which the trailing window was oscillating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub id: String,
    pub final_value: f64,
    /// Amplitude of the last window.
    pub final_amplitude: f64,
    /// `None` when the trace is shorter than the window.
    pub converged: Option<bool>,
    pub oscillation: Vec<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionSummary {
    pub iteration: usize,
    pub admitted: Vec<u32>,
    pub dismissed: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub window: usize,
    /// Tolerance as a fraction of the window mean.
    pub tolerance: f64,
    pub links: Vec<SeriesSummary>,
    pub users: Vec<SeriesSummary>,
    pub admissions: Vec<AdmissionSummary>,
}

fn window_stats(w: &[f64]) -> (f64, f64) {
    let amp = amplitude(w);
    (amp, mean(w).abs())
}

fn oscillating(w: &[f64], tolerance: f64) -> bool {
    let (amp, m) = window_stats(w);
    amp > 0.0 && amp >= tolerance * m
}

fn series_summary(id: String, series: &[f64], window: usize, tolerance: f64) -> SeriesSummary {
    let final_value = series.last().copied().unwrap_or(0.0);
    if window < 2 || series.len() < window {
        return SeriesSummary {
            id,
            final_value,
            final_amplitude: amplitude(series),
            converged: None,
            oscillation: Vec::new(),
        };
    }
    let mut spans: Vec<Span> = Vec::new();
    for end in window - 1..series.len() {
        if oscillating(&series[end + 1 - window..=end], tolerance) {
            match spans.last_mut() {
                Some(s) if s.to + 1 == end => s.to = end,
                _ => spans.push(Span { from: end, to: end }),
            }
        }
    }
    let last = &series[series.len() - window..];
    SeriesSummary {
        id,
        final_value,
        final_amplitude: amplitude(last),
        converged: Some(!oscillating(last, tolerance)),
        oscillation: spans,
    }
}

impl RunSummary {
    pub fn from_trace<T: Scalar>(trace: &Trace<T>, window: usize, tolerance: f64) -> Self {
        let f = |v: Vec<T>| v.into_iter().map(Scalar::as_f64).collect::<Vec<f64>>();
        let links = trace
            .link_ids
            .iter()
            .map(|id| {
                series_summary(
                    id.to_string(),
                    &f(trace.link_prices(&id.0).unwrap_or_default()),
                    window,
                    tolerance,
                )
            })
            .collect();
        let users = trace
            .user_ids
            .iter()
            .map(|id| {
                series_summary(
                    id.to_string(),
                    &f(trace.user_rates(id.0).unwrap_or_default()),
                    window,
                    tolerance,
                )
            })
            .collect();
        let admissions = trace
            .admissions
            .iter()
            .map(|a| AdmissionSummary {
                iteration: a.iteration,
                admitted: a.result.admitted.iter().map(|u| u.0).collect(),
                dismissed: a.result.rejected.iter().map(|u| u.0).collect(),
            })
            .collect();
        Self {
            iterations: trace.len(),
            window,
            tolerance,
            links,
            users,
            admissions,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Short human-readable report.
    pub fn digest(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} iterations, window {}, tolerance {}% of mean",
            self.iterations,
            self.window,
            self.tolerance * 100.0
        );
        let row = |s: &mut String, kind: &str, e: &SeriesSummary| {
            let state = match e.converged {
                Some(true) => "converged",
                Some(false) => "oscillating",
                None => "too short",
            };
            let spans: Vec<String> = e.oscillation.iter().map(|w| format!("{}-{}", w.from, w.to)).collect();
            let _ = writeln!(
                s,
                "  {kind} {:<6} final {:>10.4}  amplitude {:>9.4}  {state:<11} {}",
                e.id,
                e.final_value,
                e.final_amplitude,
                if spans.is_empty() {
                    String::new()
                } else {
                    format!("oscillating at {}", spans.join(", "))
                }
            );
        };
        let _ = writeln!(s, "link prices:");
        for e in &self.links {
            row(&mut s, "link", e);
        }
        let _ = writeln!(s, "user rates:");
        for e in &self.users {
            row(&mut s, "user", e);
        }
        for a in &self.admissions {
            let _ = writeln!(
                s,
                "admission at iteration {}: admitted {:?}, dismissed {:?}",
                a.iteration, a.admitted, a.dismissed
            );
        }
        s
    }
}
