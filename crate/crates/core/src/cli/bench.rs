//! Benchmark metrics computed from a finished run.

use serde::Serialize;

use super::presets::{inclined_crack_case, Preset, FRACTURE_PRESSURE};
use super::{CliError, ProfileRecord, RunOutcome};
use crate::oracles::{
    constant_slip_reference, inclined_crack_slip, inclined_crack_traction, profile_error, sif_ratio, sneddon_opening,
    InclinedCrackCase, ProfileError, SifEstimate, TipEnd,
};

/// Error window as fractions of the fracture length.
pub const WINDOW: [f64; 2] = [0.1, 0.9];

/// Summary written by `bench --report`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub preset: String,
    #[serde(rename = "rel_L2")]
    pub rel_l2: Option<f64>,
    pub max_penetration: f64,
    pub newton_iters: usize,
    pub wall_time_s: f64,
}

fn in_window(r: &ProfileRecord, length: f64) -> bool {
    r.eta >= WINDOW[0] * length - 1e-12 && r.eta <= WINDOW[1] * length + 1e-12
}

fn fracture_length(outcome: &RunOutcome, f: usize) -> f64 {
    outcome.mesh.fracture_length(f)
}

fn oracle_err(e: crate::oracles::OracleError) -> CliError {
    CliError::Evaluation(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InclinedCrackMetrics {
    pub slip: ProfileError,
    /// Largest relative deviation of `lambda_N` from the reference in the window.
    pub lambda_n_error: f64,
    /// Largest relative deviation of `|lambda_T|` from the reference in the window.
    pub lambda_t_error: f64,
    pub lambda_n_reference: f64,
    pub lambda_t_reference: f64,
    /// Window averages of the computed tractions.
    pub lambda_n_mean: f64,
    pub lambda_t_mean: f64,
}

pub fn inclined_crack_metrics(outcome: &RunOutcome, case: &InclinedCrackCase) -> Result<InclinedCrackMetrics, CliError> {
    let profiles = outcome.profiles();
    let records = profiles.first().ok_or_else(|| CliError::Evaluation("no fracture in mesh".into()))?;
    let length = fracture_length(outcome, 0);
    let samples: Vec<(f64, f64)> = records.iter().map(|r| (r.eta, r.ut_jump.abs())).collect();
    let slip = profile_error(&samples, |eta| inclined_crack_slip(eta.clamp(0.0, length), case).unwrap_or(0.0), length, WINDOW)
        .map_err(oracle_err)?;
    let (t_t, t_n) = inclined_crack_traction(case);
    let window: Vec<&ProfileRecord> = records.iter().filter(|r| in_window(r, length)).collect();
    let dev = |f: &dyn Fn(&ProfileRecord) -> f64, reference: f64| {
        window.iter().map(|r| ((f(r) - reference) / reference).abs()).fold(0.0, f64::max)
    };
    let mean = |f: &dyn Fn(&ProfileRecord) -> f64| window.iter().map(|r| f(r)).sum::<f64>() / window.len() as f64;
    Ok(InclinedCrackMetrics {
        slip,
        lambda_n_error: dev(&|r| r.lambda_n, t_n),
        lambda_t_error: dev(&|r| r.lambda_t.abs(), t_t),
        lambda_n_reference: t_n,
        lambda_t_reference: t_t,
        lambda_n_mean: mean(&|r| r.lambda_n),
        lambda_t_mean: mean(&|r| r.lambda_t.abs()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantSlipMetrics {
    pub mean: f64,
    pub std_over_mean: f64,
    /// `|mean - reference| / reference`.
    pub mean_error: f64,
    pub profile: ProfileError,
}

/// Statistics of `|[[u_T]]|` over all pairs of fracture 0.
pub fn constant_slip_metrics(outcome: &RunOutcome) -> Result<ConstantSlipMetrics, CliError> {
    let profiles = outcome.profiles();
    let records = profiles.first().ok_or_else(|| CliError::Evaluation("no fracture in mesh".into()))?;
    if records.is_empty() {
        return Err(CliError::Evaluation("fracture has no contact pairs".into()));
    }
    let slips: Vec<f64> = records.iter().map(|r| r.ut_jump.abs()).collect();
    let n = slips.len() as f64;
    let mean = slips.iter().sum::<f64>() / n;
    let var = slips.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let reference = constant_slip_reference();
    let samples: Vec<(f64, f64)> = records.iter().map(|r| (r.eta, r.ut_jump.abs())).collect();
    let profile =
        profile_error(&samples, |_| reference, fracture_length(outcome, 0), WINDOW).map_err(oracle_err)?;
    Ok(ConstantSlipMetrics {
        mean,
        std_over_mean: var.sqrt() / mean,
        mean_error: (mean - reference).abs() / reference,
        profile,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpeningMetrics {
    pub profile: ProfileError,
    pub center_opening: f64,
    pub center_reference: f64,
    pub center_error: f64,
}

/// Opening of fracture 0 against the pressurized-crack solution for a crack
/// with its centre at mid-length.
pub fn opening_metrics(outcome: &RunOutcome, pressure: f64) -> Result<OpeningMetrics, CliError> {
    let profiles = outcome.profiles();
    let records = profiles.first().ok_or_else(|| CliError::Evaluation("no fracture in mesh".into()))?;
    let length = fracture_length(outcome, 0);
    let l = 0.5 * length;
    let mat = outcome.config.material;
    let exact = |eta: f64| sneddon_opening((eta - l).clamp(-l, l), pressure, l, &mat).unwrap_or(0.0);
    let samples: Vec<(f64, f64)> = records.iter().map(|r| (r.eta, r.un_jump)).collect();
    let profile = profile_error(&samples, exact, length, WINDOW).map_err(oracle_err)?;
    let center = records
        .iter()
        .min_by(|a, b| (a.eta - l).abs().total_cmp(&(b.eta - l).abs()))
        .ok_or_else(|| CliError::Evaluation("fracture has no contact pairs".into()))?;
    let center_reference = exact(center.eta);
    Ok(OpeningMetrics {
        profile,
        center_opening: center.un_jump,
        center_reference,
        center_error: (center.un_jump - center_reference).abs() / center_reference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingJump {
    pub fracture: usize,
    /// Largest `|s[i-1] - 2 s[i] + s[i+1]|` of the slip at a crossing pair.
    pub crossing_second_difference: f64,
    /// Median of the same quantity over the other interior pairs.
    pub median_elsewhere: f64,
    pub ratio: f64,
}

/// Discrete second differences of the tangential jump along each fracture
/// that contains crossing pairs.
pub fn crossing_jumps(outcome: &RunOutcome) -> Vec<CrossingJump> {
    let mut out = Vec::new();
    for (f, records) in outcome.profiles().iter().enumerate() {
        if records.len() < 3 || !records.iter().any(|r| r.is_crossing_pair) {
            continue;
        }
        let s: Vec<f64> = records.iter().map(|r| r.ut_jump).collect();
        let mut at_crossing: f64 = 0.0;
        let mut elsewhere = Vec::new();
        for i in 1..s.len() - 1 {
            let d = (s[i - 1] - 2.0 * s[i] + s[i + 1]).abs();
            if records[i].is_crossing_pair {
                at_crossing = at_crossing.max(d);
            } else {
                elsewhere.push(d);
            }
        }
        elsewhere.sort_by(f64::total_cmp);
        let median = match elsewhere.len() {
            0 => 0.0,
            n if n % 2 == 1 => elsewhere[n / 2],
            n => 0.5 * (elsewhere[n / 2 - 1] + elsewhere[n / 2]),
        };
        out.push(CrossingJump {
            fracture: f,
            crossing_second_difference: at_crossing,
            median_elsewhere: median,
            ratio: at_crossing / median.max(f64::MIN_POSITIVE),
        });
    }
    out
}

/// Mode ratio at the end tip of fracture 0.
pub fn tip_sif(outcome: &RunOutcome) -> Result<SifEstimate, CliError> {
    sif_ratio(&outcome.mesh, outcome.last(), 0, TipEnd::End, &outcome.config.material).map_err(oracle_err)
}

/// Relative L2 error of the quantity each preset is judged by, if it has a
/// closed-form reference.
pub fn preset_rel_l2(preset: Preset, outcome: &RunOutcome) -> Result<Option<f64>, CliError> {
    Ok(match preset {
        Preset::InclinedCrack => Some(inclined_crack_metrics(outcome, &inclined_crack_case(45.0))?.slip.rel_l2),
        Preset::ShearThroughgoing => Some(constant_slip_metrics(outcome)?.profile.rel_l2),
        Preset::Sneddon => Some(opening_metrics(outcome, FRACTURE_PRESSURE)?.profile.rel_l2),
        Preset::CrossingSingle | Preset::CrossingMulti => None,
    })
}

pub fn bench_report(preset: Preset, outcome: &RunOutcome) -> Result<BenchReport, CliError> {
    Ok(BenchReport {
        preset: preset.name().to_string(),
        rel_l2: if outcome.converged() { preset_rel_l2(preset, outcome)? } else { None },
        max_penetration: outcome.contact_check().max_penetration(),
        newton_iters: outcome.newton_iters(),
        wall_time_s: outcome.wall_time_s,
    })
}

/// Summary of any run; runs named after a preset also get its error metric.
pub fn run_summary(outcome: &RunOutcome) -> Result<BenchReport, CliError> {
    match outcome.config.name.parse::<Preset>() {
        Ok(p) => bench_report(p, outcome),
        Err(_) => Ok(BenchReport {
            preset: outcome.config.name.clone(),
            rel_l2: None,
            max_penetration: outcome.contact_check().max_penetration(),
            newton_iters: outcome.newton_iters(),
            wall_time_s: outcome.wall_time_s,
        }),
    }
}
