use serde::{Deserialize, Serialize};

use super::runner::{par_map, RunResult, Scenario};
use crate::detector::Thresholds;
use crate::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes in `n` trials, clamped to [0, 1]
/// and widened, if rounding requires, to contain `k / n`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n, "wilson_interval needs 0 <= k <= n, n > 0");
    let (kf, nf) = (k as f64, n as f64);
    let p = kf / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let hi = if k == n { 1.0 } else { (centre + half).clamp(p, 1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestBreakdown {
    /// Runs in which each test fired at least once.
    pub gain: usize,
    pub variance: usize,
    pub power: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub scenario: String,
    pub config_digest: String,
    pub n_runs: usize,
    pub alarms: usize,
    pub alarm_rate: f64,
    pub alarm_interval: (f64, f64),
    pub blocks: usize,
    pub alarmed_blocks: usize,
    pub block_alarm_rate: f64,
    pub block_alarm_interval: (f64, f64),
    /// Over alarmed runs only, in samples from the start of evaluation.
    pub mean_time_to_detect: Option<f64>,
    pub median_time_to_detect: Option<f64>,
    pub mean_deception_rms: f64,
    pub tests: TestBreakdown,
    /// Runs whose attack an authenticated line rejected.
    pub rejected_runs: usize,
    pub thresholds_alpha: f64,
}

/// Aggregates finished runs. The result depends only on the set of runs, not
/// on their order.
pub fn summarize(
    scenario: &str,
    config_digest: &str,
    results: &[RunResult],
    thresholds_alpha: f64,
) -> Result<MetricsSummary> {
    if results.is_empty() {
        return Err(Error::contract("cannot summarise zero runs"));
    }
    let mut runs: Vec<&RunResult> = results.iter().collect();
    runs.sort_by_key(|r| r.run_index);

    let n = runs.len();
    let alarms = runs.iter().filter(|r| r.report.alarm).count();
    let blocks: usize = runs.iter().map(|r| r.report.block_alarms.len()).sum();
    let alarmed_blocks: usize = runs.iter().map(|r| r.report.alarmed_blocks()).sum();
    let mut ttd: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.report.time_to_detect.map(|t| t as f64))
        .collect();
    ttd.sort_by(f64::total_cmp);
    let mean_ttd = (!ttd.is_empty()).then(|| ttd.iter().sum::<f64>() / ttd.len() as f64);
    let median_ttd = (!ttd.is_empty()).then(|| {
        let m = ttd.len() / 2;
        if ttd.len() % 2 == 1 {
            ttd[m]
        } else {
            0.5 * (ttd[m - 1] + ttd[m])
        }
    });
    let tests = runs.iter().fold(TestBreakdown::default(), |acc, r| {
        let f = r.report.tests_fired;
        TestBreakdown {
            gain: acc.gain + f.gain as usize,
            variance: acc.variance + f.variance as usize,
            power: acc.power + f.power as usize,
        }
    });
    let block_alarm_rate = if blocks > 0 {
        alarmed_blocks as f64 / blocks as f64
    } else {
        0.0
    };
    Ok(MetricsSummary {
        scenario: scenario.to_string(),
        config_digest: config_digest.to_string(),
        n_runs: n,
        alarms,
        alarm_rate: alarms as f64 / n as f64,
        alarm_interval: wilson_interval(alarms, n, Z95),
        blocks,
        alarmed_blocks,
        block_alarm_rate,
        block_alarm_interval: if blocks > 0 {
            wilson_interval(alarmed_blocks, blocks, Z95)
        } else {
            (0.0, 1.0)
        },
        mean_time_to_detect: mean_ttd,
        median_time_to_detect: median_ttd,
        mean_deception_rms: runs.iter().map(|r| r.deception_rms).sum::<f64>() / n as f64,
        tests,
        rejected_runs: runs.iter().filter(|r| r.rejected_writes > 0).count(),
        thresholds_alpha,
    })
}

/// Runs `0..n_runs` of the scenario (in parallel when enabled) and
/// aggregates them.
pub fn monte_carlo(
    scenario: &Scenario,
    n_runs: usize,
    thresholds: &Thresholds,
) -> Result<(Vec<RunResult>, MetricsSummary)> {
    if n_runs == 0 {
        return Err(Error::contract("monte_carlo needs n_runs >= 1"));
    }
    let results = par_map(0..n_runs as u64, |i| scenario.run(i, thresholds))?;
    let summary = summarize(
        &scenario.config().name,
        &scenario.config().digest(),
        &results,
        thresholds.alpha,
    )?;
    Ok((results, summary))
}
