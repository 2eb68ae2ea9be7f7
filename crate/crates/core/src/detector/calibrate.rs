use serde::{Deserialize, Serialize};

use super::BlockStats;
use crate::{Error, Result};

pub const MIN_CALIBRATION_BLOCKS: usize = 50;

/// Closed acceptance interval for one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    /// NaN never lies inside.
    pub fn contains(&self, x: f64) -> bool {
        x >= self.low && x <= self.high
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.low <= other.low && other.high <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelThresholds {
    pub gain: Interval,
    pub variance: Interval,
    pub power: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Per-block false-alarm target the thresholds were fitted to.
    pub alpha: f64,
    pub calibration_blocks: usize,
    pub channels: Vec<ChannelThresholds>,
}

/// Two-sided empirical quantile interval: drops `floor(q n)` samples from
/// each end of the sorted sample.
fn quantile_interval(mut xs: Vec<f64>, q: f64) -> Interval {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let k = ((q * n as f64).floor() as usize).min((n - 1) / 2);
    Interval {
        low: xs[k],
        high: xs[n - 1 - k],
    }
}

/// Fits acceptance intervals on clean blocks, one collection per channel.
///
/// Bonferroni over every (channel, test) pair: each interval keeps the
/// central `1 - alpha / n_tests` of its clean sample, so the combined block
/// alarm rate is about `alpha`.
pub fn calibrate_thresholds(clean: &[Vec<BlockStats>], alpha: f64) -> Result<Thresholds> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::contract(format!("alpha {alpha} outside (0, 1)")));
    }
    if clean.is_empty() {
        return Err(Error::Calibration {
            required: MIN_CALIBRATION_BLOCKS,
            available: 0,
        });
    }
    let available = clean.iter().map(Vec::len).min().unwrap_or(0);
    if available < MIN_CALIBRATION_BLOCKS {
        return Err(Error::Calibration {
            required: MIN_CALIBRATION_BLOCKS,
            available,
        });
    }
    let n_tests = 3 * clean.len();
    let q = alpha / (2.0 * n_tests as f64);
    let channels = clean
        .iter()
        .map(|blocks| {
            let pick = |f: fn(&BlockStats) -> f64| {
                quantile_interval(blocks.iter().map(f).collect(), q)
            };
            ChannelThresholds {
                gain: pick(|b| b.gain),
                variance: pick(|b| b.band_variance),
                power: pick(|b| b.band_power),
            }
        })
        .collect();
    Ok(Thresholds {
        alpha,
        calibration_blocks: available,
        channels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TestFlags {
    pub gain: bool,
    pub variance: bool,
    pub power: bool,
}

impl TestFlags {
    pub fn any(&self) -> bool {
        self.gain || self.variance || self.power
    }

    fn or(self, other: Self) -> Self {
        Self {
            gain: self.gain || other.gain,
            variance: self.variance || other.variance,
            power: self.power || other.power,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelVerdict {
    pub channel: usize,
    pub stats: Vec<BlockStats>,
    pub flags: Vec<TestFlags>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub window: usize,
    pub channels: Vec<ChannelVerdict>,
    /// OR over channels and tests, per block.
    pub block_alarms: Vec<bool>,
    /// Which tests fired anywhere in the run.
    pub tests_fired: TestFlags,
    pub alarm: bool,
    /// End of the first alarming block, counted from the start of the
    /// evaluated region.
    pub time_to_detect: Option<usize>,
}

impl DetectorReport {
    pub fn alarmed_blocks(&self) -> usize {
        self.block_alarms.iter().filter(|&&a| a).count()
    }
}

/// Flags every statistic outside its interval.
pub fn judge(stats: &[Vec<BlockStats>], thresholds: &Thresholds, window: usize) -> Result<DetectorReport> {
    if stats.len() != thresholds.channels.len() {
        return Err(Error::DimensionMismatch {
            context: "judge: channels",
            expected: thresholds.channels.len(),
            actual: stats.len(),
        });
    }
    let n_blocks = stats.first().map_or(0, Vec::len);
    if stats.iter().any(|s| s.len() != n_blocks) {
        return Err(Error::contract("channels disagree on block count"));
    }

    let mut block_alarms = vec![false; n_blocks];
    let mut tests_fired = TestFlags::default();
    let channels = stats
        .iter()
        .zip(&thresholds.channels)
        .enumerate()
        .map(|(channel, (blocks, th))| {
            let flags: Vec<TestFlags> = blocks
                .iter()
                .map(|b| TestFlags {
                    gain: !th.gain.contains(b.gain),
                    variance: !th.variance.contains(b.band_variance),
                    power: !th.power.contains(b.band_power),
                })
                .collect();
            for (alarm, f) in block_alarms.iter_mut().zip(&flags) {
                *alarm |= f.any();
                tests_fired = tests_fired.or(*f);
            }
            ChannelVerdict {
                channel,
                stats: blocks.clone(),
                flags,
            }
        })
        .collect();

    let first = block_alarms.iter().position(|&a| a);
    Ok(DetectorReport {
        window,
        channels,
        alarm: first.is_some(),
        time_to_detect: first.map(|b| (b + 1) * window),
        block_alarms,
        tests_fired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::watermark::{generate_watermark, WatermarkKey};

    fn fake_blocks(seed: u64, n: usize) -> Vec<BlockStats> {
        let g = generate_watermark(&WatermarkKey::new(seed, 0.05), n);
        let v = generate_watermark(&WatermarkKey::new(seed + 1, 0.1), n);
        let p = generate_watermark(&WatermarkKey::new(seed + 2, 0.1), n);
        (0..n)
            .map(|i| BlockStats {
                gain: 1.0 + g.values()[i],
                band_variance: 2.0 + v.values()[i],
                band_power: 3.0 + p.values()[i],
            })
            .collect()
    }

    fn rate(blocks: &[BlockStats], th: &Thresholds) -> f64 {
        let r = judge(&[blocks.to_vec()], th, 1000).unwrap();
        r.alarmed_blocks() as f64 / blocks.len() as f64
    }

    #[test]
    fn tiny_alpha_uses_sample_extremes() {
        let blocks = fake_blocks(1, 400);
        let th = calibrate_thresholds(&[blocks.clone()], 1e-9).unwrap();
        let max_gain = blocks.iter().map(|b| b.gain).fold(f64::MIN, f64::max);
        assert_eq!(th.channels[0].gain.high, max_gain);
        assert_eq!(rate(&blocks, &th), 0.0);
    }

    #[test]
    fn half_alpha_alarms_about_half() {
        let blocks = fake_blocks(10, 2000);
        let th = calibrate_thresholds(&[blocks.clone()], 0.5).unwrap();
        let r = rate(&blocks, &th);
        // three independent tests, each trimming 1/6 on both sides
        let expected = 1.0 - (1.0f64 - 0.5 / 3.0).powi(3);
        assert!((r - expected).abs() < 0.04, "rate {r}, expected {expected}");
    }

    #[test]
    fn smaller_alpha_gives_wider_intervals() {
        let blocks = fake_blocks(20, 500);
        let narrow = calibrate_thresholds(&[blocks.clone()], 0.2).unwrap();
        let wide = calibrate_thresholds(&[blocks], 0.01).unwrap();
        let (w, n) = (&wide.channels[0], &narrow.channels[0]);
        assert!(w.gain.contains_interval(&n.gain));
        assert!(w.variance.contains_interval(&n.variance));
        assert!(w.power.contains_interval(&n.power));
    }

    #[test]
    fn too_few_blocks() {
        assert!(matches!(
            calibrate_thresholds(&[fake_blocks(30, 49)], 0.05),
            Err(Error::Calibration {
                required: 50,
                available: 49
            })
        ));
    }

    fn unit_thresholds() -> Thresholds {
        let iv = |low, high| Interval { low, high };
        Thresholds {
            alpha: 0.05,
            calibration_blocks: 100,
            channels: vec![ChannelThresholds {
                gain: iv(0.7, 1.3),
                variance: iv(1.0, 3.0),
                power: iv(2.0, 4.0),
            }],
        }
    }

    fn ok_block() -> BlockStats {
        BlockStats {
            gain: 1.0,
            band_variance: 2.0,
            band_power: 3.0,
        }
    }

    #[test]
    fn inside_everything_means_no_alarm() {
        let r = judge(&[vec![ok_block(); 5]], &unit_thresholds(), 1000).unwrap();
        assert!(!r.alarm);
        assert_eq!(r.time_to_detect, None);
    }

    #[test]
    fn zero_gain_fires_gain_test() {
        let bad = BlockStats {
            gain: 0.0,
            ..ok_block()
        };
        let r = judge(&[vec![bad]], &unit_thresholds(), 1000).unwrap();
        assert!(r.alarm && r.tests_fired.gain && !r.tests_fired.variance);
    }

    #[test]
    fn time_to_detect_is_end_of_first_alarming_block() {
        let mut blocks = vec![ok_block(); 10];
        blocks[2].band_power = 100.0;
        blocks[6].gain = -1.0;
        let r = judge(&[blocks], &unit_thresholds(), 1000).unwrap();
        assert_eq!(r.time_to_detect, Some(3000));
        assert_eq!(r.alarmed_blocks(), 2);
    }

    #[test]
    fn nan_statistic_alarms() {
        let bad = BlockStats {
            band_variance: f64::NAN,
            ..ok_block()
        };
        assert!(judge(&[vec![bad]], &unit_thresholds(), 1000).unwrap().alarm);
    }

    #[test]
    fn alarm_set_independent_of_block_order() {
        let mut blocks = fake_blocks(40, 200);
        let th = calibrate_thresholds(&[blocks.clone()], 0.3).unwrap();
        let count = |b: &[BlockStats]| judge(&[b.to_vec()], &th, 1000).unwrap().alarmed_blocks();
        let before = count(&blocks);
        blocks.reverse();
        assert_eq!(count(&blocks), before);
    }
}
