//! The physical-layer model of one offloading frame: random generation,
//! uplink rates, latency, energy, the weighted objective and a feasibility
//! checker for candidate assignments.

mod config;
mod csv;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

pub use config::{dbm_to_watts, watts_to_dbm, ScenarioConfig, Weights};
pub use csv::{read_scenario, scenario_to_csv, write_scenario};

use crate::error::{Error, Result};

/// Uplink rate `B * log2(1 + P h / N0)` in bits per second.
pub fn rate(power_w: f64, gain: f64, bandwidth_hz: f64, noise_w: f64) -> f64 {
    bandwidth_hz * (power_w * gain / noise_w).ln_1p() / std::f64::consts::LN_2
}

/// One time frame. Immutable once built; index `(s, k)` maps to `s * K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    config: ScenarioConfig,
    gains: Vec<f64>,
    powers: Vec<f64>,
    task_bits: Vec<f64>,
    rates: Vec<f64>,
}

impl Scenario {
    /// Draws a frame from `config`. Deterministic in `config.rng_seed`.
    pub fn generate(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let (s_count, k_count) = (config.num_mds, config.num_channels);
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        };
        let powers: Vec<f64> = (0..s_count).map(|_| uniform(&mut rng, config.power_range)).collect();
        let task_bits: Vec<f64> = (0..s_count)
            .map(|_| uniform(&mut rng, config.task_size_range))
            .collect();
        let gains: Vec<f64> = (0..s_count * k_count)
            .map(|_| loop {
                let e: f64 = rng.sample(Exp1);
                if e > 0.0 {
                    break e * config.mean_channel_gain;
                }
            })
            .collect();
        Self::from_parts(config.clone(), gains, powers, task_bits)
    }

    /// Assembles a frame from explicit draws and precomputes the rates.
    pub fn from_parts(
        config: ScenarioConfig,
        gains: Vec<f64>,
        powers: Vec<f64>,
        task_bits: Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let (s_count, k_count) = (config.num_mds, config.num_channels);
        if gains.len() != s_count * k_count || powers.len() != s_count || task_bits.len() != s_count {
            return Err(Error::Dimension(format!(
                "scenario with S={s_count}, K={k_count} got {} gains, {} powers, {} task sizes",
                gains.len(),
                powers.len(),
                task_bits.len()
            )));
        }
        if let Some(h) = gains.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::Config(format!("channel gains must be positive, got {h}")));
        }
        if let Some(l) = task_bits.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("task sizes must be positive, got {l}")));
        }
        if let Some(p) = powers.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::Config(format!("powers must be positive, got {p}")));
        }
        let rates: Vec<f64> = (0..s_count * k_count)
            .map(|i| rate(powers[i / k_count], gains[i], config.bandwidth_hz, config.noise_power_w))
            .collect();
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::Config(format!("rate underflow: {r} bits/s")));
        }
        Ok(Self {
            config,
            gains,
            powers,
            task_bits,
            rates,
        })
    }

    /// The same frame evaluated under different objective weights.
    pub fn with_weights(&self, weights: Weights) -> Result<Self> {
        let config = self.config.with_weights(weights);
        config.validate()?;
        Ok(Self {
            config,
            ..self.clone()
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }
    pub fn num_mds(&self) -> usize {
        self.config.num_mds
    }
    pub fn num_channels(&self) -> usize {
        self.config.num_channels
    }
    /// `S * K`, the number of binary offloading variables.
    pub fn num_pairs(&self) -> usize {
        self.config.num_mds * self.config.num_channels
    }
    pub fn weights(&self) -> Weights {
        self.config.weights
    }
    pub fn index(&self, s: usize, k: usize) -> usize {
        s * self.config.num_channels + k
    }
    pub fn gain(&self, s: usize, k: usize) -> f64 {
        self.gains[self.index(s, k)]
    }
    pub fn rate(&self, s: usize, k: usize) -> f64 {
        self.rates[self.index(s, k)]
    }
    pub fn power(&self, s: usize) -> f64 {
        self.powers[s]
    }
    pub fn task_bits(&self, s: usize) -> f64 {
        self.task_bits[s]
    }
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
    pub fn powers(&self) -> &[f64] {
        &self.powers
    }
    pub fn tasks(&self) -> &[f64] {
        &self.task_bits
    }

    /// Per-channel transmission latencies `t_k`.
    pub fn channel_latencies(&self, a: &Assignment) -> Vec<f64> {
        let k_count = self.num_channels();
        let mut t = vec![0.0; k_count];
        for (i, (&x, &l)) in a.x.iter().zip(&a.l).enumerate() {
            if x {
                t[i % k_count] += l / self.rates[i];
            }
        }
        t
    }

    /// Frame latency: the slowest subchannel.
    pub fn latency(&self, a: &Assignment) -> f64 {
        self.channel_latencies(a).into_iter().fold(0.0, f64::max)
    }

    /// Total transmit energy over every active `(s, k)` pair.
    pub fn energy(&self, a: &Assignment) -> f64 {
        let (s_count, k_count) = (self.num_mds(), self.num_channels());
        let mut total = 0.0;
        for k in 0..k_count {
            for s in 0..s_count {
                let i = s * k_count + k;
                if a.x[i] {
                    total += self.powers[s] * a.l[i] / self.rates[i];
                }
            }
        }
        total
    }

    /// Weighted cost `lambda_t * latency + lambda_e * energy`. Defined for
    /// infeasible assignments too.
    pub fn objective(&self, a: &Assignment) -> f64 {
        let w = self.weights();
        w.lambda_t * self.latency(a) + w.lambda_e * self.energy(a)
    }

    /// Lists every violated constraint. `tol` is relative to each task size.
    pub fn check_feasible(&self, a: &Assignment, tol: f64) -> Vec<Violation> {
        let (s_count, k_count) = (self.num_mds(), self.num_channels());
        if a.x.len() != s_count * k_count || a.l.len() != s_count * k_count {
            return vec![Violation::Shape {
                expected: s_count * k_count,
                x_len: a.x.len(),
                l_len: a.l.len(),
            }];
        }
        let mut out = Vec::new();
        for k in 0..k_count {
            let users = (0..s_count).filter(|&s| a.x[s * k_count + k]).count();
            if users > 1 {
                out.push(Violation::ChannelShared { channel: k, users });
            }
        }
        for s in 0..s_count {
            let task = self.task_bits[s];
            let row = &a.l[s * k_count..(s + 1) * k_count];
            let sum: f64 = row.iter().sum();
            if (sum - task).abs() > tol * task {
                out.push(Violation::TaskNotConserved {
                    md: s,
                    assigned: sum,
                    required: task,
                });
            }
            for (k, &bits) in row.iter().enumerate() {
                if bits < -tol * task || bits > task * (1.0 + tol) || !bits.is_finite() {
                    out.push(Violation::SplitOutOfRange { md: s, channel: k, bits });
                } else if bits > tol * task && !a.x[s * k_count + k] {
                    out.push(Violation::SplitOnInactiveChannel { md: s, channel: k, bits });
                }
            }
        }
        out
    }
}

/// A binary offloading matrix plus the split of every task over subchannels.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `x[s * K + k]`: MD `s` transmits on subchannel `k`.
    pub x: Vec<bool>,
    /// Bits of task `s` sent over subchannel `k`.
    pub l: Vec<f64>,
}

impl Assignment {
    pub fn empty(num_pairs: usize) -> Self {
        Self {
            x: vec![false; num_pairs],
            l: vec![0.0; num_pairs],
        }
    }
}

/// A constraint broken by an [`Assignment`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// More than one MD on one subchannel.
    ChannelShared { channel: usize, users: usize },
    /// The split of task `md` does not add up to its size.
    TaskNotConserved { md: usize, assigned: f64, required: f64 },
    /// A split is negative or larger than the whole task.
    SplitOutOfRange { md: usize, channel: usize, bits: f64 },
    /// Bits routed over a channel the MD does not hold.
    SplitOnInactiveChannel { md: usize, channel: usize, bits: f64 },
    Shape { expected: usize, x_len: usize, l_len: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ChannelShared { channel, users } => {
                write!(f, "channel exclusivity: subchannel {channel} carries {users} MDs")
            }
            Violation::TaskNotConserved { md, assigned, required } => {
                write!(f, "task conservation: MD {md} offloads {assigned} of {required} bits")
            }
            Violation::SplitOutOfRange { md, channel, bits } => {
                write!(f, "split range: l[{md}][{channel}] = {bits}")
            }
            Violation::SplitOnInactiveChannel { md, channel, bits } => {
                write!(f, "inactive split: l[{md}][{channel}] = {bits} with x = 0")
            }
            Violation::Shape { expected, x_len, l_len } => {
                write!(f, "shape: expected {expected} entries, got x={x_len}, l={l_len}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(s: usize, k: usize, seed: u64) -> Scenario {
        Scenario::generate(&ScenarioConfig::default().with_shape(s, k).with_seed(seed)).unwrap()
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(1.0, 0.0, 10e6, 1e-14), 0.0);
        assert!((rate(1.0, 1e-14, 10e6, 1e-14) - 1e7).abs() < 1e-6);
        // 1e7 * log2(1001), evaluated with 30-digit arithmetic.
        let expected = 99_672_262.588_359_935_f64;
        let noise = 1e-14;
        let h = 1000.0 * noise / 1.2;
        let got = rate(1.2, h, 10e6, noise);
        assert!((got / expected - 1.0).abs() < 1e-13, "{got} vs {expected}");
    }

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let cfg = ScenarioConfig::default().with_seed(7);
        let a = Scenario::generate(&cfg).unwrap();
        let b = Scenario::generate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = Scenario::generate(&cfg.with_seed(8)).unwrap();
        assert_ne!(a.gains(), c.gains());
        assert!(a.powers().iter().all(|p| (1.0..=1.5).contains(p)));
        assert!(a.tasks().iter().all(|l| (2e6..=8e6).contains(l)));
        for s in 0..a.num_mds() {
            for k in 0..a.num_channels() {
                let r = rate(a.power(s), a.gain(s, k), 10e6, cfg.noise_power_w);
                assert!(a.rate(s, k) > 0.0);
                assert!((a.rate(s, k) / r - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gain_sample_mean_within_three_standard_errors() {
        let n = 100_000;
        let cfg = ScenarioConfig {
            num_mds: 1,
            num_channels: n,
            mean_channel_gain: 1.0,
            rng_seed: 2024,
            ..Default::default()
        };
        let sc = Scenario::generate(&cfg).unwrap();
        let g = sc.gains();
        let mean = g.iter().sum::<f64>() / n as f64;
        let var = g.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn more_mds_than_channels_still_generates() {
        let sc = small(4, 2, 1);
        assert_eq!(sc.num_pairs(), 8);
    }

    #[test]
    fn evaluation_of_empty_and_single_assignments() {
        let sc = small(2, 3, 3);
        let a = Assignment::empty(6);
        assert_eq!(sc.latency(&a), 0.0);
        assert_eq!(sc.energy(&a), 0.0);
        assert_eq!(sc.objective(&a), 0.0);

        let one = small(1, 1, 4);
        let (l, r, p) = (one.task_bits(0), one.rate(0, 0), one.power(0));
        let a = Assignment {
            x: vec![true],
            l: vec![l],
        };
        assert!((one.energy(&a) - p * l / r).abs() <= 1e-15 * p * l / r);
        let expected = 1.0 * l / r + 0.25 * p * l / r;
        assert!((one.objective(&a) / expected - 1.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_split_on_equal_rates() {
        let cfg = ScenarioConfig::default().with_shape(1, 2);
        let sc = Scenario::from_parts(cfg, vec![2e-12, 2e-12], vec![1.2], vec![4e6]).unwrap();
        let a = Assignment {
            x: vec![true, true],
            l: vec![2e6, 2e6],
        };
        assert!((sc.latency(&a) - 2e6 / sc.rate(0, 0)).abs() < 1e-15);
    }

    #[test]
    fn pure_latency_and_pure_energy_weights() {
        let sc = small(2, 3, 5);
        let a = Assignment {
            x: vec![true, false, true, false, true, false],
            l: vec![sc.task_bits(0) * 0.3, 0.0, sc.task_bits(0) * 0.7, 0.0, sc.task_bits(1), 0.0],
        };
        let lat = sc.with_weights(Weights { lambda_t: 1.0, lambda_e: 0.0 }).unwrap();
        let en = sc.with_weights(Weights { lambda_t: 0.0, lambda_e: 1.0 }).unwrap();
        assert_eq!(lat.objective(&a), sc.latency(&a));
        assert_eq!(en.objective(&a), sc.energy(&a));
    }

    #[test]
    fn feasibility_violations() {
        let sc = small(2, 3, 6);
        let (l0, l1) = (sc.task_bits(0), sc.task_bits(1));
        let good = Assignment {
            x: vec![true, false, false, false, true, true],
            l: vec![l0, 0.0, 0.0, 0.0, l1 / 2.0, l1 / 2.0],
        };
        assert!(sc.check_feasible(&good, 1e-9).is_empty());

        let mut shared = good.clone();
        shared.x[3] = true;
        let v = sc.check_feasible(&shared, 1e-9);
        assert_eq!(v, vec![Violation::ChannelShared { channel: 0, users: 2 }]);
        assert!(v[0].to_string().contains("channel exclusivity"));

        let mut short = good.clone();
        short.l[0] = 0.9 * l0;
        let v = sc.check_feasible(&short, 1e-9);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::TaskNotConserved { md: 0, .. }));

        let mut inactive = good;
        inactive.l[4] = 0.0;
        inactive.l[3] = l1 / 2.0;
        inactive.x[3] = false;
        let v = sc.check_feasible(&inactive, 1e-9);
        assert!(matches!(v[0], Violation::SplitOnInactiveChannel { md: 1, channel: 0, .. }));
    }
}
