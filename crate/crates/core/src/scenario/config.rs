use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::textio;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1000.0).log10()
}

/// Latency and energy weights of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    /// Weight on the frame latency (per second).
    pub lambda_t: f64,
    /// Weight on the total transmit energy (per joule).
    pub lambda_e: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            lambda_t: 1.0,
            lambda_e: 0.25,
        }
    }
}

impl Weights {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            lambda_t: self.lambda_t * factor,
            lambda_e: self.lambda_e * factor,
        }
    }
}

/// Parameters of one random MEC frame. All quantities are SI.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_mds: usize,
    pub num_channels: usize,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    /// Transmit power range in watts, drawn uniformly per MD.
    pub power_range: (f64, f64),
    /// Task size range in bits, drawn uniformly per MD.
    pub task_size_range: (f64, f64),
    /// Mean of the exponential channel power gain.
    pub mean_channel_gain: f64,
    pub weights: Weights,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_mds: 3,
            num_channels: 5,
            bandwidth_hz: 10e6,
            noise_power_w: dbm_to_watts(-110.0),
            power_range: (1.0, 1.5),
            task_size_range: (2e6, 8e6),
            mean_channel_gain: 1e-12,
            weights: Weights::default(),
            rng_seed: 0,
        }
    }
}

const KEYS: [&str; 12] = [
    "num_mds",
    "num_channels",
    "bandwidth_hz",
    "noise_dbm",
    "power_min_w",
    "power_max_w",
    "task_min_bits",
    "task_max_bits",
    "mean_gain",
    "lambda_t",
    "lambda_e",
    "seed",
];

impl ScenarioConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..self.clone()
        }
    }

    pub fn with_weights(&self, weights: Weights) -> Self {
        Self {
            weights,
            ..self.clone()
        }
    }

    pub fn with_shape(&self, num_mds: usize, num_channels: usize) -> Self {
        Self {
            num_mds,
            num_channels,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_mds == 0 {
            return fail("num_mds must be at least 1".into());
        }
        if self.num_channels == 0 {
            return fail("num_channels must be at least 1".into());
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return fail(format!("bandwidth_hz must be positive, got {}", self.bandwidth_hz));
        }
        if !(self.noise_power_w > 0.0 && self.noise_power_w.is_finite()) {
            return fail(format!("noise power must be positive, got {}", self.noise_power_w));
        }
        for (name, (lo, hi)) in [("power", self.power_range), ("task size", self.task_size_range)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return fail(format!("{name} range needs 0 < min <= max, got [{lo}, {hi}]"));
            }
        }
        if !(self.mean_channel_gain > 0.0 && self.mean_channel_gain.is_finite()) {
            return fail(format!("mean_gain must be positive, got {}", self.mean_channel_gain));
        }
        let Weights { lambda_t, lambda_e } = self.weights;
        if !(lambda_t >= 0.0 && lambda_e >= 0.0 && lambda_t + lambda_e > 0.0)
            || !(lambda_t.is_finite() && lambda_e.is_finite())
        {
            return fail(format!(
                "weights need lambda_t, lambda_e >= 0 with a positive sum, got ({lambda_t}, {lambda_e})"
            ));
        }
        Ok(())
    }

    /// Renders the config in the `key = value` file format.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for (key, value) in self.entries() {
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }

    /// `(key, value)` pairs in file order, values rendered for round-tripping.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let f = textio::fmt_f64;
        vec![
            ("num_mds", self.num_mds.to_string()),
            ("num_channels", self.num_channels.to_string()),
            ("bandwidth_hz", f(self.bandwidth_hz)),
            ("noise_dbm", f(watts_to_dbm(self.noise_power_w))),
            ("power_min_w", f(self.power_range.0)),
            ("power_max_w", f(self.power_range.1)),
            ("task_min_bits", f(self.task_size_range.0)),
            ("task_max_bits", f(self.task_size_range.1)),
            ("mean_gain", f(self.mean_channel_gain)),
            ("lambda_t", f(self.weights.lambda_t)),
            ("lambda_e", f(self.weights.lambda_e)),
            ("seed", self.rng_seed.to_string()),
        ]
    }

    /// Stable short hash of every effective parameter.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.to_config_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses the `key = value` format. Missing keys keep their defaults;
    /// unknown keys are rejected.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut noise_dbm = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, line_no, format!("expected `key = value`, got {raw:?}")))?;
            let key = key.trim();
            let value = value.trim();
            let num = || textio::parse_f64(path, line_no, value);
            let int = || textio::parse_usize(path, line_no, value);
            match key {
                "num_mds" => cfg.num_mds = int()?,
                "num_channels" => cfg.num_channels = int()?,
                "bandwidth_hz" => cfg.bandwidth_hz = num()?,
                "noise_dbm" => noise_dbm = Some(num()?),
                "power_min_w" => cfg.power_range.0 = num()?,
                "power_max_w" => cfg.power_range.1 = num()?,
                "task_min_bits" => cfg.task_size_range.0 = num()?,
                "task_max_bits" => cfg.task_size_range.1 = num()?,
                "mean_gain" => cfg.mean_channel_gain = num()?,
                "lambda_t" => cfg.weights.lambda_t = num()?,
                "lambda_e" => cfg.weights.lambda_e = num()?,
                "seed" => {
                    cfg.rng_seed = value
                        .parse()
                        .map_err(|e| Error::parse(path, line_no, format!("bad seed {value:?}: {e}")))?
                }
                other => {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("unknown key {other:?}; expected one of {}", KEYS.join(", ")),
                    ))
                }
            }
        }
        if let Some(dbm) = noise_dbm {
            cfg.noise_power_w = dbm_to_watts(dbm);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&textio::read_to_string(path)?, path)
    }
}
