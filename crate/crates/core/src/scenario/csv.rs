//! Scenario dump format: `# key=value` preamble for scalars, then one
//! `s,k,h,R` row per MD/subchannel pair.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Scenario, ScenarioConfig, Weights};
use crate::error::{Error, Result};
use crate::textio::{self, fmt_f64};

pub fn scenario_to_csv(sc: &Scenario) -> String {
    let c = sc.config();
    let mut out = String::from("# scenario-v1\n");
    let scalars = [
        ("num_mds", c.num_mds.to_string()),
        ("num_channels", c.num_channels.to_string()),
        ("bandwidth_hz", fmt_f64(c.bandwidth_hz)),
        ("noise_power_w", fmt_f64(c.noise_power_w)),
        ("power_min_w", fmt_f64(c.power_range.0)),
        ("power_max_w", fmt_f64(c.power_range.1)),
        ("task_min_bits", fmt_f64(c.task_size_range.0)),
        ("task_max_bits", fmt_f64(c.task_size_range.1)),
        ("mean_gain", fmt_f64(c.mean_channel_gain)),
        ("lambda_t", fmt_f64(c.weights.lambda_t)),
        ("lambda_e", fmt_f64(c.weights.lambda_e)),
        ("seed", c.rng_seed.to_string()),
    ];
    for (k, v) in scalars {
        let _ = writeln!(out, "# {k}={v}");
    }
    for s in 0..sc.num_mds() {
        let _ = writeln!(out, "# power_{s}={}", fmt_f64(sc.power(s)));
        let _ = writeln!(out, "# task_bits_{s}={}", fmt_f64(sc.task_bits(s)));
    }
    out.push_str("s,k,h,R\n");
    for s in 0..sc.num_mds() {
        for k in 0..sc.num_channels() {
            let _ = writeln!(out, "{s},{k},{},{}", fmt_f64(sc.gain(s, k)), fmt_f64(sc.rate(s, k)));
        }
    }
    out
}

pub fn write_scenario(sc: &Scenario, path: &Path) -> Result<()> {
    textio::write_atomic(path, scenario_to_csv(sc).as_bytes())
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    parse_scenario(&textio::read_to_string(path)?, path)
}

pub(crate) fn parse_scenario(text: &str, path: &Path) -> Result<Scenario> {
    let mut scalars: HashMap<String, (usize, String)> = HashMap::new();
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if let Some(meta) = line.strip_prefix('#') {
            for (k, v) in textio::key_values(meta) {
                scalars.insert(k.to_string(), (line_no, v.to_string()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line.trim() != "s,k,h,R" {
                return Err(Error::parse(path, line_no, "expected header `s,k,h,R`"));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, line_no, format!("expected 4 columns, got {}", fields.len())));
        }
        rows.push((
            line_no,
            textio::parse_usize(path, line_no, fields[0])?,
            textio::parse_usize(path, line_no, fields[1])?,
            textio::parse_f64(path, line_no, fields[2])?,
            textio::parse_f64(path, line_no, fields[3])?,
        ));
    }

    let get = |key: &str| -> Result<(usize, &str)> {
        scalars
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| Error::parse(path, 1, format!("missing `# {key}=` preamble line")))
    };
    let num = |key: &str| -> Result<f64> {
        let (l, v) = get(key)?;
        textio::parse_f64(path, l, v)
    };
    let int = |key: &str| -> Result<usize> {
        let (l, v) = get(key)?;
        textio::parse_usize(path, l, v)
    };
    let seed = {
        let (l, v) = get("seed")?;
        v.parse::<u64>()
            .map_err(|e| Error::parse(path, l, format!("bad seed: {e}")))?
    };
    let config = ScenarioConfig {
        num_mds: int("num_mds")?,
        num_channels: int("num_channels")?,
        bandwidth_hz: num("bandwidth_hz")?,
        noise_power_w: num("noise_power_w")?,
        power_range: (num("power_min_w")?, num("power_max_w")?),
        task_size_range: (num("task_min_bits")?, num("task_max_bits")?),
        mean_channel_gain: num("mean_gain")?,
        weights: Weights {
            lambda_t: num("lambda_t")?,
            lambda_e: num("lambda_e")?,
        },
        rng_seed: seed,
    };
    config.validate()?;
    let (s_count, k_count) = (config.num_mds, config.num_channels);
    let powers = (0..s_count)
        .map(|s| num(&format!("power_{s}")))
        .collect::<Result<Vec<_>>>()?;
    let tasks = (0..s_count)
        .map(|s| num(&format!("task_bits_{s}")))
        .collect::<Result<Vec<_>>>()?;
    let mut gains = vec![f64::NAN; s_count * k_count];
    let mut file_rates = vec![f64::NAN; s_count * k_count];
    for &(line_no, s, k, h, r) in &rows {
        if s >= s_count || k >= k_count {
            return Err(Error::parse(path, line_no, format!("index ({s},{k}) out of range")));
        }
        gains[s * k_count + k] = h;
        file_rates[s * k_count + k] = r;
    }
    if rows.len() != s_count * k_count || gains.iter().any(|g| g.is_nan()) {
        return Err(Error::parse(
            path,
            text.lines().count(),
            format!("expected {} gain rows, got {}", s_count * k_count, rows.len()),
        ));
    }
    let sc = Scenario::from_parts(config, gains, powers, tasks)?;
    for (i, (&mine, &theirs)) in sc.rates().iter().zip(&file_rates).enumerate() {
        if ((mine - theirs) / mine).abs() > 1e-12 {
            let line_no = rows.iter().find(|r| r.1 * k_count + r.2 == i).map_or(0, |r| r.0);
            return Err(Error::parse(
                path,
                line_no,
                format!("rate {theirs} disagrees with B log2(1 + P h / N0) = {mine}"),
            ));
        }
    }
    Ok(sc)
}
