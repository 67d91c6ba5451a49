//! Node relaxations of the offloading MINLP.
//!
//! The bilinear product `x_sk * l_sk` is replaced by a variable `y_sk` with
//! the coupling `y_sk <= L_s x_sk`, which is exact whenever `x` is binary and
//! a valid lower bound otherwise. The max-latency term becomes an epigraph
//! variable `tau >= t_k` for every subchannel.
//!
//! Internally `y` is stored as a fraction of `L_s` and time in units of the
//! frame's mean `L_s / R_sk`, so every LP coefficient is O(1).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpResult, LpStatus};
use crate::scenario::Scenario;

/// `|x - round(x)| <= INT_TOL` counts as integral.
pub const INT_TOL: f64 = 1e-6;

/// Branching decisions on the flat offloading index `i = s * K + k`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct NodeConstraints {
    fixed: BTreeMap<usize, bool>,
}

impl NodeConstraints {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the override `x_i = value`. Fixing an already-fixed index is an error.
    pub fn fix(&mut self, i: usize, value: bool, num_pairs: usize) -> Result<()> {
        if i >= num_pairs {
            return Err(Error::Precondition(format!("index {i} out of range 0..{num_pairs}")));
        }
        if self.fixed.contains_key(&i) {
            return Err(Error::Precondition(format!("x_{i} is already fixed")));
        }
        self.fixed.insert(i, value);
        Ok(())
    }

    pub fn with_fixed(&self, i: usize, value: bool, num_pairs: usize) -> Result<Self> {
        let mut out = self.clone();
        out.fix(i, value, num_pairs)?;
        Ok(out)
    }

    /// Fixes every entry to the given binary matrix.
    pub fn from_binary(x: &[bool]) -> Self {
        Self {
            fixed: x.iter().copied().enumerate().collect(),
        }
    }

    /// `(lo, hi)` for `x_i`.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        match self.fixed.get(&i) {
            Some(true) => (1.0, 1.0),
            Some(false) => (0.0, 0.0),
            None => (0.0, 1.0),
        }
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.fixed.contains_key(&i)
    }

    pub fn len(&self) -> usize {
        self.fixed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixed.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.fixed.iter().map(|(&i, &v)| (i, v))
    }
}

/// The node LP plus the unit conversion back to the objective.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub lp: LinearProgram,
    /// Seconds per LP time unit; the objective is `time_scale * lp value`.
    pub time_scale: f64,
    num_pairs: usize,
}

impl Relaxation {
    pub fn x_var(&self, i: usize) -> usize {
        i
    }
    pub fn y_var(&self, i: usize) -> usize {
        self.num_pairs + i
    }
    pub fn tau_var(&self) -> usize {
        2 * self.num_pairs
    }
    /// Converts an LP objective value into the frame objective.
    pub fn psi(&self, lp_value: f64) -> f64 {
        self.time_scale * lp_value
    }
}

fn time_scale(sc: &Scenario) -> f64 {
    let k_count = sc.num_channels();
    let total: f64 = (0..sc.num_pairs())
        .map(|i| sc.task_bits(i / k_count) / sc.rates()[i])
        .sum();
    total / sc.num_pairs() as f64
}

/// Variables `[x (SK), y (SK), tau]`; integrality of `x` dropped.
pub fn build_relaxation(sc: &Scenario, nc: &NodeConstraints) -> Relaxation {
    let (s_count, k_count) = (sc.num_mds(), sc.num_channels());
    let pairs = sc.num_pairs();
    let n = 2 * pairs + 1;
    let scale = time_scale(sc);
    let w = sc.weights();
    // a_sk: seconds (in LP units) to send the whole task s over channel k.
    let a: Vec<f64> = (0..pairs)
        .map(|i| sc.task_bits(i / k_count) / (sc.rates()[i] * scale))
        .collect();

    let mut c = vec![0.0; n];
    for i in 0..pairs {
        c[pairs + i] = w.lambda_e * sc.power(i / k_count) * a[i];
    }
    c[2 * pairs] = w.lambda_t;
    let mut lp = LinearProgram::new(c);

    let row = || vec![0.0; n];
    for k in 0..k_count {
        let mut r = row();
        for s in 0..s_count {
            r[s * k_count + k] = 1.0;
        }
        lp.add_ub(r, 1.0).expect("row width");
    }
    for s in 0..s_count {
        let mut r = row();
        for k in 0..k_count {
            r[pairs + s * k_count + k] = 1.0;
        }
        lp.add_eq(r, 1.0).expect("row width");
    }
    for i in 0..pairs {
        let mut r = row();
        r[pairs + i] = 1.0;
        r[i] = -1.0;
        lp.add_ub(r, 0.0).expect("row width");
    }
    for k in 0..k_count {
        let mut r = row();
        for s in 0..s_count {
            let i = s * k_count + k;
            r[pairs + i] = a[i];
        }
        r[2 * pairs] = -1.0;
        lp.add_ub(r, 0.0).expect("row width");
    }
    for i in 0..pairs {
        let (lo, hi) = nc.bounds(i);
        lp.set_bounds(i, lo, hi).expect("binary bounds");
        lp.set_bounds(pairs + i, 0.0, 1.0).expect("fraction bounds");
    }
    Relaxation {
        lp,
        time_scale: scale,
        num_pairs: pairs,
    }
}

/// Optimal point of a node relaxation, in natural units.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationSolution {
    pub x: Vec<f64>,
    /// Offloaded bits, `l_sk`.
    pub l: Vec<f64>,
    pub psi: f64,
    pub integral: bool,
    /// Smallest flat index with a fractional `x`.
    pub first_fractional: Option<usize>,
}

impl RelaxationSolution {
    /// `x` rounded to the nearest binary matrix.
    pub fn rounded_x(&self) -> Vec<bool> {
        self.x.iter().map(|&v| v >= 0.5).collect()
    }
}

pub fn is_integral(v: f64, tol: f64) -> bool {
    (v - v.round()).abs() <= tol
}

/// Maps an optimal LP point back to `(x, l, psi)`.
///
/// Panics if `result` is not optimal.
pub fn extract_solution(sc: &Scenario, relax: &Relaxation, result: &LpResult, tol: f64) -> RelaxationSolution {
    assert_eq!(result.status, LpStatus::Optimal, "extract_solution needs an optimal LP result");
    let v = result.solution.as_ref().expect("optimal results carry a solution");
    let pairs = sc.num_pairs();
    let k_count = sc.num_channels();
    let x: Vec<f64> = v[..pairs].to_vec();
    let l: Vec<f64> = (0..pairs)
        .map(|i| {
            if x[i] >= tol {
                v[relax.y_var(i)] * sc.task_bits(i / k_count)
            } else {
                0.0
            }
        })
        .collect();
    let first_fractional = x.iter().position(|&xi| !is_integral(xi, tol));
    RelaxationSolution {
        psi: relax.psi(result.value).max(0.0),
        integral: first_fractional.is_none(),
        first_fractional,
        x,
        l,
    }
}

/// Builds, solves and extracts a node relaxation. `None` if infeasible.
pub fn solve_relaxation(sc: &Scenario, nc: &NodeConstraints) -> Result<Option<RelaxationSolution>> {
    let relax = build_relaxation(sc, nc);
    let result = solve_lp(&relax.lp)?;
    match result.status {
        LpStatus::Optimal => Ok(Some(extract_solution(sc, &relax, &result, INT_TOL))),
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Precondition(
            "node relaxation reported unbounded; all variables are boxed".into(),
        )),
    }
}

/// Best split for a fixed binary offloading matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub l: Vec<f64>,
    pub psi: f64,
}

/// Optimal split `l` (and its cost) with the offloading matrix fixed.
/// `None` when some MD holds no subchannel.
pub fn solve_split(sc: &Scenario, x: &[bool]) -> Result<Option<Split>> {
    let (s_count, k_count) = (sc.num_mds(), sc.num_channels());
    if x.len() != s_count * k_count {
        return Err(Error::Dimension(format!("expected {} entries in x, got {}", s_count * k_count, x.len())));
    }
    if (0..s_count).any(|s| !x[s * k_count..(s + 1) * k_count].iter().any(|&b| b)) {
        return Ok(None);
    }
    let active: Vec<usize> = (0..x.len()).filter(|&i| x[i]).collect();
    // Time unit: the slowest single full-task transfer among active pairs.
    let unit = active
        .iter()
        .map(|&i| sc.task_bits(i / k_count) / sc.rates()[i])
        .fold(0.0, f64::max);
    let w = sc.weights();
    let n = active.len() + 1;
    let tau = active.len();
    // z_j = fraction of the owning task sent on active pair j.
    let secs: Vec<f64> = active
        .iter()
        .map(|&i| sc.task_bits(i / k_count) / sc.rates()[i] / unit)
        .collect();
    let mut c: Vec<f64> = active
        .iter()
        .zip(&secs)
        .map(|(&i, t)| w.lambda_e * sc.power(i / k_count) * t)
        .collect();
    c.push(w.lambda_t);
    let mut lp = LinearProgram::new(c);
    for s in 0..s_count {
        let mut r = vec![0.0; n];
        for (j, &i) in active.iter().enumerate() {
            if i / k_count == s {
                r[j] = 1.0;
            }
        }
        lp.add_eq(r, 1.0)?;
    }
    for k in 0..k_count {
        let mut r = vec![0.0; n];
        let mut any = false;
        for (j, &i) in active.iter().enumerate() {
            if i % k_count == k {
                r[j] = secs[j];
                any = true;
            }
        }
        if any {
            r[tau] = -1.0;
            lp.add_ub(r, 0.0)?;
        }
    }
    for j in 0..active.len() {
        lp.set_bounds(j, 0.0, 1.0)?;
    }
    let res = solve_lp(&lp)?;
    match res.status {
        LpStatus::Optimal => {
            let z = res.solution.as_ref().expect("optimal");
            let mut l = vec![0.0; x.len()];
            for (j, &i) in active.iter().enumerate() {
                l[i] = z[j] * sc.task_bits(i / k_count);
            }
            Ok(Some(Split {
                l,
                psi: res.value * unit,
            }))
        }
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::Precondition("split LP unbounded".into())),
    }
}
