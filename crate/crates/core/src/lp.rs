//! Dense two-phase primal simplex with native variable bounds.
//!
//! Each variable lives in `[lo, hi]` with `lo` finite and `hi` possibly
//! infinite. Internally every variable is shifted to `[0, hi - lo]`; nonbasic
//! variables sit at either end of that box, so bound tightenings never add
//! rows. Pricing is Dantzig's largest reduced cost and switches to Bland's
//! smallest-index rule for the rest of a phase once a full pass of pivots
//! brings no improvement.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::textio::fmt_f64;

/// Primal feasibility tolerance on constraint residuals.
pub const FEAS_TOL: f64 = 1e-9;
/// Optimality tolerance on reduced costs.
pub const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;

/// `minimize c'v  s.t.  A_eq v = b_eq,  A_ub v <= b_ub,  lo <= v <= hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    c: Vec<f64>,
    a_eq: Vec<Vec<f64>>,
    b_eq: Vec<f64>,
    a_ub: Vec<Vec<f64>>,
    b_ub: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl LinearProgram {
    /// A program over `c.len()` variables, all in `[0, +inf)`.
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        Self {
            c,
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            lo: vec![0.0; n],
            hi: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }
    pub fn num_eq(&self) -> usize {
        self.b_eq.len()
    }
    pub fn num_ub(&self) -> usize {
        self.b_ub.len()
    }
    pub fn objective(&self) -> &[f64] {
        &self.c
    }
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.lo[i], self.hi[i])
    }

    fn check_row(&self, row: &[f64], rhs: f64) -> Result<()> {
        if row.len() != self.c.len() {
            return Err(Error::Dimension(format!(
                "constraint row has {} coefficients, program has {} variables",
                row.len(),
                self.c.len()
            )));
        }
        if !rhs.is_finite() || row.iter().any(|a| !a.is_finite()) {
            return Err(Error::Dimension("constraint coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Adds `row . v = rhs`.
    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) -> Result<()> {
        self.check_row(&row, rhs)?;
        self.a_eq.push(row);
        self.b_eq.push(rhs);
        Ok(())
    }

    /// Adds `row . v <= rhs`.
    pub fn add_ub(&mut self, row: Vec<f64>, rhs: f64) -> Result<()> {
        self.check_row(&row, rhs)?;
        self.a_ub.push(row);
        self.b_ub.push(rhs);
        Ok(())
    }

    /// Adds `row . v >= rhs`, stored as `-row . v <= -rhs`.
    pub fn add_lb(&mut self, row: Vec<f64>, rhs: f64) -> Result<()> {
        self.add_ub(row.into_iter().map(|a| -a).collect(), -rhs)
    }

    pub fn set_bounds(&mut self, i: usize, lo: f64, hi: f64) -> Result<()> {
        if i >= self.c.len() {
            return Err(Error::Dimension(format!("variable {i} out of range")));
        }
        if !lo.is_finite() || hi.is_nan() || lo > hi {
            return Err(Error::Dimension(format!(
                "variable {i}: need finite lo <= hi, got [{lo}, {hi}]"
            )));
        }
        self.lo[i] = lo;
        self.hi[i] = hi;
        Ok(())
    }

    /// Largest constraint or bound violation of `v`.
    pub fn max_violation(&self, v: &[f64]) -> f64 {
        let dot = |row: &[f64]| row.iter().zip(v).map(|(a, x)| a * x).sum::<f64>();
        let eq = self
            .a_eq
            .iter()
            .zip(&self.b_eq)
            .map(|(r, b)| (dot(r) - b).abs());
        let ub = self
            .a_ub
            .iter()
            .zip(&self.b_ub)
            .map(|(r, b)| (dot(r) - b).max(0.0));
        let bnd = v
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (lo, hi))| (lo - x).max(x - hi).max(0.0));
        eq.chain(ub).chain(bnd).fold(0.0, f64::max)
    }

    pub fn value_at(&self, v: &[f64]) -> f64 {
        self.c.iter().zip(v).map(|(c, x)| c * x).sum()
    }

    /// Debug text form: one `min`, `eq`, `ub` or `bnd` line per row.
    pub fn to_text(&self) -> String {
        let join = |row: &[f64]| row.iter().map(|a| fmt_f64(*a)).collect::<Vec<_>>().join(" ");
        let mut out = format!("# lp-v1 n={}\n", self.c.len());
        let _ = writeln!(out, "min {}", join(&self.c));
        for (row, b) in self.a_eq.iter().zip(&self.b_eq) {
            let _ = writeln!(out, "eq {} = {}", join(row), fmt_f64(*b));
        }
        for (row, b) in self.a_ub.iter().zip(&self.b_ub) {
            let _ = writeln!(out, "ub {} <= {}", join(row), fmt_f64(*b));
        }
        for (lo, hi) in self.lo.iter().zip(&self.hi) {
            let _ = writeln!(out, "bnd {} {}", fmt_f64(*lo), fmt_f64(*hi));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let path = std::path::Path::new("<lp>");
        let nums = |line: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| crate::textio::parse_f64(path, line, t))
                .collect()
        };
        let mut lp: Option<LinearProgram> = None;
        let mut bnd_row = 0;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            let need = |lp: &mut Option<LinearProgram>| {
                lp.take()
                    .ok_or_else(|| Error::parse(path, line_no, "`min` line must come first"))
            };
            match tag {
                "min" => lp = Some(LinearProgram::new(nums(line_no, rest)?)),
                "eq" | "ub" => {
                    let sep = if tag == "eq" { "=" } else { "<=" };
                    let (row, rhs) = rest
                        .rsplit_once(sep)
                        .ok_or_else(|| Error::parse(path, line_no, format!("missing `{sep}`")))?;
                    let mut p = need(&mut lp)?;
                    let row = nums(line_no, row)?;
                    let rhs = crate::textio::parse_f64(path, line_no, rhs)?;
                    let added = if tag == "eq" { p.add_eq(row, rhs) } else { p.add_ub(row, rhs) };
                    added.map_err(|e| Error::parse(path, line_no, e.to_string()))?;
                    lp = Some(p);
                }
                "bnd" => {
                    let mut p = need(&mut lp)?;
                    let b = nums(line_no, rest)?;
                    if b.len() != 2 {
                        return Err(Error::parse(path, line_no, "bnd needs `lo hi`"));
                    }
                    p.set_bounds(bnd_row, b[0], b[1])
                        .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
                    bnd_row += 1;
                    lp = Some(p);
                }
                other => return Err(Error::parse(path, line_no, format!("unknown section {other:?}"))),
            }
        }
        lp.ok_or_else(|| Error::parse(path, 1, "empty program"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Present iff `status == Optimal`.
    pub solution: Option<Vec<f64>>,
    /// `c'v` at the solution; `+inf` when infeasible, `-inf` when unbounded.
    pub value: f64,
    pub iterations: usize,
}

impl LpResult {
    fn without_solution(status: LpStatus, iterations: usize) -> Self {
        let value = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self {
            status,
            solution: None,
            value,
            iterations,
        }
    }
}

/// Solves `lp` to a vertex optimum. Pure and deterministic.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpResult> {
    Tableau::build(lp).run(lp)
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    cols: usize,
    /// Row-major `m x cols`, always equal to `B^-1 A`.
    t: Vec<f64>,
    /// Shifted, sign-normalized right-hand side.
    rhs: Vec<f64>,
    /// Original (shifted, sign-normalized) columns, for recomputing values.
    a: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    /// Column that formed the identity at the start, per row.
    initial_basis: Vec<usize>,
    beta: Vec<f64>,
    at_upper: Vec<bool>,
    artificial_start: usize,
    n: usize,
    iterations: usize,
    max_iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m_eq = lp.num_eq();
        let m_ub = lp.num_ub();
        let m = m_eq + m_ub;

        // Shifted rows: A u (+ s) = b - A lo.
        let mut rows: Vec<(Vec<f64>, f64, Option<usize>)> = Vec::with_capacity(m);
        for (row, b) in lp.a_eq.iter().zip(&lp.b_eq) {
            let shift: f64 = row.iter().zip(&lp.lo).map(|(a, l)| a * l).sum();
            rows.push((row.clone(), b - shift, None));
        }
        for (r, (row, b)) in lp.a_ub.iter().zip(&lp.b_ub).enumerate() {
            let shift: f64 = row.iter().zip(&lp.lo).map(|(a, l)| a * l).sum();
            rows.push((row.clone(), b - shift, Some(n + r)));
        }
        let needs_artificial: Vec<bool> = rows
            .iter()
            .map(|(_, rhs, slack)| slack.is_none() || *rhs < 0.0)
            .collect();
        let n_art = needs_artificial.iter().filter(|&&b| b).count();
        let artificial_start = n + m_ub;
        let cols = artificial_start + n_art;

        let mut a = vec![0.0; m * cols];
        let mut rhs = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut next_art = artificial_start;
        for (i, (row, b, slack)) in rows.into_iter().enumerate() {
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            let dst = &mut a[i * cols..(i + 1) * cols];
            for (d, v) in dst.iter_mut().zip(&row) {
                *d = sign * v;
            }
            if let Some(sc) = slack {
                dst[sc] = sign;
            }
            rhs[i] = sign * b;
            if needs_artificial[i] {
                dst[next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            } else {
                basis[i] = slack.expect("rows without artificials have slacks");
            }
        }
        let mut upper = vec![f64::INFINITY; cols];
        for j in 0..n {
            upper[j] = lp.hi[j] - lp.lo[j];
        }
        Self {
            m,
            cols,
            t: a.clone(),
            beta: rhs.clone(),
            rhs,
            a,
            upper,
            initial_basis: basis.clone(),
            basis,
            at_upper: vec![false; cols],
            artificial_start,
            n,
            iterations: 0,
            max_iterations: 20_000 + 200 * (m + cols),
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpResult> {
        if self.cols > self.artificial_start {
            let mut cost = vec![0.0; self.cols];
            for c in cost.iter_mut().skip(self.artificial_start) {
                *c = 1.0;
            }
            self.phase(&cost, self.cols)?;
            self.recompute_beta();
            let infeasibility: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.artificial_start)
                .map(|i| self.beta[i].max(0.0))
                .sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |acc, b| acc.max(b.abs()));
            if infeasibility > FEAS_TOL * scale {
                return Ok(LpResult::without_solution(LpStatus::Infeasible, self.iterations));
            }
            for j in self.artificial_start..self.cols {
                self.upper[j] = 0.0;
                self.at_upper[j] = false;
            }
        }
        let mut cost = vec![0.0; self.cols];
        cost[..self.n].copy_from_slice(&lp.c);
        match self.phase(&cost, self.artificial_start)? {
            PhaseOutcome::Unbounded => Ok(LpResult::without_solution(LpStatus::Unbounded, self.iterations)),
            PhaseOutcome::Optimal => {
                self.recompute_beta();
                let mut u = vec![0.0; self.cols];
                for j in 0..self.cols {
                    if self.at_upper[j] {
                        u[j] = self.upper[j];
                    }
                }
                for (i, &b) in self.basis.iter().enumerate() {
                    u[b] = self.beta[i];
                }
                let v: Vec<f64> = (0..self.n)
                    .map(|j| {
                        let (lo, hi) = lp.bounds(j);
                        (lo + u[j]).clamp(lo, hi)
                    })
                    .collect();
                let value = lp.value_at(&v);
                Ok(LpResult {
                    status: LpStatus::Optimal,
                    solution: Some(v),
                    value,
                    iterations: self.iterations,
                })
            }
        }
    }

    /// Basic values from scratch: `beta = B^-1 (rhs - sum_{j at upper} A_j u_j)`.
    fn recompute_beta(&mut self) {
        let mut r = self.rhs.clone();
        for j in 0..self.cols {
            if self.at_upper[j] && self.upper[j] != 0.0 {
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri -= self.a[i * self.cols + j] * self.upper[j];
                }
            }
        }
        for i in 0..self.m {
            let row = &self.t[i * self.cols..(i + 1) * self.cols];
            self.beta[i] = self
                .initial_basis
                .iter()
                .zip(&r)
                .map(|(&col, rk)| row[col] * rk)
                .sum();
        }
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        let basic: f64 = self.basis.iter().zip(&self.beta).map(|(&b, v)| cost[b] * v).sum();
        let nonbasic: f64 = (0..self.cols)
            .filter(|&j| self.at_upper[j])
            .map(|j| cost[j] * self.upper[j])
            .sum();
        basic + nonbasic
    }

    /// Runs simplex iterations for `cost`, letting only columns `< enter_limit` enter.
    fn phase(&mut self, cost: &[f64], enter_limit: usize) -> Result<PhaseOutcome> {
        let cols = self.cols;
        let mut d = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (dj, tij) in d.iter_mut().zip(&self.t[i * cols..(i + 1) * cols]) {
                    *dj -= cb * tij;
                }
            }
        }
        let mut is_basic = vec![false; cols];
        for &b in &self.basis {
            is_basic[b] = true;
        }

        let mut bland = false;
        let mut stalled = 0usize;
        let mut last_obj = self.objective(cost);
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::IterationLimit(self.iterations));
            }
            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..enter_limit {
                if is_basic[j] {
                    continue;
                }
                let dj = d[j];
                let eligible = if self.at_upper[j] {
                    dj > OPT_TOL
                } else {
                    dj < -OPT_TOL && self.upper[j] > 0.0
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, dj));
                    break;
                }
                if entering.is_none_or(|(_, best)| dj.abs() > best.abs()) {
                    entering = Some((j, dj));
                }
            }
            let Some((q, _)) = entering else {
                return Ok(PhaseOutcome::Optimal);
            };
            let sigma = if self.at_upper[q] { -1.0 } else { 1.0 };

            // Ratio test.
            let mut step = self.upper[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut best_pivot = 0.0;
            for i in 0..self.m {
                let tiq = self.t[i * cols + q];
                if tiq.abs() <= PIVOT_TOL {
                    continue;
                }
                let delta = -sigma * tiq;
                let b = self.basis[i];
                let (limit, to_upper) = if delta < 0.0 {
                    (self.beta[i].max(0.0) / -delta, false)
                } else if self.upper[b].is_finite() {
                    ((self.upper[b] - self.beta[i]).max(0.0) / delta, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit < step || (limit == step && step.is_finite()),
                    Some((r, _)) => {
                        if limit < step {
                            true
                        } else if limit == step {
                            if bland {
                                b < self.basis[r]
                            } else {
                                tiq.abs() > best_pivot
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = limit;
                    leave = Some((i, to_upper));
                    best_pivot = tiq.abs();
                }
            }
            if step.is_infinite() {
                return Ok(PhaseOutcome::Unbounded);
            }
            self.iterations += 1;

            match leave {
                None => {
                    // Bound flip of the entering variable.
                    for i in 0..self.m {
                        self.beta[i] -= sigma * self.t[i * cols + q] * step;
                    }
                    self.at_upper[q] = !self.at_upper[q];
                }
                Some((r, to_upper)) => {
                    for i in 0..self.m {
                        self.beta[i] -= sigma * self.t[i * cols + q] * step;
                    }
                    let start = if self.at_upper[q] { self.upper[q] } else { 0.0 };
                    let leaving = self.basis[r];
                    self.beta[r] = start + sigma * step;
                    self.at_upper[leaving] = to_upper;
                    self.at_upper[q] = false;
                    is_basic[leaving] = false;
                    is_basic[q] = true;
                    self.basis[r] = q;
                    self.pivot(r, q, &mut d);
                }
            }

            let obj = self.objective(cost);
            if obj < last_obj - 1e-12 * (1.0 + last_obj.abs()) {
                stalled = 0;
                last_obj = obj;
            } else {
                stalled += 1;
                if stalled > self.m + cols {
                    bland = true;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize, d: &mut [f64]) {
        let cols = self.cols;
        let p = self.t[r * cols + q];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        self.t[r * cols + q] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (pivot_row, after) = rest.split_at_mut(cols);
        for row in before.chunks_mut(cols).chain(after.chunks_mut(cols)) {
            let f = row[q];
            if f != 0.0 {
                for (x, pr) in row.iter_mut().zip(pivot_row.iter()) {
                    *x -= f * pr;
                }
                row[q] = 0.0;
            }
        }
        let f = d[q];
        if f != 0.0 {
            for (x, pr) in d.iter_mut().zip(pivot_row.iter()) {
                *x -= f * pr;
            }
            d[q] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(c: f64, lo: f64, hi: f64) -> LinearProgram {
        let mut lp = LinearProgram::new(vec![c]);
        lp.set_bounds(0, lo, hi).unwrap();
        lp
    }

    #[test]
    fn one_variable_box() {
        let r = solve_lp(&single(1.0, 1.0, 2.0)).unwrap();
        assert_eq!(r.status, LpStatus::Optimal);
        assert_eq!(r.solution.unwrap(), vec![1.0]);
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn unbounded_ray() {
        let r = solve_lp(&single(-1.0, 0.0, f64::INFINITY)).unwrap();
        assert_eq!(r.status, LpStatus::Unbounded);
        assert!(r.solution.is_none());
    }

    #[test]
    fn contradictory_rows() {
        let mut lp = LinearProgram::new(vec![1.0]);
        lp.add_lb(vec![1.0], 2.0).unwrap();
        lp.add_ub(vec![1.0], 1.0).unwrap();
        let r = solve_lp(&lp).unwrap();
        assert_eq!(r.status, LpStatus::Infeasible);
        assert!(r.solution.is_none());
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        let mut lp = LinearProgram::new(vec![1.0, 2.0]);
        assert!(lp.add_eq(vec![1.0], 1.0).is_err());
        assert!(lp.set_bounds(0, 2.0, 1.0).is_err());
        assert!(lp.set_bounds(0, f64::NEG_INFINITY, 1.0).is_err());
        assert!(lp.set_bounds(5, 0.0, 1.0).is_err());
    }

    #[test]
    fn upper_bound_flip_and_equality() {
        // min -x - 2y  s.t. x + y = 3, 0 <= x <= 2, 0 <= y <= 2  ->  x=1, y=2.
        let mut lp = LinearProgram::new(vec![-1.0, -2.0]);
        lp.add_eq(vec![1.0, 1.0], 3.0).unwrap();
        lp.set_bounds(0, 0.0, 2.0).unwrap();
        lp.set_bounds(1, 0.0, 2.0).unwrap();
        let r = solve_lp(&lp).unwrap();
        let v = r.solution.unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
        assert!((r.value + 5.0).abs() < 1e-12);
    }

    #[test]
    fn text_form_round_trips() {
        let mut lp = LinearProgram::new(vec![1.0, -0.5]);
        lp.add_eq(vec![1.0, 1.0], 1.0).unwrap();
        lp.add_ub(vec![2.0, -1.0], 0.25).unwrap();
        lp.set_bounds(1, 0.0, 0.75).unwrap();
        let text = lp.to_text();
        assert!(text.contains("\nbnd "));
        assert_eq!(LinearProgram::from_text(&text).unwrap(), lp);
        assert!(LinearProgram::from_text("eq 1 = 1\n").is_err());
    }
}
