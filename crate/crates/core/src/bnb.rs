//! Exact branch-and-bound over the offloading matrix, with a node trace, and
//! the exhaustive enumeration oracle it is checked against.

use std::collections::VecDeque;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::relax::{is_integral, solve_relaxation, solve_split, NodeConstraints, RelaxationSolution, INT_TOL};
use crate::scenario::{Assignment, Scenario};
use crate::textio::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbOptions {
    /// Popped-node budget for the whole solve.
    pub max_nodes: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self { max_nodes: 200_000 }
    }
}

/// One node of the search tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Creation order within the pass; the root is 0.
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    pub constraints: NodeConstraints,
    /// The override this node added to its parent's constraints.
    pub fix: Option<(usize, bool)>,
}

impl Node {
    pub fn root() -> Self {
        Self {
            id: 0,
            depth: 0,
            parent: None,
            constraints: NodeConstraints::new(),
            fix: None,
        }
    }
}

/// Splits `node` on `x_i`: the first child gets `x_i <= floor(value)`, the
/// second `x_i >= floor(value) + 1`. Ids are taken from `next_id`.
pub fn branch(node: &Node, i: usize, value: f64, num_pairs: usize, next_id: &mut usize) -> Result<(Node, Node)> {
    if is_integral(value, INT_TOL) {
        return Err(Error::Precondition(format!("cannot branch on integral x_{i} = {value}")));
    }
    if node.constraints.is_fixed(i) {
        return Err(Error::Precondition(format!("x_{i} is already fixed at node {}", node.id)));
    }
    if !(0.0..1.0).contains(&value) {
        return Err(Error::Precondition(format!("x_{i} = {value} outside the unit box")));
    }
    // floor(value) = 0: the children are x_i <= 0 and x_i >= 1.
    let make = |id: usize, up: bool| -> Result<Node> {
        Ok(Node {
            id,
            depth: node.depth + 1,
            parent: Some(node.id),
            constraints: node.constraints.with_fixed(i, up, num_pairs)?,
            fix: Some((i, up)),
        })
    };
    let left = make(*next_id, false)?;
    let right = make(*next_id + 1, true)?;
    *next_id += 2;
    Ok((left, right))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeAction {
    Branched,
    PrunedByBound,
    PrunedInfeasible,
    PrunedByModel,
    NewIncumbent,
}

impl NodeAction {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeAction::Branched => "Branched",
            NodeAction::PrunedByBound => "PrunedByBound",
            NodeAction::PrunedInfeasible => "PrunedInfeasible",
            NodeAction::PrunedByModel => "PrunedByModel",
            NodeAction::NewIncumbent => "NewIncumbent",
        }
    }
}

impl fmt::Display for NodeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeAction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "Branched" => NodeAction::Branched,
            "PrunedByBound" => NodeAction::PrunedByBound,
            "PrunedInfeasible" => NodeAction::PrunedInfeasible,
            "PrunedByModel" => NodeAction::PrunedByModel,
            "NewIncumbent" => NodeAction::NewIncumbent,
            other => return Err(Error::Precondition(format!("unknown node action {other:?}"))),
        })
    }
}

/// A processed node as it appears in the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    /// Search pass (0 unless the learned solver restarted).
    pub pass: usize,
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    pub fix: Option<(usize, bool)>,
    pub action: NodeAction,
    /// `None` when the node relaxation was infeasible.
    pub relaxation: Option<RelaxationSolution>,
    /// Incumbent value when the node was popped.
    pub zub_at_pop: f64,
}

impl NodeRecord {
    pub fn feasible(&self) -> bool {
        self.relaxation.is_some()
    }
    pub fn psi(&self) -> Option<f64> {
        self.relaxation.as_ref().map(|r| r.psi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub assignment: Assignment,
    pub psi: f64,
    /// Node that produced the incumbent, and its pass.
    pub node_id: usize,
    pub pass: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// The node budget ran out; `best` holds the incumbent so far, if any.
    BudgetExhausted,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::BudgetExhausted => "BudgetExhausted",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub best: Option<Solution>,
    /// Popped nodes for tree searches (equal to `trace.len()`); split LPs
    /// solved for the exhaustive oracle, whose trace stays empty.
    pub nodes_searched: usize,
    pub trace: Vec<NodeRecord>,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn psi(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.psi)
    }

    /// Trace as CSV (`# trace-v1`).
    pub fn trace_csv(&self, num_pairs: usize) -> String {
        trace_csv(&self.trace, num_pairs, |_| None)
    }
}

/// Decides whether a fractional node survives the bound test.
pub(crate) trait Gate {
    /// `true`: branch only when `psi < zub` (otherwise `psi <= zub`).
    fn strict(&self) -> bool;
    /// Called for fractional nodes that passed the bound test; `false` prunes.
    fn reserve(&mut self, node: &Node, sol: &RelaxationSolution, root_psi: f64, sc: &Scenario) -> bool;
}

pub(crate) struct ExactGate;

impl Gate for ExactGate {
    fn strict(&self) -> bool {
        false
    }
    fn reserve(&mut self, _: &Node, _: &RelaxationSolution, _: f64, _: &Scenario) -> bool {
        true
    }
}

pub(crate) struct PassOutcome {
    pub best: Option<Solution>,
    pub budget_hit: bool,
    pub model_pruned: usize,
}

/// One FIFO pass of the search from the root. Appends to `trace`, pops at
/// most `budget` nodes.
pub(crate) fn run_pass(
    sc: &Scenario,
    gate: &mut dyn Gate,
    pass: usize,
    budget: usize,
    trace: &mut Vec<NodeRecord>,
) -> Result<PassOutcome> {
    let pairs = sc.num_pairs();
    let mut queue = VecDeque::from([Node::root()]);
    let mut next_id = 1;
    let mut zub = f64::INFINITY;
    let mut best: Option<Solution> = None;
    let mut root_psi = f64::NAN;
    let mut popped = 0;
    let mut model_pruned = 0;

    while let Some(node) = queue.pop_front() {
        if popped == budget {
            return Ok(PassOutcome {
                best,
                budget_hit: true,
                model_pruned,
            });
        }
        popped += 1;
        let relaxation = solve_relaxation(sc, &node.constraints)?;
        if node.id == 0 {
            root_psi = relaxation.as_ref().map_or(f64::NAN, |r| r.psi);
        }
        let action = match &relaxation {
            None => NodeAction::PrunedInfeasible,
            Some(sol) => match sol.first_fractional {
                Some(i) => {
                    let passes_bound = if gate.strict() { sol.psi < zub } else { sol.psi <= zub };
                    if !passes_bound {
                        NodeAction::PrunedByBound
                    } else if !gate.reserve(&node, sol, root_psi, sc) {
                        model_pruned += 1;
                        NodeAction::PrunedByModel
                    } else {
                        let (a, b) = branch(&node, i, sol.x[i], pairs, &mut next_id)?;
                        queue.push_back(a);
                        queue.push_back(b);
                        NodeAction::Branched
                    }
                }
                None if sol.psi < zub => NodeAction::NewIncumbent,
                None => NodeAction::PrunedByBound,
            },
        };
        if action == NodeAction::NewIncumbent {
            let sol = relaxation.as_ref().expect("incumbents are feasible");
            let x = sol.rounded_x();
            let l = sol.l.iter().zip(&x).map(|(&l, &on)| if on { l } else { 0.0 }).collect();
            best = Some(Solution {
                assignment: Assignment { x, l },
                psi: sol.psi,
                node_id: node.id,
                pass,
            });
        }
        trace.push(NodeRecord {
            pass,
            id: node.id,
            depth: node.depth,
            parent: node.parent,
            fix: node.fix,
            action,
            relaxation,
            zub_at_pop: zub,
        });
        if let Some(b) = &best {
            zub = b.psi;
        }
    }
    Ok(PassOutcome {
        best,
        budget_hit: false,
        model_pruned,
    })
}

/// Breadth-first branch-and-bound. Optimal whenever `K >= S`.
pub fn solve_bnb(sc: &Scenario, opts: &BnbOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let mut trace = Vec::new();
    let out = run_pass(sc, &mut ExactGate, 0, opts.max_nodes, &mut trace)?;
    let status = if out.budget_hit {
        SolveStatus::BudgetExhausted
    } else if out.best.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };
    Ok(SolveReport {
        status,
        best: out.best,
        nodes_searched: trace.len(),
        trace,
        wall_time: start.elapsed(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExhaustiveOptions {
    /// Largest accepted `(S + 1)^K`.
    pub enum_budget: u128,
}

impl Default for ExhaustiveOptions {
    fn default() -> Self {
        Self { enum_budget: 1_000_000 }
    }
}

/// Ground truth by enumerating every channel-to-MD map. Every MD must hold
/// at least one channel; each candidate is costed with [`solve_split`].
pub fn solve_exhaustive(sc: &Scenario, opts: &ExhaustiveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let (s_count, k_count) = (sc.num_mds(), sc.num_channels());
    let radix = s_count as u128 + 1;
    let needed = (0..k_count).try_fold(1u128, |acc, _| acc.checked_mul(radix)).unwrap_or(u128::MAX);
    if needed > opts.enum_budget {
        return Err(Error::EnumerationBudget {
            needed,
            budget: opts.enum_budget,
        });
    }
    let mut owner = vec![0usize; k_count];
    let mut best: Option<Solution> = None;
    let mut evaluated = 0;
    for _ in 0..needed {
        let mut x = vec![false; s_count * k_count];
        let mut held = vec![false; s_count];
        for (k, &o) in owner.iter().enumerate() {
            if o > 0 {
                x[(o - 1) * k_count + k] = true;
                held[o - 1] = true;
            }
        }
        if held.iter().all(|&h| h) {
            evaluated += 1;
            if let Some(split) = solve_split(sc, &x)? {
                if best.as_ref().is_none_or(|b| split.psi < b.psi) {
                    best = Some(Solution {
                        assignment: Assignment { x, l: split.l },
                        psi: split.psi,
                        node_id: evaluated - 1,
                        pass: 0,
                    });
                }
            }
        }
        for digit in owner.iter_mut() {
            *digit += 1;
            if *digit < radix as usize {
                break;
            }
            *digit = 0;
        }
    }
    Ok(SolveReport {
        status: if best.is_some() {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        },
        best,
        nodes_searched: evaluated,
        trace: Vec::new(),
        wall_time: start.elapsed(),
    })
}

/// Renders trace records as `# trace-v1` CSV. `pass_comment(pass)` may add a
/// `#` line before the first row of each pass.
pub fn trace_csv(records: &[NodeRecord], num_pairs: usize, pass_comment: impl Fn(usize) -> Option<String>) -> String {
    let mut out = String::from("# trace-v1\nj,g,parent,f,action,psi,zub_at_pop");
    for i in 0..num_pairs {
        let _ = write!(out, ",x{i}");
    }
    for i in 0..num_pairs {
        let _ = write!(out, ",l{i}");
    }
    out.push('\n');
    let mut current_pass = None;
    for r in records {
        if current_pass != Some(r.pass) {
            current_pass = Some(r.pass);
            if let Some(c) = pass_comment(r.pass) {
                let _ = writeln!(out, "# {c}");
            }
        }
        let parent = r.parent.map(|p| p.to_string()).unwrap_or_default();
        let psi = r.psi().map(fmt_f64).unwrap_or_default();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            r.id,
            r.depth,
            parent,
            u8::from(r.feasible()),
            r.action,
            psi,
            fmt_f64(r.zub_at_pop)
        );
        match &r.relaxation {
            Some(sol) => {
                for v in sol.x.iter().chain(&sol.l) {
                    let _ = write!(out, ",{}", fmt_f64(*v));
                }
            }
            None => {
                for _ in 0..2 * num_pairs {
                    out.push_str(",0");
                }
            }
        }
        out.push('\n');
    }
    out
}
