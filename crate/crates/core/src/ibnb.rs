//! Branch-and-bound with a learned pruning rule and an adaptive threshold.
//!
//! Each pass is the exact FIFO search, except that a fractional node that
//! beats the incumbent is branched only if the classifier output exceeds the
//! current threshold. A pass that ends without any incumbent lowers the
//! threshold by the policy step and restarts from the root; below
//! `theta_min` the solver runs the exact search instead.

use std::time::Instant;

use crate::bnb::{run_pass, trace_csv, BnbOptions, ExactGate, Gate, Node, SolveReport, SolveStatus};
use crate::dataset::{feature_len, featurize};
use crate::error::{Error, Result};
use crate::mlp::MlpModel;
use crate::relax::RelaxationSolution;
use crate::scenario::Scenario;
use crate::textio::fmt_f64;

/// Anything that maps node features to a branching score in `(0, 1)`.
pub trait PruningModel {
    /// Expected feature length, if fixed.
    fn input_dim(&self) -> Option<usize>;
    fn predict(&self, features: &[f64]) -> f64;
    fn model_id(&self) -> String;
}

impl PruningModel for MlpModel {
    fn input_dim(&self) -> Option<usize> {
        Some(MlpModel::input_dim(self))
    }
    fn predict(&self, features: &[f64]) -> f64 {
        self.forward(features).expect("feature length checked before the search")
    }
    fn model_id(&self) -> String {
        MlpModel::model_id(self)
    }
}

/// A model that scores every node the same.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantModel(pub f64);

impl PruningModel for ConstantModel {
    fn input_dim(&self) -> Option<usize> {
        None
    }
    fn predict(&self, _: &[f64]) -> f64 {
        self.0
    }
    fn model_id(&self) -> String {
        format!("constant:{}", self.0)
    }
}

/// `true` (branch) iff `y_hat > theta`; ties prune.
pub fn prune_decision(y_hat: f64, theta: f64) -> bool {
    y_hat > theta
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPolicy {
    pub theta0: f64,
    /// Multiplicative step applied after a pass without any incumbent.
    pub delta_theta: f64,
    /// Below this the solver gives up on the model and searches exactly.
    pub theta_min: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            theta0: 1e-7,
            delta_theta: 1e-5,
            theta_min: 1e-30,
        }
    }
}

impl ThresholdPolicy {
    pub fn new(theta0: f64, delta_theta: f64, theta_min: f64) -> Result<Self> {
        let p = Self {
            theta0,
            delta_theta,
            theta_min,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_theta0(self, theta0: f64) -> Result<Self> {
        Self::new(theta0, self.delta_theta, self.theta_min)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.theta_min && self.theta_min < self.theta0 && self.theta0 < 1.0) {
            return Err(Error::Config(format!(
                "threshold policy needs 0 < theta_min < theta0 < 1, got theta_min={}, theta0={}",
                self.theta_min, self.theta0
            )));
        }
        if !(0.0 < self.delta_theta && self.delta_theta < 1.0) {
            return Err(Error::Config(format!(
                "delta_theta must lie in (0, 1), got {}",
                self.delta_theta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IbnbReport {
    /// Counts and trace cover every pass; `nodes_searched` includes nodes
    /// pruned by the model.
    pub report: SolveReport,
    /// Thresholds of the model-gated passes, in order.
    pub thresholds_tried: Vec<f64>,
    pub restarts: usize,
    pub fell_back_to_exact: bool,
    pub model_id: String,
}

impl IbnbReport {
    pub fn psi(&self) -> Option<f64> {
        self.report.psi()
    }

    /// Trace CSV with a `# theta=.. restart=..` line ahead of every pass.
    pub fn trace_csv(&self, num_pairs: usize) -> String {
        trace_csv(&self.report.trace, num_pairs, |pass| {
            Some(match self.thresholds_tried.get(pass) {
                Some(&theta) => format!("theta={} restart={pass}", fmt_f64(theta)),
                None => format!("theta=exact restart={pass}"),
            })
        })
    }
}

struct LearnedGate<'a> {
    model: &'a dyn PruningModel,
    theta: f64,
}

impl Gate for LearnedGate<'_> {
    fn strict(&self) -> bool {
        true
    }
    fn reserve(&mut self, node: &Node, sol: &RelaxationSolution, root_psi: f64, sc: &Scenario) -> bool {
        let features = featurize(node.id, node.depth, Some(sol), root_psi, sc);
        prune_decision(self.model.predict(&features), self.theta)
    }
}

pub fn solve_ibnb(
    sc: &Scenario,
    model: &dyn PruningModel,
    policy: &ThresholdPolicy,
    opts: &BnbOptions,
) -> Result<IbnbReport> {
    policy.validate()?;
    let m = feature_len(sc.num_mds(), sc.num_channels());
    if let Some(dim) = model.input_dim() {
        if dim != m {
            return Err(Error::Dimension(format!(
                "model takes {dim} features but an {}x{} frame yields {m}",
                sc.num_mds(),
                sc.num_channels()
            )));
        }
    }
    let start = Instant::now();
    let mut trace = Vec::new();
    let mut thresholds_tried = Vec::new();
    let mut theta = policy.theta0;
    let mut fell_back = false;
    let mut pass = 0;
    let (status, best) = loop {
        let budget = opts.max_nodes - trace.len();
        let out = run_pass(sc, &mut LearnedGate { model, theta }, pass, budget, &mut trace)?;
        thresholds_tried.push(theta);
        if out.budget_hit {
            break (SolveStatus::BudgetExhausted, out.best);
        }
        if out.best.is_some() {
            break (SolveStatus::Optimal, out.best);
        }
        if out.model_pruned == 0 {
            // Nothing was cut by the model, so the pass was exhaustive.
            break (SolveStatus::Infeasible, None);
        }
        pass += 1;
        theta *= policy.delta_theta;
        if theta < policy.theta_min {
            fell_back = true;
            let budget = opts.max_nodes - trace.len();
            let out = run_pass(sc, &mut ExactGate, pass, budget, &mut trace)?;
            let status = if out.budget_hit {
                SolveStatus::BudgetExhausted
            } else if out.best.is_some() {
                SolveStatus::Optimal
            } else {
                SolveStatus::Infeasible
            };
            break (status, out.best);
        }
    };
    Ok(IbnbReport {
        report: SolveReport {
            status,
            best,
            nodes_searched: trace.len(),
            trace,
            wall_time: start.elapsed(),
        },
        restarts: thresholds_tried.len() - 1,
        thresholds_tried,
        fell_back_to_exact: fell_back,
        model_id: model.model_id(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::{solve_bnb, NodeAction};
    use crate::scenario::ScenarioConfig;

    fn frame(s: usize, k: usize, seed: u64) -> Scenario {
        Scenario::generate(&ScenarioConfig::default().with_shape(s, k).with_seed(seed)).unwrap()
    }

    #[test]
    fn decision_rule() {
        assert!(prune_decision(0.9, 1e-7));
        assert!(!prune_decision(1e-9, 1e-7));
        assert!(!prune_decision(1e-7, 1e-7));
    }

    #[test]
    fn policy_validation() {
        assert!(ThresholdPolicy::new(1e-7, 1e-5, 1e-30).is_ok());
        assert!(ThresholdPolicy::new(1.0, 1e-5, 1e-30).is_err());
        assert!(ThresholdPolicy::new(1e-7, 1.0, 1e-30).is_err());
        assert!(ThresholdPolicy::new(1e-7, 1e-5, 1e-7).is_err());
    }

    #[test]
    fn confident_model_reproduces_exact_trace() {
        let sc = frame(3, 4, 1);
        let exact = solve_bnb(&sc, &BnbOptions::default()).unwrap();
        let learned = solve_ibnb(&sc, &ConstantModel(0.99), &ThresholdPolicy::default(), &BnbOptions::default()).unwrap();
        assert_eq!(learned.report.trace, exact.trace);
        assert_eq!(learned.restarts, 0);
        assert_eq!(learned.model_id, "constant:0.99");
    }

    #[test]
    fn over_pruning_restarts_until_feasible() {
        let sc = frame(3, 5, 2);
        let policy = ThresholdPolicy::new(0.9, 1e-5, 1e-30).unwrap();
        let rep = solve_ibnb(&sc, &ConstantModel(0.5), &policy, &BnbOptions::default()).unwrap();
        assert_eq!(rep.report.status, SolveStatus::Optimal);
        assert_eq!(rep.thresholds_tried.len(), 2);
        assert_eq!(rep.restarts, 1);
        assert!(!rep.fell_back_to_exact);
        assert_eq!(rep.report.trace[0].action, NodeAction::PrunedByModel);
        let csv = rep.trace_csv(sc.num_pairs());
        assert!(csv.contains("# theta=9.0000000000000002e-1 restart=0\n"));
        assert!(csv.contains(" restart=1\n"));
    }

    #[test]
    fn hopeless_model_falls_back_to_exact() {
        let sc = frame(2, 3, 3);
        let policy = ThresholdPolicy::new(0.5, 0.5, 0.1).unwrap();
        let rep = solve_ibnb(&sc, &ConstantModel(1e-9), &policy, &BnbOptions::default()).unwrap();
        assert!(rep.fell_back_to_exact);
        assert_eq!(rep.thresholds_tried, vec![0.5, 0.25, 0.125]);
        let exact = solve_bnb(&sc, &BnbOptions::default()).unwrap();
        assert_eq!(rep.psi(), exact.psi());
        assert_eq!(rep.report.nodes_searched, 3 + exact.nodes_searched);
    }

    #[test]
    fn pigeonhole_detected_without_restarts() {
        let sc = frame(3, 2, 4);
        let rep = solve_ibnb(&sc, &ConstantModel(1e-9), &ThresholdPolicy::default(), &BnbOptions::default()).unwrap();
        assert_eq!(rep.report.status, SolveStatus::Infeasible);
        assert_eq!(rep.restarts, 0);
    }

    #[test]
    fn model_shape_is_checked() {
        let sc = frame(2, 2, 5);
        let model = MlpModel::zeros(&[5, 3, 1]).unwrap();
        assert!(solve_ibnb(&sc, &model, &ThresholdPolicy::default(), &BnbOptions::default()).is_err());
    }
}
