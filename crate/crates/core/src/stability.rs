//! The Robbins inequality `v(g'(s) - g(s)) >= N - r_s + min{0, v(g(s))}`,
//! per node and across trials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{valuation, ExactRational, Valuation};
use crate::perturb::{
    derive_seed, perturb, perturb_with_assignment, Abort, GremlinAssignment, GremlinConfig, PerturbError,
    PerturbationResult, RunEvent,
};
use crate::recurrence::{NodeId, RecurrenceSpec, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Class {
    Ok,
    Violation,
    /// `r_s = N`: reported, never counted as a violation by default.
    Borderline,
    /// `r_s > N`: the inequality claims nothing.
    NoClaim,
}

/// Whether a borderline node with a negative margin counts as a violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BorderlinePolicy {
    #[default]
    Separate,
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StabilityVerdict {
    pub node: NodeId,
    #[serde(rename = "N")]
    pub precision: u32,
    pub r: i64,
    /// `v(Q_s(g'))`; the larger of the two runs when pairwise.
    pub v_q: Valuation,
    /// `v(g(s))`, or the apparent valuation of `g'_1(s)` when `proxy`.
    pub v_g: Valuation,
    pub correction: i64,
    pub predicted: i64,
    pub actual: Valuation,
    pub margin: Valuation,
    pub class: Class,
    pub proxy: bool,
    /// `actual` hit the precision the values carry, so it is a lower bound.
    pub representation_limited: bool,
}

impl StabilityVerdict {
    #[allow(clippy::too_many_arguments)]
    fn new(
        node: NodeId,
        precision: u32,
        r: i64,
        v_q: Valuation,
        v_g: Valuation,
        proxy: bool,
        actual: Valuation,
        representation_limited: bool,
    ) -> Self {
        let correction = v_g.finite().map_or(0, |v| v.min(0));
        let predicted = precision as i64 - r + correction;
        let margin = actual.minus(predicted);
        let n = precision as i64;
        let class = if r > n {
            Class::NoClaim
        } else if r == n {
            Class::Borderline
        } else if margin < 0 {
            Class::Violation
        } else {
            Class::Ok
        };
        StabilityVerdict {
            node,
            precision,
            r,
            v_q,
            v_g,
            correction,
            predicted,
            actual,
            margin,
            class,
            proxy,
            representation_limited,
        }
    }

    /// Does `actual >= N - r_s` hold, i.e. without the correction term?
    pub fn uncorrected_holds(&self) -> bool {
        self.actual >= self.precision as i64 - self.r
    }

    pub fn counts_as_violation(&self, policy: BorderlinePolicy) -> bool {
        match self.class {
            Class::Violation => true,
            Class::Borderline => policy == BorderlinePolicy::Strict && self.margin < 0,
            _ => false,
        }
    }
}

/// `v(a - b)` capped at the coarser resolution of the two values.
fn difference(
    a: (Option<ExactRational>, Valuation),
    b: (Option<ExactRational>, Valuation),
    spec: &RecurrenceSpec,
) -> (Valuation, bool) {
    let bound = a.1.min(b.1);
    match (a.0, b.0) {
        (Some(x), Some(y)) => {
            let d = valuation(&(x - y), spec.prime());
            if d >= bound && !bound.is_infinite() {
                (bound, true)
            } else {
                (d, false)
            }
        }
        _ => (bound, true),
    }
}

/// One verdict per computed node of `result`, against the exact solution.
pub fn check_stability(
    spec: &RecurrenceSpec,
    g: &Solution,
    result: &PerturbationResult,
    precision: u32,
) -> Vec<StabilityVerdict> {
    (0..result.values.len())
        .map(|s| {
            let exact = (Some(g.values[s].clone()), Valuation::Infinity);
            let (actual, limited) = difference(result.values.representative(s), exact, spec);
            StabilityVerdict::new(
                spec.nodes()[s].id.clone(),
                precision,
                result.loss[s],
                result.den_valuations[s],
                valuation(&g.values[s], spec.prime()),
                false,
                actual,
                limited,
            )
        })
        .collect()
}

/// Verdicts for `v(g'_1(s) - g'_2(s)) >= N - max(r_1, r_2) + correction`.
/// Without `g` the correction uses the apparent valuation of `g'_1(s)`.
pub fn compare_pair(
    spec: &RecurrenceSpec,
    g: Option<&Solution>,
    a: &PerturbationResult,
    b: &PerturbationResult,
    precision: u32,
) -> Vec<StabilityVerdict> {
    let n = a.values.len().min(b.values.len());
    (0..n)
        .map(|s| {
            let (actual, limited) = difference(a.values.representative(s), b.values.representative(s), spec);
            let (v_g, proxy) = match g {
                Some(g) => (valuation(&g.values[s], spec.prime()), false),
                None => (a.values.apparent_valuation(s, spec.prime()), true),
            };
            StabilityVerdict::new(
                spec.nodes()[s].id.clone(),
                precision,
                a.loss[s].max(b.loss[s]),
                a.den_valuations[s].max(b.den_valuations[s]),
                v_g,
                proxy,
                actual,
                limited,
            )
        })
        .collect()
}

/// Everything one trial produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    pub trial: u64,
    /// Seeds of the runs: one for solo trials, two for pairwise.
    pub seeds: Vec<u64>,
    pub pairwise: bool,
    pub replay: bool,
    pub verdicts: Vec<StabilityVerdict>,
    pub abort: Option<Abort>,
    pub events: Vec<RunEvent>,
}

impl TrialOutcome {
    pub fn violations(&self, policy: BorderlinePolicy) -> usize {
        self.verdicts.iter().filter(|v| v.counts_as_violation(policy)).count()
    }
}

/// Trial `trial` of a campaign seeded by `cfg.seed`. Pairwise when asked
/// or when there is no exact solution to compare against.
pub fn run_trial(
    spec: &RecurrenceSpec,
    g: Option<&Solution>,
    cfg: &GremlinConfig,
    trial: u64,
    pairwise: bool,
) -> Result<TrialOutcome, PerturbError> {
    let seed = derive_seed(cfg.seed, &[trial]);
    match g {
        Some(g) if !pairwise => {
            let res = perturb(spec, &cfg.with_seed(seed))?;
            Ok(TrialOutcome {
                trial,
                seeds: vec![seed],
                pairwise: false,
                replay: false,
                verdicts: check_stability(spec, g, &res, cfg.precision),
                abort: res.abort,
                events: res.events,
            })
        }
        _ => {
            let seeds = vec![derive_seed(seed, &[1]), derive_seed(seed, &[2])];
            let a = perturb(spec, &cfg.with_seed(seeds[0]))?;
            let b = perturb(spec, &cfg.with_seed(seeds[1]))?;
            let verdicts = compare_pair(spec, g, &a, &b, cfg.precision);
            let mut events = a.events;
            events.extend(b.events);
            Ok(TrialOutcome { trial, seeds, pairwise: true, replay: false, verdicts, abort: a.abort.or(b.abort), events })
        }
    }
}

/// A recorded exact-mode assignment run as one trial against `g`.
pub fn replay_trial(
    spec: &RecurrenceSpec,
    g: &Solution,
    precision: u32,
    assignment: &GremlinAssignment,
    trial: u64,
) -> Result<TrialOutcome, PerturbError> {
    let res = perturb_with_assignment(spec, precision, assignment)?;
    Ok(TrialOutcome {
        trial,
        seeds: Vec::new(),
        pairwise: false,
        replay: true,
        verdicts: check_stability(spec, g, &res, precision),
        abort: res.abort,
        events: res.events,
    })
}

/// Trials `0..trials`, run in parallel and returned in trial order.
pub fn run_trials(
    spec: &RecurrenceSpec,
    g: Option<&Solution>,
    cfg: &GremlinConfig,
    trials: u64,
    pairwise: bool,
) -> Result<Vec<TrialOutcome>, PerturbError> {
    (0..trials).into_par_iter().map(|t| run_trial(spec, g, cfg, t, pairwise)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeSummary {
    pub node: NodeId,
    pub trials: u64,
    pub violations: u64,
    pub borderlines: u64,
    pub no_claims: u64,
    /// Over every verdict at this node; `inf` if none was finite.
    pub min_margin: Valuation,
    /// Trials that stopped before reaching this node.
    pub aborts: u64,
}

pub fn summarize(spec: &RecurrenceSpec, outcomes: &[TrialOutcome], policy: BorderlinePolicy) -> Vec<NodeSummary> {
    let mut rows: Vec<NodeSummary> = spec
        .ids()
        .map(|id| NodeSummary {
            node: id.clone(),
            trials: outcomes.len() as u64,
            violations: 0,
            borderlines: 0,
            no_claims: 0,
            min_margin: Valuation::Infinity,
            aborts: 0,
        })
        .collect();
    for o in outcomes {
        for (row, v) in rows.iter_mut().zip(&o.verdicts) {
            row.violations += v.counts_as_violation(policy) as u64;
            row.borderlines += (v.class == Class::Borderline) as u64;
            row.no_claims += (v.class == Class::NoClaim) as u64;
            row.min_margin = row.min_margin.min(v.margin);
        }
        for row in rows.iter_mut().skip(o.verdicts.len()) {
            row.aborts += 1;
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimenReport {
    pub outcomes: Vec<TrialOutcome>,
    pub summary: Vec<NodeSummary>,
}

impl RegimenReport {
    pub fn violations(&self) -> u64 {
        self.summary.iter().map(|r| r.violations).sum()
    }

    pub fn aborts(&self) -> usize {
        self.outcomes.iter().filter(|o| o.abort.is_some()).count()
    }
}

/// `trials` pairs of independent perturbations compared with each other.
pub fn pairwise_regimen(
    spec: &RecurrenceSpec,
    g: Option<&Solution>,
    cfg: &GremlinConfig,
    trials: u64,
    policy: BorderlinePolicy,
) -> Result<RegimenReport, PerturbError> {
    let outcomes = run_trials(spec, g, cfg, trials, true)?;
    let summary = summarize(spec, &outcomes, policy);
    Ok(RegimenReport { outcomes, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{builtin_family, FamilyRequest};
    use crate::field::{rat, PrimeContext};
    use crate::perturb::{perturb_exact, Mode, Side, StarEntry};
    use crate::recurrence::solve_exact;

    fn cfg(p: u64, n: u32, seed: u64, mode: Mode) -> GremlinConfig {
        GremlinConfig::new(PrimeContext::new(p).unwrap(), n, 8, seed, mode).unwrap()
    }

    #[test]
    fn counterexample_violation_at_node_seven() {
        let spec = builtin_family(&FamilyRequest::Counterexample, &PrimeContext::new(2).unwrap()).unwrap();
        let g = solve_exact(&spec).unwrap();
        let stars = GremlinAssignment {
            entries: vec![StarEntry {
                node: NodeId::new("x", vec![4]),
                poly: Side::P,
                exponents: vec![0, 0],
                star: rat(-64),
            }],
        };
        let t = replay_trial(&spec, &g, 6, &stars, 0).unwrap();
        let v = &t.verdicts[7];
        assert_eq!((v.r, v.correction, v.predicted), (3, -2, 1));
        assert_eq!(v.actual, Valuation::Finite(0));
        assert_eq!(v.class, Class::Violation);
        assert_eq!(t.violations(BorderlinePolicy::Separate), 1);
    }

    #[test]
    fn zero_perturbation_is_ok_everywhere() {
        let spec = builtin_family(&FamilyRequest::Counterexample, &PrimeContext::new(2).unwrap()).unwrap();
        let g = solve_exact(&spec).unwrap();
        let t = replay_trial(&spec, &g, 6, &GremlinAssignment::default(), 0).unwrap();
        assert!(t.verdicts.iter().all(|v| v.class == Class::Ok && v.actual.is_infinite()));
    }

    #[test]
    fn frieze_of_twos_is_stable() {
        let ctx = PrimeContext::new(3).unwrap();
        let spec = builtin_family(&FamilyRequest::frieze_ints(&[2; 5]), &ctx).unwrap();
        let g = solve_exact(&spec).unwrap();
        for seed in 0..20 {
            let res = perturb_exact(&spec, &cfg(3, 8, seed, Mode::Exact));
            let verdicts = check_stability(&spec, &g, &res, 8);
            assert!(verdicts.iter().all(|v| v.class != Class::Violation), "seed {seed}");
        }
    }

    #[test]
    fn classification_boundaries() {
        let id = NodeId::new("x", vec![]);
        let v = |r, actual| {
            StabilityVerdict::new(id.clone(), 4, r, Valuation::Finite(r), Valuation::Finite(0), false, actual, false)
        };
        assert_eq!(v(5, Valuation::Finite(-10)).class, Class::NoClaim);
        assert_eq!(v(4, Valuation::Finite(-10)).class, Class::Borderline);
        assert_eq!(v(1, Valuation::Finite(2)).class, Class::Violation);
        assert_eq!(v(1, Valuation::Finite(3)).class, Class::Ok);
        assert_eq!(v(1, Valuation::Infinity).margin, Valuation::Infinity);
        let b = v(4, Valuation::Finite(-1));
        assert!(!b.counts_as_violation(BorderlinePolicy::Separate));
        assert!(b.counts_as_violation(BorderlinePolicy::Strict));
    }

    #[test]
    fn pairwise_without_solution_uses_proxy() {
        let ctx = PrimeContext::new(2).unwrap();
        let spec = builtin_family(&FamilyRequest::frieze_ints(&[1; 4]), &ctx).unwrap();
        assert!(solve_exact(&spec).is_err());
        let report = pairwise_regimen(&spec, None, &cfg(2, 8, 5, Mode::Exact), 10, BorderlinePolicy::Separate).unwrap();
        assert_eq!(report.outcomes.len(), 10);
        assert!(report.outcomes.iter().flat_map(|o| &o.verdicts).all(|v| v.proxy));
    }

    #[test]
    fn summary_counts() {
        let ctx = PrimeContext::new(2).unwrap();
        let spec = builtin_family(&FamilyRequest::Counterexample, &ctx).unwrap();
        let g = solve_exact(&spec).unwrap();
        let outcomes = run_trials(&spec, Some(&g), &cfg(2, 6, 1, Mode::Exact), 12, false).unwrap();
        let rows = summarize(&spec, &outcomes, BorderlinePolicy::Separate);
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.trials == 12));
        assert_eq!(rows[0].min_margin.finite().map(|m| m >= 0), Some(true));
    }

    #[test]
    fn trials_are_schedule_independent() {
        let ctx = PrimeContext::new(3).unwrap();
        let spec = builtin_family(&FamilyRequest::somos_unit(5, 15), &ctx).unwrap();
        let g = solve_exact(&spec).unwrap();
        let c = cfg(3, 10, 77, Mode::Float);
        let par = run_trials(&spec, Some(&g), &c, 16, true).unwrap();
        let seq: Vec<TrialOutcome> = (0..16).map(|t| run_trial(&spec, Some(&g), &c, t, true).unwrap()).collect();
        assert_eq!(par, seq);
    }
}
