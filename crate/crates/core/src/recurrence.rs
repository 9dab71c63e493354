//! Recurrences over finite posets and their exact solutions.
//!
//! Each node `s` carries `f_s = P_s / Q_s` with `P_s`, `Q_s` stored as
//! expanded sums of monomials in the node's predecessors. The partial order
//! is never declared: it is the transitive closure of "appears in `f_s`".

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use fixedbitset::FixedBitSet;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::field::{normalize_coefficients, valuation, ExactRational, PrimeContext};

/// A family tag plus an integer index tuple, written `x[1,2]` (or just `x`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub family: String,
    pub index: Vec<i64>,
}

impl NodeId {
    pub fn new(family: impl Into<String>, index: impl Into<Vec<i64>>) -> Self {
        NodeId { family: family.into(), index: index.into() }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.family)?;
        if !self.index.is_empty() {
            let parts: Vec<String> = self.index.iter().map(i64::to_string).collect();
            write!(f, "[{}]", parts.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        match s.split_once('[') {
            None if !s.is_empty() => Ok(NodeId::new(s, vec![])),
            None => Err("empty node id".into()),
            Some((name, rest)) => {
                let inner = rest.strip_suffix(']').ok_or_else(|| format!("bad node id {s:?}"))?;
                let index = inner
                    .split(',')
                    .map(|t| t.trim().parse::<i64>().map_err(|_| format!("bad node id {s:?}")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(NodeId::new(name, index))
            }
        }
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Exponent tuple over the owning node's predecessor list.
pub type Exponents = Vec<u32>;

/// Sparse polynomial: exponent tuple -> nonzero coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparsePoly {
    terms: BTreeMap<Exponents, ExactRational>,
}

impl SparsePoly {
    pub fn zero() -> Self {
        SparsePoly::default()
    }

    /// The constant `c` over `arity` variables.
    pub fn constant(c: ExactRational, arity: usize) -> Self {
        let mut poly = SparsePoly::zero();
        poly.add_term(vec![0; arity], c);
        poly
    }

    /// Adds `c * x^exponents`, merging with any existing term.
    pub fn add_term(&mut self, exponents: Exponents, c: ExactRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(exponents).or_insert_with(ExactRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&k| k == 0))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical (lexicographic exponent) order.
    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &ExactRational)> {
        self.terms.iter()
    }

    pub fn coefficients(&self) -> impl Iterator<Item = &ExactRational> {
        self.terms.values()
    }

    pub fn coefficient(&self, exponents: &[u32]) -> Option<&ExactRational> {
        self.terms.get(exponents)
    }

    /// Value of the constant term (zero polynomial -> 0).
    pub fn constant_value(&self) -> ExactRational {
        self.terms.values().next().cloned().unwrap_or_else(ExactRational::zero)
    }

    fn scale(&mut self, factor: &ExactRational) {
        for c in self.terms.values_mut() {
            *c *= factor;
        }
    }

    /// Exact evaluation at `values` (one per variable).
    pub fn eval(&self, values: &[&ExactRational]) -> ExactRational {
        self.terms
            .iter()
            .map(|(e, c)| c * monomial_value(e, values))
            .fold(ExactRational::zero(), |acc, t| acc + t)
    }
}

/// `x^I` at the given values.
pub fn monomial_value(exponents: &[u32], values: &[&ExactRational]) -> ExactRational {
    let mut acc = ExactRational::one();
    for (&k, v) in exponents.iter().zip(values) {
        if k > 0 {
            acc *= num_traits::pow((*v).clone(), k as usize);
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("node {0} is defined more than once")]
    DuplicateNode(NodeId),
    #[error("node {node} refers to undefined node {missing}")]
    UndefinedPredecessor { node: NodeId, missing: NodeId },
    #[error("node {0} has the zero polynomial as denominator")]
    ZeroDenominator(NodeId),
    #[error("dependency cycle through node {0}")]
    Cycle(NodeId),
    #[error("node {node}: exponent tuple has length {got}, expected {expected}")]
    BadExponents { node: NodeId, got: usize, expected: usize },
    #[error("node {node}: no value supplied for predecessor {missing}")]
    MissingValue { node: NodeId, missing: NodeId },
}

/// A monomial given by explicit node ids, used to assemble [`NodeDef`]s.
pub type NamedMonomial = Vec<(NodeId, u32)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeDef {
    pub id: NodeId,
    pub predecessors: Vec<NodeId>,
    pub numerator: SparsePoly,
    pub denominator: SparsePoly,
}

impl NodeDef {
    /// Validating constructor; exponent tuples must match `predecessors`.
    pub fn new(
        id: NodeId,
        predecessors: Vec<NodeId>,
        numerator: SparsePoly,
        denominator: SparsePoly,
    ) -> Result<Self, SpecError> {
        for poly in [&numerator, &denominator] {
            for (e, _) in poly.terms() {
                if e.len() != predecessors.len() {
                    return Err(SpecError::BadExponents {
                        node: id.clone(),
                        got: e.len(),
                        expected: predecessors.len(),
                    });
                }
            }
        }
        Ok(NodeDef { id, predecessors, numerator, denominator })
    }

    /// `f_s = c`.
    pub fn constant(id: NodeId, c: ExactRational) -> Self {
        NodeDef {
            id,
            predecessors: Vec::new(),
            numerator: SparsePoly::constant(c, 0),
            denominator: SparsePoly::constant(ExactRational::one(), 0),
        }
    }

    /// Builds a node from monomials named by node id. The predecessor list
    /// is the sorted set of ids that occur with a positive exponent.
    pub fn from_terms(
        id: NodeId,
        numerator: &[(NamedMonomial, ExactRational)],
        denominator: &[(NamedMonomial, ExactRational)],
    ) -> Self {
        let mut preds: Vec<NodeId> = numerator
            .iter()
            .chain(denominator)
            .filter(|(_, c)| !c.is_zero())
            .flat_map(|(m, _)| m.iter().filter(|(_, k)| *k > 0).map(|(n, _)| n.clone()))
            .collect();
        preds.sort();
        preds.dedup();
        let position: HashMap<&NodeId, usize> = preds.iter().enumerate().map(|(i, n)| (n, i)).collect();
        let build = |terms: &[(NamedMonomial, ExactRational)]| {
            let mut poly = SparsePoly::zero();
            for (m, c) in terms.iter().filter(|(_, c)| !c.is_zero()) {
                let mut e = vec![0u32; preds.len()];
                for (n, k) in m {
                    if *k > 0 {
                        e[position[n]] += k;
                    }
                }
                poly.add_term(e, c.clone());
            }
            poly
        };
        let numerator = build(numerator);
        let denominator = build(denominator);
        NodeDef { id, predecessors: preds, numerator, denominator }
    }

    pub fn is_initial(&self) -> bool {
        self.predecessors.is_empty()
    }

    /// `(P(values), Q(values))`, unreduced.
    pub fn evaluate(&self, pred_values: &[&ExactRational]) -> (ExactRational, ExactRational) {
        (self.numerator.eval(pred_values), self.denominator.eval(pred_values))
    }
}

/// Evaluates `P_s` and `Q_s` at a map of node values.
pub fn eval_fraction(
    node: &NodeDef,
    values: &HashMap<NodeId, ExactRational>,
) -> Result<(ExactRational, ExactRational), SpecError> {
    let args = node
        .predecessors
        .iter()
        .map(|t| {
            values
                .get(t)
                .ok_or_else(|| SpecError::MissingValue { node: node.id.clone(), missing: t.clone() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(node.evaluate(&args))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NormalizationEntry {
    pub node: NodeId,
    /// `P` and `Q` were both divided by `p^shift`.
    pub shift: i64,
}

/// A validated recurrence: nodes in a fixed topological order plus the
/// derived partial order.
#[derive(Debug, Clone)]
pub struct RecurrenceSpec {
    nodes: Vec<NodeDef>,
    position: HashMap<NodeId, usize>,
    pred_positions: Vec<Vec<usize>>,
    /// `ancestors[s]` holds every `t < s` (strict).
    ancestors: Vec<FixedBitSet>,
    layers: Vec<usize>,
    normalization_log: Vec<NormalizationEntry>,
    prime: PrimeContext,
}

/// Validates, orders and normalizes a list of node definitions.
///
/// The order is by layer (longest path from an initial node), then by id.
/// Non-initial nodes have `P`, `Q` jointly rescaled so that their minimum
/// coefficient valuation is 0; initial nodes are stored as `c / 1`.
pub fn build_spec(defs: Vec<NodeDef>, ctx: &PrimeContext) -> Result<RecurrenceSpec, SpecError> {
    let mut by_id: HashMap<NodeId, usize> = HashMap::with_capacity(defs.len());
    for (i, d) in defs.iter().enumerate() {
        if by_id.insert(d.id.clone(), i).is_some() {
            return Err(SpecError::DuplicateNode(d.id.clone()));
        }
    }
    for d in &defs {
        if d.denominator.is_zero() {
            return Err(SpecError::ZeroDenominator(d.id.clone()));
        }
        for t in &d.predecessors {
            if !by_id.contains_key(t) {
                return Err(SpecError::UndefinedPredecessor { node: d.id.clone(), missing: t.clone() });
            }
        }
    }

    let layers = compute_layers(&defs, &by_id)?;
    let mut order: Vec<usize> = (0..defs.len()).collect();
    order.sort_by(|&a, &b| layers[a].cmp(&layers[b]).then_with(|| defs[a].id.cmp(&defs[b].id)));

    let mut slots: Vec<Option<NodeDef>> = defs.into_iter().map(Some).collect();
    let mut nodes = Vec::with_capacity(slots.len());
    let mut node_layers = Vec::with_capacity(slots.len());
    let mut normalization_log = Vec::new();
    for &i in &order {
        let mut def = slots[i].take().expect("each index visited once");
        if def.is_initial() {
            let c = def.numerator.constant_value() / def.denominator.constant_value();
            def = NodeDef::constant(def.id, c);
        } else {
            let coeffs: Vec<ExactRational> =
                def.numerator.coefficients().chain(def.denominator.coefficients()).cloned().collect();
            let (_, shift) = normalize_coefficients(&coeffs, ctx).expect("denominator is nonzero");
            if shift != 0 {
                let factor = ctx.pow_rational(-shift);
                def.numerator.scale(&factor);
                def.denominator.scale(&factor);
                normalization_log.push(NormalizationEntry { node: def.id.clone(), shift });
            }
        }
        node_layers.push(layers[i]);
        nodes.push(def);
    }

    let position: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
    let pred_positions: Vec<Vec<usize>> =
        nodes.iter().map(|n| n.predecessors.iter().map(|t| position[t]).collect()).collect();
    let mut ancestors: Vec<FixedBitSet> = Vec::with_capacity(nodes.len());
    for preds in &pred_positions {
        let mut set = FixedBitSet::with_capacity(nodes.len());
        for &t in preds {
            set.union_with(&ancestors[t]);
            set.insert(t);
        }
        ancestors.push(set);
    }

    Ok(RecurrenceSpec {
        nodes,
        position,
        pred_positions,
        ancestors,
        layers: node_layers,
        normalization_log,
        prime: *ctx,
    })
}

fn compute_layers(defs: &[NodeDef], by_id: &HashMap<NodeId, usize>) -> Result<Vec<usize>, SpecError> {
    const UNSEEN: usize = usize::MAX;
    const ACTIVE: usize = usize::MAX - 1;
    let mut layer = vec![UNSEEN; defs.len()];
    for root in 0..defs.len() {
        if layer[root] != UNSEEN {
            continue;
        }
        // iterative DFS: (node, next predecessor to visit)
        let mut stack = vec![(root, 0usize)];
        layer[root] = ACTIVE;
        while let Some(&mut (s, ref mut next)) = stack.last_mut() {
            let preds = &defs[s].predecessors;
            if *next < preds.len() {
                let t = by_id[&preds[*next]];
                *next += 1;
                match layer[t] {
                    ACTIVE => return Err(SpecError::Cycle(defs[t].id.clone())),
                    UNSEEN => {
                        layer[t] = ACTIVE;
                        stack.push((t, 0));
                    }
                    _ => {}
                }
            } else {
                layer[s] = preds.iter().map(|t| layer[by_id[t]] + 1).max().unwrap_or(0);
                stack.pop();
            }
        }
    }
    Ok(layer)
}

impl RecurrenceSpec {
    pub fn nodes(&self) -> &[NodeDef] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn prime(&self) -> &PrimeContext {
        &self.prime
    }

    pub fn position(&self, id: &NodeId) -> Option<usize> {
        self.position.get(id).copied()
    }

    pub fn node(&self, id: &NodeId) -> Option<&NodeDef> {
        self.position(id).map(|i| &self.nodes[i])
    }

    pub fn predecessor_positions(&self, s: usize) -> &[usize] {
        &self.pred_positions[s]
    }

    pub fn layer(&self, s: usize) -> usize {
        self.layers[s]
    }

    pub fn normalization_log(&self) -> &[NormalizationEntry] {
        &self.normalization_log
    }

    /// Strict order `t < s` on topological positions.
    pub fn precedes(&self, t: usize, s: usize) -> bool {
        self.ancestors[s].contains(t)
    }

    /// Every `t < s`, ascending.
    pub fn ancestors(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.ancestors[s].ones()
    }

    pub fn less_than(&self, t: &NodeId, s: &NodeId) -> bool {
        match (self.position(t), self.position(s)) {
            (Some(t), Some(s)) => self.precedes(t, s),
            _ => false,
        }
    }

    pub fn initial_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&s| self.nodes[s].is_initial())
    }

    /// Values for the predecessors of `s` out of a full value vector.
    pub fn gather<'a, T>(&self, s: usize, values: &'a [T]) -> Vec<&'a T> {
        self.pred_positions[s].iter().map(|&t| &values[t]).collect()
    }

    /// The node ids in topological order.
    pub fn ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter().map(|n| &n.id)
    }

    /// Checks each node's min coefficient valuation is 0 (non-initial nodes).
    pub fn is_normalized(&self) -> bool {
        self.nodes.iter().filter(|n| !n.is_initial()).all(|n| {
            n.numerator
                .coefficients()
                .chain(n.denominator.coefficients())
                .filter_map(|c| valuation(c, &self.prime).finite())
                .min()
                == Some(0)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("denominator of node {0} vanishes at the exact solution")]
    DivisionByZero(NodeId),
}

/// The exact solution `g`, aligned with the spec's topological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution {
    pub values: Vec<ExactRational>,
}

impl Solution {
    pub fn get<'a>(&'a self, spec: &RecurrenceSpec, id: &NodeId) -> Option<&'a ExactRational> {
        spec.position(id).map(|i| &self.values[i])
    }

    pub fn as_map(&self, spec: &RecurrenceSpec) -> HashMap<NodeId, ExactRational> {
        spec.ids().cloned().zip(self.values.iter().cloned()).collect()
    }
}

/// Computes the unique `g` with `g(s) = P_s(g) / Q_s(g)`.
pub fn solve_exact(spec: &RecurrenceSpec) -> Result<Solution, SolveError> {
    let mut values: Vec<ExactRational> = Vec::with_capacity(spec.len());
    for (s, node) in spec.nodes().iter().enumerate() {
        let args = spec.gather(s, &values);
        let (num, den) = node.evaluate(&args);
        if den.is_zero() {
            return Err(SolveError::DivisionByZero(node.id.clone()));
        }
        values.push(num / den);
    }
    Ok(Solution { values })
}

/// Reachability computed from scratch, for cross-checking the stored order.
pub fn closure_by_search(spec: &RecurrenceSpec) -> Vec<HashSet<usize>> {
    (0..spec.len())
        .map(|s| {
            let mut seen = HashSet::new();
            let mut stack: Vec<usize> = spec.predecessor_positions(s).to_vec();
            while let Some(t) = stack.pop() {
                if seen.insert(t) {
                    stack.extend_from_slice(spec.predecessor_positions(t));
                }
            }
            seen
        })
        .collect()
}
