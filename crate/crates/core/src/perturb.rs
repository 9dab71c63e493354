//! N-perturbations of a recurrence: exact gremlins, p-adic floating point
//! and fixed point, plus the projected precision loss `r_s`.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{format_rational, valuation, ExactRational, PrimeContext, Valuation};
use crate::fixed::{fixed_arith, FixedError, FixedPoint};
use crate::pfloat::{float_arith, round_exact, ArithOp, DigitSource, FloatEvent, PFloat, PFloatKind};
use crate::recurrence::{monomial_value, Exponents, NodeId, RecurrenceSpec, SparsePoly};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
    Fixed,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Float => "float",
            Mode::Fixed => "fixed",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Mode::Exact),
            "float" => Ok(Mode::Float),
            "fixed" => Ok(Mode::Fixed),
            other => Err(format!("unknown mode {other:?} (expected exact, float or fixed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerturbError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("mode {0} cannot run this spec: {1}")]
    ModeUnsupported(Mode, String),
    #[error("bad gremlin assignment: {0}")]
    BadAssignment(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GremlinConfig {
    pub ctx: PrimeContext,
    /// `N`.
    pub precision: u32,
    /// Digits in the unit part of a random star.
    pub depth: u32,
    pub seed: u64,
    pub mode: Mode,
}

impl GremlinConfig {
    pub fn new(ctx: PrimeContext, precision: u32, depth: u32, seed: u64, mode: Mode) -> Result<Self, PerturbError> {
        if precision == 0 {
            return Err(PerturbError::BadConfig("N must be at least 1".into()));
        }
        if depth == 0 {
            return Err(PerturbError::BadConfig("depth must be at least 1".into()));
        }
        Ok(GremlinConfig { ctx, precision, depth, seed, mode })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GremlinConfig { seed, ..self.clone() }
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        GremlinConfig { mode, ..self.clone() }
    }
}

/// SplitMix64 finalizer folded over `parts`; used for every derived seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &x| mix(acc ^ mix(x)))
}

/// An element of valuation at least `N`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StarValue(ExactRational);

impl StarValue {
    pub fn zero() -> Self {
        StarValue(ExactRational::zero())
    }

    pub fn new(value: ExactRational, ctx: &PrimeContext, precision: u32) -> Result<Self, PerturbError> {
        if valuation(&value, ctx) < precision as i64 {
            return Err(PerturbError::BadAssignment(format!(
                "star {} has valuation {} < N = {precision}",
                format_rational(&value),
                valuation(&value, ctx)
            )));
        }
        Ok(StarValue(value))
    }

    /// `p^N * u` with `u` uniform in `[0, p^depth)`.
    pub fn draw(ctx: &PrimeContext, precision: u32, depth: u32, rng: &mut impl Rng) -> Self {
        let p = BigInt::from(ctx.p());
        let mut u = BigInt::zero();
        for _ in 0..depth {
            u = u * &p + BigInt::from(rng.gen_range(0..ctx.p()));
        }
        StarValue(ExactRational::from_integer(u) * ctx.pow_rational(precision as i64))
    }

    pub fn value(&self) -> &ExactRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    P,
    Q,
}

/// One star on one monomial coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarEntry {
    pub node: NodeId,
    pub poly: Side,
    pub exponents: Exponents,
    #[serde(with = "star_string")]
    pub star: ExactRational,
}

mod star_string {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::field::{format_rational, parse_rational, ExactRational};

    pub fn serialize<S: Serializer>(v: &ExactRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ExactRational, D::Error> {
        parse_rational(&String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Every nonzero star of an exact-mode run; omitted coefficients get 0.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GremlinAssignment {
    pub entries: Vec<StarEntry>,
}

impl GremlinAssignment {
    pub fn from_json(text: &str) -> Result<Self, PerturbError> {
        serde_json::from_str(text).map_err(|e| PerturbError::BadAssignment(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("assignment serializes")
    }

    /// Per-node, per-term stars aligned with `spec`, after validation.
    fn layout(&self, spec: &RecurrenceSpec, precision: u32) -> Result<Vec<NodeStars>, PerturbError> {
        let mut out: Vec<NodeStars> = spec
            .nodes()
            .iter()
            .map(|n| NodeStars {
                p: vec![StarValue::zero(); n.numerator.len()],
                q: vec![StarValue::zero(); n.denominator.len()],
            })
            .collect();
        for e in &self.entries {
            let s = spec
                .position(&e.node)
                .ok_or_else(|| PerturbError::BadAssignment(format!("unknown node {}", e.node)))?;
            let node = &spec.nodes()[s];
            let (poly, slots) = match e.poly {
                Side::P => (&node.numerator, &mut out[s].p),
                Side::Q => (&node.denominator, &mut out[s].q),
            };
            let i = poly.terms().position(|(ex, _)| *ex == e.exponents).ok_or_else(|| {
                PerturbError::BadAssignment(format!("{} has no {:?} monomial {:?}", e.node, e.poly, e.exponents))
            })?;
            slots[i] = StarValue::new(e.star.clone(), spec.prime(), precision)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
struct NodeStars {
    p: Vec<StarValue>,
    q: Vec<StarValue>,
}

fn draw_stars(spec: &RecurrenceSpec, cfg: &GremlinConfig) -> Vec<NodeStars> {
    spec.nodes()
        .iter()
        .enumerate()
        .map(|(s, node)| {
            let mut draw = |m: usize| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[s as u64, m as u64]));
                StarValue::draw(&cfg.ctx, cfg.precision, cfg.depth, &mut rng)
            };
            let np = node.numerator.len();
            NodeStars {
                p: (0..np).map(&mut draw).collect(),
                q: (np..np + node.denominator.len()).map(&mut draw).collect(),
            }
        })
        .collect()
}

fn record_stars(spec: &RecurrenceSpec, stars: &[NodeStars]) -> GremlinAssignment {
    let mut entries = Vec::new();
    for (node, st) in spec.nodes().iter().zip(stars) {
        for (side, poly, slots) in [(Side::P, &node.numerator, &st.p), (Side::Q, &node.denominator, &st.q)] {
            for ((ex, _), star) in poly.terms().zip(slots) {
                if !star.is_zero() {
                    entries.push(StarEntry {
                        node: node.id.clone(),
                        poly: side,
                        exponents: ex.clone(),
                        star: star.value().clone(),
                    });
                }
            }
        }
    }
    GremlinAssignment { entries }
}

/// Values of one run, aligned with the spec's order. Shorter than the spec
/// when the run aborted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeValues {
    Exact(Vec<ExactRational>),
    Float(Vec<PFloat>),
    Fixed(Vec<FixedPoint>),
}

impl NodeValues {
    pub fn len(&self) -> usize {
        match self {
            NodeValues::Exact(v) => v.len(),
            NodeValues::Float(v) => v.len(),
            NodeValues::Fixed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// An exact value standing for node `s` and the valuation beyond which
    /// differences from it are meaningless. `None` for an unknown float.
    pub fn representative(&self, s: usize) -> (Option<ExactRational>, Valuation) {
        match self {
            NodeValues::Exact(v) => (Some(v[s].clone()), Valuation::Infinity),
            NodeValues::Float(v) => (v[s].representative(), v[s].resolution()),
            NodeValues::Fixed(v) => (Some(v[s].to_rational()), Valuation::Finite(v[s].digits() as i64)),
        }
    }

    /// Valuation of the value itself, as far as the run can tell.
    pub fn apparent_valuation(&self, s: usize, ctx: &PrimeContext) -> Valuation {
        match self {
            NodeValues::Exact(v) => valuation(&v[s], ctx),
            NodeValues::Float(v) => match v[s].kind() {
                PFloatKind::Number { exponent, .. } => Valuation::Finite(*exponent),
                PFloatKind::ExactZero => Valuation::Infinity,
                PFloatKind::Unknown { min_valuation } => Valuation::Finite(*min_valuation),
            },
            NodeValues::Fixed(v) => v[s].valuation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunEvent {
    Cancellation { node: NodeId, digits: u32 },
    TotalCancellation { node: NodeId, min_valuation: i64 },
    UnknownFill { node: NodeId, digits: u32 },
    /// Fixed-point division by a non-unit; `digits` high digits were invented.
    ShiftedDivision { node: NodeId, digits: u32 },
}

impl RunEvent {
    fn from_float(node: &NodeId, ev: FloatEvent) -> RunEvent {
        let node = node.clone();
        match ev {
            FloatEvent::Cancellation { digits_lost, .. } => RunEvent::Cancellation { node, digits: digits_lost },
            FloatEvent::TotalCancellation { min_valuation } => RunEvent::TotalCancellation { node, min_valuation },
            FloatEvent::UnknownFill { digits_filled, .. } => RunEvent::UnknownFill { node, digits: digits_filled },
        }
    }
}

/// Why a run stopped early.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Abort {
    pub node: NodeId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationResult {
    pub mode: Mode,
    pub values: NodeValues,
    /// `v(Q_s(g'))` for each computed node.
    pub den_valuations: Vec<Valuation>,
    /// `r_s` for each computed node.
    pub loss: Vec<i64>,
    pub events: Vec<RunEvent>,
    pub abort: Option<Abort>,
    /// Exact mode only.
    pub stars: Option<GremlinAssignment>,
}

impl PerturbationResult {
    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }
}

/// `r_s = max_{t <= s} v(Q_t(g'))` over the computed prefix.
pub fn projected_loss(spec: &RecurrenceSpec, den_valuations: &[Valuation]) -> Vec<i64> {
    let mut r: Vec<i64> = Vec::with_capacity(den_valuations.len());
    for (s, v) in den_valuations.iter().enumerate() {
        let own = v.finite().expect("computed denominators are nonzero");
        let inherited = spec.predecessor_positions(s).iter().map(|&t| r[t]).max();
        // initial nodes have Q = 1 in every mode
        r.push(inherited.map_or(own, |m| m.max(own)));
    }
    r
}

fn finish(
    spec: &RecurrenceSpec,
    mode: Mode,
    values: NodeValues,
    den_valuations: Vec<Valuation>,
    events: Vec<RunEvent>,
    abort: Option<Abort>,
    stars: Option<GremlinAssignment>,
) -> PerturbationResult {
    let loss = projected_loss(spec, &den_valuations);
    PerturbationResult { mode, values, den_valuations, loss, events, abort, stars }
}

fn perturbed_eval(poly: &SparsePoly, stars: &[StarValue], args: &[&ExactRational]) -> ExactRational {
    poly.terms().zip(stars).fold(ExactRational::zero(), |acc, ((ex, c), star)| {
        acc + (ExactRational::one() + star.value()) * c * monomial_value(ex, args)
    })
}

fn run_stars(spec: &RecurrenceSpec, stars: &[NodeStars], assignment: GremlinAssignment) -> PerturbationResult {
    let mut values: Vec<ExactRational> = Vec::with_capacity(spec.len());
    let mut dens = Vec::with_capacity(spec.len());
    let mut abort = None;
    for (s, node) in spec.nodes().iter().enumerate() {
        let args = spec.gather(s, &values);
        let num = perturbed_eval(&node.numerator, &stars[s].p, &args);
        let den = perturbed_eval(&node.denominator, &stars[s].q, &args);
        if den.is_zero() {
            abort = Some(Abort { node: node.id.clone(), reason: "perturbed denominator is zero".into() });
            break;
        }
        dens.push(valuation(&den, spec.prime()));
        values.push(num / den);
    }
    finish(spec, Mode::Exact, NodeValues::Exact(values), dens, Vec::new(), abort, Some(assignment))
}

/// Exact N-perturbation with one random star per monomial coefficient.
pub fn perturb_exact(spec: &RecurrenceSpec, cfg: &GremlinConfig) -> PerturbationResult {
    let stars = draw_stars(spec, cfg);
    let assignment = record_stars(spec, &stars);
    run_stars(spec, &stars, assignment)
}

/// Exact N-perturbation with the given stars (all others 0).
pub fn perturb_with_assignment(
    spec: &RecurrenceSpec,
    precision: u32,
    assignment: &GremlinAssignment,
) -> Result<PerturbationResult, PerturbError> {
    let stars = assignment.layout(spec, precision)?;
    Ok(run_stars(spec, &stars, assignment.clone()))
}

/// Evaluation in N-digit p-adic floating point, with undetermined digits
/// drawn from a source seeded by `cfg.seed`.
pub fn run_float(spec: &RecurrenceSpec, cfg: &GremlinConfig) -> PerturbationResult {
    run_float_with(spec, cfg, &mut DigitSource::new(cfg.ctx.p(), cfg.seed))
}

pub fn run_float_with(spec: &RecurrenceSpec, cfg: &GremlinConfig, src: &mut DigitSource) -> PerturbationResult {
    let (p, n) = (cfg.ctx.p(), cfg.precision);
    let mut values: Vec<PFloat> = Vec::with_capacity(spec.len());
    let mut dens = Vec::with_capacity(spec.len());
    let mut events = Vec::new();
    let mut abort = None;
    for (s, node) in spec.nodes().iter().enumerate() {
        let args = spec.gather(s, &values);
        let mut eval = |poly: &SparsePoly, events: &mut Vec<RunEvent>| -> PFloat {
            let mut acc = PFloat::zero(p, n);
            for (ex, c) in poly.terms() {
                let mut term = round_exact(c, &cfg.ctx, n);
                for (arg, &k) in args.iter().zip(ex) {
                    for _ in 0..k {
                        term = float_arith(ArithOp::Mul, &term, arg, src).expect("same context").0;
                    }
                }
                let (sum, evs) = float_arith(ArithOp::Add, &acc, &term, src).expect("same context");
                events.extend(evs.into_iter().map(|e| RunEvent::from_float(&node.id, e)));
                acc = sum;
            }
            acc
        };
        let num = eval(&node.numerator, &mut events);
        let den = eval(&node.denominator, &mut events);
        let v = match den.kind() {
            PFloatKind::Number { exponent, .. } => Valuation::Finite(*exponent),
            PFloatKind::ExactZero => {
                abort = Some(Abort { node: node.id.clone(), reason: "denominator is exactly zero".into() });
                break;
            }
            PFloatKind::Unknown { .. } => {
                abort = Some(Abort { node: node.id.clone(), reason: "denominator has no known digits".into() });
                break;
            }
        };
        let q = float_arith(ArithOp::Div, &num, &den, src).expect("denominator is a number").0;
        dens.push(v);
        values.push(q);
    }
    finish(spec, Mode::Float, NodeValues::Float(values), dens, events, abort, None)
}

/// Evaluation in residues modulo `p^N`. A non-unit denominator of
/// valuation `k` is divided out when the numerator allows it, with the top
/// `k` digits of the quotient drawn at random.
pub fn run_fixed(spec: &RecurrenceSpec, cfg: &GremlinConfig) -> Result<PerturbationResult, PerturbError> {
    let (p, n) = (cfg.ctx.p(), cfg.precision);
    let unsupported = |node: &NodeId, what: &str| {
        PerturbError::ModeUnsupported(Mode::Fixed, format!("{what} at {node} has negative valuation"))
    };
    let mut src = DigitSource::new(p, cfg.seed);
    let mut values: Vec<FixedPoint> = Vec::with_capacity(spec.len());
    let mut dens = Vec::with_capacity(spec.len());
    let mut events = Vec::new();
    let mut abort = None;
    for (s, node) in spec.nodes().iter().enumerate() {
        let args = spec.gather(s, &values);
        let eval = |poly: &SparsePoly| -> Result<FixedPoint, PerturbError> {
            let mut acc = FixedPoint::new(p, n, &BigInt::zero());
            for (ex, c) in poly.terms() {
                let mut term =
                    FixedPoint::from_rational(c, &cfg.ctx, n).map_err(|_| unsupported(&node.id, "a coefficient"))?;
                for (arg, &k) in args.iter().zip(ex) {
                    for _ in 0..k {
                        term = fixed_arith(ArithOp::Mul, &term, arg).expect("same context");
                    }
                }
                acc = fixed_arith(ArithOp::Add, &acc, &term).expect("same context");
            }
            Ok(acc)
        };
        let num = eval(&node.numerator)?;
        let den = eval(&node.denominator)?;
        match num.div_shifted(&den, &mut src) {
            Ok((q, k)) => {
                if k > 0 {
                    events.push(RunEvent::ShiftedDivision { node: node.id.clone(), digits: k });
                }
                dens.push(den.valuation());
                values.push(q);
            }
            Err(FixedError::ZeroDivisor) => {
                abort = Some(Abort { node: node.id.clone(), reason: "denominator is 0 mod p^N".into() });
                break;
            }
            Err(FixedError::NegativeValuation(_)) => {
                abort = Some(Abort {
                    node: node.id.clone(),
                    reason: format!("numerator not divisible by the denominator's p-part ({})", den.valuation()),
                });
                break;
            }
            Err(e) => unreachable!("{e}"),
        }
    }
    Ok(finish(spec, Mode::Fixed, NodeValues::Fixed(values), dens, events, abort, None))
}

/// Runs `cfg.mode`.
pub fn perturb(spec: &RecurrenceSpec, cfg: &GremlinConfig) -> Result<PerturbationResult, PerturbError> {
    match cfg.mode {
        Mode::Exact => Ok(perturb_exact(spec, cfg)),
        Mode::Float => Ok(run_float(spec, cfg)),
        Mode::Fixed => run_fixed(spec, cfg),
    }
}
