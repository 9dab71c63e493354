//! Property tests over random inputs, each checked against an independent
//! computation.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;
use proptest::test_runner::Config;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use padic_stability::dsl;
use padic_stability::families::{builtin_family, FamilyRequest};
use padic_stability::field::{normalize_coefficients, ratio, valuation, ExactRational, PrimeContext, Valuation};
use padic_stability::perturb::{perturb_exact, run_fixed, run_float, GremlinConfig, Mode, StarValue};
use padic_stability::pfloat::{exact_op, float_arith, round_exact, ArithOp, DigitSource};
use padic_stability::recurrence::{solve_exact, NodeId, RecurrenceSpec};
use padic_stability::stability::{check_stability, Class};

const PRIMES: [u64; 5] = [2, 3, 5, 7, 11];

fn ctx(p: u64) -> PrimeContext {
    PrimeContext::new(p).unwrap()
}

fn oracle_valuation(x: &ExactRational, p: u64) -> Valuation {
    if x.is_zero() {
        return Valuation::Infinity;
    }
    let p = BigInt::from(p);
    let count = |n: &BigInt| {
        let mut n = n.abs();
        let mut k = 0;
        while (&n % &p).is_zero() {
            n /= &p;
            k += 1;
        }
        k
    };
    Valuation::Finite(count(x.numer()) - count(x.denom()))
}

fn rational() -> impl Strategy<Value = ExactRational> {
    (-5000i64..5000, 1i64..5000).prop_map(|(n, d)| ratio(n, d))
}

fn nonzero_rational() -> impl Strategy<Value = ExactRational> {
    rational().prop_filter("nonzero", |x| !x.is_zero())
}

fn prime() -> impl Strategy<Value = u64> {
    prop::sample::select(PRIMES.to_vec())
}

/// Determinant by cofactor expansion along the first row.
fn cofactor_det(m: &[Vec<BigInt>]) -> BigInt {
    match m.len() {
        0 => BigInt::one(),
        1 => m[0][0].clone(),
        n => (0..n)
            .map(|j| {
                let minor: Vec<Vec<BigInt>> =
                    m[1..].iter().map(|row| row.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, x)| x.clone()).collect()).collect();
                let term = &m[0][j] * cofactor_det(&minor);
                if j % 2 == 0 {
                    term
                } else {
                    -term
                }
            })
            .sum(),
    }
}

proptest! {
    #![proptest_config(Config::with_cases(10_000))]

    #[test]
    fn valuation_laws(p in prime(), x in nonzero_rational(), y in nonzero_rational()) {
        let c = ctx(p);
        let (vx, vy) = (valuation(&x, &c), valuation(&y, &c));
        prop_assert_eq!(vx, oracle_valuation(&x, p));
        let (a, b) = (vx.finite().unwrap(), vy.finite().unwrap());
        prop_assert_eq!(valuation(&(&x * &y), &c), Valuation::Finite(a + b));
        prop_assert_eq!(valuation(&x.recip(), &c), Valuation::Finite(-a));
        let vs = valuation(&(&x + &y), &c);
        prop_assert!(vs >= Valuation::Finite(a.min(b)));
        if a != b {
            prop_assert_eq!(vs, Valuation::Finite(a.min(b)));
        }
    }
}

proptest! {
    #![proptest_config(Config::with_cases(1_000))]

    #[test]
    fn normalization_is_idempotent(p in prime(), coeffs in prop::collection::vec(rational(), 1..6)) {
        prop_assume!(coeffs.iter().any(|c| !c.is_zero()));
        let c = ctx(p);
        let (once, shift) = normalize_coefficients(&coeffs, &c).unwrap();
        let min = once.iter().filter_map(|x| valuation(x, &c).finite()).min();
        prop_assert_eq!(min, Some(0));
        for (orig, scaled) in coeffs.iter().zip(&once) {
            prop_assert_eq!(scaled * c.pow_rational(shift), orig.clone());
        }
        let (twice, shift2) = normalize_coefficients(&once, &c).unwrap();
        prop_assert_eq!(shift2, 0);
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn rounding_represents_its_input(p in prime(), n in 1u32..16, x in nonzero_rational()) {
        let f = round_exact(&x, &ctx(p), n);
        prop_assert!(f.represents(&x));
        prop_assert_eq!(f.exponent(), valuation(&x, &ctx(p)).finite());
        prop_assert_eq!(f.resolution(), valuation(&x, &ctx(p)).minus(-(n as i64)));
    }

    #[test]
    fn float_ops_are_sound(
        p in prime(),
        n in 1u32..12,
        op in prop::sample::select(vec![ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div]),
        x in nonzero_rational(),
        y in nonzero_rational(),
        seed in any::<u64>(),
    ) {
        let c = ctx(p);
        let (fx, fy) = (round_exact(&x, &c, n), round_exact(&y, &c, n));
        let (out, events) = float_arith(op, &fx, &fy, &mut DigitSource::new(p, seed)).unwrap();
        // with invented digits, the witness is the pair of inputs the result is exact for
        let (ex, ey) = match events.iter().find_map(|e| e.witness()) {
            Some(w) => (w.lhs.clone(), w.rhs.clone()),
            None => (x, y),
        };
        prop_assert!(fx.represents(&ex) && fy.represents(&ey));
        prop_assert!(out.represents(&exact_op(op, &ex, &ey)));
    }

    #[test]
    fn stars_form_a_group_near_one(p in prime(), n in 1u32..12, depth in 1u32..10, seed in any::<u64>()) {
        let c = ctx(p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = StarValue::draw(&c, n, depth, &mut rng);
        let b = StarValue::draw(&c, n, depth, &mut rng);
        let bound = Valuation::Finite(n as i64);
        prop_assert!(valuation(a.value(), &c) >= bound);
        let one = ExactRational::one();
        let product = (&one + a.value()) * (&one + b.value()) - &one;
        let inverse = (&one + a.value()).recip() - &one;
        prop_assert!(valuation(&product, &c) >= bound);
        prop_assert!(valuation(&inverse, &c) >= bound);
        prop_assert!(valuation(&(a.value() + b.value()), &c) >= bound);
        prop_assert!(StarValue::new(product, &c, n).is_ok());
    }
}

/// Random `.rec` programs: a window of constants, then a rational rule in
/// the previous `width` terms with integer and parameter coefficients.
/// Terms have degree at most 2 so exact heights stay small.
fn program_text() -> impl Strategy<Value = String> {
    let coeff = prop_oneof![(-9i64..=9).prop_map(|k| k.to_string()), Just("a".to_string()), Just("b".to_string())];
    let term = move |width: usize, min_vars: usize| {
        (coeff.clone(), prop::collection::vec((1..=width, 1u32..=2), min_vars..2))
            .prop_map(|(c, vars)| {
                let mut t = c;
                for (lag, e) in vars {
                    write!(t, "*y[n-{lag}]").unwrap();
                    if e > 1 {
                        write!(t, "^{e}").unwrap();
                    }
                }
                t
            })
    };
    (2usize..=3, prime(), nonzero_rational(), nonzero_rational(), 4i64..9)
        .prop_flat_map(move |(width, p, a, b, last)| {
            (
                Just((width, p, a, b, last)),
                prop::collection::vec(-9i64..=9, width),
                prop::collection::vec(term(width, 0), 1..4),
                prop::collection::vec(term(width, 1), 0..2),
                1..=width,
            )
        })
        .prop_map(|((width, p, a, b, last), init, num, den, den_lag)| {
            let mut s = String::new();
            writeln!(s, "prime {p};").unwrap();
            writeln!(s, "param a = {}/{};\nparam b = {}/{};", a.numer(), a.denom(), b.numer(), b.denom()).unwrap();
            for (i, v) in init.iter().enumerate() {
                writeln!(s, "y[{i}] = {v};").unwrap();
            }
            // every other denominator term has a variable, so the constant keeps Q nonzero
            let mut den = den;
            den.push(format!("y[n-{den_lag}]"));
            writeln!(s, "y[n] = ({})/({} + 1) for n in {width}..{last};", num.join(" + "), den.join(" - ")).unwrap();
            s
        })
}

fn load(text: &str) -> RecurrenceSpec {
    let program = dsl::parse(text).unwrap();
    dsl::elaborate(&program, &ctx(program.prime.unwrap())).unwrap()
}

proptest! {
    #![proptest_config(Config::with_cases(50))]

    #[test]
    fn dsl_print_parse_round_trip(text in program_text()) {
        let first = dsl::parse(&text).unwrap();
        let printed = first.to_string();
        let second = dsl::parse(&printed).unwrap();
        prop_assert_eq!(&first, &second);
        let c = ctx(first.prime.unwrap());
        let (x, y) = (dsl::elaborate(&first, &c).unwrap(), dsl::elaborate(&second, &c).unwrap());
        prop_assert_eq!(x.nodes(), y.nodes());
    }
}

proptest! {
    #![proptest_config(Config::with_cases(200))]

    #[test]
    fn loss_is_monotone_and_vanishes_at_initial_nodes(text in program_text(), n in 1u32..10, seed in any::<u64>()) {
        let spec = load(&text);
        let cfg = GremlinConfig::new(*spec.prime(), n, 6, seed, Mode::Exact).unwrap();
        let res = perturb_exact(&spec, &cfg);
        let done = res.loss.len();
        for s in 0..done {
            if spec.nodes()[s].is_initial() {
                prop_assert_eq!(res.loss[s], 0);
            }
            if let Some(v) = res.den_valuations[s].finite() {
                prop_assert!(res.loss[s] >= v);
            }
            for t in spec.ancestors(s) {
                prop_assert!(res.loss[t] <= res.loss[s], "r({}) > r({})", t, s);
            }
        }
    }

    #[test]
    fn trials_are_deterministic(text in program_text(), n in 2u32..10, seed in any::<u64>()) {
        let spec = load(&text);
        let cfg = GremlinConfig::new(*spec.prime(), n, 6, seed, Mode::Exact).unwrap();
        let a = perturb_exact(&spec, &cfg);
        let b = perturb_exact(&spec, &cfg);
        prop_assert_eq!(&a.values, &b.values);
        prop_assert_eq!(&a.stars, &b.stars);
        let f = cfg.with_mode(Mode::Float);
        prop_assert_eq!(run_float(&spec, &f).values, run_float(&spec, &f).values);
    }

    #[test]
    fn division_free_recurrences_are_stable(
        p in prime(),
        n in 1u32..12,
        x0 in -20i64..=20, x1 in -20i64..=20, a in -20i64..=20, b in -20i64..=20, c in -20i64..=20,
        seed in any::<u64>(),
    ) {
        let spec = builtin_family(&FamilyRequest::PolynomialDemo { x0, x1, a, b, c, last: 7 }, &ctx(p)).unwrap();
        let g = solve_exact(&spec).unwrap();
        let cfg = GremlinConfig::new(ctx(p), n, 8, seed, Mode::Exact).unwrap();
        for res in [perturb_exact(&spec, &cfg), run_fixed(&spec, &cfg.with_mode(Mode::Fixed)).unwrap()] {
            prop_assert!(res.loss.iter().all(|&r| r == 0));
            for v in check_stability(&spec, &g, &res, n) {
                prop_assert_eq!(v.class, Class::Ok, "{:?}", v);
            }
        }
    }

    #[test]
    fn integral_friezes_are_stable(
        p in prime(),
        n in 1u32..10,
        c in prop::collection::vec(-9i64..=9, 3..7),
        seed in any::<u64>(),
    ) {
        let spec = builtin_family(&FamilyRequest::frieze_ints(&c), &ctx(p)).unwrap();
        let Ok(g) = solve_exact(&spec) else { return Ok(()) };
        let cfg = GremlinConfig::new(ctx(p), n, 8, seed, Mode::Exact).unwrap();
        for res in [perturb_exact(&spec, &cfg), run_fixed(&spec, &cfg.with_mode(Mode::Fixed)).unwrap()] {
            for v in check_stability(&spec, &g, &res, n) {
                prop_assert!(v.class != Class::Violation, "{:?}", v);
            }
        }
    }

    #[test]
    fn frieze_entries_are_continuants(c in prop::collection::vec(-6i64..=6, 1..7)) {
        let n = c.len();
        let spec = builtin_family(&FamilyRequest::frieze_ints(&c), &ctx(2)).unwrap();
        // g(a,b) is the determinant of the tridiagonal matrix with diagonal
        // c_b..c_{b+a-1} and ones beside it
        let det = |a: usize, b: usize| {
            let m: Vec<Vec<BigInt>> = (0..a)
                .map(|i| (0..a).map(|j| BigInt::from(if i == j { c[b + i] } else if i.abs_diff(j) == 1 { 1 } else { 0 })).collect())
                .collect();
            cofactor_det(&m)
        };
        // denominators of levels 2..n are the entries two levels down
        let solvable = (2..=n).all(|a| (0..=n - a).all(|b| !det(a - 2, b + 1).is_zero()));
        match solve_exact(&spec) {
            Ok(g) => {
                prop_assert!(solvable);
                for a in 0..=n {
                    for b in 0..=n - a {
                        let id = NodeId::new("f", vec![a as i64, b as i64]);
                        prop_assert_eq!(g.get(&spec, &id), Some(&ExactRational::from_integer(det(a, b))));
                    }
                }
            }
            Err(_) => prop_assert!(!solvable),
        }
    }

    #[test]
    fn condensation_matches_cofactor_expansion(n in 1usize..=5, entries in prop::collection::vec(-9i64..=9, 25)) {
        let matrix: Vec<Vec<i64>> = (0..n).map(|i| entries[i * 5..i * 5 + n].to_vec()).collect();
        let spec = builtin_family(&FamilyRequest::Dodgson { matrix: matrix.clone() }, &ctx(3)).unwrap();
        let minor = |k: usize, i: usize, j: usize| {
            let m: Vec<Vec<BigInt>> = (i..i + k).map(|r| (j..j + k).map(|s| BigInt::from(matrix[r][s])).collect()).collect();
            cofactor_det(&m)
        };
        // level k divides by the contiguous minors of size k-2
        let solvable = (2..=n).all(|k| (0..=n - k).all(|i| (0..=n - k).all(|j| !minor(k - 2, i + 1, j + 1).is_zero())));
        match solve_exact(&spec) {
            Ok(g) => {
                prop_assert!(solvable);
                for k in 1..=n {
                    for i in 0..=n - k {
                        for j in 0..=n - k {
                            let id = NodeId::new("d", vec![k as i64, i as i64, j as i64]);
                            prop_assert_eq!(g.get(&spec, &id), Some(&ExactRational::from_integer(minor(k, i, j))));
                        }
                    }
                }
            }
            Err(_) => prop_assert!(!solvable),
        }
    }
}

#[test]
fn counterexample_file_matches_the_builtin() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/counterexample.rec")).unwrap();
    let from_file = load(&text);
    let builtin = builtin_family(&FamilyRequest::Counterexample, &ctx(2)).unwrap();
    assert_eq!(from_file.nodes(), builtin.nodes());
}
