//! Best Fit on i.i.d. items of size 1/4 (probability `p`) and 1/3
//! (probability `q = 1 - p`) as a nine-state Markov chain.
//!
//! A bin with load above 3/4 cannot take another item and counts as closed.
//! The states are the possible load vectors of the remaining open bins.
//! Transitions are derived by running Best Fit on each state, then compared
//! with the reference transition table.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::engine::{iid_simulate_observed, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::packing::{Algorithm, UnitPacker};
use crate::size::{fmt_rational, rational_to_f64, to_big, Rational};

/// Loads are counted in twelfths.
const CAP: u64 = 12;
const QUARTER: u64 = 3;
const THIRD: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum State {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
}

impl State {
    pub const ALL: [State; 9] = [
        State::A,
        State::B,
        State::C,
        State::D,
        State::E,
        State::F,
        State::G,
        State::H,
        State::I,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Open-bin loads in twelfths, in opening order.
    pub fn loads(self) -> &'static [u64] {
        match self {
            State::A => &[],
            State::B => &[3],
            State::C => &[4],
            State::D => &[6],
            State::E => &[7],
            State::F => &[8],
            State::G => &[9],
            State::H => &[9, 4],
            State::I => &[9, 8],
        }
    }

    /// The state whose open bins carry `loads` (in any order).
    pub fn from_loads(loads: &[u64]) -> Option<State> {
        let mut sorted = loads.to_vec();
        sorted.sort_unstable();
        State::ALL.into_iter().find(|s| {
            let mut l = s.loads().to_vec();
            l.sort_unstable();
            l == sorted
        })
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Which arrival drives a transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    Quarter,
    Third,
    Either,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub from: State,
    pub to: State,
    pub arrival: Arrival,
    #[serde(serialize_with = "ser_rational")]
    pub probability: Rational,
    pub opens_bin: bool,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(&fmt_rational(r))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MarkovModel {
    #[serde(serialize_with = "ser_rational")]
    pub p: Rational,
    pub transitions: Vec<Transition>,
}

fn check_open_unit(p: Ratio<i64>) -> Result<Rational> {
    if p <= Ratio::zero() || p >= Ratio::one() {
        return Err(Error::Parameter(format!("p = {p} must lie in (0, 1)")));
    }
    Ok(to_big(&p))
}

/// The successor state of `from` when an item of `units` twelfths arrives,
/// and whether Best Fit opened a bin.
pub fn step(from: State, units: u64) -> Result<(State, bool)> {
    let mut packer = UnitPacker::with_open_loads(Algorithm::BEST_FIT, CAP, QUARTER, from.loads());
    let opened = packer.push(units);
    let to = State::from_loads(packer.open_loads()).ok_or_else(|| {
        Error::Precondition(format!(
            "state {from} with arrival {units}/12 reaches unlisted loads {:?}",
            packer.open_loads()
        ))
    })?;
    Ok((to, opened))
}

/// Transitions obtained by running Best Fit from every state.
pub fn build_chain(p: Ratio<i64>) -> Result<MarkovModel> {
    let p = check_open_unit(p)?;
    let q = Rational::one() - &p;
    let mut transitions = Vec::new();
    for from in State::ALL {
        let (tq, oq) = step(from, QUARTER)?;
        let (tt, ot) = step(from, THIRD)?;
        if tq == tt && oq == ot {
            transitions.push(Transition {
                from,
                to: tq,
                arrival: Arrival::Either,
                probability: Rational::one(),
                opens_bin: oq,
            });
        } else {
            transitions.push(Transition {
                from,
                to: tq,
                arrival: Arrival::Quarter,
                probability: p.clone(),
                opens_bin: oq,
            });
            transitions.push(Transition {
                from,
                to: tt,
                arrival: Arrival::Third,
                probability: q.clone(),
                opens_bin: ot,
            });
        }
    }
    Ok(MarkovModel { p, transitions })
}

/// Reference transition table: `(from, to, arrival, opens_bin)`.
pub const FIGURE_TRANSITIONS: [(State, State, Arrival, bool); 16] = {
    use Arrival::*;
    use State::*;
    [
        (A, B, Quarter, true),
        (A, C, Third, true),
        (B, D, Quarter, false),
        (B, E, Third, false),
        (C, E, Quarter, false),
        (C, F, Third, false),
        (D, G, Quarter, false),
        (D, A, Third, false),
        (E, A, Either, false),
        (F, A, Either, false),
        (G, A, Quarter, false),
        (G, H, Third, true),
        (H, C, Quarter, false),
        (H, I, Third, false),
        (I, F, Quarter, false),
        (I, G, Third, false),
    ]
};

/// Differences between a derived chain and the reference table.
pub fn compare_with_figure(model: &MarkovModel) -> Vec<String> {
    let derived: Vec<(State, State, Arrival, bool)> = model
        .transitions
        .iter()
        .map(|t| (t.from, t.to, t.arrival, t.opens_bin))
        .collect();
    let mut diffs = Vec::new();
    for t in &derived {
        if !FIGURE_TRANSITIONS.contains(t) {
            diffs.push(format!("derived but not drawn: {t:?}"));
        }
    }
    for t in &FIGURE_TRANSITIONS {
        if !derived.contains(t) {
            diffs.push(format!("drawn but not derived: {t:?}"));
        }
    }
    diffs
}

impl MarkovModel {
    pub fn q(&self) -> Rational {
        Rational::one() - &self.p
    }

    /// Transition matrix with rows indexed by the source state.
    pub fn matrix(&self) -> Vec<Vec<Rational>> {
        let mut m = vec![vec![Rational::zero(); 9]; 9];
        for t in &self.transitions {
            m[t.from.index()][t.to.index()] += &t.probability;
        }
        m
    }

    pub fn rows_sum_to_one(&self) -> bool {
        self.matrix()
            .iter()
            .all(|row| row.iter().sum::<Rational>().is_one())
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); 9];
        for t in self.transitions.iter().filter(|t| !t.probability.is_zero()) {
            out[t.from.index()].push(t.to.index());
        }
        out
    }

    /// Every state reaches every other.
    pub fn is_irreducible(&self) -> bool {
        let succ = self.successors();
        (0..9).all(|s| {
            let mut seen = [false; 9];
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for &v in &succ[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen.iter().all(|&x| x)
        })
    }

    /// Period of the chain: gcd of `level(u) + 1 - level(v)` over all edges,
    /// with BFS levels from `A`. Aperiodic iff 1.
    pub fn period(&self) -> u64 {
        let succ = self.successors();
        let mut level = [u64::MAX; 9];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for &v in &succ[u] {
                if level[v] == u64::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut g = 0u64;
        for (u, vs) in succ.iter().enumerate() {
            for &v in vs {
                if level[u] != u64::MAX && level[v] != u64::MAX {
                    let d = (level[u] + 1).abs_diff(level[v]);
                    g = num_integer::gcd(g, d);
                }
            }
        }
        g
    }
}

/// Closed-form stationary distribution with its auxiliary quantities
/// `theta = p^3 / (1 - q^3)` and `lambda = theta q (3 - q^2) + theta + 3`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StationaryVector {
    pub p: Rational,
    pub theta: Rational,
    pub lambda: Rational,
    pub omega: [Rational; 9],
}

impl StationaryVector {
    pub fn get(&self, s: State) -> &Rational {
        &self.omega[s.index()]
    }

    pub fn to_f64(&self) -> [f64; 9] {
        std::array::from_fn(|i| rational_to_f64(&self.omega[i]))
    }
}

impl Serialize for StationaryVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(9))?;
        for st in State::ALL {
            let w = self.get(st);
            m.serialize_entry(
                &st.to_string(),
                &serde_json::json!({ "exact": fmt_rational(w), "approx": rational_to_f64(w) }),
            )?;
        }
        m.end()
    }
}

/// The closed form evaluated at `p` in (0, 1]; `p = 1` is the limit of the
/// chain as `q -> 0`.
pub fn closed_form_vector(p: Ratio<i64>) -> Result<StationaryVector> {
    if p <= Ratio::zero() || p > Ratio::one() {
        return Err(Error::Parameter(format!("p = {p} must lie in (0, 1]")));
    }
    let p = to_big(&p);
    let one = Rational::one();
    let q = &one - &p;
    let theta = p.pow(3) / (&one - q.pow(3));
    let three = Rational::from_integer(BigInt::from(3));
    let two = Rational::from_integer(BigInt::from(2));
    let lambda = &theta * &q * (&three - q.pow(2)) + &theta + &three;
    let raw = [
        one.clone(),
        p.clone(),
        &q + &p * &q * &theta,
        p.pow(2),
        &two * &p * &q + p.pow(2) * &q * &theta,
        q.pow(2) + &two * &p * q.pow(2) * &theta,
        theta.clone(),
        &q * &theta,
        q.pow(2) * &theta,
    ];
    let omega = raw.map(|w| w / &lambda);
    Ok(StationaryVector {
        p,
        theta,
        lambda,
        omega,
    })
}

/// Residuals of the ten balance equations (all zero for the stationary
/// vector): inflow equations for A..I, then the normalization.
pub fn balance_residuals(w: &StationaryVector) -> [Rational; 10] {
    let p = &w.p;
    let q = &(Rational::one() - p);
    let o = |s: State| w.get(s).clone();
    use State::*;
    [
        o(A) - (o(E) + o(F) + p * o(G) + q * o(D)),
        o(B) - p * o(A),
        o(C) - (q * o(A) + p * o(H)),
        o(D) - p * o(B),
        o(E) - (q * o(B) + p * o(C)),
        o(F) - (q * o(C) + p * o(I)),
        o(G) - (p * o(D) + q * o(I)),
        o(H) - q * o(G),
        o(I) - q * o(H),
        w.omega.iter().sum::<Rational>() - Rational::one(),
    ]
}

/// `omega P - omega`, componentwise.
pub fn stationarity_residual(model: &MarkovModel, w: &StationaryVector) -> [Rational; 9] {
    let m = model.matrix();
    std::array::from_fn(|j| {
        (0..9).map(|i| &w.omega[i] * &m[i][j]).sum::<Rational>() - &w.omega[j]
    })
}

/// Closed form for `p` in (0, 1), verified against the derived chain and the
/// balance equations before it is returned.
pub fn stationary_closed_form(p: Ratio<i64>) -> Result<StationaryVector> {
    let model = build_chain(p)?;
    let w = closed_form_vector(p)?;
    if stationarity_residual(&model, &w).iter().any(|r| !r.is_zero())
        || balance_residuals(&w).iter().any(|r| !r.is_zero())
    {
        return Err(Error::Precondition(format!(
            "closed form is not stationary at p = {}",
            fmt_rational(&w.p)
        )));
    }
    Ok(w)
}

/// Floating-point solve of `(P^T - I) w = 0`, `sum w = 1`.
pub fn stationary_numeric(model: &MarkovModel) -> Result<[f64; 9]> {
    let m = model.matrix();
    let mut a = DMatrix::<f64>::zeros(9, 9);
    for i in 0..9 {
        for j in 0..9 {
            a[(j, i)] = rational_to_f64(&m[i][j]);
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..9 {
        a[(8, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(9);
    b[8] = 1.0;
    let x = a.lu().solve(&b).ok_or(Error::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(std::array::from_fn(|i| x[i]))
}

/// Bins opened per item in the long run: `w_A + q w_G = (1 + q theta) / lambda`.
pub fn bf_rate(p: Ratio<i64>) -> Result<Rational> {
    let w = closed_form_vector(p)?;
    let q = Rational::one() - &w.p;
    Ok(w.get(State::A) + q * w.get(State::G))
}

/// Per-item upper bound on OPT: `1/3 - p/12`.
pub fn opt_rate_upper(p: Ratio<i64>) -> Result<Rational> {
    if p < Ratio::zero() || p > Ratio::one() {
        return Err(Error::Parameter(format!("p = {p} must lie in [0, 1]")));
    }
    Ok(to_big(&(Ratio::new(1, 3) - p / 12)))
}

/// `bf_rate / opt_rate_upper`, a lower bound on the asymptotic i.i.d. ratio.
pub fn iid_ratio_lower_bound(p: Ratio<i64>) -> Result<Rational> {
    Ok(bf_rate(p)? / opt_rate_upper(p)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    #[serde(serialize_with = "ser_rational")]
    pub p: Rational,
    pub bf_rate: f64,
    pub opt_rate: f64,
    pub ratio: f64,
    #[serde(serialize_with = "ser_rational")]
    pub ratio_exact: Rational,
}

/// `iid_ratio_lower_bound` at `p = i / steps` for `0 < i < steps`.
pub fn sweep(steps: i64) -> Result<Vec<SweepRow>> {
    if steps < 2 {
        return Err(Error::Parameter("sweep needs at least 2 steps".into()));
    }
    (1..steps)
        .map(|i| {
            let p = Ratio::new(i, steps);
            let b = bf_rate(p)?;
            let o = opt_rate_upper(p)?;
            let r = &b / &o;
            Ok(SweepRow {
                p: to_big(&p),
                bf_rate: rational_to_f64(&b),
                opt_rate: rational_to_f64(&o),
                ratio: rational_to_f64(&r),
                ratio_exact: r,
            })
        })
        .collect()
}

/// Grid point with the largest ratio (the grid maximum only).
pub fn best_on_grid(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().max_by(|a, b| a.ratio_exact.cmp(&b.ratio_exact))
}

#[derive(Clone, Debug, Serialize)]
pub struct CrosscheckReport {
    #[serde(serialize_with = "ser_rational")]
    pub p: Rational,
    pub n: usize,
    pub seed: u64,
    /// Arrivals that found the open bins outside the nine states.
    pub unlisted_states: u64,
    /// Fraction of arrivals that found the chain in each state.
    pub frequencies: [f64; 9],
    pub stationary: [f64; 9],
    pub max_deviation: f64,
    pub bins_opened: usize,
    pub departures_from_a: u64,
    pub g_to_h: u64,
    /// `bins_opened == departures_from_a + g_to_h`.
    pub tally_matches: bool,
    pub rate: f64,
    pub bf_rate: f64,
    pub rate_relative_error: f64,
}

/// Runs Best Fit on `n` sampled items and compares the visited states and
/// opened bins with the chain.
pub fn simulate_and_crosscheck(p: Ratio<i64>, n: usize, seed: u64) -> Result<CrosscheckReport> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    let w = stationary_closed_form(p)?;
    let dist = DiscreteDistribution::quarter_third(p)?;
    let mut visits = [0u64; 9];
    let mut unlisted = 0u64;
    let mut from_a = 0u64;
    let mut g_to_h = 0u64;
    let mut mismatched_opens = 0u64;
    let sample = iid_simulate_observed(&dist, n, seed, Algorithm::BEST_FIT, |before, k, opened| {
        let Some(state) = State::from_loads(before) else {
            unlisted += 1;
            return;
        };
        visits[state.index()] += 1;
        let third = k == 1;
        match state {
            State::A => from_a += 1,
            State::G if third => g_to_h += 1,
            _ => {}
        }
        let expected_open = state == State::A || (state == State::G && third);
        if opened != expected_open {
            mismatched_opens += 1;
        }
    });
    let stationary = w.to_f64();
    let frequencies: [f64; 9] = std::array::from_fn(|i| visits[i] as f64 / n as f64);
    let max_deviation = (0..9)
        .map(|i| (frequencies[i] - stationary[i]).abs())
        .fold(0.0, f64::max);
    let rate = sample.bins_used as f64 / n as f64;
    let target = rational_to_f64(&bf_rate(p)?);
    Ok(CrosscheckReport {
        p: w.p.clone(),
        n,
        seed,
        unlisted_states: unlisted,
        frequencies,
        stationary,
        max_deviation,
        bins_opened: sample.bins_used,
        departures_from_a: from_a,
        g_to_h,
        tally_matches: mismatched_opens == 0
            && sample.bins_used as u64 == from_a + g_to_h,
        rate,
        bf_rate: target,
        rate_relative_error: (rate - target).abs() / target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    fn r(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn derived_chain_matches_reference_table() {
        for p in [r(3, 5), r(1, 2), r(1, 100), r(99, 100)] {
            let m = build_chain(p).unwrap();
            assert_eq!(m.transitions.len(), 16);
            assert!(compare_with_figure(&m).is_empty(), "{:?}", compare_with_figure(&m));
            assert!(m.rows_sum_to_one());
            assert!(m.is_irreducible());
            assert_eq!(m.period(), 1);
        }
        let opens: Vec<(State, State)> = build_chain(r(3, 5))
            .unwrap()
            .transitions
            .iter()
            .filter(|t| t.opens_bin)
            .map(|t| (t.from, t.to))
            .collect();
        assert_eq!(opens, vec![(State::A, State::B), (State::A, State::C), (State::G, State::H)]);
    }

    #[test]
    fn step_arithmetic() {
        // 7/12 + 1/4 = 5/6 and 7/12 + 1/3 = 11/12 both close the bin.
        assert_eq!(step(State::E, QUARTER).unwrap(), (State::A, false));
        assert_eq!(step(State::E, THIRD).unwrap(), (State::A, false));
        // 1/4 fills the 3/4 bin exactly.
        assert_eq!(step(State::H, QUARTER).unwrap(), (State::C, false));
        assert_eq!(State::from_loads(&[4, 9]), Some(State::H));
        assert_eq!(State::from_loads(&[5]), None);
    }

    #[test]
    fn parameter_range() {
        assert!(build_chain(r(0, 1)).is_err());
        assert!(build_chain(r(1, 1)).is_err());
        assert!(stationary_closed_form(r(1, 1)).is_err());
        assert!(closed_form_vector(r(1, 1)).is_ok());
        assert!(opt_rate_upper(r(0, 1)).is_ok());
        assert!(opt_rate_upper(r(-1, 2)).is_err());
    }

    #[test]
    fn closed_form_at_three_fifths() {
        let w = stationary_closed_form(r(3, 5)).unwrap();
        assert_eq!(w.omega.iter().sum::<Rational>(), q(1, 1));
        assert_eq!(bf_rate(r(3, 5)).unwrap(), q(1775, 5676));
        let theta = q(3, 13);
        assert_eq!(w.theta, theta);
        assert_eq!(
            bf_rate(r(3, 5)).unwrap(),
            (q(1, 1) + q(2, 5) * &theta) / &w.lambda
        );
        assert_eq!(opt_rate_upper(r(3, 5)).unwrap(), q(17, 60));
        let ratio = iid_ratio_lower_bound(r(3, 5)).unwrap();
        assert_eq!(ratio, q(8875, 8041));
        assert!(ratio > q(11, 10));
    }

    #[test]
    fn limits() {
        let w = closed_form_vector(r(1, 1)).unwrap();
        assert_eq!(w.theta, q(1, 1));
        assert_eq!(w.lambda, q(4, 1));
        let quarter = q(1, 4);
        let z = q(0, 1);
        let expect = [&quarter, &quarter, &z, &quarter, &z, &z, &quarter, &z, &z];
        for (a, b) in w.omega.iter().zip(expect) {
            assert_eq!(a, b);
        }
        assert_eq!(bf_rate(r(1, 1)).unwrap(), q(1, 4));
        assert_eq!(opt_rate_upper(r(0, 1)).unwrap(), q(1, 3));
        assert_eq!(opt_rate_upper(r(1, 1)).unwrap(), q(1, 4));
        assert_eq!(iid_ratio_lower_bound(r(1, 1)).unwrap(), q(1, 1));
    }

    #[test]
    fn balance_on_grid() {
        for i in 1..100 {
            let p = r(i, 100);
            let w = stationary_closed_form(p).unwrap();
            assert!(balance_residuals(&w).iter().all(Zero::is_zero));
            assert_eq!(w.get(State::H), &(w.get(State::G) * (q(1, 1) - &w.p)));
            let numeric = stationary_numeric(&build_chain(p).unwrap()).unwrap();
            for (x, y) in numeric.iter().zip(w.to_f64()) {
                assert!((x - y).abs() <= 1e-12, "p = {i}/100");
            }
        }
        for p in [r(1, 2), r(999, 1000)] {
            let w = stationary_closed_form(p).unwrap();
            let numeric = stationary_numeric(&build_chain(p).unwrap()).unwrap();
            for (x, y) in numeric.iter().zip(w.to_f64()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sweep_grid() {
        let rows = sweep(100).unwrap();
        assert_eq!(rows.len(), 99);
        let best = best_on_grid(&rows).unwrap();
        assert!(best.ratio_exact >= iid_ratio_lower_bound(r(3, 5)).unwrap());
    }

    #[test]
    fn short_simulation_stays_in_states() {
        let c = simulate_and_crosscheck(r(3, 5), 10, 1).unwrap();
        assert_eq!(c.unlisted_states, 0);
        assert!(c.tally_matches);
        assert!((c.frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn long_simulation_matches_chain() {
        let c = simulate_and_crosscheck(r(3, 5), 1_000_000, 2024).unwrap();
        assert_eq!(c.unlisted_states, 0);
        assert!(c.tally_matches);
        assert!(c.max_deviation < 5e-3, "{}", c.max_deviation);
        assert!(c.rate_relative_error < 0.01, "{}", c.rate_relative_error);
    }
}
