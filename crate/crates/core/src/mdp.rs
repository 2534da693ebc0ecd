//! Zero-delay dynamic programming over `[m, d, n]` states.
//!
//! With Δ = 0 every timer is zero or infinite, so the public height equals
//! `d` and the triple `[m, d, n]` is a sufficient state. Once `d ≥ k` only the
//! deficit `d − m` matters, and its value is a gambler's-ruin probability.
//! The iteration keeps a lower and an upper bracket: deficit states at the cap
//! are pinned to 0 in the lower bracket and to `ρ^{D_max}` in the upper one,
//! where `ρ = a/h`. Both brackets are sound at every sweep.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{ActionKind, Arrival, Branch, CompactState};
use crate::params::ProtocolParams;
use crate::policy::Policy;

/// Sweep limit for value iteration.
const MAX_SWEEPS: usize = 2_000_000;

/// Zero-delay state `[m, d, n]` with public height `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZeroDelayState {
    pub m: u32,
    pub d: u32,
    pub n: u32,
}

impl ZeroDelayState {
    pub fn genesis() -> Self {
        Self { m: 0, d: 0, n: 0 }
    }

    pub fn new(m: u32, d: u32, n: u32) -> Result<Self> {
        if m > n || d > n {
            return Err(Error::InvalidParameter(format!(
                "zero-delay state needs m <= n and d <= n, got [{m},{d},{n}]"
            )));
        }
        Ok(Self { m, d, n })
    }

    /// `m ≥ max(k, d)`.
    pub fn is_violation(&self, k: u32) -> bool {
        self.m >= k.max(self.d)
    }

    /// Admissible placements. H-blocks must land above the public height.
    pub fn actions(&self, arrival: Arrival) -> Vec<ActionKind> {
        let floor = match arrival {
            Arrival::A => 1,
            Arrival::H => self.d + 1,
        };
        let mut out: Vec<ActionKind> = (floor..=self.n + 1).map(ActionKind::higher).collect();
        out.extend((floor..=self.m + 1).map(ActionKind::lower));
        out
    }

    pub fn is_admissible(&self, arrival: Arrival, action: ActionKind) -> bool {
        let top = match action.branch {
            Branch::Higher => self.n + 1,
            Branch::Lower => self.m + 1,
        };
        let floor = match arrival {
            Arrival::A => 1,
            Arrival::H => self.d + 1,
        };
        (floor..=top).contains(&action.height)
    }

    /// Successor after placing one block. Admissibility is not checked.
    pub fn apply(&self, arrival: Arrival, action: ActionKind) -> Self {
        let (grown, other) = match action.branch {
            Branch::Higher => (self.n.max(action.height), self.m),
            Branch::Lower => (self.m.max(action.height), self.n),
        };
        let d = match arrival {
            Arrival::A => self.d,
            Arrival::H => self.d.max(action.height),
        };
        Self {
            m: grown.min(other),
            d,
            n: grown.max(other),
        }
    }

    pub fn to_compact(&self) -> CompactState {
        CompactState::new(self.m, self.d, self.n, &[], 0.0).expect("zero-delay triples are valid compact states")
    }

    pub fn from_compact(state: &CompactState) -> Self {
        Self {
            m: state.m(),
            d: state.public_height(),
            n: state.n(),
        }
    }
}

impl fmt::Display for ZeroDelayState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{}]", self.m, self.d, self.n)
    }
}

/// Truncation caps: `n` is clamped to `n_max` while `d < k`, and deficits
/// `d − m ≥ d_max` past height `k` are pinned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    pub n_max: u32,
    pub d_max: u32,
}

impl Caps {
    /// `n_max = k` and `d_max = max(k + 40, ⌈ln(tol/10) / ln ρ⌉)`.
    pub fn for_params(params: &ProtocolParams, tol: f64) -> Self {
        let k = params.k;
        let rho = params.a / params.h;
        let mut d_max = k + 40;
        if rho > 0.0 && rho < 1.0 {
            let need = ((tol / 10.0).ln() / rho.ln()).ceil();
            if need.is_finite() && need > d_max as f64 {
                d_max = need as u32;
            }
        }
        Self { n_max: k, d_max }
    }
}

/// Canonical DP node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    /// `d < k`, with `n` clamped to `n_max`.
    Open(ZeroDelayState),
    /// `d ≥ k` and `0 < d − m < d_max`.
    Deficit(u32),
    /// `d ≥ k` and `d − m ≥ d_max`.
    Cap,
    Violation,
}

impl Node {
    pub fn of(state: ZeroDelayState, k: u32, caps: Caps) -> Self {
        if state.is_violation(k) {
            return Node::Violation;
        }
        if state.d >= k {
            let deficit = state.d - state.m;
            return if deficit >= caps.d_max {
                Node::Cap
            } else {
                Node::Deficit(deficit)
            };
        }
        Node::Open(ZeroDelayState {
            n: state.n.min(caps.n_max),
            ..state
        })
    }

    /// A concrete state standing for this node, if the node is not absorbing.
    pub fn representative(&self, k: u32) -> Option<ZeroDelayState> {
        match *self {
            Node::Open(s) => Some(s),
            Node::Deficit(delta) => Some(ZeroDelayState {
                m: k,
                d: k + delta,
                n: k + delta,
            }),
            Node::Cap | Node::Violation => None,
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Open(s) => write!(f, "{s}"),
            Node::Deficit(delta) => write!(f, "deficit {delta}"),
            Node::Cap => f.write_str("deficit cap"),
            Node::Violation => f.write_str("violation"),
        }
    }
}

/// Successors of one decision node, grouped by target node.
#[derive(Debug, Clone)]
struct Choices {
    groups: Vec<(Vec<ActionKind>, usize)>,
}

/// Reachable node graph from genesis.
#[derive(Debug, Clone)]
struct Graph {
    nodes: Vec<Node>,
    index: HashMap<Node, usize>,
    on_a: Vec<Choices>,
    on_h: Vec<Choices>,
}

impl Graph {
    fn build(k: u32, caps: Caps) -> Self {
        let mut g = Graph {
            nodes: Vec::new(),
            index: HashMap::new(),
            on_a: Vec::new(),
            on_h: Vec::new(),
        };
        let mut queue = VecDeque::new();
        let start = Node::of(ZeroDelayState::genesis(), k, caps);
        g.intern(start, &mut queue);
        while let Some(i) = queue.pop_front() {
            let Some(rep) = g.nodes[i].representative(k) else {
                continue;
            };
            for arrival in [Arrival::A, Arrival::H] {
                let mut groups: Vec<(Vec<ActionKind>, usize)> = Vec::new();
                for action in rep.actions(arrival) {
                    let next = Node::of(rep.apply(arrival, action), k, caps);
                    let j = g.intern(next, &mut queue);
                    match groups.iter_mut().find(|(_, t)| *t == j) {
                        Some((acts, _)) => acts.push(action),
                        None => groups.push((vec![action], j)),
                    }
                }
                match arrival {
                    Arrival::A => g.on_a[i] = Choices { groups },
                    Arrival::H => g.on_h[i] = Choices { groups },
                }
            }
        }
        g
    }

    fn intern(&mut self, node: Node, queue: &mut VecDeque<usize>) -> usize {
        if let Some(&i) = self.index.get(&node) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(node);
        self.index.insert(node, i);
        self.on_a.push(Choices { groups: Vec::new() });
        self.on_h.push(Choices { groups: Vec::new() });
        queue.push_back(i);
        i
    }

    /// Decreasing `m + n` over open nodes, then deficits nearest violation first.
    fn sweep_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i], Node::Open(_) | Node::Deficit(_)))
            .collect();
        order.sort_by_key(|&i| match self.nodes[i] {
            Node::Open(s) => (0, u32::MAX - (s.m + s.n), s.d),
            Node::Deficit(delta) => (1, delta, 0),
            _ => unreachable!(),
        });
        order
    }
}

/// Lower and upper bounds on a value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn overlaps(&self, other: &Bracket, slack: f64) -> bool {
        self.lower <= other.upper + slack && other.lower <= self.upper + slack
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        self.lower - slack <= x && x <= self.upper + slack
    }
}

impl fmt::Display for Bracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.12}, {:.12}]", self.lower, self.upper)
    }
}

/// Converged value brackets over the reachable truncated state space.
#[derive(Debug, Clone)]
pub struct ValueTable {
    params: ProtocolParams,
    caps: Caps,
    graph: Graph,
    lower: Vec<f64>,
    upper: Vec<f64>,
    sweeps: usize,
}

impl ValueTable {
    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn len(&self) -> usize {
        self.graph.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.graph.nodes
    }

    pub fn bracket(&self, node: Node) -> Option<Bracket> {
        self.graph.index.get(&node).map(|&i| Bracket {
            lower: self.lower[i],
            upper: self.upper[i],
        })
    }

    /// Bracket of an arbitrary state, after canonicalization.
    pub fn bracket_of(&self, state: ZeroDelayState) -> Option<Bracket> {
        self.bracket(Node::of(state, self.params.k, self.caps))
    }

    pub fn genesis(&self) -> Bracket {
        self.bracket_of(ZeroDelayState::genesis())
            .expect("genesis is always in the table")
    }

    /// Largest bracket width over all nodes.
    pub fn max_width(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .fold(0.0, f64::max)
    }
}

fn check_zero_delay(params: &ProtocolParams, caps: Caps) -> Result<()> {
    if params.delta != 0.0 {
        return Err(Error::InvalidParameter(format!(
            "zero-delay dynamic programming needs delta = 0, got {}",
            params.delta
        )));
    }
    if caps.n_max < params.k || caps.d_max < params.k {
        return Err(Error::InvalidParameter(format!(
            "caps must be at least k = {}, got n_max = {} and d_max = {}",
            params.k, caps.n_max, caps.d_max
        )));
    }
    if params.a >= params.h {
        return Err(Error::OutOfTolerance {
            inv_a: 1.0 / params.a,
            bound: 1.0 / params.h,
        });
    }
    Ok(())
}

/// Per-node transition choices used by the iteration: either all admissible
/// groups (optimal control) or a single fixed successor (policy evaluation).
fn iterate(
    params: &ProtocolParams,
    caps: Caps,
    graph: &Graph,
    on_a: &[Vec<usize>],
    on_h: &[Vec<usize>],
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let beta = params.beta();
    let rho = params.a / params.h;
    let cap_upper = rho.powi(caps.d_max as i32);
    let n = graph.nodes.len();
    let mut lower = vec![0.0; n];
    let mut upper = vec![1.0; n];
    for (i, node) in graph.nodes.iter().enumerate() {
        match node {
            Node::Violation => lower[i] = 1.0,
            Node::Cap => upper[i] = cap_upper,
            _ => {}
        }
    }
    let order = graph.sweep_order();
    let bellman = |v: &[f64], i: usize| -> f64 {
        let best = |succ: &[usize]| succ.iter().map(|&j| v[j]).fold(0.0, f64::max);
        beta * best(&on_a[i]) + (1.0 - beta) * best(&on_h[i])
    };
    for sweep in 1..=MAX_SWEEPS {
        let mut change = 0.0f64;
        for &i in &order {
            let lo = bellman(&lower, i);
            let hi = bellman(&upper, i);
            change = change.max((lo - lower[i]).abs()).max((hi - upper[i]).abs());
            if lo > hi + 1e-12 {
                return Err(Error::Numerical(format!(
                    "value bracket inverted at {}: {lo} > {hi}",
                    graph.nodes[i]
                )));
            }
            lower[i] = lo;
            upper[i] = hi;
        }
        let width = order.iter().map(|&i| upper[i] - lower[i]).fold(0.0, f64::max);
        if width <= tol || change < tol * 1e-6 {
            return Ok((lower, upper, sweep));
        }
    }
    Err(Error::Numerical(format!(
        "value iteration did not converge within {MAX_SWEEPS} sweeps"
    )))
}

/// Optimal violation probability brackets by value iteration.
pub fn value_iteration_zero_delay(params: &ProtocolParams, caps: Caps, tol: f64) -> Result<ValueTable> {
    check_zero_delay(params, caps)?;
    let graph = Graph::build(params.k, caps);
    let flatten = |choices: &[Choices]| -> Vec<Vec<usize>> {
        choices
            .iter()
            .map(|c| c.groups.iter().map(|(_, j)| *j).collect())
            .collect()
    };
    let on_a = flatten(&graph.on_a);
    let on_h = flatten(&graph.on_h);
    let (lower, upper, sweeps) = iterate(params, caps, &graph, &on_a, &on_h, tol)?;
    Ok(ValueTable {
        params: *params,
        caps,
        graph,
        lower,
        upper,
        sweeps,
    })
}

/// Value bracket at genesis for a fixed policy on the same truncated space.
pub fn policy_value_zero_delay(params: &ProtocolParams, policy: &dyn Policy, caps: Caps, tol: f64) -> Result<Bracket> {
    check_zero_delay(params, caps)?;
    let k = params.k;
    let graph = Graph::build(k, caps);
    let mut on_a = vec![Vec::new(); graph.nodes.len()];
    let mut on_h = vec![Vec::new(); graph.nodes.len()];
    for (i, node) in graph.nodes.iter().enumerate() {
        let Some(rep) = node.representative(k) else {
            continue;
        };
        let compact = rep.to_compact();
        for arrival in [Arrival::A, Arrival::H] {
            let action = policy.decide(&compact.clone().with_arrival(arrival), arrival);
            if !rep.is_admissible(arrival, action) {
                return Err(Error::Inadmissible {
                    state: format!("{rep}"),
                    action: action.to_string(),
                    reason: format!("{} chose it on an {arrival}-arrival", policy.name()),
                });
            }
            let next = Node::of(rep.apply(arrival, action), k, caps);
            let j = graph.index[&next];
            match arrival {
                Arrival::A => on_a[i] = vec![j],
                Arrival::H => on_h[i] = vec![j],
            }
        }
    }
    let (lower, upper, _) = iterate(params, caps, &graph, &on_a, &on_h, tol)?;
    let g = graph.index[&Node::of(ZeroDelayState::genesis(), k, caps)];
    Ok(Bracket {
        lower: lower[g],
        upper: upper[g],
    })
}

/// Whether an action attains the optimum, given the brackets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionStatus {
    Optimal,
    Suboptimal,
    /// The brackets are too wide to tell.
    Undecidable,
}

impl fmt::Display for ActionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionStatus::Optimal => "optimal",
            ActionStatus::Suboptimal => "suboptimal",
            ActionStatus::Undecidable => "undecidable at tolerance",
        })
    }
}

/// Classified actions at one decision node.
#[derive(Debug, Clone)]
pub struct Decision {
    pub node: Node,
    pub state: ZeroDelayState,
    pub arrival: Arrival,
    pub actions: Vec<(ActionKind, ActionStatus)>,
}

impl Decision {
    pub fn status(&self, action: ActionKind) -> Option<ActionStatus> {
        self.actions.iter().find(|(a, _)| *a == action).map(|(_, s)| *s)
    }

    pub fn argmax(&self) -> Vec<ActionKind> {
        self.actions
            .iter()
            .filter(|(_, s)| *s == ActionStatus::Optimal)
            .map(|(a, _)| *a)
            .collect()
    }
}

/// Classifies every admissible action at every non-absorbing node.
///
/// An action is optimal if its lower value is within `tol` of the best upper
/// value, suboptimal if its upper value falls more than `tol` short of the best
/// lower value, and undecidable otherwise.
pub fn extract_optimal_actions(table: &ValueTable, tol: f64) -> Vec<Decision> {
    let k = table.params.k;
    let mut out = Vec::new();
    for (i, node) in table.graph.nodes.iter().enumerate() {
        let Some(state) = node.representative(k) else {
            continue;
        };
        for (arrival, choices) in [(Arrival::A, &table.graph.on_a[i]), (Arrival::H, &table.graph.on_h[i])] {
            let best_lo = choices.groups.iter().map(|(_, j)| table.lower[*j]).fold(0.0, f64::max);
            let best_hi = choices.groups.iter().map(|(_, j)| table.upper[*j]).fold(0.0, f64::max);
            let mut actions = Vec::new();
            for (acts, j) in &choices.groups {
                let status = if table.lower[*j] >= best_hi - tol {
                    ActionStatus::Optimal
                } else if table.upper[*j] + tol < best_lo {
                    ActionStatus::Suboptimal
                } else {
                    ActionStatus::Undecidable
                };
                actions.extend(acts.iter().map(|a| (*a, status)));
            }
            actions.sort_by_key(|(a, _)| (a.branch == Branch::Lower, a.height));
            out.push(Decision {
                node: *node,
                state,
                arrival,
                actions,
            });
        }
    }
    out
}

/// The placement prescribed by the zero-delay optimality propositions.
pub fn prescribed_action(state: ZeroDelayState, arrival: Arrival) -> ActionKind {
    let ZeroDelayState { m, d, n } = state;
    match arrival {
        Arrival::H if d == m && m < n => ActionKind::lower(m + 1),
        Arrival::H => ActionKind::higher(d + 1),
        Arrival::A if d <= m => ActionKind::higher(n + 1),
        Arrival::A => ActionKind::lower(m + 1),
    }
}

/// Outcome of checking the prescriptions against the argmax sets.
#[derive(Debug, Clone, Default)]
pub struct PrescriptionReport {
    pub checked: usize,
    pub failures: Vec<String>,
    pub undecidable: Vec<String>,
}

impl PrescriptionReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.undecidable.is_empty()
    }
}

/// Checks that every prescribed action is in the argmax set.
pub fn verify_prescriptions(decisions: &[Decision]) -> PrescriptionReport {
    let mut report = PrescriptionReport::default();
    for dec in decisions {
        let want = prescribed_action(dec.state, dec.arrival);
        report.checked += 1;
        let line = format!("{} {}-arrival: {want}", dec.node, dec.arrival);
        match dec.status(want) {
            Some(ActionStatus::Optimal) => {}
            Some(ActionStatus::Undecidable) => report.undecidable.push(line),
            Some(ActionStatus::Suboptimal) => report.failures.push(format!("{line} is suboptimal")),
            None => report.failures.push(format!("{line} is inadmissible")),
        }
    }
    report
}

/// Finite-horizon expectimax from genesis over at most `depth` arrivals.
///
/// Deficit nodes are valued exactly at `ρ^δ`. Open nodes left at the horizon
/// count 0 for the lower bound and 1 for the upper bound.
pub fn brute_force_genesis(params: &ProtocolParams, depth: u32) -> Result<Bracket> {
    let caps = Caps {
        n_max: params.k,
        d_max: u32::MAX,
    };
    check_zero_delay(
        params,
        Caps {
            d_max: params.k,
            ..caps
        },
    )?;
    let mut memo = HashMap::new();
    let lower = expectimax(params, caps, ZeroDelayState::genesis(), depth, 0.0, &mut memo);
    memo.clear();
    let upper = expectimax(params, caps, ZeroDelayState::genesis(), depth, 1.0, &mut memo);
    Ok(Bracket { lower, upper })
}

fn expectimax(
    params: &ProtocolParams,
    caps: Caps,
    state: ZeroDelayState,
    depth: u32,
    horizon_value: f64,
    memo: &mut HashMap<(ZeroDelayState, u32), f64>,
) -> f64 {
    let k = params.k;
    match Node::of(state, k, caps) {
        Node::Violation => return 1.0,
        Node::Deficit(delta) => return (params.a / params.h).powi(delta as i32),
        Node::Cap => return 0.0,
        Node::Open(_) => {}
    }
    if depth == 0 {
        return horizon_value;
    }
    if let Some(&v) = memo.get(&(state, depth)) {
        return v;
    }
    let beta = params.beta();
    let mut value = 0.0;
    for (arrival, weight) in [(Arrival::A, beta), (Arrival::H, 1.0 - beta)] {
        let best = state
            .actions(arrival)
            .into_iter()
            .map(|act| {
                let next = state.apply(arrival, act);
                let next = ZeroDelayState {
                    n: next.n.min(caps.n_max),
                    ..next
                };
                expectimax(params, caps, next, depth - 1, horizon_value, memo)
            })
            .fold(0.0, f64::max);
        value += weight * best;
    }
    memo.insert((state, depth), value);
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::violation_probability_height1;
    use crate::policy::PolicyId;
    use proptest::prelude::*;

    const TOL: f64 = 1e-10;

    fn params(beta: f64, k: u32) -> ProtocolParams {
        ProtocolParams::from_lambda_beta(1.0, beta, 0.0, k).unwrap()
    }

    fn table(beta: f64, k: u32) -> ValueTable {
        let p = params(beta, k);
        value_iteration_zero_delay(&p, Caps::for_params(&p, TOL), TOL).unwrap()
    }

    #[test]
    fn successors_match_compact_state() {
        for m in 0..5 {
            for n in m..6 {
                for d in 0..=n {
                    let s = ZeroDelayState::new(m, d, n).unwrap();
                    for arrival in [Arrival::A, Arrival::H] {
                        for act in s.actions(arrival) {
                            let mut c = s.to_compact();
                            c.apply_in_place(arrival, act).unwrap();
                            let next = s.apply(arrival, act);
                            assert_eq!(ZeroDelayState::from_compact(&c), next, "{s} {arrival} {act}");
                            assert_eq!(c.public_height(), c.d());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn admissibility_agrees_with_compact_state() {
        let s = ZeroDelayState::new(1, 2, 3).unwrap();
        for arrival in [Arrival::A, Arrival::H] {
            for h in 0..7 {
                for act in [ActionKind::higher(h), ActionKind::lower(h)] {
                    let c = s.to_compact();
                    assert_eq!(
                        s.is_admissible(arrival, act),
                        c.check_admissible(arrival, act).is_ok(),
                        "{arrival} {act}"
                    );
                }
            }
        }
    }

    #[test]
    fn rejects_positive_delay_and_small_caps() {
        let p = ProtocolParams::from_lambda_beta(1.0, 0.25, 1.0, 2).unwrap();
        assert!(value_iteration_zero_delay(&p, Caps::for_params(&p, TOL), TOL).is_err());
        let p = params(0.25, 3);
        let caps = Caps { n_max: 2, d_max: 50 };
        assert!(value_iteration_zero_delay(&p, caps, TOL).is_err());
    }

    #[test]
    fn genesis_matches_analytic_for_k1() {
        for beta in [0.1, 0.25, 0.4] {
            let t = table(beta, 1);
            let exact = violation_probability_height1(&params(beta, 1)).unwrap();
            let g = t.genesis();
            assert!(g.width() < 1e-8, "width {}", g.width());
            assert!(g.contains(exact, 1e-9), "{beta}: {g} vs {exact}");
        }
    }

    #[test]
    fn genesis_matches_analytic_up_to_k5() {
        for beta in [0.1, 0.25, 0.4] {
            for k in 2..=5 {
                let exact = violation_probability_height1(&params(beta, k)).unwrap();
                let g = table(beta, k).genesis();
                assert!(g.contains(exact, 1e-7), "beta {beta} k {k}: {g} vs {exact}");
            }
        }
    }

    #[test]
    fn brute_force_brackets_the_table() {
        for (beta, k) in [(0.25, 1), (0.1, 2), (0.25, 2)] {
            let t = table(beta, k).genesis();
            let b = brute_force_genesis(&params(beta, k), 20).unwrap();
            assert!(b.overlaps(&t, 1e-12), "beta {beta} k {k}: brute {b} table {t}");
        }
        let b = brute_force_genesis(&params(0.25, 1), 20).unwrap();
        assert!(b.width() < 1e-9, "{b}");
    }

    #[test]
    fn zero_beta_gives_zero() {
        for k in 1..=4 {
            let t = table(0.0, k);
            assert_eq!(t.genesis().lower, 0.0);
            assert!(t.genesis().upper < 1e-12);
            let v = policy_value_zero_delay(
                &params(0.0, k),
                &PolicyId::BaitAndSwitch,
                Caps::for_params(&params(0.0, k), TOL),
                TOL,
            )
            .unwrap();
            assert!(v.upper < 1e-12);
        }
    }

    #[test]
    fn absorbing_values_are_pinned() {
        let t = table(0.3, 3);
        let v = t.bracket(Node::Violation).unwrap();
        assert_eq!((v.lower, v.upper), (1.0, 1.0));
        for b in t.lower.iter().zip(&t.upper) {
            assert!(b.0 <= b.1);
        }
        assert!(t.max_width() < 1e-8);
    }

    #[test]
    fn deficit_values_follow_gamblers_ruin() {
        let t = table(0.25, 2);
        for delta in 1..10 {
            let b = t.bracket(Node::Deficit(delta)).unwrap();
            assert!(b.contains((1.0f64 / 3.0).powi(delta as i32), 1e-10), "{delta}: {b}");
        }
    }

    #[test]
    fn table_is_monotone() {
        let t = table(0.3, 4);
        let k = 4;
        let caps = t.caps();
        let open: Vec<ZeroDelayState> = t
            .nodes()
            .iter()
            .filter_map(|n| match n {
                Node::Open(s) => Some(*s),
                _ => None,
            })
            .collect();
        let value = |s: ZeroDelayState| t.bracket(Node::of(s, k, caps)).map(|b| b.lower);
        for s in open {
            let v = value(s).unwrap();
            let ups = [ZeroDelayState { m: s.m + 1, ..s }, ZeroDelayState { n: s.n + 1, ..s }];
            for u in ups {
                if u.m <= u.n {
                    if let Some(w) = value(u) {
                        assert!(w >= v - 1e-9, "{u} below {s}");
                    }
                }
            }
            if s.d < s.n {
                if let Some(w) = value(ZeroDelayState { d: s.d + 1, ..s }) {
                    assert!(w <= v + 1e-9, "raising d in {s} increased value");
                }
            }
        }
    }

    #[test]
    fn larger_caps_tighten_brackets() {
        let p = params(0.4, 2);
        let narrow = value_iteration_zero_delay(&p, Caps { n_max: 2, d_max: 10 }, TOL).unwrap();
        let wide = value_iteration_zero_delay(&p, Caps { n_max: 2, d_max: 30 }, TOL).unwrap();
        assert!(wide.genesis().width() < narrow.genesis().width());
        assert!(wide.genesis().lower >= narrow.genesis().lower - 1e-15);
        assert!(wide.genesis().upper <= narrow.genesis().upper + 1e-15);
    }

    #[test]
    fn prescriptions_are_optimal() {
        for beta in [0.1, 0.25, 0.4] {
            for k in 1..=4 {
                let t = table(beta, k);
                let report = verify_prescriptions(&extract_optimal_actions(&t, 1e-9));
                assert!(report.passed(), "beta {beta} k {k}: {:?}", report);
                assert!(report.checked > 0);
            }
        }
    }

    #[test]
    fn tied_actions_when_all_heights_equal() {
        let t = table(0.25, 3);
        let decisions = extract_optimal_actions(&t, 1e-9);
        let dec = decisions
            .iter()
            .find(|d| d.state == ZeroDelayState { m: 1, d: 1, n: 1 } && d.arrival == Arrival::H)
            .unwrap();
        for act in [ActionKind::higher(2), ActionKind::lower(2)] {
            assert_eq!(dec.status(act), Some(ActionStatus::Optimal), "{act}");
        }
    }

    #[test]
    fn lower_placement_after_tie_with_public() {
        let t = table(0.3, 4);
        let decisions = extract_optimal_actions(&t, 1e-9);
        let dec = decisions
            .iter()
            .find(|d| d.state == ZeroDelayState { m: 1, d: 1, n: 3 } && d.arrival == Arrival::H)
            .unwrap();
        assert!(dec.argmax().contains(&ActionKind::lower(2)));
        assert_eq!(dec.status(ActionKind::higher(2)), Some(ActionStatus::Suboptimal));
    }

    #[test]
    fn policies_attain_the_optimum() {
        for beta in [0.1, 0.25, 0.4] {
            for k in 1..=4 {
                let p = params(beta, k);
                let caps = Caps::for_params(&p, TOL);
                let opt = value_iteration_zero_delay(&p, caps, TOL).unwrap().genesis();
                for policy in [PolicyId::BaitAndSwitch, PolicyId::PrivateMining] {
                    let v = policy_value_zero_delay(&p, &policy, caps, TOL).unwrap();
                    assert!(v.overlaps(&opt, 1e-12), "{policy} beta {beta} k {k}: {v} vs {opt}");
                }
            }
        }
    }

    #[test]
    fn always_higher_is_not_optimal() {
        let p = params(0.3, 3);
        let caps = Caps::for_params(&p, TOL);
        let opt = value_iteration_zero_delay(&p, caps, TOL).unwrap().genesis();
        let naive = PolicyId::from_name("always-higher").unwrap();
        let v = policy_value_zero_delay(&p, &naive, caps, TOL).unwrap();
        assert!(v.upper < opt.lower - 1e-6, "{v} vs {opt}");
    }

    proptest! {
        #[test]
        fn canonical_nodes_preserve_violation(m in 0u32..8, extra in 0u32..4, d in 0u32..8, k in 1u32..5) {
            let n = m.max(d) + extra;
            let s = ZeroDelayState::new(m, d, n).unwrap();
            let caps = Caps { n_max: k, d_max: k + 10 };
            let node = Node::of(s, k, caps);
            prop_assert_eq!(node == Node::Violation, s.is_violation(k));
            if let Some(rep) = node.representative(k) {
                prop_assert_eq!(Node::of(rep, k, caps), node);
            }
        }
    }
}
