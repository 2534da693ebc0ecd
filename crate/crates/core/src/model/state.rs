use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::fmt_sig;

/// Absolute tolerance, in seconds, below which a timer counts as expired.
pub const TIMER_TOL: f64 = 1e-12;

/// Kind of the block that just arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Arrival {
    A,
    H,
}

impl fmt::Display for Arrival {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arrival::A => "A",
            Arrival::H => "H",
        })
    }
}

/// Which of the two highest branches a block joins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Branch {
    Higher,
    Lower,
}

/// Placement of a new block: a branch and the height the block occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ActionKind {
    pub branch: Branch,
    pub height: u32,
}

impl ActionKind {
    pub fn higher(height: u32) -> Self {
        Self {
            branch: Branch::Higher,
            height,
        }
    }

    pub fn lower(height: u32) -> Self {
        Self {
            branch: Branch::Lower,
            height,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = match self.branch {
            Branch::Higher => "higher",
            Branch::Lower => "lower",
        };
        write!(f, "{b}@{}", self.height)
    }
}

/// Minimum remaining timer of the blocks at one height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Timer {
    Finite(f64),
    Infinite,
}

/// Classification by the timer just above the lower branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StateClass {
    /// `d ≤ m`: no H-block above the lower branch.
    Ahead,
    /// `m < d` and `l_{m+1} > 0`.
    OnTime,
    /// `m < d` and `l_{m+1} = 0`.
    Behind,
}

impl fmt::Display for StateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateClass::Ahead => "ahead",
            StateClass::OnTime => "on-time",
            StateClass::Behind => "behind",
        })
    }
}

/// Compact attack state `[m, d, n, (l_{m∧d}, …, l_d), I]`.
///
/// Heights are relative to the block under attack. `m ≤ n` are the heights of
/// the two highest branches and `d` is the highest height holding an H-block.
/// Heights up to the public height `P` have expired timers; the strictly
/// positive timers of heights `P+1..=d` are stored in `pending`. Heights above
/// `d` carry an infinite timer.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactState {
    m: u32,
    d: u32,
    n: u32,
    public: u32,
    pending: Vec<f64>,
    delta: f64,
    arrival: Option<Arrival>,
}

impl CompactState {
    /// State before any block is mined on top of genesis.
    pub fn genesis(delta: f64) -> Self {
        Self {
            m: 0,
            d: 0,
            n: 0,
            public: 0,
            pending: Vec::new(),
            delta,
            arrival: None,
        }
    }

    /// Builds a state from heights and the timer list `(l_{m∧d}, …, l_d)`.
    ///
    /// A shorter list is taken to omit leading expired timers, so
    /// `[1,2,3,(Δ)]` means `(l_1, l_2) = (0, Δ)` and `[0,1,1,(0.3)]` means
    /// `(l_0, l_1) = (0, 0.3)`.
    pub fn new(m: u32, d: u32, n: u32, timers: &[f64], delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be >= 0, got {delta}")));
        }
        if m > n || d > n {
            return Err(Error::InvalidParameter(format!(
                "need m <= n and d <= n, got m={m}, d={d}, n={n}"
            )));
        }
        let base = m.min(d);
        let full = (d - base + 1) as usize;
        if timers.len() > full {
            return Err(Error::InvalidParameter(format!(
                "timer list for heights {base}..={d} has at most {full} entries, got {}",
                timers.len()
            )));
        }
        let mut list = vec![0.0; full - timers.len()];
        list.extend_from_slice(timers);
        let mut prev = 0.0;
        for &t in &list {
            if !(t.is_finite() && t >= 0.0 && t <= delta + TIMER_TOL) {
                return Err(Error::InvalidParameter(format!("timer {t} outside [0, {delta}]")));
            }
            if t + TIMER_TOL < prev {
                return Err(Error::InvalidParameter("timers must be non-decreasing".into()));
            }
            prev = t;
        }
        if base == 0 && list[0] > TIMER_TOL {
            return Err(Error::InvalidParameter("genesis timer l_0 must be 0".into()));
        }
        let zeros = list.iter().take_while(|&&t| t <= TIMER_TOL).count() as u32;
        // `zeros >= 1` whenever base == 0, so this never underflows.
        let public = base + zeros - 1;
        let pending = list[zeros as usize..].to_vec();
        Ok(Self {
            m,
            d,
            n,
            public,
            pending,
            delta,
            arrival: None,
        })
    }

    /// Builds a state from its canonical parts. `pending` holds the timers of
    /// heights `public+1..=d`.
    pub(crate) fn from_parts(m: u32, d: u32, n: u32, public: u32, pending: Vec<f64>, delta: f64) -> Self {
        let mut s = Self {
            m,
            d,
            n,
            public,
            pending,
            delta,
            arrival: None,
        };
        s.normalize();
        debug_assert!(s.check_invariants().is_ok(), "{s}");
        s
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn arrival(&self) -> Option<Arrival> {
        self.arrival
    }

    /// `m ∧ d`, the lowest height whose timer is kept.
    pub fn base(&self) -> u32 {
        self.m.min(self.d)
    }

    /// Highest height whose timer has expired.
    pub fn public_height(&self) -> u32 {
        self.public
    }

    /// Timers of heights `m∧d..=d`.
    pub fn timers(&self) -> Vec<f64> {
        let base = self.base();
        let zeros = (self.public + 1).saturating_sub(base) as usize;
        let mut out = vec![0.0; zeros];
        out.extend_from_slice(&self.pending);
        out
    }

    /// Timers of heights `public+1..=d`, all strictly positive.
    pub fn pending_timers(&self) -> &[f64] {
        &self.pending
    }

    /// Timer at `height`. Heights below `m∧d` count as expired.
    pub fn timer_at(&self, height: u32) -> Timer {
        if height > self.d {
            Timer::Infinite
        } else if height <= self.public {
            Timer::Finite(0.0)
        } else {
            Timer::Finite(self.pending[(height - self.public - 1) as usize])
        }
    }

    /// True when the timer at height `d` has expired.
    pub fn ld_zero(&self) -> bool {
        self.public == self.d
    }

    pub fn with_arrival(mut self, arrival: Arrival) -> Self {
        self.arrival = Some(arrival);
        self
    }

    pub fn set_arrival(&mut self, arrival: Option<Arrival>) {
        self.arrival = arrival;
    }

    /// `m ≥ max(k, P)`.
    pub fn is_violation(&self, k: u32) -> bool {
        self.m >= k.max(self.public)
    }

    pub fn classify(&self) -> StateClass {
        if self.d <= self.m {
            StateClass::Ahead
        } else if self.public > self.m {
            StateClass::Behind
        } else {
            StateClass::OnTime
        }
    }

    /// Lets `t` seconds pass: every timer decreases by `t`, floored at zero.
    pub fn advance_time(&self, t: f64) -> Self {
        let mut s = self.clone();
        s.advance_in_place(t);
        s
    }

    pub fn advance_in_place(&mut self, t: f64) {
        if t <= 0.0 || self.pending.is_empty() {
            return;
        }
        for x in &mut self.pending {
            *x = (*x - t).max(0.0);
        }
        self.normalize();
    }

    /// Checks a placement against the admissible action sets.
    pub fn check_admissible(&self, arrival: Arrival, action: ActionKind) -> Result<()> {
        let i = action.height;
        let fail = |reason: &str| {
            Err(Error::Inadmissible {
                state: self.to_string(),
                action: format!("{arrival}:{action}"),
                reason: reason.to_string(),
            })
        };
        if i == 0 {
            return fail("placements start at height 1");
        }
        match action.branch {
            Branch::Higher if i > self.n + 1 => {
                return fail("higher-branch placements are limited to heights 1..=n+1");
            }
            Branch::Lower if i > self.m + 1 => {
                return fail("lower-branch placements are limited to heights 1..=m+1");
            }
            _ => {}
        }
        if arrival == Arrival::H && i <= self.public {
            return fail("an H-block must be placed strictly above the public height");
        }
        Ok(())
    }

    /// Applies `action` for the pending arrival and clears the arrival.
    pub fn apply_action(&self, action: ActionKind) -> Result<Self> {
        let arrival = self.arrival.ok_or_else(|| Error::Inadmissible {
            state: self.to_string(),
            action: action.to_string(),
            reason: "no pending arrival".into(),
        })?;
        let mut s = self.clone();
        s.apply_in_place(arrival, action)?;
        Ok(s)
    }

    /// In-place transition used by the simulators.
    pub fn apply_in_place(&mut self, arrival: Arrival, action: ActionKind) -> Result<()> {
        self.check_admissible(arrival, action)?;
        let i = action.height;
        let (grown, other) = match action.branch {
            Branch::Higher => (self.n.max(i), self.m),
            Branch::Lower => (self.m.max(i), self.n),
        };
        if arrival == Arrival::H && i > self.d {
            // Newly occupied H heights d+1..=i inherit the fresh timer Δ.
            let fill = if self.delta <= TIMER_TOL { 0.0 } else { self.delta };
            self.pending.extend(std::iter::repeat_n(fill, (i - self.d) as usize));
            self.d = i;
        }
        self.m = grown.min(other);
        self.n = grown.max(other);
        self.arrival = None;
        self.normalize();
        Ok(())
    }

    /// One step of the attack process for depth `k`: `elapsed` seconds pass,
    /// then a block arrives and is placed by `action`. Violation states are
    /// absorbing and are returned unchanged.
    pub fn step(&self, k: u32, elapsed: f64, arrival: Arrival, action: ActionKind) -> Result<Self> {
        if self.is_violation(k) {
            return Ok(self.clone());
        }
        let mut s = self.advance_time(elapsed);
        s.apply_in_place(arrival, action)?;
        Ok(s)
    }

    /// Treats heights below `m∧d` as expired and folds leading expired timers
    /// into the public height.
    fn normalize(&mut self) {
        let base = self.base();
        if base > self.public + 1 {
            let drop = (base - 1 - self.public) as usize;
            self.pending.drain(..drop);
            self.public = base - 1;
        }
        let zeros = self.pending.iter().take_while(|&&t| t <= TIMER_TOL).count();
        if zeros > 0 {
            self.pending.drain(..zeros);
            self.public += zeros as u32;
        }
    }

    /// Verifies the structural invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Numerical(format!("{self}: {msg}")));
        if self.m > self.n || self.d > self.n {
            return bad("height order".into());
        }
        if self.public > self.d || self.public + 1 < self.base() {
            return bad("public height out of range".into());
        }
        if self.pending.len() != (self.d - self.public) as usize {
            return bad("pending length".into());
        }
        let mut prev = 0.0;
        for &t in &self.pending {
            if !(t > TIMER_TOL && t <= self.delta + TIMER_TOL && t >= prev) {
                return bad(format!("timer {t}"));
            }
            prev = t;
        }
        Ok(())
    }

    /// Equality with timers compared to within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.m == other.m
            && self.d == other.d
            && self.n == other.n
            && self.public == other.public
            && self.arrival == other.arrival
            && self.pending.len() == other.pending.len()
            && self
                .pending
                .iter()
                .zip(&other.pending)
                .all(|(x, y)| (x - y).abs() <= tol)
    }
}

impl fmt::Display for CompactState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let timers: Vec<String> = self.timers().iter().map(|&t| fmt_sig(t, 6)).collect();
        write!(f, "[{},{},{},({})", self.m, self.d, self.n, timers.join(","))?;
        if let Some(a) = self.arrival {
            write!(f, ",{a}")?;
        }
        f.write_str("]")
    }
}
