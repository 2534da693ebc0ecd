//! Attack policies acting on the compact state.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ActionKind, Arrival, Branch, CompactState, StateClass};

/// A stationary policy: where to place an arriving block.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    /// Placement for `arrival` in the non-violation state `state`.
    fn decide(&self, state: &CompactState, arrival: Arrival) -> ActionKind;
}

/// Bait-and-switch for height 1.
pub fn bait_and_switch_action(s: &CompactState, arrival: Arrival) -> ActionKind {
    let (m, d, n) = (s.m(), s.d(), s.n());
    match arrival {
        Arrival::A if d <= m => ActionKind::higher(n + 1),
        Arrival::A => ActionKind::lower(m + 1),
        Arrival::H => match s.classify() {
            StateClass::Ahead if !s.ld_zero() => ActionKind::higher(d),
            StateClass::Ahead if d == m && m < n => ActionKind::lower(m + 1),
            StateClass::Ahead => ActionKind::higher(d + 1),
            StateClass::OnTime => ActionKind::lower(m + 1),
            StateClass::Behind if !s.ld_zero() => ActionKind::higher(d),
            StateClass::Behind => ActionKind::higher(d + 1),
        },
    }
}

/// Private mining: A-blocks extend the all-A chain, H-blocks join the honest
/// branch at the lowest admissible height.
pub fn private_mining_action(s: &CompactState, arrival: Arrival) -> ActionKind {
    let (m, d, n) = (s.m(), s.d(), s.n());
    match arrival {
        Arrival::A if n > d || m == n => ActionKind::higher(n + 1),
        Arrival::A => ActionKind::lower(m + 1),
        Arrival::H => {
            let height = if s.ld_zero() { d + 1 } else { d };
            if m == d && d < n {
                ActionKind::lower(height)
            } else {
                ActionKind::higher(height)
            }
        }
    }
}

/// Bait-and-switch for a general target once the target block is placed.
///
/// The state is expressed relative to the height below the target, so the
/// height-1 decision table applies unchanged.
pub fn target_bait_and_switch_action(s: &CompactState, arrival: Arrival) -> ActionKind {
    bait_and_switch_action(s, arrival)
}

/// Start state of the target attack.
///
/// `lead` is the pre-mining lead just before the target arrives for a jumper
/// target, and just before the next jumper arrives for a non-jumper target.
/// A target arriving after the highest jumper became public is necessarily a
/// jumper.
pub fn place_target(
    lead: u32,
    highest_jumper_public: bool,
    target_is_jumper: bool,
    delta: f64,
) -> Result<CompactState> {
    match (target_is_jumper, lead) {
        (false, _) if highest_jumper_public => Err(Error::InvalidParameter(
            "a target arriving after the highest jumper is public must be a jumper".into(),
        )),
        (true, 0) => CompactState::new(0, 1, 1, &[0.0, delta], delta),
        (true, l) => CompactState::new(1, 1, l, &[delta], delta),
        (false, 0) => CompactState::new(1, 2, 2, &[0.0, delta], delta),
        (false, l) => CompactState::new(2, 2, 1 + l, &[delta], delta),
    }
}

/// State right after a non-jumper target arrives: the target sits at the
/// height of the highest jumper, whose timer `timer` is still running, and
/// the challenger leads by `lead` blocks.
pub fn non_jumper_arrival_state(lead: u32, timer: f64, delta: f64) -> Result<CompactState> {
    CompactState::new(1, 1, 1 + lead, &[timer], delta)
}

/// Height expression of a decision-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeightExpr {
    D,
    DPlus1,
    MPlus1,
    NPlus1,
}

impl HeightExpr {
    fn eval(self, s: &CompactState) -> u32 {
        match self {
            HeightExpr::D => s.d(),
            HeightExpr::DPlus1 => s.d() + 1,
            HeightExpr::MPlus1 => s.m() + 1,
            HeightExpr::NPlus1 => s.n() + 1,
        }
    }
}

/// Key of a decision-table lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionKey {
    pub class: StateClass,
    pub arrival: Arrival,
    pub ld_zero: bool,
    pub m_eq_n: bool,
    pub d_le_m: bool,
}

impl DecisionKey {
    pub fn of(s: &CompactState, arrival: Arrival) -> Self {
        Self {
            class: s.classify(),
            arrival,
            ld_zero: s.ld_zero(),
            m_eq_n: s.m() == s.n(),
            d_le_m: s.d() <= s.m(),
        }
    }

    /// Every key that some state can produce.
    pub fn all() -> Vec<Self> {
        let mut keys = Vec::new();
        for class in [StateClass::Ahead, StateClass::OnTime, StateClass::Behind] {
            for arrival in [Arrival::A, Arrival::H] {
                for ld_zero in [false, true] {
                    for m_eq_n in [false, true] {
                        for d_le_m in [false, true] {
                            let key = Self {
                                class,
                                arrival,
                                ld_zero,
                                m_eq_n,
                                d_le_m,
                            };
                            if key.is_possible() {
                                keys.push(key);
                            }
                        }
                    }
                }
            }
        }
        keys
    }

    fn is_possible(&self) -> bool {
        match self.class {
            StateClass::Ahead => self.d_le_m,
            // m < d ≤ n rules out m = n; an on-time state has l_{m+1} > 0 so
            // l_d > 0.
            StateClass::OnTime => !self.d_le_m && !self.m_eq_n && !self.ld_zero,
            StateClass::Behind => !self.d_le_m && !self.m_eq_n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Row {
    class: Option<StateClass>,
    arrival: Option<Arrival>,
    ld_zero: Option<bool>,
    m_eq_n: Option<bool>,
    d_le_m: Option<bool>,
    branch: Branch,
    height: HeightExpr,
}

impl Row {
    fn matches(&self, k: &DecisionKey) -> bool {
        self.class.is_none_or(|c| c == k.class)
            && self.arrival.is_none_or(|a| a == k.arrival)
            && self.ld_zero.is_none_or(|b| b == k.ld_zero)
            && self.m_eq_n.is_none_or(|b| b == k.m_eq_n)
            && self.d_le_m.is_none_or(|b| b == k.d_le_m)
    }
}

/// A policy given as a CSV decision table.
///
/// Columns are `class,arrival,ld_zero,m_eq_n,d_le_m,branch,height_expr`; any
/// key column may be `*`. The first matching row wins, and every possible key
/// must be matched by some row. Lines starting with `#` are comments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTable {
    name: String,
    rows: Vec<Row>,
}

const HEADER: [&str; 7] = [
    "class",
    "arrival",
    "ld_zero",
    "m_eq_n",
    "d_le_m",
    "branch",
    "height_expr",
];

const BUNDLED: [(&str, &str); 3] = [
    ("bait-and-switch-table", include_str!("../policies/bait-and-switch.csv")),
    ("never-bait", include_str!("../policies/never-bait.csv")),
    ("always-higher", include_str!("../policies/always-higher.csv")),
];

impl DecisionTable {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: String| Error::Parse(format!("{name}: line {}: {what}", lineno + 1));
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != HEADER.len() {
                return Err(bad(format!("expected {} columns, found {}", HEADER.len(), cells.len())));
            }
            if !header_seen {
                if cells != HEADER {
                    return Err(bad(format!("header must be `{}`", HEADER.join(","))));
                }
                header_seen = true;
                continue;
            }
            let wild = |c: &str| c == "*";
            let flag = |c: &str| -> Result<Option<bool>> {
                match c {
                    "*" => Ok(None),
                    "true" => Ok(Some(true)),
                    "false" => Ok(Some(false)),
                    other => Err(bad(format!("expected true, false or *, found {other:?}"))),
                }
            };
            let class = match cells[0] {
                c if wild(c) => None,
                "ahead" => Some(StateClass::Ahead),
                "on-time" => Some(StateClass::OnTime),
                "behind" => Some(StateClass::Behind),
                other => return Err(bad(format!("unknown class {other:?}"))),
            };
            let arrival = match cells[1] {
                c if wild(c) => None,
                "A" => Some(Arrival::A),
                "H" => Some(Arrival::H),
                other => return Err(bad(format!("unknown arrival {other:?}"))),
            };
            let branch = match cells[5] {
                "higher" => Branch::Higher,
                "lower" => Branch::Lower,
                other => return Err(bad(format!("unknown branch {other:?}"))),
            };
            let height = match cells[6] {
                "d" => HeightExpr::D,
                "d+1" => HeightExpr::DPlus1,
                "m+1" => HeightExpr::MPlus1,
                "n+1" => HeightExpr::NPlus1,
                other => return Err(bad(format!("unknown height expression {other:?}"))),
            };
            rows.push(Row {
                class,
                arrival,
                ld_zero: flag(cells[2])?,
                m_eq_n: flag(cells[3])?,
                d_le_m: flag(cells[4])?,
                branch,
                height,
            });
        }
        if !header_seen {
            return Err(Error::Parse(format!("{name}: empty decision table")));
        }
        let table = Self {
            name: name.to_string(),
            rows,
        };
        for key in DecisionKey::all() {
            if table.lookup(&key).is_none() {
                return Err(Error::Parse(format!("{name}: no row matches {key:?}")));
            }
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .map_or("custom".into(), |s| s.to_string_lossy().into_owned());
        Self::parse(&name, &text)
    }

    /// One of the tables shipped with the crate.
    pub fn bundled(name: &str) -> Option<Self> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| Self::parse(n, text).expect("bundled table parses"))
    }

    pub fn bundled_names() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(n, _)| *n)
    }

    fn lookup(&self, key: &DecisionKey) -> Option<(Branch, HeightExpr)> {
        self.rows.iter().find(|r| r.matches(key)).map(|r| (r.branch, r.height))
    }
}

impl Policy for DecisionTable {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&self, s: &CompactState, arrival: Arrival) -> ActionKind {
        let (branch, height) = self
            .lookup(&DecisionKey::of(s, arrival))
            .expect("tables are checked for completeness when parsed");
        ActionKind {
            branch,
            height: height.eval(s),
        }
    }
}

/// A policy selectable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyId {
    BaitAndSwitch,
    PrivateMining,
    TargetBaitAndSwitch,
    Custom(Arc<DecisionTable>),
}

impl PolicyId {
    /// Built-in policies and bundled tables by name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "bait-and-switch" => Ok(Self::BaitAndSwitch),
            "private-mining" => Ok(Self::PrivateMining),
            "target-bait-and-switch" => Ok(Self::TargetBaitAndSwitch),
            other => DecisionTable::bundled(other)
                .map(|t| Self::Custom(Arc::new(t)))
                .ok_or_else(|| Error::InvalidParameter(format!("unknown policy {other:?}"))),
        }
    }

    /// Names accepted by [`from_name`](Self::from_name).
    pub fn names() -> Vec<&'static str> {
        let mut v = vec!["bait-and-switch", "private-mining", "target-bait-and-switch"];
        v.extend(DecisionTable::bundled_names());
        v
    }
}

impl Policy for PolicyId {
    fn name(&self) -> &str {
        match self {
            Self::BaitAndSwitch => "bait-and-switch",
            Self::PrivateMining => "private-mining",
            Self::TargetBaitAndSwitch => "target-bait-and-switch",
            Self::Custom(t) => t.name(),
        }
    }

    fn decide(&self, s: &CompactState, arrival: Arrival) -> ActionKind {
        match self {
            Self::BaitAndSwitch => bait_and_switch_action(s, arrival),
            Self::PrivateMining => private_mining_action(s, arrival),
            Self::TargetBaitAndSwitch => target_bait_and_switch_action(s, arrival),
            Self::Custom(t) => t.decide(s, arrival),
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
