use std::fmt::Write as _;

use serde::Serialize;

use super::state::{ActionKind, Arrival, Branch, CompactState, TIMER_TOL};
use crate::error::{Error, Result};
use crate::format::fmt_sig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockKind {
    Genesis,
    A,
    H,
}

/// One block of the reference tree. `timer` is `f64::INFINITY` for blocks
/// that no honest node is obliged to learn about yet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Block {
    pub index: usize,
    pub parent: Option<usize>,
    pub height: u32,
    pub kind: BlockKind,
    pub timer: f64,
    pub arrival_time: f64,
}

/// A block arrival for [`BlockTree::apply`].
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEvent {
    pub kind: Arrival,
    /// Seconds since the previous event.
    pub elapsed: f64,
    /// Index of the block the new block extends.
    pub parent: usize,
    /// Blocks whose chains the adversary publishes right before the arrival.
    pub publish: Vec<usize>,
}

/// Full block tree with per-block timers.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTree {
    blocks: Vec<Block>,
    /// Height-1 ancestor of every block (`None` for genesis).
    roots: Vec<Option<usize>>,
    clock: f64,
    delta: f64,
}

impl BlockTree {
    /// Tree holding only the (public) genesis block at time 0.
    pub fn new(delta: f64) -> Self {
        Self {
            blocks: vec![Block {
                index: 0,
                parent: None,
                height: 0,
                kind: BlockKind::Genesis,
                timer: 0.0,
                arrival_time: 0.0,
            }],
            roots: vec![None],
            clock: 0.0,
            delta,
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Returns the tree after `event`.
    pub fn apply(&self, event: &TreeEvent) -> Result<Self> {
        let mut t = self.clone();
        t.apply_in_place(event)?;
        Ok(t)
    }

    pub fn apply_in_place(&mut self, event: &TreeEvent) -> Result<()> {
        if event.elapsed.is_nan() || event.elapsed < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "elapsed time must be >= 0, got {}",
                event.elapsed
            )));
        }
        self.arrive_at(self.clock + event.elapsed, event.kind, event.parent, &event.publish)
    }

    fn arrive_at(&mut self, time: f64, kind: Arrival, parent: usize, publish: &[usize]) -> Result<()> {
        if parent >= self.blocks.len() {
            return Err(Error::InvalidParameter(format!("unknown parent block {parent}")));
        }
        for &b in publish {
            if b >= self.blocks.len() {
                return Err(Error::InvalidParameter(format!("unknown block {b} to publish")));
            }
        }
        let dt = time - self.clock;
        self.clock = time;
        if dt > 0.0 {
            for b in &mut self.blocks {
                if b.timer.is_finite() {
                    b.timer = (b.timer - dt).max(0.0);
                    if b.timer <= TIMER_TOL {
                        b.timer = 0.0;
                    }
                }
            }
        }
        for &b in publish {
            let mut cur = Some(b);
            while let Some(i) = cur {
                self.blocks[i].timer = 0.0;
                cur = self.blocks[i].parent;
            }
        }
        let height = self.blocks[parent].height + 1;
        let index = self.blocks.len();
        let timer = match kind {
            Arrival::A => f64::INFINITY,
            Arrival::H => {
                let public = self.public_height();
                if height <= public {
                    return Err(Error::Inadmissible {
                        state: format!("tree with {index} blocks, public height {public}"),
                        action: format!("H-block {index} at height {height}"),
                        reason: "an H-block must be higher than the public height".into(),
                    });
                }
                let fresh = if self.delta <= TIMER_TOL { 0.0 } else { self.delta };
                let mut cur = Some(parent);
                while let Some(i) = cur {
                    if self.blocks[i].timer > fresh {
                        self.blocks[i].timer = fresh;
                    }
                    cur = self.blocks[i].parent;
                }
                fresh
            }
        };
        self.blocks.push(Block {
            index,
            parent: Some(parent),
            height,
            kind: match kind {
                Arrival::A => BlockKind::A,
                Arrival::H => BlockKind::H,
            },
            timer,
            arrival_time: time,
        });
        self.roots
            .push(if parent == 0 { Some(index) } else { self.roots[parent] });
        Ok(())
    }

    /// Height of the highest block whose timer has expired.
    pub fn public_height(&self) -> u32 {
        self.blocks
            .iter()
            .filter(|b| b.timer <= TIMER_TOL)
            .map(|b| b.height)
            .max()
            .unwrap_or(0)
    }

    /// Branches as `(height-1 block, branch height)`, highest first. Equal
    /// heights are ordered by the index of the height-1 block.
    pub fn branches(&self) -> Vec<(usize, u32)> {
        let mut heights: Vec<(usize, u32)> = Vec::new();
        for (b, root) in self.blocks.iter().zip(&self.roots) {
            let Some(r) = *root else { continue };
            match heights.iter_mut().find(|(x, _)| *x == r) {
                Some(entry) => entry.1 = entry.1.max(b.height),
                None => heights.push((r, b.height)),
            }
        }
        heights.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
        heights
    }

    /// Two distinct branches are credible and at least `k` high.
    pub fn is_violation(&self, k: u32) -> bool {
        let bar = k.max(self.public_height());
        self.branches().iter().filter(|(_, h)| *h >= bar).count() >= 2
    }

    /// Reduces the tree to the compact state: the two highest branches,
    /// per-height minimum timers, heights below `m∧d` treated as expired.
    pub fn to_compact(&self) -> CompactState {
        let branches = self.branches();
        let n = branches.first().map_or(0, |b| b.1);
        let m = branches.get(1).map_or(0, |b| b.1);
        let top = self.blocks.iter().map(|b| b.height).max().unwrap_or(0) as usize;
        let mut min_timer = vec![f64::INFINITY; top + 1];
        for b in &self.blocks {
            let slot = &mut min_timer[b.height as usize];
            *slot = slot.min(b.timer);
        }
        let d = min_timer.iter().rposition(|t| t.is_finite()).unwrap_or(0) as u32;
        let tree_public = min_timer.iter().rposition(|&t| t <= TIMER_TOL).unwrap_or(0) as u32;
        let public = tree_public.max(m.min(d).saturating_sub(1));
        let pending = min_timer[(public + 1) as usize..=d as usize].to_vec();
        CompactState::from_parts(m, d, n, public, pending, self.delta)
    }

    /// Parent block realizing a compact-state placement.
    ///
    /// A placement at height 1 starts a new branch on genesis. Otherwise the
    /// parent is the ancestor at height `i − 1` of the branch's highest block.
    pub fn parent_for(&self, action: ActionKind) -> Result<usize> {
        if action.height <= 1 {
            return Ok(0);
        }
        let branches = self.branches();
        let slot = match action.branch {
            Branch::Higher => 0,
            Branch::Lower => 1,
        };
        let Some(&(root, height)) = branches.get(slot) else {
            return Err(Error::InvalidParameter(format!("no branch for {action}")));
        };
        if action.height > height + 1 {
            return Err(Error::InvalidParameter(format!(
                "{action} exceeds branch height {height} + 1"
            )));
        }
        let tip = self
            .blocks
            .iter()
            .zip(&self.roots)
            .filter(|(b, r)| **r == Some(root) && b.height == height)
            .map(|(b, _)| b.index)
            .min()
            .unwrap_or(root);
        let mut cur = tip;
        while self.blocks[cur].height > action.height - 1 {
            cur = self.blocks[cur].parent.unwrap_or(0);
        }
        Ok(cur)
    }

    /// One line `t_b kind parent` per non-genesis block, times with 15
    /// significant digits.
    pub fn to_trace(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks[1..] {
            let kind = if b.kind == BlockKind::A { "A" } else { "H" };
            let _ = writeln!(
                out,
                "{} {} {}",
                fmt_sig(b.arrival_time, 15),
                kind,
                b.parent.unwrap_or(0)
            );
        }
        out
    }

    /// Rebuilds a tree from [`to_trace`](Self::to_trace) output. Blank lines
    /// and `#` comments are skipped. A time not after the previous one is
    /// moved to the next representable value.
    pub fn from_trace(text: &str, delta: f64) -> Result<Self> {
        let mut tree = Self::new(delta);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::Parse(format!("trace line {}: {what}: {line:?}", lineno + 1));
            let mut parts = line.split_whitespace();
            let (Some(t), Some(kind), Some(parent), None) = (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(bad("expected `t_b kind parent`"));
            };
            let mut t: f64 = t.parse().map_err(|_| bad("bad time"))?;
            if !t.is_finite() {
                return Err(bad("bad time"));
            }
            let kind = match kind {
                "A" => Arrival::A,
                "H" => Arrival::H,
                _ => return Err(bad("kind must be A or H")),
            };
            let parent: usize = parent.parse().map_err(|_| bad("bad parent index"))?;
            if t <= tree.clock {
                t = f64::from_bits(tree.clock.to_bits() + 1);
            }
            tree.arrive_at(t, kind, parent, &[])?;
        }
        Ok(tree)
    }
}
