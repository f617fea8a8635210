//! Symbolic model of the four-box stacking task on a 3x3 grid.
//!
//! Boxes are picked from the top of a column and released on the ground or on
//! top of another column. Rows count upwards from the ground, so the topmost
//! box of a column of height `h` sits at row `h - 1` and the first free cell
//! is at row `h`.

use std::collections::HashMap;
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{ActionSpec, Cell, CELLS, GRID};
use crate::error::{Error, Result};
use crate::tuple::{ClassLabel, SymbolicTuple};

pub const NUM_BOXES: usize = 4;
/// Number of valid configurations of four distinct boxes under gravity.
pub const NUM_STATES: usize = 288;
/// Width of the one-hot cell encoding used as structured embedding features.
pub const FEATURE_DIM: usize = CELLS * (NUM_BOXES + 1);

/// One of the four distinguishable boxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoxId(u8);

impl BoxId {
    pub fn new(id: u8) -> Result<Self> {
        if (id as usize) < NUM_BOXES {
            Ok(Self(id))
        } else {
            Err(Error::InvalidParameter(format!("box id {id} >= {NUM_BOXES}")))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    fn symbol(self) -> char {
        (b'A' + self.0) as char
    }
}

/// A grid configuration, indexed as `grid[row][col]`.
///
/// Construction does not enforce the stacking invariants, so that corrupted
/// plans can be represented and diagnosed by [`BoxState::violations`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoxState {
    grid: [[Option<BoxId>; GRID]; GRID],
}

impl BoxState {
    pub fn from_grid(grid: [[Option<BoxId>; GRID]; GRID]) -> Self {
        Self { grid }
    }

    /// Parses the row-major serialization produced by [`BoxState::serialize`],
    /// e.g. `"AB.C..D.."` (row 0 first, `.` for empty).
    pub fn parse(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().filter(|c| !c.is_whitespace() && *c != '/').collect();
        if chars.len() != CELLS {
            return Err(Error::InvalidParameter(format!(
                "state string {s:?} must have {CELLS} cells"
            )));
        }
        let mut grid = [[None; GRID]; GRID];
        for (i, c) in chars.into_iter().enumerate() {
            grid[i / GRID][i % GRID] = match c {
                '.' => None,
                'A'..='D' => Some(BoxId(c as u8 - b'A')),
                other => {
                    return Err(Error::InvalidParameter(format!("bad cell symbol {other:?}")))
                }
            };
        }
        Ok(Self { grid })
    }

    pub fn serialize(&self) -> String {
        self.grid
            .iter()
            .flatten()
            .map(|c| c.map_or('.', BoxId::symbol))
            .collect()
    }

    pub fn get(&self, cell: Cell) -> Option<BoxId> {
        self.grid[cell.row as usize][cell.col as usize]
    }

    fn set(&mut self, cell: Cell, value: Option<BoxId>) {
        self.grid[cell.row as usize][cell.col as usize] = value;
    }

    /// Number of contiguous occupied cells from the ground up.
    pub fn column_height(&self, col: usize) -> usize {
        (0..GRID).take_while(|&r| self.grid[r][col].is_some()).count()
    }

    pub fn heights(&self) -> [usize; GRID] {
        [0, 1, 2].map(|c| self.column_height(c))
    }

    /// Descriptions of every broken stacking invariant; empty for a valid state.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = [0usize; NUM_BOXES];
        for b in self.grid.iter().flatten().flatten() {
            seen[b.index()] += 1;
        }
        for (i, &n) in seen.iter().enumerate() {
            let name = BoxId(i as u8).symbol();
            if n > 1 {
                out.push(format!("duplicate box {name}"));
            } else if n == 0 {
                out.push(format!("missing box {name}"));
            }
        }
        for col in 0..GRID {
            for row in 1..GRID {
                if self.grid[row][col].is_some() && self.grid[row - 1][col].is_none() {
                    out.push(format!("floating box at ({row}, {col})"));
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }

    /// One-hot encoding of each cell's content (empty or one of the boxes).
    pub fn features(&self) -> Vec<f64> {
        let mut f = vec![0.0; FEATURE_DIM];
        for (i, c) in self.grid.iter().flatten().enumerate() {
            let slot = c.map_or(0, |b| b.index() + 1);
            f[i * (NUM_BOXES + 1) + slot] = 1.0;
        }
        f
    }

    /// Every `(pick, release)` pair allowed by the stacking rules.
    pub fn legal_actions(&self) -> Vec<ActionSpec> {
        let heights = self.heights();
        let mut out = Vec::new();
        for (src, &hs) in heights.iter().enumerate() {
            if hs == 0 {
                continue;
            }
            for (dst, &hd) in heights.iter().enumerate() {
                if dst == src || hd >= GRID {
                    continue;
                }
                out.push(ActionSpec {
                    pick: Cell { row: (hs - 1) as u8, col: src as u8 },
                    release: Cell { row: hd as u8, col: dst as u8 },
                });
            }
        }
        out
    }

    /// Moves the picked box to the release cell, or names the violated rule.
    pub fn apply_action(&self, u: ActionSpec) -> Result<BoxState> {
        let Some(b) = self.get(u.pick) else {
            return Err(Error::IllegalAction(format!("no box at pick cell {}", u.pick)));
        };
        let (pr, pc) = (u.pick.row as usize, u.pick.col as usize);
        if pr + 1 < GRID && self.grid[pr + 1][pc].is_some() {
            return Err(Error::IllegalAction(format!(
                "box at {} is covered by another box",
                u.pick
            )));
        }
        if u.pick.col == u.release.col {
            return Err(Error::IllegalAction(
                "release column equals pick column".into(),
            ));
        }
        if self.get(u.release).is_some() {
            return Err(Error::IllegalAction(format!(
                "release cell {} is occupied",
                u.release
            )));
        }
        let (rr, rc) = (u.release.row as usize, u.release.col as usize);
        if rr > 0 && self.grid[rr - 1][rc].is_none() {
            return Err(Error::IllegalAction(format!(
                "release cell {} is neither on the ground nor on a box",
                u.release
            )));
        }
        let mut next = *self;
        next.set(u.pick, None);
        next.set(u.release, Some(b));
        Ok(next)
    }

    /// The single legal action taking `self` to `next`, if any.
    pub fn action_to(&self, next: &BoxState) -> Option<ActionSpec> {
        self.legal_actions()
            .into_iter()
            .find(|&u| self.apply_action(u).is_ok_and(|s| s == *next))
    }
}

impl fmt::Debug for BoxState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoxState({})", self.serialize())
    }
}

impl fmt::Display for BoxState {
    /// Renders the grid top row first, the way the boxes stand.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in (0..GRID).rev() {
            let line: String = self.grid[row]
                .iter()
                .map(|c| c.map_or('.', BoxId::symbol))
                .collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// All valid configurations, in lexicographic order of their serialization.
pub fn enumerate_states() -> Vec<BoxState> {
    let mut profiles = Vec::new();
    for h0 in 0..=GRID {
        for h1 in 0..=GRID {
            let Some(h2) = NUM_BOXES.checked_sub(h0 + h1) else {
                continue;
            };
            if h2 <= GRID {
                profiles.push([h0, h1, h2]);
            }
        }
    }
    let mut states = Vec::with_capacity(NUM_STATES);
    let mut order = [0u8, 1, 2, 3];
    for heights in profiles {
        permutations(&mut order, 0, &mut |perm| {
            let mut grid = [[None; GRID]; GRID];
            let mut next = perm.iter();
            for (col, &h) in heights.iter().enumerate() {
                for row in grid.iter_mut().take(h) {
                    row[col] = next.next().map(|&b| BoxId(b));
                }
            }
            states.push(BoxState { grid });
        });
    }
    states.sort_by_cached_key(BoxState::serialize);
    states
}

fn permutations(items: &mut [u8; NUM_BOXES], k: usize, visit: &mut impl FnMut(&[u8; NUM_BOXES])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// The enumerated state space with a reverse index from state to label.
#[derive(Clone, Debug)]
pub struct StateSpace {
    states: Vec<BoxState>,
    index: HashMap<BoxState, ClassLabel>,
}

impl Default for StateSpace {
    fn default() -> Self {
        Self::new()
    }
}

impl StateSpace {
    pub fn new() -> Self {
        let states = enumerate_states();
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Self { states, index }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[BoxState] {
        &self.states
    }

    pub fn state(&self, label: ClassLabel) -> Result<&BoxState> {
        self.states.get(label).ok_or_else(|| {
            Error::InvalidParameter(format!("label {label} out of range 0..{}", self.states.len()))
        })
    }

    pub fn label(&self, state: &BoxState) -> Option<ClassLabel> {
        self.index.get(state).copied()
    }

    /// Feature vectors for every label, in label order.
    pub fn features(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(BoxState::features).collect()
    }

    /// The legal action between two labelled states, if one exists.
    pub fn transition(&self, from: ClassLabel, to: ClassLabel) -> Option<ActionSpec> {
        let (a, b) = (self.states.get(from)?, self.states.get(to)?);
        a.action_to(b)
    }

    /// Symbolic training tuples. Action pairs draw a uniform start state and a
    /// uniform legal action; no-action pairs repeat a uniform state.
    pub fn generate_dataset(&self, n_pairs: usize, action_fraction: f64, seed: u64) -> Result<Vec<SymbolicTuple>> {
        if !(0.0..=1.0).contains(&action_fraction) {
            return Err(Error::InvalidParameter(format!(
                "action_fraction {action_fraction} outside [0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_action = (n_pairs as f64 * action_fraction).round() as usize;
        let mut out = Vec::with_capacity(n_pairs);
        for i in 0..n_pairs {
            let c1 = rng.random_range(0..self.states.len());
            if i < n_action {
                let s = self.states[c1];
                let u = *s
                    .legal_actions()
                    .choose(&mut rng)
                    .expect("every state has a legal action");
                let next = s.apply_action(u)?;
                out.push(SymbolicTuple {
                    class1: c1,
                    class2: self.index[&next],
                    action: Some(u),
                });
            } else {
                out.push(SymbolicTuple {
                    class1: c1,
                    class2: c1,
                    action: None,
                });
            }
        }
        out.shuffle(&mut rng);
        Ok(out)
    }

    /// A random walk of `steps` legal moves starting from `start`.
    pub fn random_rollout<R: Rng>(&self, start: ClassLabel, steps: usize, rng: &mut R) -> Result<(Vec<BoxState>, Vec<ActionSpec>)> {
        let mut states = vec![*self.state(start)?];
        let mut actions = Vec::with_capacity(steps);
        for _ in 0..steps {
            let s = *states.last().unwrap();
            let u = *s.legal_actions().choose(rng).expect("non-empty");
            states.push(s.apply_action(u)?);
            actions.push(u);
        }
        Ok((states, actions))
    }
}

/// Outcome of a single plan transition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionCheck {
    pub valid: bool,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanValidityReport {
    pub all_transitions_valid: bool,
    pub per_transition: Vec<TransitionCheck>,
    pub states_valid: Vec<bool>,
}

/// Checks a state and action sequence against the stacking rules: every
/// state must be a valid configuration and every action must be legal in its
/// state and produce the next state.
pub fn validate_plan(states: &[BoxState], actions: &[ActionSpec]) -> Result<PlanValidityReport> {
    if states.is_empty() || actions.len() + 1 != states.len() {
        return Err(Error::InvalidParameter(format!(
            "plan with {} states needs {} actions, got {}",
            states.len(),
            states.len().saturating_sub(1),
            actions.len()
        )));
    }
    let violations: Vec<Vec<String>> = states.iter().map(BoxState::violations).collect();
    let states_valid: Vec<bool> = violations.iter().map(Vec::is_empty).collect();
    let per_transition: Vec<TransitionCheck> = actions
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let fail = |reason: String| TransitionCheck { valid: false, reason };
            for j in [i, i + 1] {
                if let Some(v) = violations[j].first() {
                    return fail(format!("state {j}: {v}"));
                }
            }
            if !states[i].legal_actions().contains(&u) {
                let why = states[i]
                    .apply_action(u)
                    .err()
                    .map_or_else(|| "not a legal action".to_string(), |e| e.to_string());
                return fail(why);
            }
            match states[i].apply_action(u) {
                Ok(next) if next == states[i + 1] => TransitionCheck {
                    valid: true,
                    reason: "ok".into(),
                },
                Ok(_) => fail(format!("{u} does not produce state {}", i + 1)),
                Err(e) => fail(e.to_string()),
            }
        })
        .collect();
    Ok(PlanValidityReport {
        all_transitions_valid: per_transition.iter().all(|t| t.valid),
        per_transition,
        states_valid,
    })
}
