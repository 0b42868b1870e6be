//! Acceptance decisions: the optimal interval policy read off a threshold
//! table, and a fixed-window policy that splits the horizon into one phase
//! per monotone block.

use serde::{Deserialize, Serialize};

use crate::bellman::{check_unit, Direction, ProblemSpec, ThresholdTable};
use crate::error::{Error, Result};

/// Chooser state before observation `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChooserState {
    /// Index of the next observation, `1..=n+1`.
    pub i: usize,
    /// Last selected value, 0 before the first selection.
    pub s: f64,
    /// Current block index.
    pub k: usize,
    /// Selections so far.
    pub count: usize,
}

impl ChooserState {
    pub fn initial() -> Self {
        Self {
            i: 1,
            s: 0.0,
            k: 0,
            count: 0,
        }
    }
}

impl Default for ChooserState {
    fn default() -> Self {
        Self::initial()
    }
}

/// Closed acceptance interval `[lo, hi]`; `lo > hi` encodes the empty set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const EMPTY: Interval = Interval { lo: 1.0, hi: 0.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub accepted: bool,
    pub new_state: ChooserState,
    pub interval: Interval,
}

/// A non-randomised Markov selection rule.
pub trait Policy: Sync {
    fn spec(&self) -> &ProblemSpec;

    fn decide(&self, state: &ChooserState, x: f64) -> Result<Decision>;

    fn name(&self) -> &'static str;
}

fn check_step(spec: &ProblemSpec, state: &ChooserState, x: f64) -> Result<()> {
    if state.i == 0 || state.i > spec.n() {
        return Err(Error::HorizonExhausted {
            step: state.i,
            n: spec.n(),
        });
    }
    check_unit(x)?;
    check_unit(state.s)?;
    spec.check_block(state.k)
}

/// Applies the optimal interval at `state` to observation `x`. Accepting on
/// the far side of `s` starts the next block.
pub fn optimal_accept(tt: &ThresholdTable, state: &ChooserState, x: f64) -> Result<Decision> {
    check_step(tt.spec(), state, x)?;
    let (a, b) = tt.interval_at(state.i, state.s, state.k)?;
    let interval = Interval::new(a, b);
    let mut next = ChooserState {
        i: state.i + 1,
        ..*state
    };
    let accepted = interval.contains(x);
    if accepted {
        let turning = match Direction::of_block(state.k) {
            Direction::Up => x < state.s,
            Direction::Down => x > state.s,
        };
        if turning {
            next.k += 1;
        }
        next.s = x;
        next.count += 1;
    }
    Ok(Decision {
        accepted,
        new_state: next,
        interval,
    })
}

/// Window half of the split policy: phases of `floor(n/(d+1))` steps, each
/// accepting within `sqrt(2(d+1)/n)` of the last selection in the phase's
/// direction. Phases restart from 0 (up) or 1 (down); trailing steps beyond
/// the last full phase are ignored.
pub fn heuristic_window_accept(
    spec: &ProblemSpec,
    state: &ChooserState,
    x: f64,
) -> Result<Decision> {
    check_step(spec, state, x)?;
    let phase_len = spec.n() / spec.blocks();
    let width = window_width(spec);
    let phase = (state.i - 1)
        .checked_div(phase_len)
        .unwrap_or(spec.blocks());

    let mut next = ChooserState {
        i: state.i + 1,
        ..*state
    };
    if phase > spec.d() {
        return Ok(Decision {
            accepted: false,
            new_state: next,
            interval: Interval::EMPTY,
        });
    }
    if phase > state.k {
        next.k = phase;
        next.s = match Direction::of_block(phase) {
            Direction::Up => 0.0,
            Direction::Down => 1.0,
        };
    }
    let s = next.s;
    let interval = match Direction::of_block(next.k) {
        Direction::Up => Interval::new(s, (s + width).min(1.0)),
        Direction::Down => Interval::new((s - width).max(0.0), s),
    };
    let accepted = interval.contains(x);
    if accepted {
        next.s = x;
        next.count += 1;
    }
    Ok(Decision {
        accepted,
        new_state: next,
        interval,
    })
}

pub fn window_width(spec: &ProblemSpec) -> f64 {
    (2.0 * spec.blocks() as f64 / spec.n() as f64).sqrt()
}

pub struct OptimalPolicy<'a> {
    tt: &'a ThresholdTable,
}

impl<'a> OptimalPolicy<'a> {
    pub fn new(tt: &'a ThresholdTable) -> Self {
        Self { tt }
    }
}

impl Policy for OptimalPolicy<'_> {
    fn spec(&self) -> &ProblemSpec {
        self.tt.spec()
    }

    fn decide(&self, state: &ChooserState, x: f64) -> Result<Decision> {
        optimal_accept(self.tt, state, x)
    }

    fn name(&self) -> &'static str {
        "optimal"
    }
}

pub struct WindowPolicy {
    spec: ProblemSpec,
}

impl WindowPolicy {
    pub fn new(spec: ProblemSpec) -> Self {
        Self { spec }
    }
}

impl Policy for WindowPolicy {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn decide(&self, state: &ChooserState, x: f64) -> Result<Decision> {
        heuristic_window_accept(&self.spec, state, x)
    }

    fn name(&self) -> &'static str {
        "heuristic"
    }
}
