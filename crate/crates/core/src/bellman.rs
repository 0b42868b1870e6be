//! Backward induction for the optimal selection of a d-modal subsequence.
//!
//! The state before observation `i` is the last selected value `s` and the
//! index `k` of the monotone block currently being built. Block 0 is
//! increasing and the blocks alternate, so even blocks go up and odd blocks
//! go down. A selection on the far side of `s` starts the next block, which
//! is only possible while `k < d`.
//!
//! Value functions are stored on a uniform grid over `[0, 1]` and extended
//! between grid points by linear interpolation. Because `x -> v(x, k)` is
//! monotone, each `max` inside the Bellman integral switches branch exactly
//! once, so every grid state costs one binary search plus a lookup in the
//! cumulative integral of the piecewise-linear row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the acceptance boundary search in `x`.
pub const TOL_X: f64 = 1e-9;

/// Value comparisons within this tolerance count as indifference, and
/// indifference is resolved toward accepting.
pub const TIE_TOL: f64 = 1e-12;

/// One instance of the selection problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    n: usize,
    d: usize,
    grid_size: usize,
}

impl ProblemSpec {
    /// `n` observations, at most `d` turns, `grid_size` points on `[0, 1]`.
    pub fn new(n: usize, d: usize, grid_size: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("horizon n must be at least 1".into()));
        }
        if grid_size < 2 {
            return Err(Error::Argument(format!(
                "grid size must be at least 2, got {grid_size}"
            )));
        }
        Ok(Self { n, d, grid_size })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn blocks(&self) -> usize {
        self.d + 1
    }

    /// Spacing between grid points.
    pub fn step(&self) -> f64 {
        1.0 / (self.grid_size - 1) as f64
    }

    pub fn grid_point(&self, j: usize) -> f64 {
        grid_x(j, self.grid_size)
    }

    pub fn turn_available(&self, k: usize) -> bool {
        k < self.d
    }

    pub(crate) fn check_block(&self, k: usize) -> Result<()> {
        if k > self.d {
            return Err(Error::Domain(format!(
                "block index {k} exceeds turn budget d = {}",
                self.d
            )));
        }
        Ok(())
    }

    /// Same problem without the grid, for comparing specs across tables.
    pub fn same_problem(&self, other: &ProblemSpec) -> bool {
        self.n == other.n && self.d == other.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn of_block(k: usize) -> Self {
        if k.is_multiple_of(2) {
            Direction::Up
        } else {
            Direction::Down
        }
    }
}

pub(crate) fn check_unit(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("value {s} is outside [0, 1]")));
    }
    Ok(())
}

/// Closed form of `v_n(s, k)`: the expected number of selections when a
/// single observation remains.
pub fn terminal_value(spec: &ProblemSpec, s: f64, k: usize) -> Result<f64> {
    check_unit(s)?;
    spec.check_block(k)?;
    if spec.turn_available(k) {
        return Ok(1.0);
    }
    Ok(match Direction::of_block(k) {
        Direction::Up => 1.0 - s,
        Direction::Down => s,
    })
}

/// Grid position of `s`: cell index and fractional offset inside the cell.
/// Grid points themselves map to an offset of exactly zero.
fn locate(grid_size: usize, s: f64) -> (usize, f64) {
    let t = s * (grid_size - 1) as f64;
    let nearest = t.round();
    if (t - nearest).abs() <= 1e-9 {
        let j = nearest as usize;
        if j == grid_size - 1 {
            return (j - 1, 1.0);
        }
        return (j, 0.0);
    }
    let j = (t.floor() as usize).min(grid_size - 2);
    (j, t - j as f64)
}

fn grid_x(j: usize, grid_size: usize) -> f64 {
    j as f64 / (grid_size - 1) as f64
}

pub(crate) fn interpolate(row: &[f64], s: f64) -> f64 {
    let (j, frac) = locate(row.len(), s);
    if frac == 0.0 {
        return row[j];
    }
    if frac == 1.0 {
        return row[j + 1];
    }
    row[j] + frac * (row[j + 1] - row[j])
}

/// Cumulative integral of the piecewise-linear interpolant of `row`.
struct Cumulative {
    at_grid: Vec<f64>,
    step: f64,
}

impl Cumulative {
    fn new(row: &[f64], step: f64) -> Self {
        let mut at_grid = Vec::with_capacity(row.len());
        let mut acc = 0.0;
        at_grid.push(acc);
        for w in row.windows(2) {
            acc += 0.5 * step * (w[0] + w[1]);
            at_grid.push(acc);
        }
        Self { at_grid, step }
    }

    fn at(&self, row: &[f64], x: f64) -> f64 {
        let (j, t) = locate(row.len(), x);
        if t == 0.0 {
            return self.at_grid[j];
        }
        if t == 1.0 {
            return self.at_grid[j + 1];
        }
        self.at_grid[j] + self.step * (t * row[j] + 0.5 * t * t * (row[j + 1] - row[j]))
    }
}

/// Upper end of the acceptance region above grid point `j`, for a branch
/// whose continuation row is non-increasing in `x`. Returns `s` itself when
/// even `x = s` is not worth accepting.
fn upper_switch(row: &[f64], current: f64, j: usize, step: f64) -> f64 {
    let gain = |t: usize| 1.0 + row[t] - current;
    let s = grid_x(j, row.len());
    if gain(j) < -TIE_TOL {
        return s;
    }
    let m = row.len();
    // last index t >= j with gain(t) >= -TIE_TOL
    let run = row[j..].partition_point(|&v| 1.0 + v - current >= -TIE_TOL);
    let t = j + run - 1;
    if t == m - 1 {
        return 1.0;
    }
    let (g0, g1) = (gain(t), gain(t + 1));
    let x0 = grid_x(t, m);
    if g0 <= 0.0 {
        return x0;
    }
    (x0 + step * g0 / (g0 - g1)).min(grid_x(t + 1, m))
}

/// Lower end of the acceptance region below grid point `j`, for a branch
/// whose continuation row is non-decreasing in `x`.
fn lower_switch(row: &[f64], current: f64, j: usize, step: f64) -> f64 {
    let gain = |t: usize| 1.0 + row[t] - current;
    let s = grid_x(j, row.len());
    if gain(j) < -TIE_TOL {
        return s;
    }
    // first index t <= j with gain(t) >= -TIE_TOL
    let t = row[..=j].partition_point(|&v| 1.0 + v - current < -TIE_TOL);
    if t == 0 {
        return 0.0;
    }
    let (g0, g1) = (gain(t - 1), gain(t));
    let x1 = grid_x(t, row.len());
    if g1 <= 0.0 {
        return x1;
    }
    (x1 - step * g1 / (g1 - g0)).max(grid_x(t - 1, row.len()))
}

/// The part of the Bellman integral over `[s, 1]`, and the upper threshold.
fn above_branch(
    row: Option<(&[f64], &Cumulative)>,
    current: f64,
    j: usize,
    m: usize,
) -> (f64, f64) {
    let s = grid_x(j, m);
    let step = 1.0 / (m - 1) as f64;
    match row {
        None => (s, (1.0 - s) * current),
        Some((row, cum)) => {
            let b = upper_switch(row, current, j, step);
            let integral = (b - s) + cum.at(row, b) - cum.at_grid[j] + (1.0 - b) * current;
            (b, integral)
        }
    }
}

/// The part of the Bellman integral over `[0, s]`, and the lower threshold.
fn below_branch(
    row: Option<(&[f64], &Cumulative)>,
    current: f64,
    j: usize,
    m: usize,
) -> (f64, f64) {
    let s = grid_x(j, m);
    let step = 1.0 / (m - 1) as f64;
    match row {
        None => (s, s * current),
        Some((row, cum)) => {
            let a = lower_switch(row, current, j, step);
            let integral = a * current + (s - a) + cum.at_grid[j] - cum.at(row, a);
            (a, integral)
        }
    }
}

/// One backward step: given the rows of `v_{i+1}`, produce `v_i(s_j, k)` and
/// the acceptance interval `[a, b]` for block `k` at grid point `j`.
struct Stage<'a> {
    spec: &'a ProblemSpec,
    rows: Vec<&'a [f64]>,
    cums: Vec<Cumulative>,
}

impl<'a> Stage<'a> {
    fn new(spec: &'a ProblemSpec, next: &'a [f64]) -> Self {
        let m = spec.grid_size();
        let rows: Vec<&[f64]> = next.chunks_exact(m).collect();
        let cums = rows
            .iter()
            .map(|r| Cumulative::new(r, spec.step()))
            .collect();
        Self { spec, rows, cums }
    }

    fn branch(&self, k: usize) -> Option<(&[f64], &Cumulative)> {
        Some((self.rows[k], &self.cums[k]))
    }

    /// Returns `(a, b, value)`.
    fn evaluate(&self, k: usize, j: usize) -> (f64, f64, f64) {
        let m = self.spec.grid_size();
        let current = self.rows[k][j];
        let turn = if self.spec.turn_available(k) {
            self.branch(k + 1)
        } else {
            None
        };
        let ((a, below), (b, above)) = match Direction::of_block(k) {
            Direction::Up => (
                below_branch(turn, current, j, m),
                above_branch(self.branch(k), current, j, m),
            ),
            Direction::Down => (
                below_branch(self.branch(k), current, j, m),
                above_branch(turn, current, j, m),
            ),
        };
        (a, b, below + above)
    }
}

/// Optimal expected number of future selections on the grid, for every time
/// step `1..=n+1` and block `0..=d`.
#[derive(Clone, PartialEq)]
pub struct ValueTable {
    spec: ProblemSpec,
    values: Vec<f64>,
}

impl std::fmt::Debug for ValueTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ValueTable")
            .field("spec", &self.spec)
            .field("v_1(0,0)", &self.initial_value())
            .finish()
    }
}

impl ValueTable {
    pub(crate) fn from_raw(spec: ProblemSpec, values: Vec<f64>) -> Result<Self> {
        let expected = (spec.n() + 1) * spec.blocks() * spec.grid_size();
        if values.len() != expected {
            return Err(Error::State(format!(
                "expected {expected} values, found {}",
                values.len()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    #[cfg(test)]
    pub(crate) fn raw(&self) -> &[f64] {
        &self.values
    }

    fn offset(&self, i: usize, k: usize) -> usize {
        ((i - 1) * self.spec.blocks() + k) * self.spec.grid_size()
    }

    /// All blocks of time step `i`, laid out block after block.
    fn stage(&self, i: usize) -> &[f64] {
        let len = self.spec.blocks() * self.spec.grid_size();
        let start = self.offset(i, 0);
        &self.values[start..start + len]
    }

    /// Grid values of `v_i(., k)`. Panics when `i` or `k` is out of range.
    pub fn row(&self, i: usize, k: usize) -> &[f64] {
        assert!((1..=self.spec.n() + 1).contains(&i) && k <= self.spec.d());
        let start = self.offset(i, k);
        &self.values[start..start + self.spec.grid_size()]
    }

    /// `v_1(0, 0)`, the optimal expected length.
    pub fn initial_value(&self) -> f64 {
        self.row(1, 0)[0]
    }

    /// `v_i(s, k)`, linearly interpolated between grid points.
    pub fn value_at(&self, i: usize, s: f64, k: usize) -> Result<f64> {
        if !(1..=self.spec.n() + 1).contains(&i) {
            return Err(Error::Domain(format!(
                "time index {i} outside 1..={}",
                self.spec.n() + 1
            )));
        }
        check_unit(s)?;
        self.spec.check_block(k)?;
        Ok(interpolate(self.row(i, k), s))
    }

    /// Unchecked interpolation for hot loops that already validated inputs.
    pub(crate) fn value_unchecked(&self, i: usize, s: f64, k: usize) -> f64 {
        interpolate(self.row(i, k), s)
    }
}

/// Fills the value table by backward induction from `v_{n+1} = 0`.
pub fn solve_value_table(spec: &ProblemSpec) -> ValueTable {
    let (n, m, blocks) = (spec.n(), spec.grid_size(), spec.blocks());
    let stage_len = blocks * m;
    let mut values = vec![0.0; (n + 1) * stage_len];
    for i in (1..=n).rev() {
        let (head, tail) = values.split_at_mut(i * stage_len);
        let next = &tail[..stage_len];
        let out = &mut head[(i - 1) * stage_len..];
        let stage = Stage::new(spec, next);
        for k in 0..blocks {
            for j in 0..m {
                out[k * m + j] = stage.evaluate(k, j).2;
            }
        }
    }
    ValueTable {
        spec: *spec,
        values,
    }
}

/// Acceptance intervals `[a(i,s,k), b(i,s,k)]` of the optimal policy on the
/// grid, for `i` in `1..=n`.
#[derive(Clone, PartialEq)]
pub struct ThresholdTable {
    spec: ProblemSpec,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl std::fmt::Debug for ThresholdTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ThresholdTable")
            .field("spec", &self.spec)
            .finish_non_exhaustive()
    }
}

impl ThresholdTable {
    pub(crate) fn from_raw(spec: ProblemSpec, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let expected = spec.n() * spec.blocks() * spec.grid_size();
        if lower.len() != expected || upper.len() != expected {
            return Err(Error::State(format!(
                "expected {expected} thresholds per side, found {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        Ok(Self { spec, lower, upper })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn range(&self, i: usize, k: usize) -> std::ops::Range<usize> {
        assert!((1..=self.spec.n()).contains(&i) && k <= self.spec.d());
        let start = ((i - 1) * self.spec.blocks() + k) * self.spec.grid_size();
        start..start + self.spec.grid_size()
    }

    /// Grid values of `a(i, ., k)`.
    pub fn lower_row(&self, i: usize, k: usize) -> &[f64] {
        &self.lower[self.range(i, k)]
    }

    /// Grid values of `b(i, ., k)`.
    pub fn upper_row(&self, i: usize, k: usize) -> &[f64] {
        &self.upper[self.range(i, k)]
    }

    /// Interval at an arbitrary `s`, interpolating each endpoint between grid
    /// rows and clamping so that `a <= s <= b` survives rounding.
    pub fn interval_at(&self, i: usize, s: f64, k: usize) -> Result<(f64, f64)> {
        if !(1..=self.spec.n()).contains(&i) {
            return Err(Error::HorizonExhausted {
                step: i,
                n: self.spec.n(),
            });
        }
        check_unit(s)?;
        self.spec.check_block(k)?;
        let mut a = interpolate(self.lower_row(i, k), s).clamp(0.0, s);
        let mut b = interpolate(self.upper_row(i, k), s).clamp(s, 1.0);
        if !self.spec.turn_available(k) {
            match Direction::of_block(k) {
                Direction::Up => a = s,
                Direction::Down => b = s,
            }
        }
        Ok((a, b))
    }

    #[cfg(test)]
    pub(crate) fn raw(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }
}

/// Indifference thresholds of the optimal policy, found with the same switch
/// point search that the solver integrates against.
pub fn compute_thresholds(vt: &ValueTable) -> Result<ThresholdTable> {
    let spec = vt.spec;
    let (n, m, blocks) = (spec.n(), spec.grid_size(), spec.blocks());
    let terminal = vt.stage(n + 1);
    if terminal.iter().any(|&v| v != 0.0) {
        return Err(Error::State("v_{n+1} is not identically zero".into()));
    }
    if let Some(pos) = vt.values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::State(format!(
            "entry {pos} is not a finite non-negative value"
        )));
    }
    let stage_len = blocks * m;
    let mut lower = vec![0.0; n * stage_len];
    let mut upper = vec![0.0; n * stage_len];
    for i in 1..=n {
        let stage = Stage::new(&spec, vt.stage(i + 1));
        let base = (i - 1) * stage_len;
        for k in 0..blocks {
            for j in 0..m {
                let (a, b, _) = stage.evaluate(k, j);
                lower[base + k * m + j] = a;
                upper[base + k * m + j] = b;
            }
        }
    }
    Ok(ThresholdTable { spec, lower, upper })
}

/// Bounds on `v_1(0,0)` for the d-modal problem: upper `sqrt(c n)` and lower
/// `sqrt(c n) - c^{3/4} sqrt(pi/3) n^{1/4} - slack`, with `c = 2(d+1)`.
pub fn mean_bounds(n: usize, d: usize, slack: f64) -> (f64, f64) {
    let c = 2.0 * (d as f64 + 1.0);
    let n = n as f64;
    let upper = (c * n).sqrt();
    let lower = upper - c.powf(0.75) * (std::f64::consts::PI / 3.0).sqrt() * n.powf(0.25) - slack;
    (lower, upper)
}

/// Default constant absorbing the unquantified O(1) term of the lower bound.
pub const DEFAULT_SLACK: f64 = 5.0;
