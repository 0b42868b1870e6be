//! Policy runs on seeded uniform streams.
//!
//! Observation streams come from `ChaCha8Rng::seed_from_u64(seed)`, one
//! `f64` in `[0, 1)` per step. A batch with base seed `b` gives run `j` the
//! seed equal to the `j`-th output (0-based) of SplitMix64 seeded with `b`,
//! so every run is reproducible on its own and the batch result does not
//! depend on how runs are scheduled across threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::bellman::{Direction, ProblemSpec, ValueTable};
use crate::error::{Error, Result};
use crate::policy::{ChooserState, Interval, Policy, WindowPolicy};
use crate::stats::{clt_statistic, Moments};

pub const SEED_RULE: &str =
    "run j uses output j of SplitMix64(base_seed); stream is ChaCha8Rng::seed_from_u64(run seed)";

/// `n` uniform draws for one run.
pub fn draw_stream(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Per-run seeds of a batch.
pub fn batch_seeds(base_seed: u64, reps: usize) -> Vec<u64> {
    let mut split = SplitMix64::seed_from_u64(base_seed);
    (0..reps).map(|_| split.random::<u64>()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub x: f64,
    pub interval: Interval,
    pub accepted: bool,
    pub s_after: f64,
    pub k_after: usize,
    /// Martingale value `Y_i = count_i + v_{i+1}(s_i, k_i)`.
    pub y: f64,
    /// `Y_i - Y_{i-1}`.
    pub d_inc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub spec: ProblemSpec,
    /// `Y_0 = v_1(0, 0)`.
    pub y0: f64,
    pub steps: Vec<Step>,
    pub final_length: usize,
}

impl Trajectory {
    pub fn accepted_values(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.steps
            .iter()
            .filter(|s| s.accepted)
            .map(|s| (s.x, s.k_after))
    }

    /// Accepted values split at block changes form at most `d+1` monotone
    /// blocks, alternating in direction and starting upward.
    pub fn is_feasible(&self) -> bool {
        let mut prev: Option<(f64, usize)> = None;
        for (x, k) in self.accepted_values() {
            if k > self.spec.d() {
                return false;
            }
            if let Some((px, pk)) = prev {
                if k < pk {
                    return false;
                }
                if k == pk {
                    let ok = match Direction::of_block(k) {
                        Direction::Up => x >= px,
                        Direction::Down => x <= px,
                    };
                    if !ok {
                        return false;
                    }
                }
            }
            prev = Some((x, k));
        }
        true
    }

    pub fn max_abs_increment(&self) -> f64 {
        self.steps.iter().map(|s| s.d_inc.abs()).fold(0.0, f64::max)
    }

    pub fn sum_sq_increments(&self) -> f64 {
        self.steps.iter().map(|s| s.d_inc * s.d_inc).sum()
    }

    /// State before each step, paired with that step.
    pub fn states_before(&self) -> impl Iterator<Item = (usize, f64, usize, &Step)> + '_ {
        let mut s = 0.0;
        let mut k = 0;
        self.steps.iter().enumerate().map(move |(idx, step)| {
            let before = (idx + 1, s, k, step);
            s = step.s_after;
            k = step.k_after;
            before
        })
    }

    /// CSV with columns `step,x,a,b,accepted,s,k,y,d_inc`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,x,a,b,accepted,s,k,y,d_inc")?;
        for (idx, st) in self.steps.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                idx + 1,
                st.x,
                st.interval.lo,
                st.interval.hi,
                u8::from(st.accepted),
                st.s_after,
                st.k_after,
                st.y,
                st.d_inc
            )?;
        }
        Ok(())
    }
}

fn check_tables<P: Policy + ?Sized>(policy: &P, vt: &ValueTable) -> Result<()> {
    if policy.spec() != vt.spec() {
        return Err(Error::Config(format!(
            "policy is for {:?} but value table is for {:?}",
            policy.spec(),
            vt.spec()
        )));
    }
    Ok(())
}

/// Runs `policy` on an explicit observation stream of length `n`.
pub fn run_trajectory_on<P: Policy + ?Sized>(
    policy: &P,
    vt: &ValueTable,
    xs: &[f64],
) -> Result<Trajectory> {
    check_tables(policy, vt)?;
    let spec = *policy.spec();
    if xs.len() != spec.n() {
        return Err(Error::Argument(format!(
            "stream has {} observations, horizon is {}",
            xs.len(),
            spec.n()
        )));
    }
    let y0 = vt.initial_value();
    let mut state = ChooserState::initial();
    let mut prev_y = y0;
    let mut steps = Vec::with_capacity(xs.len());
    for &x in xs {
        let dec = policy.decide(&state, x)?;
        state = dec.new_state;
        let y = state.count as f64 + vt.value_unchecked(state.i, state.s, state.k);
        steps.push(Step {
            x,
            interval: dec.interval,
            accepted: dec.accepted,
            s_after: state.s,
            k_after: state.k,
            y,
            d_inc: y - prev_y,
        });
        prev_y = y;
    }
    Ok(Trajectory {
        spec,
        y0,
        steps,
        final_length: state.count,
    })
}

/// Runs `policy` on the stream drawn from `seed`.
pub fn run_trajectory<P: Policy + ?Sized>(
    policy: &P,
    vt: &ValueTable,
    seed: u64,
) -> Result<Trajectory> {
    run_trajectory_on(policy, vt, &draw_stream(seed, policy.spec().n()))
}

/// Sum of squared acceptance-interval widths along the run, and the
/// bookkeeping value `g(S_n, R_n)`: `S_n` while still increasing, `2 - S_n`
/// after the turn. Only defined for the unimodal problem.
pub fn telescoping_statistic(traj: &Trajectory) -> Result<(f64, f64)> {
    if traj.spec.d() != 1 {
        return Err(Error::Unsupported(format!(
            "telescoping statistic needs d = 1, got d = {}",
            traj.spec.d()
        )));
    }
    let sum_sq = traj.steps.iter().map(|s| s.interval.width().powi(2)).sum();
    let (s, k) = traj
        .steps
        .last()
        .map(|st| (st.s_after, st.k_after))
        .unwrap_or((0.0, 0));
    let g = if k == 0 { s } else { 2.0 - s };
    Ok((sum_sq, g))
}

/// What a batch keeps from each run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub length: usize,
    pub sum_d_sq: f64,
    pub max_abs_d: f64,
    pub width_sum_sq: f64,
    pub g_terminal: Option<f64>,
    pub feasible: bool,
}

impl RunStats {
    pub fn of(traj: &Trajectory) -> Self {
        let (width_sum_sq, g_terminal) = match telescoping_statistic(traj) {
            Ok((w, g)) => (w, Some(g)),
            Err(_) => (
                traj.steps.iter().map(|s| s.interval.width().powi(2)).sum(),
                None,
            ),
        };
        Self {
            length: traj.final_length,
            sum_d_sq: traj.sum_sq_increments(),
            max_abs_d: traj.max_abs_increment(),
            width_sum_sq,
            g_terminal,
            feasible: traj.is_feasible(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub spec: ProblemSpec,
    pub policy: String,
    pub base_seed: u64,
    pub seed_rule: String,
    pub reps: usize,
    /// `v_1(0,0)` of the table the runs were measured against.
    pub solver_value: f64,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub stderr_mean: f64,
    pub stderr_variance: f64,
    /// Mean of the per-run sum of squared interval widths.
    pub telescoping_mean: f64,
    pub telescoping_stderr: f64,
    /// Mean of `g(S_n, R_n)`, for `d = 1` only.
    pub g_terminal_mean: Option<f64>,
    pub g_terminal_stderr: Option<f64>,
    /// Mean of the per-run sum of squared martingale increments.
    pub sum_d_sq_mean: f64,
    pub sum_d_sq_stderr: f64,
    pub max_abs_increment: f64,
    pub infeasible_runs: usize,
    pub clt_moments: CltMoments,
    pub ks_distance: f64,
    pub lengths: Vec<usize>,
}

impl BatchSummary {
    pub fn from_runs(
        spec: ProblemSpec,
        policy: &str,
        base_seed: u64,
        solver_value: f64,
        runs: &[RunStats],
    ) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::Argument("a batch needs at least one run".into()));
        }
        let lengths: Vec<usize> = runs.iter().map(|r| r.length).collect();
        let len_f: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
        let len_m = Moments::of(&len_f);
        let widths = Moments::of(&runs.iter().map(|r| r.width_sum_sq).collect::<Vec<_>>());
        let dsq = Moments::of(&runs.iter().map(|r| r.sum_d_sq).collect::<Vec<_>>());
        let g: Option<Vec<f64>> = runs.iter().map(|r| r.g_terminal).collect();
        let g = g.map(|g| Moments::of(&g));
        let clt = clt_statistic(&lengths, spec.n(), spec.d())?;
        Ok(Self {
            spec,
            policy: policy.to_string(),
            base_seed,
            seed_rule: SEED_RULE.to_string(),
            reps: runs.len(),
            solver_value,
            sample_mean: len_m.mean,
            sample_variance: len_m.variance,
            stderr_mean: len_m.stderr_mean(),
            stderr_variance: len_m.stderr_variance(),
            telescoping_mean: widths.mean,
            telescoping_stderr: widths.stderr_mean(),
            g_terminal_mean: g.as_ref().map(|g| g.mean),
            g_terminal_stderr: g.as_ref().map(|g| g.stderr_mean()),
            sum_d_sq_mean: dsq.mean,
            sum_d_sq_stderr: dsq.stderr_mean(),
            max_abs_increment: runs.iter().map(|r| r.max_abs_d).fold(0.0, f64::max),
            infeasible_runs: runs.iter().filter(|r| !r.feasible).count(),
            clt_moments: clt.moments,
            ks_distance: clt.ks_distance,
            lengths,
        })
    }

    /// Grid allowance on the increment bound `|d_i| <= 1`.
    pub fn increment_tolerance(&self) -> f64 {
        2.0 * self.spec.step()
    }
}

fn run_all<P: Policy + ?Sized>(
    policy: &P,
    vt: &ValueTable,
    seeds: &[u64],
) -> Result<Vec<RunStats>> {
    let one = |&seed: &u64| run_trajectory(policy, vt, seed).map(|t| RunStats::of(&t));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.iter().map(one).collect()
    }
}

/// Runs `reps` independent trajectories and aggregates them in seed order.
pub fn run_batch<P: Policy + ?Sized>(
    policy: &P,
    vt: &ValueTable,
    reps: usize,
    base_seed: u64,
) -> Result<BatchSummary> {
    if reps == 0 {
        return Err(Error::Argument("reps must be at least 1".into()));
    }
    check_tables(policy, vt)?;
    let runs = run_all(policy, vt, &batch_seeds(base_seed, reps))?;
    BatchSummary::from_runs(
        *vt.spec(),
        policy.name(),
        base_seed,
        vt.initial_value(),
        &runs,
    )
}

/// Conditional means of martingale increments, grouped by time slice, value
/// bucket and block.
#[derive(Debug, Clone)]
pub struct MartingaleBins {
    time_slices: usize,
    s_width: f64,
    n: usize,
    cells: Vec<(usize, f64, f64)>,
    s_buckets: usize,
    blocks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinCheck {
    pub bins_tested: usize,
    pub worst_z: f64,
    pub failures: usize,
}

impl MartingaleBins {
    pub fn new(spec: &ProblemSpec, time_slices: usize, s_width: f64) -> Self {
        let s_buckets = (1.0 / s_width).ceil() as usize;
        Self {
            time_slices,
            s_width,
            n: spec.n(),
            cells: vec![(0, 0.0, 0.0); time_slices * s_buckets * spec.blocks()],
            s_buckets,
            blocks: spec.blocks(),
        }
    }

    pub fn record(&mut self, traj: &Trajectory) {
        for (i, s, k, step) in traj.states_before() {
            let t = ((i - 1) * self.time_slices / self.n).min(self.time_slices - 1);
            let b = ((s / self.s_width) as usize).min(self.s_buckets - 1);
            let cell = &mut self.cells[(t * self.s_buckets + b) * self.blocks + k];
            cell.0 += 1;
            cell.1 += step.d_inc;
            cell.2 += step.d_inc * step.d_inc;
        }
    }

    /// Tests every bin holding at least `min_samples` increments for a zero
    /// mean at `z_limit` standard errors.
    pub fn check(&self, min_samples: usize, z_limit: f64) -> BinCheck {
        let mut out = BinCheck {
            bins_tested: 0,
            worst_z: 0.0,
            failures: 0,
        };
        for &(count, sum, sum_sq) in &self.cells {
            if count < min_samples {
                continue;
            }
            let c = count as f64;
            let mean = sum / c;
            let var = ((sum_sq - c * mean * mean) / (c - 1.0)).max(0.0);
            let se = (var / c).sqrt();
            let z = if se > 0.0 { mean.abs() / se } else { 0.0 };
            out.bins_tested += 1;
            out.worst_z = out.worst_z.max(z);
            if z > z_limit {
                out.failures += 1;
            }
        }
        out
    }
}

/// First phase of the unimodal window policy up to absorption
/// `nu = min{i : S_i > 1 - w or i >= n/2}`. Returns the number of
/// selections made in steps `1..=nu`, and `nu`.
pub fn window_absorption(spec: &ProblemSpec, seed: u64) -> Result<(usize, usize)> {
    if spec.d() != 1 {
        return Err(Error::Unsupported("absorption is defined for d = 1".into()));
    }
    let policy = WindowPolicy::new(*spec);
    let width = crate::policy::window_width(spec);
    let half = spec.n() / 2;
    let xs = draw_stream(seed, spec.n());
    let mut state = ChooserState::initial();
    for (idx, &x) in xs.iter().enumerate().take(half) {
        state = policy.decide(&state, x)?.new_state;
        let i = idx + 1;
        if state.s > 1.0 - width || i >= half {
            return Ok((state.count, i));
        }
    }
    Ok((state.count, half))
}
