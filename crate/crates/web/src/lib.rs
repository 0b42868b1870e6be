//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string. The `*_json` functions hold the logic
//! and return `Result<String, String>` so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors into JS exceptions.

use std::cell::RefCell;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use uss_core::bellman::{
    compute_thresholds, mean_bounds, solve_value_table, ProblemSpec, ThresholdTable, ValueTable,
    DEFAULT_SLACK,
};
use uss_core::offline::{run_offline_batch, Orientation};
use uss_core::policy::{OptimalPolicy, WindowPolicy};
use uss_core::simulate::{run_batch, run_trajectory};

/// Largest batch the page may request; the browser runs single-threaded.
pub const MAX_REPS: usize = 5000;
pub const MAX_CELLS: usize = 10_000_000;

thread_local! {
    static TABLES: RefCell<Option<(ValueTable, ThresholdTable)>> = const { RefCell::new(None) };
}

/// Solves `(n, d, grid)` once and reuses the tables for later calls.
fn with_tables<T>(
    n: usize,
    d: usize,
    grid: usize,
    f: impl FnOnce(&ValueTable, &ThresholdTable) -> T,
) -> Result<T, String> {
    let spec = ProblemSpec::new(n, d, grid).map_err(|e| e.to_string())?;
    let cells = n.saturating_mul(d + 1).saturating_mul(grid);
    if cells > MAX_CELLS {
        return Err(format!(
            "n (d+1) grid = {cells} is above the demo limit of {MAX_CELLS}"
        ));
    }
    TABLES.with(|cache| {
        let mut cache = cache.borrow_mut();
        if cache.as_ref().map(|(vt, _)| *vt.spec()) != Some(spec) {
            let vt = solve_value_table(&spec);
            let tt = compute_thresholds(&vt).map_err(|e| e.to_string())?;
            *cache = Some((vt, tt));
        }
        let (vt, tt) = cache.as_ref().unwrap();
        Ok(f(vt, tt))
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curves {
    n: usize,
    d: usize,
    i: usize,
    k: usize,
    s: Vec<f64>,
    value: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    initial_value: f64,
    upper_bound: f64,
    lower_bound: f64,
}

/// `v_i(s, k)` and the acceptance interval `[a, b]` as functions of `s`,
/// thinned to at most `points` samples.
pub fn curves_json(
    n: usize,
    d: usize,
    grid: usize,
    i: usize,
    k: usize,
    points: usize,
) -> Result<String, String> {
    if i == 0 || i > n {
        return Err(format!("time index {i} is outside 1..={n}"));
    }
    if k > d {
        return Err(format!("block {k} is above d = {d}"));
    }
    let curves = with_tables(n, d, grid, |vt, tt| {
        let stride = grid.div_ceil(points.max(2)).max(1);
        let mut idx: Vec<usize> = (0..grid).step_by(stride).collect();
        if idx.last() != Some(&(grid - 1)) {
            idx.push(grid - 1);
        }
        let pick = |row: &[f64]| idx.iter().map(|&j| row[j]).collect::<Vec<_>>();
        let (lower_bound, upper_bound) = mean_bounds(n, d, DEFAULT_SLACK);
        Curves {
            n,
            d,
            i,
            k,
            s: idx.iter().map(|&j| vt.spec().grid_point(j)).collect(),
            value: pick(vt.row(i, k)),
            lower: pick(tt.lower_row(i, k)),
            upper: pick(tt.upper_row(i, k)),
            initial_value: vt.initial_value(),
            upper_bound,
            lower_bound,
        }
    })?;
    to_json(&curves)
}

#[derive(Serialize)]
struct StepView {
    x: f64,
    a: f64,
    b: f64,
    accepted: bool,
    s: f64,
    k: usize,
    y: f64,
}

#[derive(Serialize)]
struct TrajectoryView {
    seed: u64,
    policy: &'static str,
    y0: f64,
    final_length: usize,
    steps: Vec<StepView>,
}

/// One seeded run of the optimal (`heuristic == false`) or window policy.
pub fn trajectory_json(
    n: usize,
    d: usize,
    grid: usize,
    seed: u64,
    heuristic: bool,
) -> Result<String, String> {
    let view = with_tables(n, d, grid, |vt, tt| {
        let traj = if heuristic {
            run_trajectory(&WindowPolicy::new(*vt.spec()), vt, seed)
        } else {
            run_trajectory(&OptimalPolicy::new(tt), vt, seed)
        }
        .map_err(|e| e.to_string())?;
        Ok::<_, String>(TrajectoryView {
            seed,
            policy: if heuristic { "heuristic" } else { "optimal" },
            y0: traj.y0,
            final_length: traj.final_length,
            steps: traj
                .steps
                .iter()
                .map(|st| StepView {
                    x: st.x,
                    a: st.interval.lo,
                    b: st.interval.hi,
                    accepted: st.accepted,
                    s: st.s_after,
                    k: st.k_after,
                    y: st.y,
                })
                .collect(),
        })
    })??;
    to_json(&view)
}

#[derive(Serialize)]
struct ProphetView {
    reps: usize,
    seed: u64,
    solver_value: f64,
    upper_bound: f64,
    optimal_mean: f64,
    optimal_stderr: f64,
    heuristic_mean: f64,
    offline_mean: f64,
    prophet_ratio: f64,
    optimal_lengths: Vec<usize>,
    offline_lengths: Vec<usize>,
}

/// On-line optimal and window batches against the off-line d-modal length
/// on the same streams.
pub fn prophet_json(
    n: usize,
    d: usize,
    grid: usize,
    reps: usize,
    seed: u64,
) -> Result<String, String> {
    if reps == 0 || reps > MAX_REPS {
        return Err(format!("reps must be in 1..={MAX_REPS}"));
    }
    let view = with_tables(n, d, grid, |vt, tt| {
        let err = |e: uss_core::error::Error| e.to_string();
        let opt = run_batch(&OptimalPolicy::new(tt), vt, reps, seed).map_err(err)?;
        let heu = run_batch(&WindowPolicy::new(*vt.spec()), vt, reps, seed).map_err(err)?;
        let off = run_offline_batch(n, d, Orientation::BestOfBoth, reps, seed).map_err(err)?;
        let offline_mean = off.dmodal_moments().mean;
        Ok::<_, String>(ProphetView {
            reps,
            seed,
            solver_value: vt.initial_value(),
            upper_bound: mean_bounds(n, d, DEFAULT_SLACK).1,
            optimal_mean: opt.sample_mean,
            optimal_stderr: opt.stderr_mean,
            heuristic_mean: heu.sample_mean,
            offline_mean,
            prophet_ratio: offline_mean / opt.sample_mean,
            optimal_lengths: opt.lengths,
            offline_lengths: off.dmodal,
        })
    })??;
    to_json(&view)
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn curves(
    n: usize,
    d: usize,
    grid: usize,
    i: usize,
    k: usize,
    points: usize,
) -> Result<String, JsValue> {
    js(curves_json(n, d, grid, i, k, points))
}

#[wasm_bindgen]
pub fn trajectory(
    n: usize,
    d: usize,
    grid: usize,
    seed: u64,
    heuristic: bool,
) -> Result<String, JsValue> {
    js(trajectory_json(n, d, grid, seed, heuristic))
}

#[wasm_bindgen]
pub fn prophet(n: usize, d: usize, grid: usize, reps: usize, seed: u64) -> Result<String, JsValue> {
    js(prophet_json(n, d, grid, reps, seed))
}
