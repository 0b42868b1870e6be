use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

use uss_core::bellman::{
    compute_thresholds, mean_bounds, solve_value_table, ProblemSpec, ThresholdTable, ValueTable,
};
use uss_core::offline::{run_offline_batch, OfflineBatch, OfflineResult, Orientation, Sequence};
use uss_core::policy::{OptimalPolicy, Policy, WindowPolicy};
use uss_core::simulate::{batch_seeds, run_batch, run_trajectory, BatchSummary};
use uss_core::stats::{
    bound_report, conjecture_report, write_report_csv, BoundReport, ReportDocument,
    MIN_CONJECTURE_REPS,
};
use uss_core::table_io;

use crate::{
    CompareArgs, OfflineArgs, OrientationArg, PolicyKind, ProblemArgs, ReportArgs, SimulateArgs,
    SolveArgs,
};

/// Violations found by a command; empty means success.
pub type Violations = Vec<String>;

fn show(label: &str, value: f64) {
    println!("{label:<24}{value:.6}");
}

fn show_int(label: &str, value: impl std::fmt::Display) {
    println!("{label:<24}{value}");
}

fn check_output(path: &Option<impl AsRef<Path>>) -> Result<()> {
    let Some(path) = path else { return Ok(()) };
    let path = path.as_ref();
    if path.is_dir() {
        bail!("output path {} is a directory", path.display());
    }
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            bail!("directory {} does not exist", dir.display())
        }
        _ => Ok(()),
    }
}

fn check_input(path: &Option<impl AsRef<Path>>) -> Result<()> {
    if let Some(path) = path {
        let path = path.as_ref();
        ensure!(
            path.is_file(),
            "input file {} does not exist",
            path.display()
        );
    }
    Ok(())
}

fn spec_of(p: &ProblemArgs) -> Result<ProblemSpec> {
    Ok(ProblemSpec::new(p.n, p.d, p.grid)?)
}

fn check_reps(reps: usize) -> Result<()> {
    ensure!(reps >= 1, "--reps must be at least 1");
    Ok(())
}

fn orientation(o: OrientationArg) -> Orientation {
    match o {
        OrientationArg::UpFirst => Orientation::UpFirst,
        OrientationArg::BestOfBoth => Orientation::BestOfBoth,
    }
}

fn tables(
    spec: &ProblemSpec,
    table: &Option<impl AsRef<Path>>,
) -> Result<(ValueTable, ThresholdTable)> {
    match table {
        Some(path) => {
            let path = path.as_ref();
            let (vt, tt) =
                table_io::load(path).with_context(|| format!("reading {}", path.display()))?;
            if vt.spec() != spec {
                bail!(
                    "table {} is for n={}, d={}, grid={} but the flags ask for n={}, d={}, grid={}",
                    path.display(),
                    vt.spec().n(),
                    vt.spec().d(),
                    vt.spec().grid_size(),
                    spec.n(),
                    spec.d(),
                    spec.grid_size()
                );
            }
            Ok((vt, tt))
        }
        None => {
            let vt = solve_value_table(spec);
            let tt = compute_thresholds(&vt)?;
            Ok((vt, tt))
        }
    }
}

fn batch(
    kind: PolicyKind,
    vt: &ValueTable,
    tt: &ThresholdTable,
    reps: usize,
    seed: u64,
) -> Result<BatchSummary> {
    Ok(match kind {
        PolicyKind::Optimal => run_batch(&OptimalPolicy::new(tt), vt, reps, seed)?,
        PolicyKind::Heuristic => run_batch(&WindowPolicy::new(*vt.spec()), vt, reps, seed)?,
    })
}

/// Feasibility always; the increment bound only where `Y` is a martingale.
fn hard_invariants(b: &BatchSummary) -> Violations {
    let mut out = Vec::new();
    if b.infeasible_runs > 0 {
        out.push(format!(
            "{} runs selected an infeasible subsequence",
            b.infeasible_runs
        ));
    }
    let limit = 1.0 + b.increment_tolerance();
    if b.policy == "optimal" && b.max_abs_increment > limit {
        out.push(format!(
            "martingale increment {:.6} exceeds {:.6}",
            b.max_abs_increment, limit
        ));
    }
    out
}

fn paired_violations(online: &BatchSummary, offline: &OfflineBatch) -> Violations {
    online
        .lengths
        .iter()
        .zip(&offline.dmodal)
        .enumerate()
        .filter(|(_, (on, off))| on > off)
        .map(|(j, (on, off))| format!("run {j}: on-line length {on} exceeds off-line length {off}"))
        .collect()
}

fn write_json(path: &Option<impl AsRef<Path>>, doc: &ReportDocument) -> Result<()> {
    if let Some(path) = path {
        let path = path.as_ref();
        let mut text = doc.to_json()?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_csv(path: &Option<impl AsRef<Path>>, reports: &[BoundReport]) -> Result<()> {
    if let Some(path) = path {
        let path = path.as_ref();
        let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
        write_report_csv(file, reports)?;
    }
    Ok(())
}

fn print_batch(b: &BatchSummary) {
    show_int("policy", &b.policy);
    show_int("reps", b.reps);
    show_int("seed", b.base_seed);
    show("v_1(0,0)", b.solver_value);
    show("sample mean", b.sample_mean);
    show("stderr of mean", b.stderr_mean);
    show("sample variance", b.sample_variance);
    show(
        "var / mean",
        if b.sample_mean > 0.0 {
            b.sample_variance / b.sample_mean
        } else {
            0.0
        },
    );
    show("mean sum (b-a)^2", b.telescoping_mean);
    if let Some(g) = b.g_terminal_mean {
        show("mean g(S_n, R_n)", g);
    }
    show("mean sum d_i^2", b.sum_d_sq_mean);
    show("max |d_i|", b.max_abs_increment);
    show("KS distance", b.ks_distance);
}

pub fn solve(a: &SolveArgs) -> Result<Violations> {
    let spec = spec_of(&a.problem)?;
    check_output(&a.table_out)?;
    let vt = solve_value_table(&spec);
    let tt = compute_thresholds(&vt)?;
    if let Some(path) = &a.table_out {
        table_io::save(path, &vt, &tt).with_context(|| format!("writing {}", path.display()))?;
    }
    let (lower, upper) = mean_bounds(spec.n(), spec.d(), a.c_slack);
    show_int("n", spec.n());
    show_int("d", spec.d());
    show_int("grid", spec.grid_size());
    show("v_1(0,0)", vt.initial_value());
    show("upper bound", upper);
    show("lower bound", lower);
    Ok(Vec::new())
}

pub fn simulate(a: &SimulateArgs) -> Result<Violations> {
    let spec = spec_of(&a.problem)?;
    check_reps(a.reps)?;
    check_input(&a.table)?;
    check_output(&a.report_out)?;
    if let Some(dir) = &a.trajectory_dir {
        ensure!(
            dir.is_dir(),
            "trajectory directory {} does not exist",
            dir.display()
        );
    }
    let (vt, tt) = tables(&spec, &a.table)?;
    let summary = batch(a.policy, &vt, &tt, a.reps, a.seed)?;

    if let Some(dir) = &a.trajectory_dir {
        let opt = OptimalPolicy::new(&tt);
        let heu = WindowPolicy::new(spec);
        let policy: &dyn Policy = match a.policy {
            PolicyKind::Optimal => &opt,
            PolicyKind::Heuristic => &heu,
        };
        for (j, seed) in batch_seeds(a.seed, a.trajectories.min(a.reps))
            .into_iter()
            .enumerate()
        {
            let traj = run_trajectory(policy, &vt, seed)?;
            let path = dir.join(format!("trajectory_{j:05}.csv"));
            let file =
                File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            traj.write_csv(std::io::BufWriter::new(file))?;
        }
    }

    print_batch(&summary);
    let violations = hard_invariants(&summary);
    let mut doc = ReportDocument::new(Vec::new(), Vec::new());
    doc.batches.push(summary);
    write_json(&a.report_out, &doc)?;
    Ok(violations)
}

pub fn offline(a: &OfflineArgs) -> Result<Violations> {
    check_input(&a.input)?;
    check_output(&a.report_out)?;
    let orient = orientation(a.orientation);
    if let Some(path) = &a.input {
        let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
        let seq = Sequence::read_csv(BufReader::new(file))
            .with_context(|| format!("reading {}", path.display()))?;
        let r = OfflineResult::of(&seq, a.d, orient);
        show_int("length", seq.len());
        show_int("lis", r.lis);
        show_int("lds", r.lds);
        show_int("u_n", r.u_n);
        show_int("d_n", r.d_n);
        show_int("l_n", r.l_n);
        for (d, len) in &r.dmodal {
            show_int(&format!("d-modal (d={d})"), len);
        }
        return Ok(Vec::new());
    }
    let Some(n) = a.n else {
        bail!("either --n or --input is required")
    };
    ensure!(n >= 1, "--n must be at least 1");
    check_reps(a.reps)?;
    let b = run_offline_batch(n, a.d, orient, a.reps, a.seed)?;
    let l = b.l_n_moments();
    let dm = b.dmodal_moments();
    show_int("n", n);
    show_int("reps", a.reps);
    show_int("seed", a.seed);
    show_int("orientation", orient.as_str());
    show("mean l_n", l.mean);
    show("stderr of l_n", l.stderr_mean());
    show("2 (2n)^(1/2)", 2.0 * (2.0 * n as f64).sqrt());
    show(&format!("mean d-modal (d={})", a.d), dm.mean);
    show("stderr of d-modal", dm.stderr_mean());
    let mut doc = ReportDocument::new(Vec::new(), Vec::new());
    doc.offline.push(b);
    write_json(&a.report_out, &doc)?;
    Ok(Vec::new())
}

fn print_bound(r: &BoundReport) {
    show("v_1(0,0)", r.solver_value);
    show("upper bound", r.upper_bound);
    show("lower bound", r.lower_bound);
    show("on-line mean", r.mc_mean);
    show("on-line variance", r.mc_variance);
    show("on-line mean / sqrt(n)", r.mc_mean / (r.n as f64).sqrt());
    show("off-line mean", r.offline_mean);
    show("prophet ratio", r.prophet_ratio);
    show("var / mean", r.var_over_mean);
    show("KS distance", r.ks_distance);
}

pub fn compare(a: &CompareArgs) -> Result<Violations> {
    let spec = spec_of(&a.problem)?;
    check_reps(a.reps)?;
    ensure!(a.c_slack.is_finite(), "--c-slack must be finite");
    check_input(&a.table)?;
    check_output(&a.report_out)?;
    check_output(&a.csv_out)?;
    let (vt, tt) = tables(&spec, &a.table)?;
    let online = batch(a.policy, &vt, &tt, a.reps, a.seed)?;
    let off = run_offline_batch(
        spec.n(),
        spec.d(),
        orientation(a.orientation),
        a.reps,
        a.seed,
    )?;
    let report = bound_report(&vt, &online, off.dmodal_moments().mean, a.c_slack)?;

    show_int("n", spec.n());
    show_int("d", spec.d());
    show_int("policy", &online.policy);
    show_int("reps", a.reps);
    show_int("seed", a.seed);
    print_bound(&report);

    let mut violations = hard_invariants(&online);
    violations.extend(paired_violations(&online, &off));
    violations.extend(report.violations.iter().cloned());
    let mut doc = ReportDocument::new(vec![report.clone()], Vec::new());
    doc.batches.push(online);
    doc.offline.push(off);
    write_json(&a.report_out, &doc)?;
    write_csv(&a.csv_out, &[report])?;
    Ok(violations)
}

pub fn report(a: &ReportArgs) -> Result<Violations> {
    ensure!(
        !a.n.is_empty() && !a.d.is_empty(),
        "need at least one n and one d"
    );
    for &n in &a.n {
        for &d in &a.d {
            ProblemSpec::new(n, d, a.grid)?;
        }
    }
    check_reps(a.reps)?;
    ensure!(a.c_slack.is_finite(), "--c-slack must be finite");
    check_output(&a.report_out)?;
    check_output(&a.csv_out)?;

    let mut violations = Vec::new();
    let mut bounds = Vec::new();
    let mut conjectures = Vec::new();
    println!(
        "{:>6} {:>3} {:<10} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10}",
        "n", "d", "policy", "v_1(0,0)", "lower", "upper", "mc_mean", "prophet", "var/mean", "ks"
    );
    for &n in &a.n {
        for &d in &a.d {
            let spec = ProblemSpec::new(n, d, a.grid)?;
            let vt = solve_value_table(&spec);
            let tt = compute_thresholds(&vt)?;
            let off = run_offline_batch(n, d, orientation(a.orientation), a.reps, a.seed)?;
            for &kind in &a.policy {
                let online = batch(kind, &vt, &tt, a.reps, a.seed)?;
                let r = bound_report(&vt, &online, off.dmodal_moments().mean, a.c_slack)?;
                println!(
                    "{:>6} {:>3} {:<10} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>10.6} {:>10.6}",
                    n, d, r.policy, r.solver_value, r.lower_bound, r.upper_bound, r.mc_mean,
                    r.prophet_ratio, r.var_over_mean, r.ks_distance
                );
                let tag = format!("n={n} d={d} {}", r.policy);
                violations.extend(
                    hard_invariants(&online)
                        .into_iter()
                        .map(|v| format!("{tag}: {v}")),
                );
                violations.extend(
                    paired_violations(&online, &off)
                        .into_iter()
                        .map(|v| format!("{tag}: {v}")),
                );
                violations.extend(r.violations.iter().map(|v| format!("{tag}: {v}")));
                if a.reps >= MIN_CONJECTURE_REPS {
                    conjectures.push(conjecture_report(&online)?);
                }
                bounds.push(r);
            }
        }
    }
    write_csv(&a.csv_out, &bounds)?;
    write_json(&a.report_out, &ReportDocument::new(bounds, conjectures))?;
    Ok(violations)
}
