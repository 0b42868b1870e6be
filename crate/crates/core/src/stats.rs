//! Aggregate diagnostics: sample moments, the normalised length statistic,
//! bound reports and variance-to-mean reports.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bellman::{mean_bounds, ValueTable};
use crate::error::{Error, Result};
use crate::offline::OfflineBatch;
use crate::simulate::{BatchSummary, CltMoments};

pub const REPORT_FORMAT: &str = "uss-report-1";

/// Sample moments of a slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample variance; 0 for a single observation.
    pub variance: f64,
    /// Central moments with divisor `count`.
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return Self {
                count,
                mean: 0.0,
                variance: 0.0,
                m2: 0.0,
                m3: 0.0,
                m4: 0.0,
            };
        }
        let c = count as f64;
        let mean = xs.iter().sum::<f64>() / c;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in xs {
            let e = x - mean;
            let e2 = e * e;
            m2 += e2;
            m3 += e2 * e;
            m4 += e2 * e2;
        }
        let variance = if count > 1 { m2 / (c - 1.0) } else { 0.0 };
        Self {
            count,
            mean,
            variance,
            m2: m2 / c,
            m3: m3 / c,
            m4: m4 / c,
        }
    }

    pub fn stderr_mean(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.variance / self.count as f64).sqrt()
    }

    /// Large-sample standard error of the sample variance.
    pub fn stderr_variance(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        ((self.m4 - self.m2 * self.m2).max(0.0) / self.count as f64).sqrt()
    }

    pub fn skewness(&self) -> f64 {
        if self.m2 > 0.0 {
            self.m3 / self.m2.powf(1.5)
        } else {
            0.0
        }
    }

    pub fn excess_kurtosis(&self) -> f64 {
        if self.m2 > 0.0 {
            self.m4 / (self.m2 * self.m2) - 3.0
        } else {
            0.0
        }
    }
}

/// Centring and scale of the normalised length: `sqrt(c n)` and `(c n)^{1/4}`
/// with `c = 2(d+1)`.
fn clt_scale(n: usize, d: usize) -> (f64, f64) {
    let cn = 2.0 * (d as f64 + 1.0) * n as f64;
    (cn.sqrt(), cn.powf(0.25))
}

pub fn normalized_length(length: f64, n: usize, d: usize) -> f64 {
    let (centre, scale) = clt_scale(n, d);
    3f64.sqrt() * (length - centre) / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltResult {
    pub values: Vec<f64>,
    pub moments: CltMoments,
    /// Kolmogorov-Smirnov distance to N(0,1), with a half-unit continuity
    /// correction because lengths are integers.
    pub ks_distance: f64,
}

/// `sqrt(3) (U - sqrt(c n)) / (c n)^{1/4}` for each length `U`, with its
/// moments and distance to the standard normal.
pub fn clt_statistic(lengths: &[usize], n: usize, d: usize) -> Result<CltResult> {
    if lengths.is_empty() {
        return Err(Error::Argument("no lengths given".into()));
    }
    let values: Vec<f64> = lengths
        .iter()
        .map(|&u| normalized_length(u as f64, n, d))
        .collect();
    let m = Moments::of(&values);
    Ok(CltResult {
        moments: CltMoments {
            mean: m.mean,
            variance: m.variance,
            skewness: m.skewness(),
            excess_kurtosis: m.excess_kurtosis(),
        },
        ks_distance: lattice_ks_distance(lengths, n, d),
        values,
    })
}

/// Compares the empirical CDF of the integer lengths with the normal CDF
/// evaluated half a unit above each support point.
fn lattice_ks_distance(lengths: &[usize], n: usize, d: usize) -> f64 {
    let normal = Normal::standard();
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let total = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    let mut idx = 0;
    while idx < sorted.len() {
        let u = sorted[idx];
        let below = normal.cdf(normalized_length(u as f64 - 0.5, n, d));
        let before = idx as f64 / total;
        while idx < sorted.len() && sorted[idx] == u {
            idx += 1;
        }
        let after = idx as f64 / total;
        let at = normal.cdf(normalized_length(u as f64 + 0.5, n, d));
        worst = worst.max((before - below).abs()).max((after - at).abs());
    }
    worst
}

/// Standard error of `sample_variance - sample_mean`, treating the two
/// estimates as independent.
pub fn combined_stderr(summary: &BatchSummary) -> f64 {
    summary.stderr_mean.hypot(summary.stderr_variance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub d: usize,
    pub grid_size: usize,
    pub policy: String,
    pub base_seed: u64,
    pub reps: usize,
    pub solver_value: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub c_slack: f64,
    pub mc_mean: f64,
    pub mc_variance: f64,
    pub mc_stderr: f64,
    pub var_over_mean: f64,
    pub offline_mean: f64,
    /// Off-line mean over on-line mean.
    pub prophet_ratio: f64,
    pub clt_moments: CltMoments,
    pub ks_distance: f64,
    pub violations: Vec<String>,
}

impl BoundReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the solver value against the strict upper bound and the slack
/// lower bound, and the batch against `Var <= E` within sampling error.
pub fn bound_report(
    vt: &ValueTable,
    online: &BatchSummary,
    offline_mean: f64,
    c_slack: f64,
) -> Result<BoundReport> {
    let spec = vt.spec();
    if !spec.same_problem(&online.spec) {
        return Err(Error::Config(format!(
            "value table is for n={}, d={} but the batch is for n={}, d={}",
            spec.n(),
            spec.d(),
            online.spec.n(),
            online.spec.d()
        )));
    }
    let (lower_bound, upper_bound) = mean_bounds(spec.n(), spec.d(), c_slack);
    let solver_value = vt.initial_value();
    let mut violations = Vec::new();
    if solver_value >= upper_bound {
        violations.push(format!(
            "solver value {solver_value:.6} is not below the upper bound {upper_bound:.6}"
        ));
    }
    if solver_value <= lower_bound {
        violations.push(format!(
            "solver value {solver_value:.6} is not above the lower bound {lower_bound:.6}"
        ));
    }
    if online.policy == "optimal"
        && online.sample_variance > online.sample_mean + 3.0 * combined_stderr(online)
    {
        violations.push(format!(
            "sample variance {:.6} exceeds sample mean {:.6} beyond sampling error",
            online.sample_variance, online.sample_mean
        ));
    }
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Ok(BoundReport {
        n: spec.n(),
        d: spec.d(),
        grid_size: spec.grid_size(),
        policy: online.policy.clone(),
        base_seed: online.base_seed,
        reps: online.reps,
        solver_value,
        upper_bound,
        lower_bound,
        c_slack,
        mc_mean: online.sample_mean,
        mc_variance: online.sample_variance,
        mc_stderr: online.stderr_mean,
        var_over_mean: ratio(online.sample_variance, online.sample_mean),
        offline_mean,
        prophet_ratio: ratio(offline_mean, online.sample_mean),
        clt_moments: online.clt_moments,
        ks_distance: online.ks_distance,
        violations,
    })
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const MIN_CONJECTURE_REPS: usize = 1000;
/// Band that counts as agreeing with a variance-to-mean ratio of one third.
pub const ONE_THIRD_BAND: (f64, f64) = (0.30, 0.37);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub n: usize,
    pub d: usize,
    pub policy: String,
    pub reps: usize,
    pub mean: f64,
    pub variance: f64,
    pub var_over_mean: f64,
    /// 95% percentile bootstrap interval for `var_over_mean`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    pub consistent_with_one_third: bool,
    /// `Var <= E` within three combined standard errors.
    pub variance_bound_holds: bool,
    /// `Var > E/3 - 2` within three combined standard errors; `d = 0` only.
    pub d0_lower_bound_holds: Option<bool>,
}

fn var_over_mean(lengths: &[f64]) -> f64 {
    let m = Moments::of(lengths);
    if m.mean > 0.0 {
        m.variance / m.mean
    } else {
        0.0
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Variance-to-mean ratio with a bootstrap interval, plus the variance bound
/// checks that apply to the batch.
pub fn conjecture_report(online: &BatchSummary) -> Result<ConjectureReport> {
    if online.reps < MIN_CONJECTURE_REPS || online.lengths.len() < MIN_CONJECTURE_REPS {
        return Err(Error::Argument(format!(
            "need at least {MIN_CONJECTURE_REPS} runs, got {}",
            online.lengths.len()
        )));
    }
    let lengths: Vec<f64> = online.lengths.iter().map(|&l| l as f64).collect();
    let ratio = var_over_mean(&lengths);

    let bootstrap_seed = online.base_seed ^ 0xB007_5743_u64;
    let seeds = crate::simulate::batch_seeds(bootstrap_seed, BOOTSTRAP_RESAMPLES);
    let resample = |&seed: &u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw: Vec<f64> = (0..lengths.len())
            .map(|_| lengths[rng.random_range(0..lengths.len())])
            .collect();
        var_over_mean(&draw)
    };
    #[cfg(feature = "parallel")]
    let mut ratios: Vec<f64> = {
        use rayon::prelude::*;
        seeds.par_iter().map(resample).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut ratios: Vec<f64> = seeds.iter().map(resample).collect();
    ratios.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = (percentile(&ratios, 0.025), percentile(&ratios, 0.975));

    let slack = 3.0 * combined_stderr(online);
    let (mean, variance) = (online.sample_mean, online.sample_variance);
    let d0_lower_bound_holds = (online.spec.d() == 0).then(|| variance + slack > mean / 3.0 - 2.0);
    Ok(ConjectureReport {
        n: online.spec.n(),
        d: online.spec.d(),
        policy: online.policy.clone(),
        reps: online.reps,
        mean,
        variance,
        var_over_mean: ratio,
        ci_low,
        ci_high,
        bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        bootstrap_seed,
        consistent_with_one_third: ci_high >= ONE_THIRD_BAND.0 && ci_low <= ONE_THIRD_BAND.1,
        variance_bound_holds: variance <= mean + slack,
        d0_lower_bound_holds,
    })
}

/// Top-level JSON document for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDocument {
    pub format: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub bounds: Vec<BoundReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub conjectures: Vec<ConjectureReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub batches: Vec<BatchSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub offline: Vec<OfflineBatch>,
}

impl ReportDocument {
    pub fn new(bounds: Vec<BoundReport>, conjectures: Vec<ConjectureReport>) -> Self {
        Self {
            format: REPORT_FORMAT.to_string(),
            bounds,
            conjectures,
            batches: Vec::new(),
            offline: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Argument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        if doc.format != REPORT_FORMAT {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unknown report format {:?}", doc.format),
            });
        }
        Ok(doc)
    }
}

/// One flat CSV row per (n, d, policy).
#[derive(Debug, Clone, Serialize)]
struct CsvRow<'a> {
    n: usize,
    d: usize,
    policy: &'a str,
    grid_size: usize,
    reps: usize,
    base_seed: u64,
    solver_value: f64,
    upper_bound: f64,
    lower_bound: f64,
    mc_mean: f64,
    mc_variance: f64,
    mc_stderr: f64,
    var_over_mean: f64,
    offline_mean: f64,
    prophet_ratio: f64,
    clt_mean: f64,
    clt_variance: f64,
    clt_skewness: f64,
    clt_excess_kurtosis: f64,
    ks_distance: f64,
    violations: usize,
}

pub fn write_report_csv<W: Write>(out: W, reports: &[BoundReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(CsvRow {
            n: r.n,
            d: r.d,
            policy: &r.policy,
            grid_size: r.grid_size,
            reps: r.reps,
            base_seed: r.base_seed,
            solver_value: r.solver_value,
            upper_bound: r.upper_bound,
            lower_bound: r.lower_bound,
            mc_mean: r.mc_mean,
            mc_variance: r.mc_variance,
            mc_stderr: r.mc_stderr,
            var_over_mean: r.var_over_mean,
            offline_mean: r.offline_mean,
            prophet_ratio: r.prophet_ratio,
            clt_mean: r.clt_moments.mean,
            clt_variance: r.clt_moments.variance,
            clt_skewness: r.clt_moments.skewness,
            clt_excess_kurtosis: r.clt_moments.excess_kurtosis,
            ks_distance: r.ks_distance,
            violations: r.violations.len(),
        })
        .map_err(|e| Error::Argument(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
