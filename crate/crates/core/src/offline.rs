//! Off-line oracles: longest increasing, unimodal and d-modal subsequences
//! of a fully observed sequence, and the deterministic length guarantees.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::{batch_seeds, draw_stream};
use crate::stats::Moments;

/// Largest input accepted by [`dmodal_offline_bruteforce`].
pub const BRUTEFORCE_MAX_LEN: usize = 20;

/// Finite, pairwise distinct values.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence(Vec<f64>);

impl Sequence {
    pub fn new(xs: Vec<f64>) -> Result<Self> {
        if let Some(pos) = xs.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "value at position {pos} is not finite"
            )));
        }
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Domain(format!(
                "value {} occurs more than once",
                w[0]
            )));
        }
        Ok(Self(xs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The mirror image `x -> -x`.
    pub fn reflected(&self) -> Self {
        Self(self.0.iter().map(|x| -x).collect())
    }

    /// Reads one value per line; blank lines and lines starting with `#`
    /// are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut xs = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let field = line.trim();
            if field.is_empty() || field.starts_with('#') {
                continue;
            }
            let field = field.trim_end_matches(',');
            let x: f64 = field.parse().map_err(|e| Error::Parse {
                line: idx + 1,
                msg: format!("bad number {field:?}: {e}"),
            })?;
            xs.push(x);
        }
        Self::new(xs)
    }
}

impl TryFrom<Vec<f64>> for Sequence {
    type Error = Error;

    fn try_from(xs: Vec<f64>) -> Result<Self> {
        Self::new(xs)
    }
}

/// Length of the longest increasing subsequence ending at each position.
fn lis_ending_at(xs: &[f64]) -> Vec<usize> {
    let mut tails: Vec<f64> = Vec::new();
    xs.iter()
        .map(|&x| {
            let pos = tails.partition_point(|&t| t < x);
            if pos == tails.len() {
                tails.push(x);
            } else {
                tails[pos] = x;
            }
            pos + 1
        })
        .collect()
}

/// Patience sorting; 0 for an empty sequence.
pub fn lis_length(seq: &Sequence) -> usize {
    lis_ending_at(seq.as_slice()).into_iter().max().unwrap_or(0)
}

pub fn lds_length(seq: &Sequence) -> usize {
    lis_length(&seq.reflected())
}

fn up_down_length(xs: &[f64]) -> usize {
    let prefix = lis_ending_at(xs);
    // longest decreasing run starting at j = longest increasing ending at j
    // when read from the right
    let rev: Vec<f64> = xs.iter().rev().copied().collect();
    let mut suffix = lis_ending_at(&rev);
    suffix.reverse();
    prefix
        .iter()
        .zip(&suffix)
        .map(|(p, s)| p + s - 1)
        .max()
        .unwrap_or(0)
}

/// `(u_n, d_n, l_n)`: longest up-then-down, down-then-up, and the larger.
pub fn lus_length(seq: &Sequence) -> (usize, usize, usize) {
    let u = up_down_length(seq.as_slice());
    let d = up_down_length(seq.reflected().as_slice());
    (u, d, u.max(d))
}

/// Prefix maxima over ranks `1..=len`.
struct MaxFenwick {
    tree: Vec<usize>,
}

impl MaxFenwick {
    fn new(len: usize) -> Self {
        Self {
            tree: vec![0; len + 1],
        }
    }

    fn update(&mut self, mut rank: usize, value: usize) {
        while rank < self.tree.len() {
            self.tree[rank] = self.tree[rank].max(value);
            rank += rank & rank.wrapping_neg();
        }
    }

    /// Maximum over ranks `1..=rank`.
    fn query(&self, mut rank: usize) -> usize {
        let mut best = 0;
        while rank > 0 {
            best = best.max(self.tree[rank]);
            rank &= rank - 1;
        }
        best
    }
}

fn ranks(xs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0; xs.len()];
    for (rank, &idx) in order.iter().enumerate() {
        r[idx] = rank + 1;
    }
    r
}

/// Longest subsequence that splits into at most `d+1` consecutive monotone
/// blocks, alternating and starting with an increasing one.
///
/// `best[j][k]` is the longest such subsequence ending at `x_j` with `x_j`
/// in block `k`. Its predecessor is either in block `k` and on the correct
/// side of `x_j`, or anywhere in an earlier block. Runs in
/// `O(n (d+1) log n)`.
pub fn dmodal_offline_length(seq: &Sequence, d: usize) -> usize {
    let xs = seq.as_slice();
    let n = xs.len();
    if n == 0 {
        return 0;
    }
    let blocks = (d + 1).min(n);
    let r = ranks(xs);
    let mut trees: Vec<MaxFenwick> = (0..blocks).map(|_| MaxFenwick::new(n)).collect();
    // best over all earlier elements in blocks < k
    let mut earlier = vec![0usize; blocks + 1];
    let mut overall = 0;
    let mut row = vec![0usize; blocks];
    for &rank in &r {
        for (k, slot) in row.iter_mut().enumerate() {
            let same = if k % 2 == 0 {
                trees[k].query(rank - 1)
            } else {
                trees[k].query(n - rank)
            };
            *slot = 1 + same.max(earlier[k]);
        }
        for (k, &len) in row.iter().enumerate() {
            let key = if k % 2 == 0 { rank } else { n + 1 - rank };
            trees[k].update(key, len);
            overall = overall.max(len);
        }
        for k in 1..=blocks {
            earlier[k] = earlier[k].max(earlier[k - 1]).max(row[k - 1]);
        }
    }
    overall
}

/// Which block direction comes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    UpFirst,
    BestOfBoth,
}

impl Orientation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Orientation::UpFirst => "up-first",
            Orientation::BestOfBoth => "best-of-both",
        }
    }
}

pub fn dmodal_offline_length_oriented(seq: &Sequence, d: usize, orientation: Orientation) -> usize {
    let up = dmodal_offline_length(seq, d);
    match orientation {
        Orientation::UpFirst => up,
        Orientation::BestOfBoth => up.max(dmodal_offline_length(&seq.reflected(), d)),
    }
}

/// Number of maximal alternating monotone runs, the first one increasing.
/// A single leading element always counts as an increasing run.
fn runs_needed(xs: &[f64]) -> usize {
    if xs.is_empty() {
        return 0;
    }
    let mut runs = 1;
    let mut up = true;
    for w in xs.windows(2) {
        if (w[1] > w[0]) != up {
            up = !up;
            runs += 1;
        }
    }
    runs
}

/// Exhaustive search over subsets, largest first.
pub fn dmodal_offline_bruteforce(seq: &Sequence, d: usize) -> Result<usize> {
    let xs = seq.as_slice();
    let n = xs.len();
    if n > BRUTEFORCE_MAX_LEN {
        return Err(Error::Size {
            len: n,
            max: BRUTEFORCE_MAX_LEN,
        });
    }
    let mut masks: Vec<u32> = (0..1u32 << n).collect();
    masks.sort_by_key(|m| std::cmp::Reverse(m.count_ones()));
    let mut picked = Vec::with_capacity(n);
    for mask in masks {
        picked.clear();
        picked.extend((0..n).filter(|&j| mask >> j & 1 == 1).map(|j| xs[j]));
        if runs_needed(&picked) <= d + 1 {
            return Ok(picked.len());
        }
    }
    Ok(0)
}

/// Smallest `L >= 0` with `(2L+1)^2 >= 12n - 3`, i.e.
/// `ceil(sqrt(3n - 3/4) - 1/2)` in exact arithmetic.
pub fn chung_guaranteed_length(n: usize) -> Result<usize> {
    if n < 1 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    let target = 12 * n as u128 - 3;
    let mut l = ((target as f64).sqrt() / 2.0) as u128;
    while l > 0 && (2 * l - 1) * (2 * l - 1) >= target {
        l -= 1;
    }
    while (2 * l + 1) * (2 * l + 1) < target {
        l += 1;
    }
    Ok(l as usize)
}

pub fn ceil_sqrt(n: usize) -> usize {
    let r = n.isqrt();
    if r * r == n {
        r
    } else {
        r + 1
    }
}

/// All off-line lengths of one sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineResult {
    pub lis: usize,
    pub lds: usize,
    pub u_n: usize,
    pub d_n: usize,
    pub l_n: usize,
    pub dmodal: BTreeMap<usize, usize>,
}

impl OfflineResult {
    pub fn of(seq: &Sequence, max_d: usize, orientation: Orientation) -> Self {
        let (u_n, d_n, l_n) = lus_length(seq);
        Self {
            lis: lis_length(seq),
            lds: lds_length(seq),
            u_n,
            d_n,
            l_n,
            dmodal: (0..=max_d)
                .map(|d| (d, dmodal_offline_length_oriented(seq, d, orientation)))
                .collect(),
        }
    }
}

/// Off-line lengths over the same seeded streams the simulator uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineBatch {
    pub n: usize,
    pub d: usize,
    pub orientation: Orientation,
    pub base_seed: u64,
    /// `max(u_n, d_n)` per run.
    pub l_n: Vec<usize>,
    /// d-modal length per run, in the requested orientation.
    pub dmodal: Vec<usize>,
}

impl OfflineBatch {
    pub fn l_n_moments(&self) -> Moments {
        Moments::of(&self.l_n.iter().map(|&l| l as f64).collect::<Vec<_>>())
    }

    pub fn dmodal_moments(&self) -> Moments {
        Moments::of(&self.dmodal.iter().map(|&l| l as f64).collect::<Vec<_>>())
    }
}

/// Run `j` sees the stream of seed `batch_seeds(base_seed, reps)[j]`, so an
/// off-line batch and an on-line batch with equal base seeds are paired.
pub fn run_offline_batch(
    n: usize,
    d: usize,
    orientation: Orientation,
    reps: usize,
    base_seed: u64,
) -> Result<OfflineBatch> {
    if reps == 0 {
        return Err(Error::Argument("reps must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Argument("horizon n must be at least 1".into()));
    }
    let one = |&seed: &u64| -> Result<(usize, usize)> {
        let seq = Sequence::new(draw_stream(seed, n))?;
        Ok((
            lus_length(&seq).2,
            dmodal_offline_length_oriented(&seq, d, orientation),
        ))
    };
    let seeds = batch_seeds(base_seed, reps);
    #[cfg(feature = "parallel")]
    let runs: Vec<(usize, usize)> = {
        use rayon::prelude::*;
        seeds.par_iter().map(one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<(usize, usize)> = seeds.iter().map(one).collect::<Result<_>>()?;
    let (l_n, dmodal) = runs.into_iter().unzip();
    Ok(OfflineBatch {
        n,
        d,
        orientation,
        base_seed,
        l_n,
        dmodal,
    })
}
