//! Parameter-instability tests for split-variable selection.
//!
//! The scores of a fitted leaf model are ordered (or grouped) by a candidate
//! partitioning variable. If the model is stable along that variable the
//! cumulative score process wanders around zero; a systematic drift means a
//! single set of coefficients does not fit both ends. The drift is measured
//! by a fluctuation statistic and calibrated by permuting the variable.

use rand::seq::SliceRandom;

use crate::data::{ColumnData, Dataset};
use crate::linmod::ScoreMatrix;
use crate::seed::{self, derive_seed};

/// Sample sizes up to this bound are tested by full enumeration.
pub const EXACT_MAX_N: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub alpha: f64,
    /// Number of random permutations `B`.
    pub permutations: usize,
    /// Fraction trimmed at both ends of the breakpoint range.
    pub trim: f64,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            alpha: 0.05,
            permutations: 199,
            trim: 0.1,
            seed: 0,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(crate::Error::Config(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if self.permutations < 19 {
            return Err(crate::Error::Config(format!(
                "need at least 19 permutations, got {}",
                self.permutations
            )));
        }
        if !(self.trim > 0.0 && self.trim < 0.5) {
            return Err(crate::Error::Config(format!("trim {} must lie in (0, 0.5)", self.trim)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityResult {
    pub variable: String,
    pub statistic: f64,
    pub p_value: f64,
    pub adjusted_p: f64,
}

/// Values of one partitioning variable restricted to the node's rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Partitioner {
    Ordered(Vec<f64>),
    Levels { codes: Vec<u32>, n_levels: usize },
}

impl Partitioner {
    pub fn from_column(ds: &Dataset, col: usize, rows: &[usize]) -> Self {
        match &ds.column(col).data {
            ColumnData::Numeric(v) => Partitioner::Ordered(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical { levels, codes } => Partitioner::Levels {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                n_levels: levels.len(),
            },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Partitioner::Ordered(v) => v.len(),
            Partitioner::Levels { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Partitioner::Ordered(v) => v.iter().all(|&x| x == v[0]),
            Partitioner::Levels { codes, .. } => codes.iter().all(|&c| c == codes[0]),
        }
    }

    fn permuted(&self, perm: &[usize]) -> Partitioner {
        match self {
            Partitioner::Ordered(v) => Partitioner::Ordered(perm.iter().map(|&j| v[j]).collect()),
            Partitioner::Levels { codes, n_levels } => Partitioner::Levels {
                codes: perm.iter().map(|&j| codes[j]).collect(),
                n_levels: *n_levels,
            },
        }
    }
}

/// Scores divided column-wise by their root mean square; all-zero columns
/// are skipped. Row-major `n x kept`.
struct Standardized {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

fn standardize(scores: &ScoreMatrix) -> Standardized {
    let n = scores.n;
    let mut keep = Vec::new();
    for j in 0..scores.k {
        let ms = (0..n).map(|i| scores.row(i)[j].powi(2)).sum::<f64>() / n as f64;
        let rms = ms.sqrt();
        if rms > 0.0 && rms.is_finite() {
            keep.push((j, rms));
        }
    }
    let k = keep.len();
    let mut data = Vec::with_capacity(n * k);
    for i in 0..n {
        let row = scores.row(i);
        data.extend(keep.iter().map(|&(j, rms)| row[j] / rms));
    }
    Standardized { n, k, data }
}

impl Standardized {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    /// Sup of the weighted squared CUSUM over trimmed breakpoints, scores
    /// taken in the order `seq`.
    fn sup_cusum(&self, seq: &[usize], trim: f64) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let lo = ((trim * nf) - 1e-9).ceil().max(1.0) as usize;
        let hi = (((1.0 - trim) * nf) + 1e-9).floor().min((n - 1) as f64) as usize;
        let mut cum = vec![0.0; self.k];
        let mut best = 0.0f64;
        for (t, &i) in seq.iter().enumerate().take(hi) {
            for (c, v) in cum.iter_mut().zip(self.row(i)) {
                *c += v;
            }
            let t = t + 1;
            if t >= lo {
                let frac = t as f64 / nf;
                let ss: f64 = cum.iter().map(|c| c * c).sum();
                best = best.max(ss / (frac * (1.0 - frac)) / nf);
            }
        }
        best
    }

    fn level_stat(&self, codes: &[u32], n_levels: usize) -> f64 {
        let mut sums = vec![0.0; n_levels * self.k];
        let mut counts = vec![0usize; n_levels];
        for (i, &c) in codes.iter().enumerate() {
            let c = c as usize;
            counts[c] += 1;
            for (s, v) in sums[c * self.k..(c + 1) * self.k].iter_mut().zip(self.row(i)) {
                *s += v;
            }
        }
        let mut stat = 0.0;
        for (l, &cnt) in counts.iter().enumerate() {
            if cnt > 0 {
                let ss: f64 = sums[l * self.k..(l + 1) * self.k].iter().map(|s| s * s).sum();
                stat += ss / cnt as f64;
            }
        }
        stat
    }
}

fn stable_order(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    order
}

fn statistic_std(z: &Standardized, x: &Partitioner, trim: f64) -> f64 {
    if z.k == 0 || z.n < 2 || x.is_constant() {
        return 0.0;
    }
    match x {
        Partitioner::Ordered(v) => z.sup_cusum(&stable_order(v), trim),
        Partitioner::Levels { codes, n_levels } => z.level_stat(codes, *n_levels),
    }
}

/// Fluctuation statistic of `scores` along `x`.
///
/// For ordered `x` the standardized scores are sorted by `x` (ties kept in
/// row order) and the statistic is the maximum of
/// `||S(t)||^2 / (t/n (1 - t/n)) / n` over breakpoints `t/n` in
/// `[trim, 1 - trim]`, where `S(t)` is the cumulative score sum. For
/// categorical `x` it is `sum_l ||sum_{i in l} s_i||^2 / n_l`. A constant `x`
/// or all-zero scores give 0.
pub fn fluctuation_statistic(scores: &ScoreMatrix, x: &Partitioner, trim: f64) -> f64 {
    assert_eq!(scores.n, x.len(), "scores and partitioner lengths differ");
    statistic_std(&standardize(scores), x, trim)
}

/// Heap's algorithm over index permutations.
fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            f(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Precomputed sort structure for scoring many permutations of an ordered
/// variable without re-sorting.
struct OrderedPerm {
    sorted: Vec<usize>,
    /// Start offsets of tie blocks in `sorted`, plus `n`.
    blocks: Vec<usize>,
}

impl OrderedPerm {
    fn new(v: &[f64]) -> Self {
        let sorted = stable_order(v);
        let mut blocks = vec![0];
        for t in 1..sorted.len() {
            if v[sorted[t]] != v[sorted[t - 1]] {
                blocks.push(t);
            }
        }
        blocks.push(sorted.len());
        OrderedPerm { sorted, blocks }
    }

    /// Row order of `x'` with `x'_i = x[perm[i]]`, ties by row index.
    fn sequence(&self, perm: &[usize], inv: &mut [usize], seq: &mut Vec<usize>) {
        for (i, &j) in perm.iter().enumerate() {
            inv[j] = i;
        }
        seq.clear();
        seq.extend(self.sorted.iter().map(|&j| inv[j]));
        for w in self.blocks.windows(2) {
            if w[1] - w[0] > 1 {
                seq[w[0]..w[1]].sort_unstable();
            }
        }
    }
}

/// Permutation p-value of the fluctuation statistic.
///
/// Returns `(statistic, p)`. With `n <= 7` every permutation of `x` is
/// enumerated and `p` is the exact fraction of permutations whose
/// statistic is at least the observed one. Otherwise `p = (1 + #{b :
/// stat_b >= stat_obs}) / (B + 1)` over `B` seeded shuffles drawn from the
/// substream `(cfg.seed, stream)`.
pub fn permutation_p(scores: &ScoreMatrix, x: &Partitioner, cfg: &StabilityConfig, stream: u64) -> (f64, f64) {
    assert_eq!(scores.n, x.len(), "scores and partitioner lengths differ");
    let z = standardize(scores);
    let observed = statistic_std(&z, x, cfg.trim);
    if observed == 0.0 {
        // nothing can be smaller; every permutation ties
        return (0.0, 1.0);
    }
    let n = x.len();
    let ordered = match x {
        Partitioner::Ordered(v) => Some(OrderedPerm::new(v)),
        Partitioner::Levels { .. } => None,
    };
    let mut inv = vec![0usize; n];
    let mut seq = Vec::with_capacity(n);
    let mut stat_of = |perm: &[usize]| -> f64 {
        match (x, &ordered) {
            (Partitioner::Ordered(_), Some(op)) => {
                op.sequence(perm, &mut inv, &mut seq);
                z.sup_cusum(&seq, cfg.trim)
            }
            (Partitioner::Levels { codes, n_levels }, _) => {
                let pc: Vec<u32> = perm.iter().map(|&j| codes[j]).collect();
                z.level_stat(&pc, *n_levels)
            }
            _ => unreachable!(),
        }
    };

    if n <= EXACT_MAX_N {
        let mut total = 0u64;
        let mut hits = 0u64;
        for_each_permutation(n, |perm| {
            total += 1;
            if stat_of(perm) >= observed {
                hits += 1;
            }
        });
        return (observed, hits as f64 / total as f64);
    }

    let mut rng = seed::rng(derive_seed(cfg.seed, &[stream]));
    let mut perm: Vec<usize> = (0..n).collect();
    let mut hits = 0usize;
    for _ in 0..cfg.permutations {
        perm.shuffle(&mut rng);
        if stat_of(&perm) >= observed {
            hits += 1;
        }
    }
    (observed, (1 + hits) as f64 / (cfg.permutations + 1) as f64)
}

/// Exhaustive p-value by literally permuting `x`; used as a reference.
pub fn enumerate_p(scores: &ScoreMatrix, x: &Partitioner, trim: f64) -> f64 {
    let observed = fluctuation_statistic(scores, x, trim);
    let n = x.len();
    let mut total = 0u64;
    let mut hits = 0u64;
    for_each_permutation(n, |perm| {
        total += 1;
        if fluctuation_statistic(scores, &x.permuted(perm), trim) >= observed {
            hits += 1;
        }
    });
    hits as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSelection {
    /// One result per non-constant candidate, in candidate order.
    pub results: Vec<StabilityResult>,
    /// Column indices with `adjusted_p <= alpha`, best first.
    pub significant: Vec<usize>,
}

impl SplitSelection {
    pub fn chosen(&self) -> Option<usize> {
        self.significant.first().copied()
    }
}

/// Tests every non-constant candidate column on `rows` and ranks the
/// significant ones.
///
/// p-values are Bonferroni-adjusted by the number of variables tested. The
/// ranking is by adjusted p, then larger statistic, then candidate order.
/// Each variable draws its permutations from a substream keyed by its
/// column index, so results do not depend on evaluation order.
pub fn select_split_variable(
    scores: &ScoreMatrix,
    ds: &Dataset,
    rows: &[usize],
    candidates: &[usize],
    cfg: &StabilityConfig,
) -> SplitSelection {
    let mut tested: Vec<(usize, f64, f64)> = Vec::new();
    for &c in candidates {
        let x = Partitioner::from_column(ds, c, rows);
        if x.is_constant() {
            continue;
        }
        let (stat, p) = permutation_p(scores, &x, cfg, c as u64);
        tested.push((c, stat, p));
    }
    let m = tested.len() as f64;
    let results: Vec<StabilityResult> = tested
        .iter()
        .map(|&(c, stat, p)| StabilityResult {
            variable: ds.column(c).name.clone(),
            statistic: stat,
            p_value: p,
            adjusted_p: (p * m).min(1.0),
        })
        .collect();
    let mut order: Vec<usize> = (0..tested.len())
        .filter(|&i| results[i].adjusted_p <= cfg.alpha)
        .collect();
    order.sort_by(|&a, &b| {
        results[a]
            .adjusted_p
            .total_cmp(&results[b].adjusted_p)
            .then(results[b].statistic.total_cmp(&results[a].statistic))
            .then(a.cmp(&b))
    });
    SplitSelection {
        significant: order.into_iter().map(|i| tested[i].0).collect(),
        results,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn single_column(v: Vec<f64>) -> ScoreMatrix {
        ScoreMatrix {
            n: v.len(),
            k: 1,
            data: v,
        }
    }

    #[test]
    fn zero_scores_and_constant_x_give_zero() {
        let s = single_column(vec![0.0; 10]);
        let x = Partitioner::Ordered((0..10).map(f64::from).collect());
        assert_eq!(fluctuation_statistic(&s, &x, 0.1), 0.0);
        let s = single_column((0..10).map(|i| i as f64 - 4.5).collect());
        let x = Partitioner::Ordered(vec![3.0; 10]);
        assert_eq!(fluctuation_statistic(&s, &x, 0.1), 0.0);
        let x = Partitioner::Levels {
            codes: vec![1; 10],
            n_levels: 3,
        };
        assert_eq!(fluctuation_statistic(&s, &x, 0.1), 0.0);
    }

    #[test]
    fn sign_flip_statistic_value() {
        // +1 then -1: the cumulative sum peaks at n/2 with value n
        let n = 40;
        let s = single_column((0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect());
        let x = Partitioner::Ordered((0..n).map(f64::from).collect());
        assert!((fluctuation_statistic(&s, &x, 0.1) - n as f64).abs() < 1e-9);
    }

    #[test]
    fn scale_invariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 60;
        let raw: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>() - 0.5).collect();
        let s = ScoreMatrix { n, k: 2, data: raw.clone() };
        let s2 = ScoreMatrix {
            n,
            k: 2,
            data: raw.iter().map(|v| v * 37.5).collect(),
        };
        let x = Partitioner::Ordered((0..n).map(|_| rng.random::<f64>()).collect());
        let cfg = StabilityConfig::default();
        assert_eq!(permutation_p(&s, &x, &cfg, 0).1, permutation_p(&s2, &x, &cfg, 0).1);
    }

    #[test]
    fn fast_permutation_matches_literal_permutation() {
        // with ties in x the block re-sort must reproduce a literal argsort
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let s = single_column((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
        let xv: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 5.0).floor()).collect();
        let x = Partitioner::Ordered(xv.clone());
        let z = standardize(&s);
        let op = OrderedPerm::new(&xv);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut inv = vec![0; n];
        let mut seq = Vec::new();
        for _ in 0..50 {
            perm.shuffle(&mut rng);
            op.sequence(&perm, &mut inv, &mut seq);
            let fast = z.sup_cusum(&seq, 0.1);
            let slow = fluctuation_statistic(&s, &x.permuted(&perm), 0.1);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn heap_enumerates_all_permutations() {
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(5, |p| {
            seen.insert(p.to_vec());
        });
        assert_eq!(seen.len(), 120);
    }

    #[test]
    fn adding_a_candidate_never_lowers_adjusted_p() {
        use crate::data::{Column, Role};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 50;
        let cols: Vec<Column> = (0..3)
            .map(|j| Column::numeric(format!("x{j}"), Role::Partitioning, (0..n).map(|_| rng.random()).collect()))
            .chain([
                Column::numeric("z", Role::Regression, vec![0.0; n]),
                Column::numeric("y", Role::Target, vec![0.0; n]),
            ])
            .collect();
        let ds = Dataset::new(cols).unwrap();
        let s = single_column((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
        let rows: Vec<usize> = (0..n).collect();
        let cfg = StabilityConfig::default();
        let two = select_split_variable(&s, &ds, &rows, &[0, 1], &cfg);
        let three = select_split_variable(&s, &ds, &rows, &[0, 1, 2], &cfg);
        for (a, b) in two.results.iter().zip(&three.results) {
            assert_eq!(a.p_value, b.p_value);
            assert!(b.adjusted_p >= a.adjusted_p);
        }
    }

    #[test]
    fn config_validation() {
        assert!(StabilityConfig::default().validate().is_ok());
        let mut c = StabilityConfig::default();
        c.permutations = 10;
        assert!(c.validate().is_err());
        c = StabilityConfig { alpha: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
