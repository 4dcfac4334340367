//! Agreement statistics over repeated judge runs. Matrices are laid out
//! items × runs; the runs play the role of raters.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReliabilityError {
    #[error("need at least {need} runs, item {item} has {got}")]
    TooFewRuns { item: usize, got: usize, need: usize },
    #[error("need at least 2 items with 2 or more values")]
    TooFewItems,
    #[error("items have different numbers of ratings")]
    Ragged,
    #[error("chance agreement is 1, kappa is undefined")]
    KappaUndefined,
}

/// Mean over items of the population standard deviation of their runs.
pub fn avg_intra_item_sd(scores: &[Vec<f64>]) -> Result<f64, ReliabilityError> {
    if scores.is_empty() {
        return Err(ReliabilityError::TooFewItems);
    }
    let mut total = 0.0;
    for (i, runs) in scores.iter().enumerate() {
        if runs.len() < 2 {
            return Err(ReliabilityError::TooFewRuns { item: i, got: runs.len(), need: 2 });
        }
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        total += (runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    }
    Ok(total / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Nominal,
    Interval,
}

impl Metric {
    fn delta(self, a: f64, b: f64) -> f64 {
        match self {
            Metric::Nominal => {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            }
            Metric::Interval => (a - b).powi(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub value: f64,
    /// Set when every pairable value is identical, so expected
    /// disagreement is zero and the value is fixed at 1.
    pub degenerate: bool,
}

/// Krippendorff's alpha over a coincidence matrix. `None` marks a missing
/// rating; items with fewer than two ratings are not pairable and ignored.
pub fn krippendorff_alpha(scores: &[Vec<Option<f64>>], metric: Metric) -> Result<Alpha, ReliabilityError> {
    let units: Vec<Vec<f64>> = scores
        .iter()
        .map(|r| r.iter().flatten().copied().collect::<Vec<f64>>())
        .filter(|u| u.len() >= 2)
        .collect();
    if units.len() < 2 {
        return Err(ReliabilityError::TooFewItems);
    }
    // distinct values with their coincidence marginals
    let mut values: Vec<f64> = units.iter().flatten().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup();
    let idx = |v: f64| values.binary_search_by(|x| x.partial_cmp(&v).unwrap_or(Ordering::Less)).expect("value present");
    let c = values.len();
    let mut o = vec![vec![0.0; c]; c];
    for u in &units {
        let m = u.len() as f64;
        for (i, a) in u.iter().enumerate() {
            for (j, b) in u.iter().enumerate() {
                if i != j {
                    o[idx(*a)][idx(*b)] += 1.0 / (m - 1.0);
                }
            }
        }
    }
    let marg: Vec<f64> = o.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marg.iter().sum();
    let mut d_o = 0.0;
    let mut d_e = 0.0;
    for a in 0..c {
        for b in 0..c {
            let d = metric.delta(values[a], values[b]);
            d_o += o[a][b] * d;
            d_e += marg[a] * marg[b] * d;
        }
    }
    d_o /= n;
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return Ok(Alpha { value: 1.0, degenerate: true });
    }
    Ok(Alpha { value: 1.0 - d_o / d_e, degenerate: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    pub p_bar: f64,
    pub p_e: f64,
}

/// Fleiss' kappa from per-item category counts. Every row must sum to the
/// same number of raters (at least 2).
pub fn fleiss_kappa_counts(counts: &[Vec<u64>]) -> Result<Kappa, ReliabilityError> {
    if counts.is_empty() {
        return Err(ReliabilityError::TooFewItems);
    }
    let n: u64 = counts[0].iter().sum();
    if counts.iter().any(|r| r.iter().sum::<u64>() != n || r.len() != counts[0].len()) {
        return Err(ReliabilityError::Ragged);
    }
    if n < 2 {
        return Err(ReliabilityError::TooFewRuns { item: 0, got: n as usize, need: 2 });
    }
    let (items, nf) = (counts.len() as f64, n as f64);
    let p_bar = counts
        .iter()
        .map(|r| (r.iter().map(|&c| (c * c) as f64).sum::<f64>() - nf) / (nf * (nf - 1.0)))
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..counts[0].len())
        .map(|j| {
            let p = counts.iter().map(|r| r[j]).sum::<u64>() as f64 / (items * nf);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(ReliabilityError::KappaUndefined);
    }
    Ok(Kappa { kappa: (p_bar - p_e) / (1.0 - p_e), p_bar, p_e })
}

/// Fleiss' kappa from items × runs categorical ratings.
pub fn fleiss_kappa(ratings: &[Vec<u32>]) -> Result<Kappa, ReliabilityError> {
    let runs = ratings.first().map_or(0, Vec::len);
    if ratings.iter().any(|r| r.len() != runs) {
        return Err(ReliabilityError::Ragged);
    }
    let mut cats: Vec<u32> = ratings.iter().flatten().copied().collect();
    cats.sort_unstable();
    cats.dedup();
    let counts: Vec<Vec<u64>> = ratings
        .iter()
        .map(|r| cats.iter().map(|c| r.iter().filter(|x| *x == c).count() as u64).collect())
        .collect();
    fleiss_kappa_counts(&counts)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Textbook reliability data, 4 observers × 12 units, transposed to
    /// units × observers.
    fn textbook() -> Vec<Vec<Option<f64>>> {
        let rows: [[Option<u8>; 12]; 4] = [
            [Some(1), Some(2), Some(3), Some(3), Some(2), Some(1), Some(4), Some(1), Some(2), None, None, None],
            [Some(1), Some(2), Some(3), Some(3), Some(2), Some(2), Some(4), Some(1), Some(2), Some(5), None, Some(3)],
            [None, Some(3), Some(3), Some(3), Some(2), Some(3), Some(4), Some(2), Some(2), Some(5), Some(1), None],
            [Some(1), Some(2), Some(3), Some(3), Some(2), Some(4), Some(4), Some(1), Some(2), Some(5), Some(1), None],
        ];
        (0..12).map(|u| rows.iter().map(|r| r[u].map(f64::from)).collect()).collect()
    }

    #[test]
    fn alpha_textbook() {
        let a = krippendorff_alpha(&textbook(), Metric::Nominal).unwrap();
        assert_relative_eq!(a.value, 0.743421052631579, epsilon = 1e-12);
        let a = krippendorff_alpha(&textbook(), Metric::Interval).unwrap();
        assert_relative_eq!(a.value, 0.8491071428571428, epsilon = 1e-12);
    }

    #[test]
    fn alpha_edges() {
        let perfect = vec![vec![Some(1.0); 3], vec![Some(4.0); 3]];
        assert_eq!(krippendorff_alpha(&perfect, Metric::Interval).unwrap(), Alpha { value: 1.0, degenerate: false });
        let flat = vec![vec![Some(3.0); 3]; 4];
        assert!(krippendorff_alpha(&flat, Metric::Nominal).unwrap().degenerate);
        assert_eq!(krippendorff_alpha(&[vec![Some(1.0), Some(2.0)]], Metric::Nominal), Err(ReliabilityError::TooFewItems));
    }

    #[test]
    fn alpha_near_zero_for_shuffled_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let items: Vec<Vec<Option<f64>>> =
            (0..2000).map(|_| (0..5).map(|_| Some(rng.random_range(1..=5) as f64)).collect()).collect();
        let a = krippendorff_alpha(&items, Metric::Nominal).unwrap().value;
        assert!(a.abs() < 0.05, "alpha {a}");
        let mut col: Vec<u32> = (0..2000).map(|i| (i % 5) as u32).collect();
        let runs: Vec<Vec<u32>> = (0..5)
            .map(|_| {
                col.shuffle(&mut rng);
                col.clone()
            })
            .collect();
        let items: Vec<Vec<Option<f64>>> = (0..2000).map(|i| runs.iter().map(|r| Some(r[i] as f64)).collect()).collect();
        assert!(krippendorff_alpha(&items, Metric::Interval).unwrap().value.abs() < 0.05);
    }

    #[test]
    fn kappa_textbook() {
        let counts = vec![
            vec![0, 0, 0, 0, 14],
            vec![0, 2, 6, 4, 2],
            vec![0, 0, 3, 5, 6],
            vec![0, 3, 9, 2, 0],
            vec![2, 2, 8, 1, 1],
            vec![7, 7, 0, 0, 0],
            vec![3, 2, 6, 3, 0],
            vec![2, 5, 3, 2, 2],
            vec![6, 5, 2, 1, 0],
            vec![0, 2, 2, 3, 7],
        ];
        let k = fleiss_kappa_counts(&counts).unwrap();
        assert_relative_eq!(k.kappa, 0.20993070442195524, epsilon = 1e-12);
        assert_relative_eq!(k.p_bar, 0.378021978021978, epsilon = 1e-12);
        assert_relative_eq!(k.p_e, 0.21275510204081632, epsilon = 1e-12);
    }

    #[test]
    fn kappa_edges() {
        assert_relative_eq!(fleiss_kappa(&[vec![1, 1, 1], vec![2, 2, 2]]).unwrap().kappa, 1.0);
        assert_eq!(fleiss_kappa(&[vec![3, 3], vec![3, 3]]), Err(ReliabilityError::KappaUndefined));
        assert_eq!(fleiss_kappa(&[vec![3, 3], vec![3]]), Err(ReliabilityError::Ragged));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r: Vec<Vec<u32>> = (0..3000).map(|_| (0..5).map(|_| rng.random_range(1..=5)).collect()).collect();
        assert!(fleiss_kappa(&r).unwrap().kappa.abs() < 0.05);
    }

    #[test]
    fn sd_cases() {
        assert_relative_eq!(avg_intra_item_sd(&[vec![4.0, 4.0, 4.0, 4.0, 5.0]]).unwrap(), 0.4);
        assert_eq!(avg_intra_item_sd(&[vec![3.0; 5], vec![2.0; 5]]).unwrap(), 0.0);
        // item 2: values 1,3 → sd 1; item 1: sd 0.4
        assert_relative_eq!(avg_intra_item_sd(&[vec![4.0, 4.0, 4.0, 4.0, 5.0], vec![1.0, 3.0, 1.0, 3.0]]).unwrap(), 0.7, epsilon = 1e-12);
        assert!(matches!(avg_intra_item_sd(&[vec![4.0]]), Err(ReliabilityError::TooFewRuns { .. })));
    }

    proptest! {
        #[test]
        fn bounded_by_one(m in proptest::collection::vec(proptest::collection::vec(1u32..=5, 4), 2..30)) {
            let f: Vec<Vec<Option<f64>>> = m.iter().map(|r| r.iter().map(|&x| Some(x as f64)).collect()).collect();
            if let Ok(a) = krippendorff_alpha(&f, Metric::Interval) { prop_assert!(a.value <= 1.0 + 1e-12); }
            if let Ok(a) = krippendorff_alpha(&f, Metric::Nominal) { prop_assert!(a.value <= 1.0 + 1e-12); }
            if let Ok(k) = fleiss_kappa(&m) { prop_assert!(k.kappa <= 1.0 + 1e-12); }
            prop_assert!(avg_intra_item_sd(&f.iter().map(|r| r.iter().flatten().copied().collect()).collect::<Vec<_>>()).unwrap() >= 0.0);
        }

        #[test]
        fn perfect_agreement_is_one(vals in proptest::collection::vec(1u32..=5, 2..20)) {
            prop_assume!(vals.iter().any(|v| *v != vals[0]));
            let m: Vec<Vec<u32>> = vals.iter().map(|&v| vec![v; 3]).collect();
            prop_assert!((fleiss_kappa(&m).unwrap().kappa - 1.0).abs() < 1e-12);
            let f: Vec<Vec<Option<f64>>> = m.iter().map(|r| r.iter().map(|&x| Some(x as f64)).collect()).collect();
            prop_assert!((krippendorff_alpha(&f, Metric::Interval).unwrap().value - 1.0).abs() < 1e-12);
        }
    }
}
