//! Reproducible dataset splits: seeded shuffle plus largest-remainder
//! apportionment of the requested ratios.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng::{shuffle, SplitMix64};

pub const RATIO_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SplitError {
    EmptyManifest,
    InvalidRatios,
}

impl fmt::Display for SplitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitError::EmptyManifest => write!(f, "cannot split an empty manifest"),
            SplitError::InvalidRatios => {
                write!(f, "ratios must be non-negative and sum to 1 within 1e-9")
            }
        }
    }
}

impl core::error::Error for SplitError {}

/// Disjoint train/validation/test assignment over asset ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn total(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}

/// Largest-remainder apportionment of `n` items across `ratios`.
///
/// Floors the quotas, then hands remaining items to the largest fractional
/// parts; ties go to the earlier ratio.
pub fn apportion(ratios: &[f64], n: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = Vec::with_capacity(ratios.len());
    let mut fractions: Vec<(usize, f64)> = Vec::with_capacity(ratios.len());
    let mut assigned = 0usize;
    for (i, &ratio) in ratios.iter().enumerate() {
        let quota = ratio * n as f64;
        let floor = quota as usize;
        sizes.push(floor);
        assigned += floor;
        fractions.push((i, quota - floor as f64));
    }
    // Stable sort keeps index order on exact fraction ties.
    fractions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let mut remaining = n.saturating_sub(assigned);
    let mut k = 0usize;
    while remaining > 0 && !fractions.is_empty() {
        let (i, _) = fractions[k % fractions.len()];
        sizes[i] += 1;
        remaining -= 1;
        k += 1;
    }
    sizes
}

fn ratios_valid(ratios: &[f64]) -> bool {
    ratios.iter().all(|&r| r >= 0.0)
        && math::abs(ratios.iter().sum::<f64>() - 1.0) <= RATIO_SUM_TOLERANCE
}

/// Split asset ids into train/validation/test.
///
/// The ids are shuffled with a seeded Fisher-Yates over their given
/// (deterministic) order, then cut by largest-remainder apportionment.
/// Identical inputs and seed yield an identical assignment on every
/// platform. Ids within each split are sorted.
pub fn split_ids(
    ids: &[String],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    let ratio_slice = [ratios.0, ratios.1, ratios.2];
    if !ratios_valid(&ratio_slice) {
        return Err(SplitError::InvalidRatios);
    }
    if ids.is_empty() {
        return Err(SplitError::EmptyManifest);
    }

    let mut order: Vec<&String> = ids.iter().collect();
    let mut rng = SplitMix64::new(seed);
    shuffle(&mut order, &mut rng);

    let sizes = apportion(&ratio_slice, order.len());
    let mut take = order.into_iter();
    let mut cut = |len: usize| -> Vec<String> {
        let mut part: Vec<String> = take.by_ref().take(len).cloned().collect();
        part.sort_unstable();
        part
    };
    Ok(SplitAssignment {
        seed,
        train: cut(sizes[0]),
        validation: cut(sizes[1]),
        test: cut(sizes[2]),
    })
}

/// Stratified variant: applies the same seeded split independently inside
/// each stratum, then merges. Per-split totals may drift from the plain
/// apportionment by one item per stratum.
pub fn split_ids_stratified(
    pairs: &[(String, String)],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    let ratio_slice = [ratios.0, ratios.1, ratios.2];
    if !ratios_valid(&ratio_slice) {
        return Err(SplitError::InvalidRatios);
    }
    if pairs.is_empty() {
        return Err(SplitError::EmptyManifest);
    }

    let mut strata: alloc::collections::BTreeMap<&str, Vec<String>> =
        alloc::collections::BTreeMap::new();
    for (id, stratum) in pairs {
        strata.entry(stratum.as_str()).or_default().push(id.clone());
    }

    let mut out = SplitAssignment {
        seed,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (stratum, ids) in strata {
        let sub_seed = seed ^ crate::rng::fnv1a64(stratum.as_bytes());
        let part = split_ids(&ids, ratios, sub_seed)?;
        out.train.extend(part.train);
        out.validation.extend(part.validation);
        out.test.extend(part.test);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("asset-{i:06}")).collect()
    }

    #[test]
    fn apportionment_matches_largest_remainder() {
        assert_eq!(apportion(&[0.8, 0.1, 0.1], 41_111), [32_889, 4_111, 4_111]);
        assert_eq!(apportion(&[0.8, 0.1, 0.1], 10), [8, 1, 1]);
        assert_eq!(apportion(&[1.0, 0.0, 0.0], 5), [5, 0, 0]);
        assert_eq!(apportion(&[0.34, 0.33, 0.33], 10), [4, 3, 3]);
    }

    #[test]
    fn split_sizes_follow_ratios() {
        let assignment = split_ids(&ids(10), (0.8, 0.1, 0.1), 42).unwrap();
        assert_eq!(assignment.train.len(), 8);
        assert_eq!(assignment.validation.len(), 1);
        assert_eq!(assignment.test.len(), 1);
    }

    #[test]
    fn degenerate_ratio_puts_everything_in_train() {
        let assignment = split_ids(&ids(7), (1.0, 0.0, 0.0), 3).unwrap();
        assert_eq!(assignment.train.len(), 7);
        assert!(assignment.validation.is_empty());
        assert!(assignment.test.is_empty());
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let all = ids(100);
        let a = split_ids(&all, (0.8, 0.1, 0.1), 99).unwrap();
        let b = split_ids(&all, (0.8, 0.1, 0.1), 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );

        let mut union: Vec<&String> = a
            .train
            .iter()
            .chain(a.validation.iter())
            .chain(a.test.iter())
            .collect();
        union.sort_unstable();
        union.dedup();
        assert_eq!(union.len(), 100);
    }

    #[test]
    fn different_seeds_differ() {
        let all = ids(50);
        let a = split_ids(&all, (0.8, 0.1, 0.1), 1).unwrap();
        let b = split_ids(&all, (0.8, 0.1, 0.1), 2).unwrap();
        assert_ne!(a.train, b.train);
    }

    #[test]
    fn empty_manifest_is_rejected() {
        assert_eq!(
            split_ids(&[], (0.8, 0.1, 0.1), 0),
            Err(SplitError::EmptyManifest)
        );
    }

    #[test]
    fn bad_ratios_are_rejected() {
        assert_eq!(
            split_ids(&ids(3), (0.5, 0.1, 0.1), 0),
            Err(SplitError::InvalidRatios)
        );
        assert_eq!(
            split_ids(&ids(3), (1.2, -0.1, -0.1), 0),
            Err(SplitError::InvalidRatios)
        );
    }

    #[test]
    fn stratified_split_respects_strata() {
        let pairs: Vec<(String, String)> = (0..40)
            .map(|i| {
                let stratum = if i % 2 == 0 { "zebra" } else { "lion" };
                (format!("asset-{i:03}"), stratum.to_string())
            })
            .collect();
        let assignment = split_ids_stratified(&pairs, (0.8, 0.1, 0.1), 5).unwrap();
        assert_eq!(assignment.total(), 40);
        assert_eq!(assignment.train.len(), 32);
        assert_eq!(assignment.validation.len(), 4);
        assert_eq!(assignment.test.len(), 4);
    }
}
