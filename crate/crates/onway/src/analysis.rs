//! Applied market analysis: strategy-engagement rates, segmentation group
//! comparisons, and between-outlet substitutability.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::choice::{
    conditional_choice_probabilities, strategy_probabilities, CoefficientSet, OutletFeatures,
    StrategyContext,
};
use crate::estimation::{ChoiceData, EstimationError, Observation};
use crate::spatial::Market;

/// Destination-strategy adoption probability for each of the eight trip
/// contexts.
#[derive(Clone, Debug)]
pub struct EngagementTable {
    pub rows: Vec<EngagementRow>,
}

#[derive(Copy, Clone, Debug)]
pub struct EngagementRow {
    pub regular: bool,
    pub aware_before: bool,
    pub morning: bool,
    pub destination_probability: f64,
}

/// Destination-strategy engagement for every (regular, aware, morning)
/// combination. Requires a two-strategy coefficient set.
pub fn engagement_table(coeffs: &CoefficientSet) -> Result<EngagementTable, AnalysisError> {
    if coeffs.n_strategies() != 2 {
        return Err(AnalysisError::WrongFamily { strategies: coeffs.n_strategies() });
    }
    let mut rows = Vec::with_capacity(8);
    for regular in [false, true] {
        for aware_before in [false, true] {
            for morning in [false, true] {
                let z = StrategyContext::new(regular, aware_before, morning);
                let q = strategy_probabilities(coeffs, &z);
                rows.push(EngagementRow {
                    regular,
                    aware_before,
                    morning,
                    destination_probability: q.probability(1),
                });
            }
        }
    }
    Ok(EngagementTable { rows })
}

/// One-way ANOVA comparison of a per-observation quantity across groups.
#[derive(Clone, Debug)]
pub struct GroupComparison {
    /// (label, mean, size) per group, in label order.
    pub group_means: Vec<(String, f64, usize)>,
    pub f_statistic: f64,
    pub df1: usize,
    pub df2: usize,
}

/// One-way ANOVA F statistic with (g-1, n-g) degrees of freedom.
pub fn group_comparison(values: &[f64], groups: &[String]) -> Result<GroupComparison, AnalysisError> {
    if values.len() != groups.len() {
        return Err(AnalysisError::DegenerateGroups {
            reason: format!("{} values but {} labels", values.len(), groups.len()),
        });
    }
    let mut by_group: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (v, g) in values.iter().zip(groups.iter()) {
        let e = by_group.entry(g).or_insert((0.0, 0));
        e.0 += v;
        e.1 += 1;
    }
    let g = by_group.len();
    let n = values.len();
    if g < 2 {
        return Err(AnalysisError::DegenerateGroups { reason: format!("{g} group(s)") });
    }
    if n <= g {
        return Err(AnalysisError::DegenerateGroups {
            reason: format!("{n} observations in {g} groups"),
        });
    }
    let grand_mean = values.iter().sum::<f64>() / n as f64;
    let group_means: Vec<(String, f64, usize)> =
        by_group.iter().map(|(k, (s, c))| (k.to_string(), s / *c as f64, *c)).collect();
    let mean_of: BTreeMap<&str, f64> =
        group_means.iter().map(|(k, m, _)| (k.as_str(), *m)).collect();

    let ss_between: f64 = group_means
        .iter()
        .map(|(_, m, c)| *c as f64 * (m - grand_mean) * (m - grand_mean))
        .sum();
    let ss_within: f64 = values
        .iter()
        .zip(groups.iter())
        .map(|(v, g)| {
            let m = mean_of[g.as_str()];
            (v - m) * (v - m)
        })
        .sum();
    let df1 = g - 1;
    let df2 = n - g;
    let ms_between = ss_between / df1 as f64;
    let ms_within = ss_within / df2 as f64;
    let f_statistic =
        if ms_within == 0.0 && ms_between == 0.0 { 0.0 } else { ms_between / ms_within };
    Ok(GroupComparison { group_means, f_statistic, df1, df2 })
}

/// Sample-level substitutability between outlets at one time of day.
///
/// Entries are averages over consumers of minus the product of the two
/// outlets' conditional choice probabilities, mixed over strategies; the
/// matrix is symmetric, off-diagonals lie in [-0.25, 0] and the diagonal is
/// undefined (stored as NaN).
#[derive(Clone, Debug)]
pub struct SubstitutabilityMatrix {
    pub outlet_ids: Vec<String>,
    /// Row-major `len x len`; diagonal entries are NaN.
    pub gamma: Vec<f64>,
    pub morning: bool,
}

impl SubstitutabilityMatrix {
    pub fn len(&self) -> usize {
        self.outlet_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outlet_ids.is_empty()
    }

    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.gamma[a * self.outlet_ids.len() + b]
    }

    /// Mean absolute off-diagonal substitutability.
    pub fn mean_abs(&self) -> f64 {
        let k = self.len();
        if k < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    total += self.value(a, b).abs();
                }
            }
        }
        total / (k * (k - 1)) as f64
    }
}

/// Substitutability of `outlet_subset` over `dataset`, with every
/// observation's morning flag overridden by `morning`. Probabilities are
/// evaluated over the full market choice set.
pub fn substitutability_matrix(
    coeffs: &CoefficientSet,
    dataset: &[Observation],
    market: &Market,
    outlet_subset: &[String],
    morning: bool,
) -> Result<SubstitutabilityMatrix, AnalysisError> {
    substitutability_with_mixer(coeffs, dataset, market, outlet_subset, morning, |c, z| {
        strategy_probabilities(c, z).probabilities().to_vec()
    })
}

/// Same as [`substitutability_matrix`] but with an injectable strategy-mix
/// function, which lets tests freeze the strategy probabilities and verify
/// that the time-of-day override acts only through them.
pub fn substitutability_with_mixer(
    coeffs: &CoefficientSet,
    dataset: &[Observation],
    market: &Market,
    outlet_subset: &[String],
    morning: bool,
    mixer: impl Fn(&CoefficientSet, &StrategyContext) -> Vec<f64> + Sync,
) -> Result<SubstitutabilityMatrix, AnalysisError> {
    if outlet_subset.is_empty() {
        return Err(AnalysisError::EmptySubset);
    }
    if dataset.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    let subset: Vec<usize> = outlet_subset
        .iter()
        .map(|id| {
            market
                .outlet_index(id)
                .ok_or_else(|| AnalysisError::UnknownOutlet { id: id.clone() })
        })
        .collect::<Result<_, _>>()?;

    let data = ChoiceData::from_awareness_positions(dataset, market, None)?;
    let k = subset.len();
    let n = dataset.len();

    let per_obs: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut z = dataset[i].strategy_context();
            z.morning = morning;
            let q = mixer(coeffs, &z);
            let features: Vec<OutletFeatures> = (0..market.outlets.len())
                .map(|j| data.outlet_features(i, j))
                .collect();
            let mut acc = vec![0.0; k * k];
            for (s, beta) in coeffs.betas().iter().enumerate() {
                let p = conditional_choice_probabilities(beta, &features)
                    .expect("market has outlets");
                for a in 0..k {
                    for b in (a + 1)..k {
                        acc[a * k + b] += q[s] * p[subset[a]] * p[subset[b]];
                    }
                }
            }
            acc
        })
        .collect();

    let mut gamma = vec![f64::NAN; k * k];
    for a in 0..k {
        for b in (a + 1)..k {
            let total: f64 = per_obs.iter().map(|acc| acc[a * k + b]).sum();
            let value = -total / n as f64;
            gamma[a * k + b] = value;
            gamma[b * k + a] = value;
        }
    }
    Ok(SubstitutabilityMatrix { outlet_ids: outlet_subset.to_vec(), gamma, morning })
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("engagement table needs a two-strategy model, got {strategies} strategies")]
    WrongFamily { strategies: usize },
    #[error("degenerate groups: {reason}")]
    DegenerateGroups { reason: String },
    #[error("outlet subset is empty")]
    EmptySubset,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("unknown outlet {id:?} in subset")]
    UnknownOutlet { id: String },
    #[error(transparent)]
    Estimation(#[from] EstimationError),
}
