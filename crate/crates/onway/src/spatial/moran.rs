//! Moran's I spatial autocorrelation with a permutation test.
//!
//! Used as a diagnostic on outlet quality scores: if quality were spatially
//! autocorrelated the independence assumption behind the logit error terms
//! would be suspect.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Point, SpatialError};

/// Spatial weight construction for the statistic.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum WeightScheme {
    /// `w_ij = 1/d_ij`, each row rescaled to sum to one. The default.
    InverseDistanceRow,
    /// `w_ij = 1/d_ij` without row standardization.
    InverseDistance,
}

#[derive(Copy, Clone, Debug)]
pub struct MoranOptions {
    pub scheme: WeightScheme,
    pub permutations: usize,
    pub seed: u64,
}

impl Default for MoranOptions {
    fn default() -> Self {
        Self { scheme: WeightScheme::InverseDistanceRow, permutations: 999, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct MoranResult {
    pub statistic: f64,
    /// Analytic expectation under the randomization null: `-1/(n-1)`.
    pub expected: f64,
    /// Two-sided permutation p-value.
    pub p_value: f64,
    pub permutations: usize,
}

/// Moran's I for `values` observed at `locations`, with a two-sided
/// permutation test. Locations must be pairwise distinct and `values`
/// must vary.
pub fn morans_i(
    values: &[f64],
    locations: &[Point],
    options: &MoranOptions,
) -> Result<MoranResult, SpatialError> {
    let n = values.len();
    if locations.len() != n {
        return Err(SpatialError::LengthMismatch { values: n, locations: locations.len() });
    }
    if n < 3 {
        return Err(SpatialError::TooFewSites { n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut deviations: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let ss: f64 = deviations.iter().map(|z| z * z).sum();
    if ss == 0.0 {
        return Err(SpatialError::ZeroVariance);
    }

    let weights = build_weights(locations, options.scheme)?;
    let statistic = statistic_from(&weights, &deviations, ss, n);
    let expected = -1.0 / (n as f64 - 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut ge = 0usize;
    let mut le = 0usize;
    for _ in 0..options.permutations {
        deviations.shuffle(&mut rng);
        let perm = statistic_from(&weights, &deviations, ss, n);
        if perm >= statistic {
            ge += 1;
        }
        if perm <= statistic {
            le += 1;
        }
    }
    let b = options.permutations as f64 + 1.0;
    let p_lower = (le as f64 + 1.0) / b;
    let p_upper = (ge as f64 + 1.0) / b;
    let p_value = (2.0 * p_lower.min(p_upper)).min(1.0);

    Ok(MoranResult { statistic, expected, p_value, permutations: options.permutations })
}

struct Weights {
    w: Vec<f64>,
    sum: f64,
    n: usize,
}

fn build_weights(locations: &[Point], scheme: WeightScheme) -> Result<Weights, SpatialError> {
    let n = locations.len();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = locations[i].euclidean(locations[j]);
            if d == 0.0 {
                return Err(SpatialError::DuplicateLocation { index: j });
            }
            w[i * n + j] = 1.0 / d;
        }
    }
    if scheme == WeightScheme::InverseDistanceRow {
        for i in 0..n {
            let row_sum: f64 = w[i * n..(i + 1) * n].iter().sum();
            for v in &mut w[i * n..(i + 1) * n] {
                *v /= row_sum;
            }
        }
    }
    let sum = w.iter().sum();
    Ok(Weights { w, sum, n })
}

fn statistic_from(weights: &Weights, z: &[f64], ss: f64, n: usize) -> f64 {
    let mut cross = 0.0;
    for i in 0..weights.n {
        let zi = z[i];
        let row = &weights.w[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for (j, wij) in row.iter().enumerate() {
            acc += wij * z[j];
        }
        cross += zi * acc;
    }
    (n as f64 / weights.sum) * (cross / ss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::Point;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn grid_points(n: usize, jitter_seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
        (0..n)
            .map(|i| {
                Point::new(
                    (i % 9) as f64 + rng.gen_range(-0.3..0.3),
                    (i / 9) as f64 + rng.gen_range(-0.3..0.3),
                )
            })
            .collect()
    }

    #[test]
    fn expectation_matches_formula() {
        let locations = grid_points(72, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let values: Vec<f64> = (0..72).map(|_| rng.gen_range(80.0..94.0)).collect();
        let r = morans_i(&values, &locations, &MoranOptions::default()).unwrap();
        assert_relative_eq!(r.expected, -1.0 / 71.0, epsilon = 1e-15);
        assert_relative_eq!(r.expected, -0.0141, epsilon = 5e-5);
    }

    #[test]
    fn constant_values_rejected() {
        let locations = grid_points(10, 3);
        let values = vec![5.0; 10];
        assert!(matches!(
            morans_i(&values, &locations, &MoranOptions::default()),
            Err(SpatialError::ZeroVariance)
        ));
    }

    #[test]
    fn too_few_sites_rejected() {
        let err = morans_i(
            &[1.0, 2.0],
            &[Point::new(0.0, 0.0), Point::new(1.0, 0.0)],
            &MoranOptions::default(),
        );
        assert!(matches!(err, Err(SpatialError::TooFewSites { n: 2 })));
    }

    #[test]
    fn duplicate_locations_rejected() {
        let p = Point::new(1.0, 1.0);
        let err = morans_i(
            &[1.0, 2.0, 3.0],
            &[p, p, Point::new(2.0, 0.0)],
            &MoranOptions::default(),
        );
        assert!(matches!(err, Err(SpatialError::DuplicateLocation { .. })));
    }

    #[test]
    fn clustered_field_detected() {
        // two tight clusters, constant within, different between: strong
        // positive autocorrelation that the permutation test must flag
        let mut locations = Vec::new();
        let mut values = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..12 {
            locations.push(Point::new(
                0.1 * (i as f64).cos() + rng.gen_range(-0.02..0.02),
                0.1 * (i as f64).sin() + rng.gen_range(-0.02..0.02),
            ));
            values.push(10.0 + 0.001 * i as f64);
        }
        for i in 0..12 {
            locations.push(Point::new(
                8.0 + 0.1 * (i as f64).cos() + rng.gen_range(-0.02..0.02),
                8.0 + 0.1 * (i as f64).sin() + rng.gen_range(-0.02..0.02),
            ));
            values.push(20.0 + 0.001 * i as f64);
        }
        let r = morans_i(&values, &locations, &MoranOptions::default()).unwrap();
        assert!(r.statistic > 0.0, "statistic {} not positive", r.statistic);
        assert!(r.p_value < 0.05, "p {} not significant", r.p_value);
    }

    #[test]
    fn deterministic_given_seed() {
        let locations = grid_points(30, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let values: Vec<f64> = (0..30).map(|_| rng.gen::<f64>()).collect();
        let a = morans_i(&values, &locations, &MoranOptions::default()).unwrap();
        let b = morans_i(&values, &locations, &MoranOptions::default()).unwrap();
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.p_value, b.p_value);
    }
}
