//! Synthetic market and trip generation.
//!
//! The generator samples choices from the same probability evaluation the
//! estimator uses, records the exact awareness point of every en-route trip,
//! and seeds each row independently so output is identical regardless of
//! how the work is scheduled.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::Normal;

use super::IoError;
use crate::choice::{choice_probabilities, CoefficientSet, OutletFeatures};
use crate::estimation::Observation;
use crate::spatial::{DistanceProvider, Market, Outlet, Point, Site, Zone};

/// Shares of trip-context flags in generated data.
#[derive(Copy, Clone, Debug)]
pub struct ContextMix {
    pub p_regular: f64,
    pub p_aware: f64,
    pub p_morning: f64,
}

impl Default for ContextMix {
    fn default() -> Self {
        // survey shares: 84% regular routes, 70.7% aware before departure
        Self { p_regular: 0.84, p_aware: 0.707, p_morning: 0.5 }
    }
}

/// A clustered synthetic city: outlets gathered around a handful of centers
/// (so local-competition counts vary), zones spread uniformly with sparse
/// retail opportunities, quality scores drawn from the observed range.
pub fn synthetic_market(n_outlets: usize, n_zones: usize, seed: u64) -> Result<Market, IoError> {
    if n_outlets == 0 || n_zones < 2 {
        return Err(IoError::Invalid {
            reason: "a synthetic market needs at least one outlet and two zones".into(),
        });
    }
    const SIZE_KM: f64 = 14.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let n_clusters = (n_outlets / 3).max(3);
    let centers: Vec<Point> = (0..n_clusters)
        .map(|_| Point::new(rng.gen_range(1.0..SIZE_KM - 1.0), rng.gen_range(1.0..SIZE_KM - 1.0)))
        .collect();

    let outlet_width = n_outlets.to_string().len();
    let outlets: Vec<Outlet> = (0..n_outlets)
        .map(|i| {
            let c = centers[rng.gen_range(0..n_clusters)];
            let x = (c.x + 0.35 * rng.sample::<f64, _>(normal)).clamp(0.0, SIZE_KM);
            let y = (c.y + 0.35 * rng.sample::<f64, _>(normal)).clamp(0.0, SIZE_KM);
            let quality = (86.24 + 4.2 * rng.sample::<f64, _>(normal)).clamp(80.0, 93.4);
            Outlet {
                id: format!("g{:0width$}", i + 1, width = outlet_width),
                location: Point::new(x, y),
                quality,
            }
        })
        .collect();

    let zone_width = n_zones.to_string().len();
    let zones: Vec<Zone> = (0..n_zones)
        .map(|i| {
            let opportunities =
                u32::from(rng.gen::<f64>() < 0.03) + u32::from(rng.gen::<f64>() < 0.01);
            Zone {
                id: format!("z{:0width$}", i + 1, width = zone_width),
                centroid: Point::new(rng.gen_range(0.0..SIZE_KM), rng.gen_range(0.0..SIZE_KM)),
                opportunities,
            }
        })
        .collect();

    Market::new(outlets, zones, DistanceProvider::euclidean(), 0.5, 12.0, 0.3)
        .map_err(IoError::from)
}

/// Samples `n` trips whose outlet choices follow the mixture model under
/// `coeffs`. Origin/destination zone pairs are uniform with distinct zones,
/// context flags follow `mix`, and en-route awareness points are uniform on
/// the origin-destination segment and recorded exactly. Each row has its own
/// seeded RNG stream, so the table is reproducible and independent of
/// evaluation order.
pub fn generate_synthetic(
    coeffs: &CoefficientSet,
    market: &Market,
    n: usize,
    mix: &ContextMix,
    seed: u64,
) -> Result<Vec<Observation>, IoError> {
    if n == 0 {
        return Err(IoError::Invalid { reason: "n must be at least 1".into() });
    }
    if market.outlets.is_empty() {
        return Err(IoError::Invalid { reason: "market has no outlets".into() });
    }
    if market.distances.is_matrix() && mix.p_aware < 1.0 {
        return Err(IoError::Invalid {
            reason: "matrix-mode markets can only generate aware-before trips (p_aware = 1)".into(),
        });
    }
    let id_width = n.to_string().len();
    let rows: Vec<Result<Observation, IoError>> = (0..n)
        .into_par_iter()
        .map(|row| generate_row(coeffs, market, mix, seed, row, id_width))
        .collect();
    rows.into_iter().collect()
}

fn generate_row(
    coeffs: &CoefficientSet,
    market: &Market,
    mix: &ContextMix,
    seed: u64,
    row: usize,
    id_width: usize,
) -> Result<Observation, IoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64 + 1);

    let n_zones = market.zones.len();
    let origin_idx = rng.gen_range(0..n_zones);
    let mut dest_idx = rng.gen_range(0..n_zones);
    let mut guard = 0;
    loop {
        let distinct = dest_idx != origin_idx
            && market
                .distances
                .between(market.zone_site(origin_idx), market.zone_site(dest_idx))?
                > 0.0;
        if distinct {
            break;
        }
        dest_idx = rng.gen_range(0..n_zones);
        guard += 1;
        if guard > 1000 {
            return Err(IoError::Invalid {
                reason: "could not sample a non-degenerate origin-destination pair".into(),
            });
        }
    }

    let regular = rng.gen::<f64>() < mix.p_regular;
    let aware_before = rng.gen::<f64>() < mix.p_aware;
    let morning = rng.gen::<f64>() < mix.p_morning;

    let origin_site = market.zone_site(origin_idx);
    let dest_site = market.zone_site(dest_idx);
    let origin_pt = origin_site.point;
    let dest_pt = dest_site.point;

    let (position, awareness_point) = if aware_before {
        (origin_site, None)
    } else {
        let t = rng.gen::<f64>();
        let p = origin_pt.lerp(dest_pt, t);
        (Site::free(p), Some(p))
    };

    let mut features = Vec::with_capacity(market.outlets.len());
    for (j, outlet) in market.outlets.iter().enumerate() {
        let outlet_site = Site::named(&outlet.id, outlet.location);
        let detour =
            crate::spatial::detour_fraction(position, outlet_site, dest_site, &market.distances)?;
        let direct = market.distances.between(position, outlet_site)?;
        features.push(OutletFeatures::new(
            detour,
            direct,
            market.comp(j) as f64,
            market.aggl(j),
            outlet.quality,
        ));
    }
    let context = crate::choice::StrategyContext::new(regular, aware_before, morning);
    let probs = choice_probabilities(coeffs, &context, &features)?;

    let draw = rng.gen::<f64>();
    let mut cumulative = 0.0;
    let mut chosen_idx = market.outlets.len() - 1;
    for (j, p) in probs.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            chosen_idx = j;
            break;
        }
    }
    let chosen = &market.outlets[chosen_idx];

    let minutes_aware = match awareness_point {
        None => 0.0,
        Some(p) => {
            market.distances.between(Site::free(p), Site::named(&chosen.id, chosen.location))?
                / market.speed
        }
    };

    Ok(Observation {
        id: format!("t{:0id_width$}", row + 1),
        origin: market.zones[origin_idx].id.clone(),
        destination: market.zones[dest_idx].id.clone(),
        chosen: chosen.id.clone(),
        aware_before,
        minutes_aware,
        regular,
        morning,
        awareness_point,
        covariates: Default::default(),
    })
}
