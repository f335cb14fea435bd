//! Duopolistic grid-city simulation.
//!
//! A single consumer travels from an origin to a destination on a square
//! grid; a competitor station sits on the route and the target station is
//! placed at every candidate grid node in turn. Each field cell holds the
//! consumer's probability of choosing the target there, mixed over decision
//! strategies and (for en-route awareness) averaged over positions along the
//! route. A best-response search over route-constrained locations finds the
//! duopoly equilibrium.

use rayon::prelude::*;
use thiserror::Error;

use crate::choice::{strategy_probabilities, CoefficientSet, StrategyContext};
use crate::spatial::{gaussian_kernel, Point};

/// Grid node, in grid units.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct GridPoint {
    pub x: u32,
    pub y: u32,
}

impl GridPoint {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    fn km(&self, unit_km: f64) -> Point {
        Point::new(self.x as f64 * unit_km, self.y as f64 * unit_km)
    }
}

/// Where along the trip the consumer becomes aware of the purchase need.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum AwarenessRegime {
    /// Aware before departing; the consumer evaluates from the origin.
    AtOrigin,
    /// Awareness arises en route; cell values average the choice probability
    /// over `points` positions spread evenly along the route (segment
    /// midpoints, so neither endpoint is ever used).
    UniformAlongRoute { points: usize },
}

/// Optional shopping center feeding the agglomeration index of both stations.
#[derive(Copy, Clone, Debug)]
pub struct ShoppingCenter {
    pub location: GridPoint,
    pub opportunities: f64,
}

/// Configuration of one duopoly simulation.
#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub grid_width: u32,
    pub grid_height: u32,
    pub origin: GridPoint,
    pub destination: GridPoint,
    pub competitor: GridPoint,
    /// Kilometres per grid unit.
    pub unit_km: f64,
    pub awareness: AwarenessRegime,
    pub regular: bool,
    pub morning: bool,
    pub base_quality: f64,
    pub target_quality: f64,
    pub shopping_center: Option<ShoppingCenter>,
    pub coeffs: CoefficientSet,
    /// Agglomeration kernel scale, minutes.
    pub t_star: f64,
    /// km per minute.
    pub speed: f64,
    /// Radius defining mutual local competition, km.
    pub comp_radius: f64,
}

pub const DEFAULT_AWARENESS_POINTS: usize = 60;
/// Opportunity weight giving the shopping center an on-site agglomeration
/// index of 1.27, the top of the feature range the demo coefficients were
/// calibrated on.
pub const DEFAULT_CENTER_OPPORTUNITIES: f64 = 1.27;

impl ScenarioSpec {
    /// The baseline configuration: 100x100 grid, origin (20,50), destination
    /// (80,50), competitor fixed mid-route at (50,50), 0.1 km cells, a
    /// regular morning trip with awareness at the origin, equal quality 80.
    pub fn new(coeffs: CoefficientSet) -> Self {
        Self {
            grid_width: 100,
            grid_height: 100,
            origin: GridPoint::new(20, 50),
            destination: GridPoint::new(80, 50),
            competitor: GridPoint::new(50, 50),
            unit_km: 0.1,
            awareness: AwarenessRegime::AtOrigin,
            regular: true,
            morning: true,
            base_quality: 80.0,
            target_quality: 80.0,
            shopping_center: None,
            coeffs,
            t_star: 30.0,
            speed: 0.3,
            comp_radius: 0.5,
        }
    }

    pub fn with_awareness(mut self, awareness: AwarenessRegime) -> Self {
        self.awareness = awareness;
        self
    }

    pub fn with_target_quality(mut self, quality: f64) -> Self {
        self.target_quality = quality;
        self
    }

    pub fn with_center(mut self, location: GridPoint, opportunities: f64) -> Self {
        self.shopping_center = Some(ShoppingCenter { location, opportunities });
        self
    }

    pub fn context(&self) -> StrategyContext {
        StrategyContext::new(
            self.regular,
            matches!(self.awareness, AwarenessRegime::AtOrigin),
            self.morning,
        )
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |reason: &str| Err(ScenarioError::InvalidSpec { reason: reason.into() });
        if self.grid_width == 0 || self.grid_height == 0 {
            return invalid("grid must be nonempty");
        }
        if self.origin == self.destination {
            return invalid("origin equals destination");
        }
        if !(self.unit_km > 0.0) || !(self.t_star > 0.0) || !(self.speed > 0.0) {
            return invalid("unit_km, t_star and speed must be positive");
        }
        for (name, p) in
            [("origin", self.origin), ("destination", self.destination), ("competitor", self.competitor)]
        {
            if p.x >= self.grid_width || p.y >= self.grid_height {
                return Err(ScenarioError::InvalidSpec {
                    reason: format!("{name} ({}, {}) is off the grid", p.x, p.y),
                });
            }
        }
        if let AwarenessRegime::UniformAlongRoute { points } = self.awareness {
            if points == 0 {
                return invalid("uniform awareness needs at least one point");
            }
        }
        Ok(())
    }

    /// Consumer positions implied by the awareness regime, in km.
    fn positions(&self) -> Vec<Point> {
        let o = self.origin.km(self.unit_km);
        let d = self.destination.km(self.unit_km);
        match self.awareness {
            AwarenessRegime::AtOrigin => vec![o],
            AwarenessRegime::UniformAlongRoute { points } => (0..points)
                .map(|k| o.lerp(d, (k as f64 + 0.5) / points as f64))
                .collect(),
        }
    }

    fn aggl_at(&self, station_km: Point) -> f64 {
        match &self.shopping_center {
            None => 0.0,
            Some(c) => {
                let minutes = station_km.euclidean(c.location.km(self.unit_km)) / self.speed;
                c.opportunities * gaussian_kernel(minutes, self.t_star)
            }
        }
    }
}

/// Target-station choice probability for every candidate grid location.
#[derive(Clone, Debug)]
pub struct ProbabilityField {
    pub width: u32,
    pub height: u32,
    /// Row-major by y, then x.
    values: Vec<f64>,
    pub argmax: GridPoint,
    pub argmax_value: f64,
}

impl ProbabilityField {
    pub fn value(&self, x: u32, y: u32) -> f64 {
        self.values[(y * self.width + x) as usize]
    }

    /// The competitor's share at a cell; exact complement of the target's.
    pub fn competitor_value(&self, x: u32, y: u32) -> f64 {
        1.0 - self.value(x, y)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Evaluates the duopoly choice probability with the target station at every
/// grid node. Distances are Euclidean in km; each station's local-competition
/// dummy switches on when the two stations are within `comp_radius`, and the
/// agglomeration index comes from the optional shopping center.
pub fn probability_field(spec: &ScenarioSpec) -> Result<ProbabilityField, ScenarioError> {
    spec.validate()?;
    let positions = spec.positions();
    let context = spec.context();
    let q = strategy_probabilities(&spec.coeffs, &context);
    let competitor_km = spec.competitor.km(spec.unit_km);
    let aggl_competitor = spec.aggl_at(competitor_km);

    let width = spec.grid_width;
    let positions = &positions;
    let q_probs = q.probabilities();
    let values: Vec<f64> = (0..spec.grid_height)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..width).map(move |x| {
                target_probability(
                    spec,
                    GridPoint::new(x, y).km(spec.unit_km),
                    spec.target_quality,
                    competitor_km,
                    spec.base_quality,
                    aggl_competitor,
                    positions,
                    q_probs,
                )
            })
        })
        .collect();

    let mut argmax = 0usize;
    for (i, v) in values.iter().enumerate() {
        if *v > values[argmax] {
            argmax = i;
        }
    }
    Ok(ProbabilityField {
        width,
        height: spec.grid_height,
        argmax: GridPoint::new(argmax as u32 % width, argmax as u32 / width),
        argmax_value: values[argmax],
        values,
    })
}

/// Mixture probability that the consumer picks the target station, averaged
/// over awareness positions. Two-alternative logit per strategy, so the
/// competitor's probability is exactly the complement.
#[allow(clippy::too_many_arguments)]
fn target_probability(
    spec: &ScenarioSpec,
    target_km: Point,
    target_quality: f64,
    competitor_km: Point,
    competitor_quality: f64,
    aggl_competitor: f64,
    positions: &[Point],
    strategy_probs: &[f64],
) -> f64 {
    let destination_km = spec.destination.km(spec.unit_km);
    let aggl_target = spec.aggl_at(target_km);
    // mutual: each station either has the other within radius or not
    let both_local = target_km.euclidean(competitor_km) <= spec.comp_radius;
    let comp = if both_local { 1.0 } else { 0.0 };

    let mut acc = 0.0;
    for pos in positions {
        let to_dest = pos.euclidean(destination_km);
        let direct_t = pos.euclidean(target_km);
        let direct_c = pos.euclidean(competitor_km);
        let detour_t = (direct_t + target_km.euclidean(destination_km) - to_dest) / to_dest;
        let detour_c = (direct_c + competitor_km.euclidean(destination_km) - to_dest) / to_dest;

        let mut p = 0.0;
        for (s, beta) in spec.coeffs.betas().iter().enumerate() {
            let du = beta[0] * (detour_t - detour_c)
                + beta[1] * (direct_t - direct_c)
                + beta[2] * (comp - comp)
                + beta[3] * (aggl_target - aggl_competitor)
                + beta[4] * (target_quality - competitor_quality);
            p += strategy_probs[s] * logistic(du);
        }
        acc += p;
    }
    acc / positions.len() as f64
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Copy, Clone, Debug)]
pub struct EquilibriumOptions {
    pub max_rounds: usize,
    /// Payoff resolution: a station only relocates for a gain larger than
    /// this, and among near-best candidates it prefers the one closest to
    /// its opponent. This resolves the discrete undercutting cycle to the
    /// co-location point where no deviation gains more than the band.
    pub indifference: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self { max_rounds: 200, indifference: 0.01 }
    }
}

#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub x_target: u32,
    pub x_competitor: u32,
    /// (target share, competitor share) at the final configuration.
    pub shares: (f64, f64),
    /// Set when every candidate location was payoff-equivalent, i.e. the
    /// model is location-irrelevant.
    pub tie: bool,
    pub rounds: usize,
    /// A two-cycle the dynamics settled into, if any.
    pub cycle: Option<((u32, u32), (u32, u32))>,
}

/// Best-response location search with both stations restricted to the route
/// row. Starts from both stations at the spec's competitor location and
/// alternates moves until neither station wants to relocate.
pub fn equilibrium_search(
    spec: &ScenarioSpec,
    options: &EquilibriumOptions,
) -> Result<Equilibrium, ScenarioError> {
    spec.validate()?;
    if spec.origin.y != spec.destination.y {
        return Err(ScenarioError::InvalidSpec {
            reason: "equilibrium search needs origin and destination on one grid row".into(),
        });
    }
    let y = spec.origin.y;
    let positions = spec.positions();
    let context = spec.context();
    let q = strategy_probabilities(&spec.coeffs, &context);
    let qp = q.probabilities();

    // payoff of owning quality qa at x_self against quality qb at x_opp
    let payoff = |x_self: u32, q_self: f64, x_opp: u32, q_opp: f64| {
        let self_km = GridPoint::new(x_self, y).km(spec.unit_km);
        let opp_km = GridPoint::new(x_opp, y).km(spec.unit_km);
        target_probability(
            spec,
            self_km,
            q_self,
            opp_km,
            q_opp,
            spec.aggl_at(opp_km),
            &positions,
            qp,
        )
    };

    // move only for a gain beyond the indifference band; among candidates
    // within the band of the maximum, prefer the one closest to the opponent
    // (indifference resolves toward minimal differentiation)
    let best_response = |current: u32, q_self: f64, x_opp: u32, q_opp: f64| -> (u32, bool) {
        let payoffs: Vec<f64> = (0..spec.grid_width).map(|x| payoff(x, q_self, x_opp, q_opp)).collect();
        let max = payoffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = payoffs.iter().cloned().fold(f64::INFINITY, f64::min);
        let flat = max - min <= options.indifference;
        if payoffs[current as usize] >= max - options.indifference {
            return (current, flat);
        }
        let chosen = payoffs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p >= max - options.indifference)
            .min_by_key(|(x, _)| (x_opp as i64 - *x as i64).abs())
            .expect("max exists")
            .0 as u32;
        (chosen, flat)
    };

    let mut x_target = spec.competitor.x;
    let mut x_competitor = spec.competitor.x;
    let mut tie;
    let mut history: Vec<(u32, u32)> = vec![(x_target, x_competitor)];

    for round in 1..=options.max_rounds {
        let (new_target, flat_t) =
            best_response(x_target, spec.target_quality, x_competitor, spec.base_quality);
        x_target = new_target;
        let (new_competitor, flat_c) =
            best_response(x_competitor, spec.base_quality, x_target, spec.target_quality);
        x_competitor = new_competitor;
        tie = flat_t && flat_c;

        let state = (x_target, x_competitor);
        if *history.last().expect("nonempty") == state {
            let share = payoff(x_target, spec.target_quality, x_competitor, spec.base_quality);
            return Ok(Equilibrium {
                x_target,
                x_competitor,
                shares: (share, 1.0 - share),
                tie,
                rounds: round,
                cycle: None,
            });
        }
        if history.len() >= 2 && history[history.len() - 2] == state {
            let share = payoff(x_target, spec.target_quality, x_competitor, spec.base_quality);
            return Ok(Equilibrium {
                x_target,
                x_competitor,
                shares: (share, 1.0 - share),
                tie,
                rounds: round,
                cycle: Some((*history.last().expect("nonempty"), state)),
            });
        }
        history.push(state);
    }
    Err(ScenarioError::NoConvergence {
        visited: history.iter().rev().take(12).rev().cloned().collect(),
    })
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {reason}")]
    InvalidSpec { reason: String },
    #[error("best-response dynamics did not settle; recent states {visited:?}")]
    NoConvergence { visited: Vec<(u32, u32)> },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use approx::assert_relative_eq;

    fn base_spec() -> ScenarioSpec {
        ScenarioSpec::new(demo::two_strategy_coefficients())
    }

    fn uniform_spec() -> ScenarioSpec {
        base_spec().with_awareness(AwarenessRegime::UniformAlongRoute {
            points: DEFAULT_AWARENESS_POINTS,
        })
    }

    #[test]
    fn equal_stations_tie_at_same_cell() {
        let field = probability_field(&base_spec()).unwrap();
        assert_relative_eq!(field.value(50, 50), 0.5, epsilon = 1e-12);
        let field_u = probability_field(&uniform_spec()).unwrap();
        assert_relative_eq!(field_u.value(50, 50), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn complement_is_exact() {
        let field = probability_field(&base_spec()).unwrap();
        for (x, y) in [(0u32, 0u32), (24, 50), (70, 50), (99, 99), (50, 75)] {
            let t = field.value(x, y);
            assert!(t >= 0.0 && t <= 1.0);
            assert_eq!(t + field.competitor_value(x, y), 1.0);
        }
    }

    #[test]
    fn origin_awareness_argmax_on_origin_side() {
        let field = probability_field(&base_spec()).unwrap();
        assert!(field.argmax.x > 20 && field.argmax.x < 50, "argmax {:?}", field.argmax);
        assert_eq!(field.argmax.y, 50);
        assert!(field.argmax_value > 0.50 && field.argmax_value < 0.60);
    }

    #[test]
    fn uniform_awareness_argmax_past_competitor() {
        let field = probability_field(&uniform_spec()).unwrap();
        assert!(field.argmax.x > 50 && field.argmax.x < 80, "argmax {:?}", field.argmax);
        assert_eq!(field.argmax.y, 50);
    }

    #[test]
    fn quality_edge_lifts_the_field() {
        let base = probability_field(&base_spec()).unwrap();
        let better = probability_field(&base_spec().with_target_quality(88.0)).unwrap();
        assert!(better.argmax_value >= base.argmax_value + 0.08);
    }

    #[test]
    fn field_reflection_symmetry() {
        // reflecting the whole configuration about the route row leaves the
        // field mirrored
        let mut spec = base_spec().with_center(GridPoint::new(50, 75), 1.27);
        let field = probability_field(&spec).unwrap();
        spec.shopping_center = Some(ShoppingCenter {
            location: GridPoint::new(50, 25),
            opportunities: 1.27,
        });
        let mirrored = probability_field(&spec).unwrap();
        // reflection about the y=50 route row maps y to 100-y; y=0 has no
        // counterpart on the grid
        for y in 1..100u32 {
            for x in (0..100u32).step_by(7) {
                assert_relative_eq!(
                    field.value(x, y),
                    mirrored.value(x, 100 - y),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn shopping_center_pulls_toward_it_when_aware_at_origin() {
        let plain = probability_field(&base_spec()).unwrap();
        let with_center =
            probability_field(&base_spec().with_center(GridPoint::new(50, 75), 1.27)).unwrap();
        // the center cell and the center-side half of the origin-center
        // segment gain strictly
        let mut cells = vec![(50u32, 75u32)];
        for t in [0.5f64, 0.6, 0.7, 0.8, 0.9] {
            let x = (20.0 + t * 30.0).round() as u32;
            let y = (50.0 + t * 25.0).round() as u32;
            cells.push((x, y));
        }
        for (x, y) in cells {
            assert!(
                with_center.value(x, y) > plain.value(x, y),
                "no pull at ({x},{y}): {} vs {}",
                with_center.value(x, y),
                plain.value(x, y)
            );
        }
    }

    #[test]
    fn center_is_inert_for_en_route_awareness() {
        // with agglomeration operating through the destination strategy only
        // (its immediacy coefficient is not distinguishable from zero), the
        // center leaves an en-route-awareness field essentially unchanged
        let inert = |spec: ScenarioSpec| {
            let mut betas: Vec<[f64; 5]> = spec.coeffs.betas().to_vec();
            betas[0][3] = 0.0;
            ScenarioSpec {
                coeffs: crate::choice::CoefficientSet::new(
                    betas,
                    spec.coeffs.alphas().to_vec(),
                )
                .unwrap(),
                ..spec
            }
        };
        let without = probability_field(&inert(uniform_spec())).unwrap();
        let with_center = probability_field(&inert(
            uniform_spec().with_center(GridPoint::new(50, 75), 1.27),
        ))
        .unwrap();
        let max_diff = without
            .values()
            .iter()
            .zip(with_center.values().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 0.01, "max cell difference {max_diff}");
    }

    #[test]
    fn equilibrium_co_locates_on_route() {
        let eq = equilibrium_search(&uniform_spec(), &EquilibriumOptions::default()).unwrap();
        assert_eq!(eq.x_target, eq.x_competitor, "stations must co-locate");
        assert!((60..=70).contains(&eq.x_target), "x* = {}", eq.x_target);
        assert!(!eq.tie);
        assert_relative_eq!(eq.shares.0, 0.5, epsilon = 1e-12);

        // brute-force oracle: at the fixed point no candidate beats the
        // indifference band over staying put
        let spec = uniform_spec();
        let positions = spec.positions();
        let q = strategy_probabilities(&spec.coeffs, &spec.context());
        let opp_km = GridPoint::new(eq.x_competitor, 50).km(spec.unit_km);
        let stay = target_probability(
            &spec,
            GridPoint::new(eq.x_target, 50).km(spec.unit_km),
            spec.target_quality,
            opp_km,
            spec.base_quality,
            0.0,
            &positions,
            q.probabilities(),
        );
        for x in 0..100u32 {
            let p = target_probability(
                &spec,
                GridPoint::new(x, 50).km(spec.unit_km),
                spec.target_quality,
                opp_km,
                spec.base_quality,
                0.0,
                &positions,
                q.probabilities(),
            );
            assert!(
                p <= stay + EquilibriumOptions::default().indifference + 1e-12,
                "profitable deviation to x={x}: {p} vs stay {stay}"
            );
        }
    }

    #[test]
    fn location_irrelevant_model_reports_tie() {
        let mut spec = uniform_spec();
        spec.coeffs = crate::choice::CoefficientSet::two_strategy(
            [0.0, 0.0, -0.03, -1.0, 0.13],
            [0.0, 0.0, -0.31, 6.38, 0.18],
            [-1.40, 1.30, -0.67, -0.47, 1.07],
        );
        let eq = equilibrium_search(&spec, &EquilibriumOptions::default()).unwrap();
        assert!(eq.tie);
        assert_relative_eq!(eq.shares.0, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = base_spec();
        spec.destination = spec.origin;
        assert!(matches!(
            probability_field(&spec),
            Err(ScenarioError::InvalidSpec { .. })
        ));
        let mut off = base_spec();
        off.competitor = GridPoint::new(500, 50);
        assert!(probability_field(&off).is_err());
        let mut zero = base_spec();
        zero.unit_km = 0.0;
        assert!(probability_field(&zero).is_err());
    }
}
