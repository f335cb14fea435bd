//! Calibrated demo inputs shared by the runnable examples, the CLI defaults
//! and the test suite.
//!
//! The coefficient values come from a two-strategy model fitted to observed
//! urban refueling trips; they produce realistic behavior out of the box and
//! serve as generating values for synthetic-data exercises.

use crate::choice::CoefficientSet;

/// Two-strategy coefficient set in canonical order.
///
/// Strategy 0 is immediacy-oriented (gravity-like distance decay), strategy 1
/// is destination-oriented (strong detour aversion, positive distance effect,
/// agglomeration pull).
pub fn two_strategy_coefficients() -> CoefficientSet {
    CoefficientSet::two_strategy(
        // detour, direct, comp, aggl, quality
        [-0.34, -0.93, -0.03, -1.00, 0.13],
        [-10.84, 0.77, -0.31, 6.38, 0.18],
        // constant, aware, regular, morning, morning-commute
        [-1.40, 1.30, -0.67, -0.47, 1.07],
    )
}

/// Trip-context mix observed in the survey the demo coefficients come from:
/// 84% regular routes, 70.7% aware before departing, even split of morning
/// trips.
pub fn survey_context_mix() -> crate::io::ContextMix {
    crate::io::ContextMix { p_regular: 0.84, p_aware: 0.707, p_morning: 0.5 }
}
