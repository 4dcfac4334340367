//! Dollar cost of token usage.

use serde::{Deserialize, Serialize};

/// Prices in USD per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pricing {
    pub input_per_mtok: f64,
    pub output_per_mtok: f64,
}

pub fn cost_usd(input_tokens: f64, output_tokens: f64, pricing: &Pricing) -> f64 {
    (input_tokens * pricing.input_per_mtok + output_tokens * pricing.output_per_mtok) / 1e6
}

/// Projected cost of a run given per-request averages.
///
/// ```
/// use hopsynth::provider::cost::{projected_cost, Pricing};
/// let p = Pricing { input_per_mtok: 0.15, output_per_mtok: 3.50 };
/// let usd = projected_cost(7600.0, 1529.97, 231.32, &p);
/// assert!((usd - 7.90).abs() < 0.05);
/// ```
pub fn projected_cost(requests: f64, avg_input: f64, avg_output: f64, pricing: &Pricing) -> f64 {
    cost_usd(requests * avg_input, requests * avg_output, pricing)
}
