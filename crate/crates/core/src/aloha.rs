//! Pure-ALOHA baseline.
//!
//! Two operating modes share the channel model:
//!
//! - `OfferedLoad`: every arrival is transmitted immediately and exactly
//!   once, even if the node is already transmitting. The attempt process
//!   is then exactly Poisson at the configured load, which is the
//!   textbook infinite-population model behind S = G e^(-2G); used to
//!   validate the channel end-to-end.
//! - `Backoff` (default): arrival- and backoff-triggered transmissions
//!   on a half-duplex radio, failure inferred from a missing
//!   acknowledgment within a feedback window, retransmission after a
//!   uniform backoff. Receivers piggyback delivery confirmations on
//!   their own outgoing packets and de-duplicate retransmitted copies.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlohaMode {
    OfferedLoad,
    Backoff,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlohaParams {
    pub mode: AlohaMode,
    /// Maximum retransmission backoff, in units of tau.
    pub max_backoff_taus: u32,
    /// How long a sender waits for a delivery confirmation after a
    /// transmission ends, in units of tau.
    pub feedback_window_taus: u32,
    /// Probability of requeueing an unconfirmed packet (1.0 retries
    /// until confirmed).
    pub retry_prob: f64,
}

impl Default for AlohaParams {
    fn default() -> Self {
        AlohaParams {
            mode: AlohaMode::Backoff,
            max_backoff_taus: 16,
            feedback_window_taus: 16,
            retry_prob: 1.0,
        }
    }
}

/// Closed-form pure-ALOHA throughput at offered load G (both in Erlangs).
pub fn theoretical_throughput(g: f64) -> f64 {
    g * (-2.0 * g).exp()
}

/// Draw a retransmission delay uniform in [1, B] ticks.
pub fn backoff_ticks(params: &AlohaParams, ticks_per_tau: u64, rng: &mut impl Rng) -> u64 {
    let max = (params.max_backoff_taus as u64 * ticks_per_tau).max(1);
    rng.random_range(1..=max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{node_stream, StreamPurpose};

    #[test]
    fn theoretical_curve_values() {
        assert_eq!(theoretical_throughput(0.0), 0.0);
        assert!((theoretical_throughput(0.5) - 0.18393972058572117).abs() < 1e-12);
        assert!((theoretical_throughput(2.0) - 0.03663127777746836).abs() < 1e-12);
        // Non-monotone: the collapse regime is below the peak.
        assert!(theoretical_throughput(0.5) > theoretical_throughput(2.0));
    }

    #[test]
    fn backoff_bounds() {
        let params = AlohaParams::default();
        let mut rng = node_stream(1, 1, StreamPurpose::Mac);
        for _ in 0..10_000 {
            let b = backoff_ticks(&params, 100, &mut rng);
            assert!((1..=1600).contains(&b));
        }
    }
}
