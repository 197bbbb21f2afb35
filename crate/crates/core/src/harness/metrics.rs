use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::netmodel::BandwidthSchedule;
use crate::simcore::SimTime;

/// Jain's fairness index `(Σx)² / (n·Σx²)`. All-zero input is an error;
/// the index is undefined there.
pub fn jain_index(rates: &[f64]) -> Result<f64> {
    let sum: f64 = rates.iter().sum();
    let sq: f64 = rates.iter().map(|x| x * x).sum();
    if rates.is_empty() || sq == 0.0 {
        return Err(SimError::AllZeroRates);
    }
    Ok(sum * sum / (rates.len() as f64 * sq))
}

/// Delivered bits over `[start, end)` divided by the capacity integrated
/// over the same window.
pub fn compute_utilization(
    delivered_bytes: u64,
    schedule: &BandwidthSchedule,
    start: SimTime,
    end: SimTime,
) -> f64 {
    let cap = schedule.integrate_bits(start, end);
    if cap <= 0.0 {
        return 0.0;
    }
    delivered_bytes as f64 * 8.0 / cap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalUtilization {
    pub start_s: f64,
    pub end_s: f64,
    /// `None` for the aggregate over all flows.
    pub flow_id: Option<u32>,
    pub delivered_bytes: u64,
    pub utilization: f64,
    /// Mean one-way delay of packets delivered in the window; media flows only.
    pub mean_owd_ms: Option<f64>,
}
