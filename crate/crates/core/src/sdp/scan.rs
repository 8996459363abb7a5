//! Bisection for the noise level at which an object enters the separable cone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdp::certify::{CertificationResult, DECISION_MARGIN};
use crate::sdp::solver::SolverStatus;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Stop once `r_hi − r_lo` is at most this.
    pub width: f64,
    /// A probe counts as noncausal when its signed robustness exceeds this.
    pub margin: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { width: 1e-3, margin: DECISION_MARGIN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub r: f64,
    pub signed_robustness: f64,
    pub status: SolverStatus,
    pub noncausal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    /// Midpoint of the final bracket.
    pub threshold: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    pub probes: Vec<Probe>,
}

/// Bisects on `r` between `r_lo` (certified noncausal) and `r_hi` (not).
/// `probe` builds and certifies the object at noise level `r`.
pub fn threshold_scan<F>(mut probe: F, r_lo: f64, r_hi: f64, opts: ScanOptions) -> Result<ScanResult>
where
    F: FnMut(f64) -> Result<CertificationResult>,
{
    if r_lo >= r_hi || !r_lo.is_finite() || !r_hi.is_finite() {
        return Err(Error::InvalidBracket(format!("need finite r_lo < r_hi, got [{r_lo}, {r_hi}]")));
    }
    let mut probes = Vec::new();
    let mut run = |r: f64, probes: &mut Vec<Probe>| -> Result<bool> {
        let res = probe(r)?;
        let noncausal = res.signed_robustness > opts.margin;
        probes.push(Probe { r, signed_robustness: res.signed_robustness, status: res.status, noncausal });
        Ok(noncausal)
    };
    if !run(r_lo, &mut probes)? {
        return Err(Error::InvalidBracket(format!("object is not certified noncausal at r_lo = {r_lo}")));
    }
    if run(r_hi, &mut probes)? {
        return Err(Error::InvalidBracket(format!("object is still certified noncausal at r_hi = {r_hi}")));
    }
    let (mut lo, mut hi) = (r_lo, r_hi);
    while hi - lo > opts.width {
        let mid = 0.5 * (lo + hi);
        if run(mid, &mut probes)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ScanResult { threshold: 0.5 * (lo + hi), r_lo: lo, r_hi: hi, probes })
}
