//! Closed-form performance model for a single-switch storage-loop
//! multiplexer, plus the derived design tools built on it: per-bin
//! improvement, count-rate trade-off, multi-source speedup, optimal
//! multiplexing depth, break-even source count, and the coincidence
//! estimators (cross-correlation, Klyshko efficiency).
//!
//! Everything here is a pure function of its arguments; the Monte Carlo
//! engine in [`crate::sim`] cross-checks these formulas by simulation.
//!
//! The model: a heralded photon from bin `b` of a `depth`-bin cycle is stored
//! for `depth - b + 1` passes of the switch+loop (the last bin makes exactly
//! one pass), each pass costing a factor `loop_efficiency`. An output bin is
//! occupied unless every one of the `depth` input bins failed to deliver.

use crate::error::{Error, Result};
use crate::photon_stats::check_probability;

/// Inputs of the closed-form model.
///
/// `p_single` is the probability that the bare source delivers a heralded
/// photon on one pump pulse (single-pair generation times the lumped
/// detection/transmission efficiency). It can be set from theory or from a
/// measured value.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticParams {
    pub p_single: f64,
    pub loop_efficiency: f64,
    pub rep_rate_hz: f64,
    pub n_sources: u32,
}

impl AnalyticParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_single > 0.0 && self.p_single <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "p_single must be in (0, 1], got {}",
                self.p_single
            )));
        }
        check_loop_efficiency(self.loop_efficiency)?;
        if !(self.rep_rate_hz.is_finite() && self.rep_rate_hz > 0.0) {
            return Err(Error::InvalidParam(format!(
                "rep_rate_hz must be positive, got {}",
                self.rep_rate_hz
            )));
        }
        if self.n_sources < 1 {
            return Err(Error::InvalidParam("n_sources must be >= 1".into()));
        }
        Ok(())
    }
}

/// One row of the performance table at a given multiplexing depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPerformance {
    pub depth: u32,
    /// Per output bin delivery probability of the multiplexed source.
    pub delivery_probability: f64,
    /// Ratio to the bare source's per-bin probability.
    pub per_bin_improvement: f64,
    /// Absolute single-photon rate of the multiplexed source, per second.
    pub count_rate_hz: f64,
    /// Per-second rate relative to the bare source (always <= 1 for lossy
    /// loops).
    pub rate_ratio: f64,
    /// Absolute N-fold coincidence rate of N such sources, per second.
    pub n_source_rate_hz: f64,
    /// N-source rate relative to N bare sources.
    pub speedup: f64,
}

fn check_loop_efficiency(eta: f64) -> Result<()> {
    if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "loop efficiency must be in (0, 1], got {eta}"
        )));
    }
    Ok(())
}

fn check_depth(depth: u32) -> Result<()> {
    if depth < 1 {
        return Err(Error::InvalidParam("depth must be >= 1".into()));
    }
    Ok(())
}

/// Probability that multiplexing `depth` consecutive pulses delivers a
/// heralded photon to the output bin:
/// 1 − ∏_{t=1..depth} (1 − p_single·η^t).
///
/// Evaluated via ln_1p/exp_m1 so small probabilities keep full relative
/// precision.
pub fn multiplexed_delivery_probability(
    p_single: f64,
    loop_efficiency: f64,
    depth: u32,
) -> Result<f64> {
    check_probability("p_single", p_single)?;
    check_loop_efficiency(loop_efficiency)?;
    check_depth(depth)?;
    let mut log_all_fail = 0.0f64;
    let mut eta_pow = 1.0f64;
    for _ in 0..depth {
        eta_pow *= loop_efficiency;
        log_all_fail += (-p_single * eta_pow).ln_1p();
    }
    Ok(-log_all_fail.exp_m1())
}

/// Improvement in delivery probability per output time bin relative to the
/// bare source. Tends to Σ_{t=1..depth} η^t as p_single → 0.
pub fn per_bin_improvement(p_single: f64, loop_efficiency: f64, depth: u32) -> Result<f64> {
    if !(p_single > 0.0) {
        return Err(Error::InvalidParam(
            "p_single must be > 0 for the improvement ratio".into(),
        ));
    }
    Ok(multiplexed_delivery_probability(p_single, loop_efficiency, depth)? / p_single)
}

/// Absolute single-photon count rate of the multiplexed source: the output
/// bin rate is `rep_rate/depth`, so the rate is R·p/(depth).
pub fn multiplexed_count_rate(
    rep_rate_hz: f64,
    p_single: f64,
    loop_efficiency: f64,
    depth: u32,
) -> Result<f64> {
    if !(rep_rate_hz.is_finite() && rep_rate_hz > 0.0) {
        return Err(Error::InvalidParam(format!(
            "rep_rate_hz must be positive, got {rep_rate_hz}"
        )));
    }
    Ok(rep_rate_hz * multiplexed_delivery_probability(p_single, loop_efficiency, depth)?
        / f64::from(depth))
}

/// Per-second count rate of the multiplexed source relative to the bare
/// source: improvement / depth. Never exceeds 1 for loop efficiency <= 1.
pub fn count_rate_ratio(p_single: f64, loop_efficiency: f64, depth: u32) -> Result<f64> {
    Ok(per_bin_improvement(p_single, loop_efficiency, depth)? / f64::from(depth))
}

/// N-fold coincidence rate of N multiplexed sources, per second:
/// (R/depth)·p^N.
pub fn multi_source_count_rate(
    rep_rate_hz: f64,
    p_single: f64,
    loop_efficiency: f64,
    depth: u32,
    n_sources: u32,
) -> Result<f64> {
    if n_sources < 1 {
        return Err(Error::InvalidParam("n_sources must be >= 1".into()));
    }
    let p = multiplexed_delivery_probability(p_single, loop_efficiency, depth)?;
    if !(rep_rate_hz.is_finite() && rep_rate_hz > 0.0) {
        return Err(Error::InvalidParam(format!(
            "rep_rate_hz must be positive, got {rep_rate_hz}"
        )));
    }
    Ok(rep_rate_hz / f64::from(depth) * p.powi(n_sources as i32))
}

/// Speedup of the N-fold coincidence rate from multiplexing, given the
/// per-bin improvement factor directly: improvement^N / depth.
pub fn speedup_from_improvement(improvement: f64, depth: u32, n_sources: u32) -> Result<f64> {
    if !(improvement.is_finite() && improvement >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "improvement must be finite and >= 0, got {improvement}"
        )));
    }
    check_depth(depth)?;
    if n_sources < 1 {
        return Err(Error::InvalidParam("n_sources must be >= 1".into()));
    }
    Ok(improvement.powi(n_sources as i32) / f64::from(depth))
}

/// Speedup of the N-fold coincidence rate relative to N bare sources.
/// Exponential in N whenever the per-bin probability improves at all.
pub fn multi_source_speedup(
    p_single: f64,
    loop_efficiency: f64,
    depth: u32,
    n_sources: u32,
) -> Result<f64> {
    let improvement = per_bin_improvement(p_single, loop_efficiency, depth)?;
    speedup_from_improvement(improvement, depth, n_sources)
}

/// Depth in 1..=max_depth that maximises the N-source speedup; ties break
/// toward the smaller depth (cheaper hardware at equal performance).
pub fn optimal_depth(
    p_single: f64,
    loop_efficiency: f64,
    n_sources: u32,
    max_depth: u32,
) -> Result<u32> {
    check_depth(max_depth)?;
    let mut best = (1u32, f64::NEG_INFINITY);
    for depth in 1..=max_depth {
        let speedup = multi_source_speedup(p_single, loop_efficiency, depth, n_sources)?;
        if speedup > best.1 {
            best = (depth, speedup);
        }
    }
    Ok(best.0)
}

/// Smallest number of simultaneous sources for which multiplexing beats
/// simplex operation (speedup >= 1), from the improvement factor directly.
/// `None` when the per-bin probability does not improve at all.
pub fn break_even_from_improvement(improvement: f64, depth: u32) -> Result<Option<u64>> {
    if !(improvement.is_finite() && improvement >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "improvement must be finite and >= 0, got {improvement}"
        )));
    }
    check_depth(depth)?;
    if improvement <= 1.0 {
        return Ok(None); // powers of <= 1 never reach the 1/depth handicap
    }
    let target = f64::from(depth);
    // improvement^n >= depth  <=>  n >= ln(depth)/ln(improvement)
    let guess = (target.ln() / improvement.ln()).ceil();
    let mut n = if guess.is_finite() && guess > 2.0 {
        guess as u64 - 2
    } else {
        1
    };
    while improvement.powi(n.min(i32::MAX as u64) as i32) < target {
        n += 1;
    }
    Ok(Some(n.max(1)))
}

/// Smallest N with multi-source speedup >= 1, or `None` if multiplexing
/// never pays off at these parameters.
pub fn break_even_sources(p_single: f64, loop_efficiency: f64, depth: u32) -> Result<Option<u64>> {
    let improvement = per_bin_improvement(p_single, loop_efficiency, depth)?;
    break_even_from_improvement(improvement, depth)
}

/// Convert an insertion loss in dB to a transmission efficiency: 10^(−dB/10).
pub fn db_to_efficiency(loss_db: f64) -> Result<f64> {
    if !(loss_db.is_finite() && loss_db >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "loss_db must be finite and >= 0, got {loss_db}"
        )));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Relative contribution of each herald bin to the multiplexed output, in the
/// low-occupancy limit: contribution of bin b ∝ window_b · η^(depth−b+1),
/// normalised to sum to 1. (`p_single` scales every bin equally and cancels;
/// it is accepted to mirror the unnormalised per-bin delivery term. The
/// overwrite correction appears only in the simulator.)
pub fn expected_bin_contributions(
    p_single: f64,
    loop_efficiency: f64,
    depth: u32,
    herald_windows: &[f64],
) -> Result<Vec<f64>> {
    check_probability("p_single", p_single)?;
    check_loop_efficiency(loop_efficiency)?;
    check_depth(depth)?;
    if herald_windows.len() != depth as usize {
        return Err(Error::InvalidParam(format!(
            "herald_windows has {} entries for depth {depth}",
            herald_windows.len()
        )));
    }
    for &w in herald_windows {
        if !(w.is_finite() && w > 0.0 && w <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "herald window fractions must be in (0, 1], got {w}"
            )));
        }
    }
    let weights: Vec<f64> = herald_windows
        .iter()
        .enumerate()
        .map(|(i, &w)| w * loop_efficiency.powi((depth - i as u32) as i32))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Normalised herald–idler cross-correlation at zero delay:
/// bin_rate · coincidences / (herald_singles · idler_singles).
///
/// Scale-invariant in time, so it can be called either with per-second rates
/// and the output-bin rate, or directly with raw counts and the number of
/// output bins observed. Equals 1 for statistically independent channels.
pub fn cross_correlation(
    bin_rate: f64,
    coincidences: f64,
    herald_singles: f64,
    idler_singles: f64,
) -> Result<f64> {
    if !(bin_rate.is_finite() && bin_rate > 0.0) {
        return Err(Error::InvalidParam(format!(
            "bin_rate must be positive, got {bin_rate}"
        )));
    }
    if !(coincidences.is_finite() && coincidences >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "coincidences must be >= 0, got {coincidences}"
        )));
    }
    if !(herald_singles > 0.0) || !(idler_singles > 0.0) {
        return Err(Error::InvalidParam(
            "cross-correlation is undefined with zero singles".into(),
        ));
    }
    Ok(bin_rate * coincidences / (herald_singles * idler_singles))
}

/// Heralding (Klyshko) efficiency: coincidences per herald single. Estimates
/// the heralded arm's transmission when multi-pair events are negligible.
pub fn klyshko_efficiency(coincidences: u64, herald_singles: u64) -> Result<f64> {
    if herald_singles == 0 {
        return Err(Error::InvalidParam(
            "Klyshko efficiency is undefined with zero heralds".into(),
        ));
    }
    Ok(coincidences as f64 / herald_singles as f64)
}

/// Full performance table for depths 1..=max_depth.
pub fn analytic_report(params: &AnalyticParams, max_depth: u32) -> Result<Vec<DepthPerformance>> {
    params.validate()?;
    check_depth(max_depth)?;
    let bare_rate = params.rep_rate_hz * params.p_single;
    let mut rows = Vec::with_capacity(max_depth as usize);
    for depth in 1..=max_depth {
        let delivery_probability =
            multiplexed_delivery_probability(params.p_single, params.loop_efficiency, depth)?;
        let per_bin = delivery_probability / params.p_single;
        let count_rate_hz = params.rep_rate_hz * delivery_probability / f64::from(depth);
        rows.push(DepthPerformance {
            depth,
            delivery_probability,
            per_bin_improvement: per_bin,
            count_rate_hz,
            rate_ratio: count_rate_hz / bare_rate,
            n_source_rate_hz: params.rep_rate_hz / f64::from(depth)
                * delivery_probability.powi(params.n_sources as i32),
            speedup: speedup_from_improvement(per_bin, depth, params.n_sources)?,
        });
    }
    Ok(rows)
}
