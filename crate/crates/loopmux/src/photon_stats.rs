//! Photon-number statistics of the pulsed pair source and its loss channels:
//! thermal/Poisson pair sampling, binomial thinning, and threshold click
//! detectors. These are the stochastic primitives consumed once per time bin
//! by the Monte Carlo engine.
//!
//! All samplers take `&mut impl Rng`; each simulation worker owns an
//! independent stream, so everything here is safe to drive from parallel
//! replicas.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::error::{Error, Result};

/// Photon-pair number distribution per pump pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairDistribution {
    /// Single-mode spontaneous source: pmf μⁿ/(1+μ)ⁿ⁺¹.
    #[default]
    Thermal,
    /// Sensitivity-check alternative for strongly multimode sources.
    Poisson,
}

/// Pulsed pair source with lumped path efficiencies for the two arms.
///
/// `herald_efficiency` covers everything between pair generation and the
/// herald detector input; `idler_efficiency` covers source output to the
/// multiplexer input. Detector response is modelled separately by
/// [`DetectorSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairSourceSpec {
    /// Mean pairs per pump pulse (μ ≥ 0).
    pub mean_pairs: f64,
    pub herald_efficiency: f64,
    pub idler_efficiency: f64,
    pub distribution: PairDistribution,
}

impl PairSourceSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.mean_pairs.is_finite() || self.mean_pairs < 0.0 {
            return Err(Error::InvalidParam(format!(
                "mean_pairs must be finite and >= 0, got {}",
                self.mean_pairs
            )));
        }
        check_probability("herald_efficiency", self.herald_efficiency)?;
        check_probability("idler_efficiency", self.idler_efficiency)?;
        Ok(())
    }
}

/// Threshold (non-number-resolving) click detector. A click carries no
/// photon-number information; dark clicks fire independently per observed bin.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub efficiency: f64,
    pub dark_click_probability: f64,
}

impl DetectorSpec {
    /// Ideal detector: unit efficiency, no dark clicks.
    pub fn ideal() -> Self {
        DetectorSpec {
            efficiency: 1.0,
            dark_click_probability: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("detector efficiency", self.efficiency)?;
        check_probability("dark_click_probability", self.dark_click_probability)?;
        Ok(())
    }
}

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidParam(format!(
            "{name} must be a probability in [0, 1], got {value}"
        )));
    }
    Ok(())
}

/// Probability of generating exactly `n` pairs from a single-mode thermal
/// source with mean `mean_pairs`: μⁿ/(1+μ)ⁿ⁺¹. At μ = 0 the source emits
/// vacuum only.
pub fn thermal_pmf(mean_pairs: f64, n: u32) -> Result<f64> {
    if !mean_pairs.is_finite() || mean_pairs < 0.0 {
        return Err(Error::InvalidParam(format!(
            "mean_pairs must be finite and >= 0, got {mean_pairs}"
        )));
    }
    if mean_pairs == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    // Geometric form: (1-q) q^n with q = mu/(1+mu); underflows gracefully for
    // large n instead of overflowing (1+mu)^(n+1).
    let q = mean_pairs / (1.0 + mean_pairs);
    Ok(q.powi(n as i32) / (1.0 + mean_pairs))
}

/// Draw a pair number for one pump pulse from the configured distribution.
///
/// The empirical mean over many draws converges to `spec.mean_pairs`.
pub fn sample_pair_number(spec: &PairSourceSpec, rng: &mut impl Rng) -> u32 {
    match spec.distribution {
        PairDistribution::Thermal => sample_thermal(spec.mean_pairs, rng),
        PairDistribution::Poisson => {
            if spec.mean_pairs == 0.0 {
                0
            } else {
                Poisson::new(spec.mean_pairs)
                    .expect("validated mean_pairs")
                    .sample(rng) as u32
            }
        }
    }
}

fn sample_thermal(mean_pairs: f64, rng: &mut impl Rng) -> u32 {
    if mean_pairs == 0.0 {
        return 0;
    }
    // Inverse-CDF walk over the geometric pmf. The vacuum term dominates at
    // the operating points of interest, so this is a single comparison most
    // of the time.
    let q = mean_pairs / (1.0 + mean_pairs);
    let u: f64 = rng.gen();
    let mut pmf = 1.0 / (1.0 + mean_pairs);
    let mut cdf = pmf;
    let mut n = 0u32;
    while u >= cdf {
        n += 1;
        pmf *= q;
        cdf += pmf;
        if n >= 100_000 {
            break; // cdf plateaued below u; probability ~0 for sane mu
        }
    }
    n
}

/// Binomial loss channel: each of `n` photons independently survives with
/// probability `efficiency`. Result is always ≤ `n`.
pub fn thin(n: u32, efficiency: f64, rng: &mut impl Rng) -> Result<u32> {
    check_probability("thinning efficiency", efficiency)?;
    if n == 0 || efficiency == 0.0 {
        return Ok(0);
    }
    if efficiency == 1.0 {
        return Ok(n);
    }
    if n <= 64 {
        // Pair numbers are tiny in practice; per-photon Bernoulli trials beat
        // setting up a Binomial sampler.
        let mut survivors = 0;
        for _ in 0..n {
            if rng.gen::<f64>() < efficiency {
                survivors += 1;
            }
        }
        Ok(survivors)
    } else {
        let dist = Binomial::new(u64::from(n), efficiency).expect("validated efficiency");
        Ok(dist.sample(rng) as u32)
    }
}

/// Exact click probability of a threshold detector seeing `n` photons:
/// 1 − (1−efficiency)ⁿ·(1−dark_click_probability).
pub fn click_probability(n: u32, detector: &DetectorSpec) -> f64 {
    1.0 - (1.0 - detector.efficiency).powi(n as i32) * (1.0 - detector.dark_click_probability)
}

/// Threshold detection of `n` photons; `true` with [`click_probability`].
pub fn click(n: u32, detector: &DetectorSpec, rng: &mut impl Rng) -> bool {
    let p = click_probability(n, detector);
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.gen::<f64>() < p
    }
}
