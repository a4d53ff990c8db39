//! Monte Carlo engine: drives the pair source, herald detection, the
//! feed-forward controller, and the loss channels cycle by cycle, and
//! accumulates raw event tallies. Estimators (per-bin probability, Klyshko
//! efficiency, cross-correlation, per-origin contributions) are derived from
//! the tallies afterwards.
//!
//! A run is deterministic given its seed. For parallelism, cycles are
//! partitioned into replicas with independent seed streams and the tallies
//! are value-merged ([`merge`]); within a replica execution is strictly
//! sequential.

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::analytics::cross_correlation;
use crate::controller::{Controller, OverwritePolicy};
use crate::error::{Error, Result};
use crate::photon_stats::{
    click, sample_pair_number, thin, DetectorSpec, PairSourceSpec,
};

/// Whether the storage loop participates or the switch is parked in bar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Multiplexed,
    Simplex,
}

impl SimMode {
    pub fn label(self) -> &'static str {
        match self {
            SimMode::Multiplexed => "multiplexed",
            SimMode::Simplex => "simplex",
        }
    }
}

/// Multiplexer geometry and loss budget.
#[derive(Debug, Clone, PartialEq)]
pub struct MuxSpec {
    /// Number of consecutive pump bins combined into one output bin.
    pub depth: u32,
    /// Transmission of a single pass of switch plus storage fibre.
    pub loop_efficiency: f64,
    /// Static transmission of the switch in bar, seen by simplex output.
    pub simplex_efficiency: f64,
    /// Static transmission of the 2×1 noise gate.
    pub gate_efficiency: f64,
    /// Per-bin herald acceptance fraction in (0,1]; scales herald detection
    /// only (narrower bins accept fewer heralds).
    pub herald_windows: Vec<f64>,
    pub policy: OverwritePolicy,
}

impl MuxSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::InvalidParam("depth must be >= 1".into()));
        }
        for (name, value) in [
            ("loop_efficiency", self.loop_efficiency),
            ("simplex_efficiency", self.simplex_efficiency),
            ("gate_efficiency", self.gate_efficiency),
        ] {
            if !(value.is_finite() && value > 0.0 && value <= 1.0) {
                return Err(Error::InvalidParam(format!(
                    "{name} must be in (0, 1], got {value}"
                )));
            }
        }
        if self.herald_windows.len() != self.depth as usize {
            return Err(Error::InvalidParam(format!(
                "herald_windows has {} entries for depth {}",
                self.herald_windows.len(),
                self.depth
            )));
        }
        for &w in &self.herald_windows {
            if !(w.is_finite() && w > 0.0 && w <= 1.0) {
                return Err(Error::InvalidParam(format!(
                    "herald window fractions must be in (0, 1], got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Everything one simulation run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub source: PairSourceSpec,
    pub mux: MuxSpec,
    pub herald_detector: DetectorSpec,
    pub output_detector: DetectorSpec,
    pub n_cycles: u64,
    pub seed: u64,
    pub mode: SimMode,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.mux.validate()?;
        self.herald_detector.validate()?;
        self.output_detector.validate()?;
        if self.n_cycles < 1 {
            return Err(Error::InvalidParam("n_cycles must be >= 1".into()));
        }
        Ok(())
    }
}

/// Raw event counts from a run. Field-wise summable across replicas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TallyCounters {
    pub depth: u32,
    pub mode: SimMode,
    pub cycles: u64,
    /// Raw herald clicks per bin position (1-based bin b at index b−1).
    pub heralds_by_bin: Vec<u64>,
    /// Herald singles as seen at the output clock: cycles with at least one
    /// herald (multiplexed; the re-timed herald fires once per cycle) or raw
    /// herald clicks (simplex).
    pub herald_singles: u64,
    /// Output detector clicks in target output bins.
    pub idler_singles_target: u64,
    /// Output detector clicks at wrong times (overwrite dumps, bypasses).
    pub idler_singles_offtarget: u64,
    /// Herald in the cycle AND a target-bin click in the same cycle
    /// (multiplexed), or same-bin herald+output clicks (simplex).
    pub coincidences: u64,
    /// Simplex coincidences resolved by bin position.
    pub coincidences_by_bin: Vec<u64>,
    /// Multiplexed target clicks resolved by the delivered photon's herald
    /// bin.
    pub target_clicks_by_origin: Vec<u64>,
    /// Controller events, for conservation checks.
    pub captures: u64,
    pub deliveries: u64,
    pub dumps: u64,
}

impl TallyCounters {
    pub fn zero(depth: u32, mode: SimMode) -> Self {
        TallyCounters {
            depth,
            mode,
            cycles: 0,
            heralds_by_bin: vec![0; depth as usize],
            herald_singles: 0,
            idler_singles_target: 0,
            idler_singles_offtarget: 0,
            coincidences: 0,
            coincidences_by_bin: vec![0; depth as usize],
            target_clicks_by_origin: vec![0; depth as usize],
            captures: 0,
            deliveries: 0,
            dumps: 0,
        }
    }

    /// Total raw herald clicks across bins.
    pub fn raw_heralds(&self) -> u64 {
        self.heralds_by_bin.iter().sum()
    }

    /// Pump bins consumed by the run.
    pub fn pump_bins(&self) -> u64 {
        self.cycles * u64::from(self.depth)
    }

    /// Output time bins observed: one per cycle when multiplexed, every pump
    /// bin when simplex.
    pub fn output_bins(&self) -> u64 {
        match self.mode {
            SimMode::Multiplexed => self.cycles,
            SimMode::Simplex => self.pump_bins(),
        }
    }
}

/// A point estimate with its statistical standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

fn proportion(successes: u64, trials: u64) -> Estimate {
    let p = successes as f64 / trials as f64;
    Estimate {
        value: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
    }
}

/// Estimators derived from a tally. A field is `None` when its denominator
/// is zero rather than fabricated.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub output_bins: u64,
    /// Probability of an output click per output time bin.
    pub p_bin: Option<Estimate>,
    /// Coincidences per herald single.
    pub klyshko: Option<Estimate>,
    /// Herald–idler cross-correlation at zero delay.
    pub g_hi: Option<Estimate>,
    /// Fraction of detected output per herald bin of origin.
    pub contributions_by_bin: Option<Vec<Estimate>>,
    /// Raw herald clicks per pump bin (the heralding-rate axis).
    pub herald_fraction: Option<Estimate>,
}

/// Derive the estimators from raw counts. Binomial standard errors on
/// proportions; the cross-correlation error propagates independent Poisson
/// counts.
pub fn estimate(tally: &TallyCounters) -> Estimates {
    let output_bins = tally.output_bins();
    let p_bin = (output_bins > 0).then(|| proportion(tally.idler_singles_target, output_bins));
    let klyshko =
        (tally.herald_singles > 0).then(|| proportion(tally.coincidences, tally.herald_singles));
    let g_hi = if tally.herald_singles > 0 && tally.idler_singles_target > 0 && output_bins > 0 {
        let g = cross_correlation(
            output_bins as f64,
            tally.coincidences as f64,
            tally.herald_singles as f64,
            tally.idler_singles_target as f64,
        )
        .expect("positive counts");
        let rel = if tally.coincidences > 0 {
            (1.0 / tally.coincidences as f64
                + 1.0 / tally.herald_singles as f64
                + 1.0 / tally.idler_singles_target as f64)
                .sqrt()
        } else {
            0.0
        };
        Some(Estimate {
            value: g,
            std_error: g * rel,
        })
    } else {
        None
    };
    let origin_counts = match tally.mode {
        SimMode::Multiplexed => &tally.target_clicks_by_origin,
        SimMode::Simplex => &tally.coincidences_by_bin,
    };
    let total: u64 = origin_counts.iter().sum();
    let contributions_by_bin = (total > 0).then(|| {
        origin_counts
            .iter()
            .map(|&k| proportion(k, total))
            .collect()
    });
    let herald_fraction =
        (tally.pump_bins() > 0).then(|| proportion(tally.raw_heralds(), tally.pump_bins()));
    Estimates {
        output_bins,
        p_bin,
        klyshko,
        g_hi,
        contributions_by_bin,
        herald_fraction,
    }
}

/// Run one replica sequentially. Deterministic for a given config+seed.
pub fn simulate(config: &SimConfig) -> Result<TallyCounters> {
    config.validate()?;
    let mut rng = StdRng::seed_from_u64(config.seed);
    let mut tally = TallyCounters::zero(config.mux.depth, config.mode);
    match config.mode {
        SimMode::Multiplexed => simulate_multiplexed(config, &mut rng, &mut tally)?,
        SimMode::Simplex => simulate_simplex(config, &mut rng, &mut tally)?,
    }
    Ok(tally)
}

fn simulate_multiplexed(
    config: &SimConfig,
    rng: &mut StdRng,
    tally: &mut TallyCounters,
) -> Result<()> {
    let m = config.mux.depth;
    let herald_eta: Vec<f64> = config
        .mux
        .herald_windows
        .iter()
        .map(|w| config.source.herald_efficiency * w)
        .collect();
    let capture_eta = config.source.idler_efficiency * config.mux.gate_efficiency;
    let bypass_eta = capture_eta * config.mux.simplex_efficiency;
    // loop_pass[t] = transmission after t passes, t in 1..=m
    let loop_pass: Vec<f64> = (0..=m)
        .map(|t| config.mux.loop_efficiency.powi(t as i32))
        .collect();
    let mut controller = Controller::new(m, config.mux.policy)?;
    // Physical loop contents: photon number and herald bin of origin. The
    // controller itself only sees the boolean occupancy flag, as in the
    // hardware.
    let mut stored: Option<(u32, u32)> = None;

    for _ in 0..config.n_cycles {
        tally.cycles += 1;
        let mut any_herald = false;
        let mut delivered: Option<(bool, u32)> = None;
        for bin in 1..=m {
            let pairs = sample_pair_number(&config.source, rng);
            let herald_survivors = thin(pairs, herald_eta[bin as usize - 1], rng)?;
            let herald = click(herald_survivors, &config.herald_detector, rng);
            if herald {
                tally.heralds_by_bin[bin as usize - 1] += 1;
                any_herald = true;
            }
            let out = controller.step(herald);
            if out.dump {
                let (photons, origin) = stored.take().expect("dump of an empty loop");
                // b - origin passes so far; the overwrite cross expels it now
                let survivors = thin(photons, loop_pass[(bin - origin) as usize], rng)?;
                tally.dumps += 1;
                if click(survivors, &config.output_detector, rng) {
                    tally.idler_singles_offtarget += 1;
                }
            }
            if out.capture {
                let idler = thin(pairs, capture_eta, rng)?;
                stored = Some((idler, bin));
                tally.captures += 1;
            } else if herald {
                // KeepFirst with an occupied loop: the newcomer exits through
                // the bar switch at the wrong time.
                let idler = thin(pairs, bypass_eta, rng)?;
                if click(idler, &config.output_detector, rng) {
                    tally.idler_singles_offtarget += 1;
                }
            }
            if out.deliver {
                let (photons, origin) = stored.take().expect("delivery from an empty loop");
                let passes = m - origin + 1;
                let survivors = thin(photons, loop_pass[passes as usize], rng)?;
                tally.deliveries += 1;
                let clicked = click(survivors, &config.output_detector, rng);
                delivered = Some((clicked, origin));
            }
        }
        // Observe the target slot once per cycle; without a delivery only a
        // dark click can fire.
        let (target_click, origin) = match delivered {
            Some((clicked, origin)) => (clicked, Some(origin)),
            None => (click(0, &config.output_detector, rng), None),
        };
        if target_click {
            tally.idler_singles_target += 1;
            if let Some(origin) = origin {
                tally.target_clicks_by_origin[origin as usize - 1] += 1;
            }
            if any_herald {
                tally.coincidences += 1;
            }
        }
        if any_herald {
            tally.herald_singles += 1;
        }
    }
    Ok(())
}

fn simulate_simplex(
    config: &SimConfig,
    rng: &mut StdRng,
    tally: &mut TallyCounters,
) -> Result<()> {
    let m = config.mux.depth;
    let herald_eta: Vec<f64> = config
        .mux
        .herald_windows
        .iter()
        .map(|w| config.source.herald_efficiency * w)
        .collect();
    // Bar path: idler transmission, noise gate, one static switch pass.
    let output_eta = config.source.idler_efficiency
        * config.mux.gate_efficiency
        * config.mux.simplex_efficiency;

    for _ in 0..config.n_cycles {
        tally.cycles += 1;
        for bin in 1..=m as usize {
            let pairs = sample_pair_number(&config.source, rng);
            let herald_survivors = thin(pairs, herald_eta[bin - 1], rng)?;
            let herald = click(herald_survivors, &config.herald_detector, rng);
            if herald {
                tally.heralds_by_bin[bin - 1] += 1;
                tally.herald_singles += 1;
            }
            let output_survivors = thin(pairs, output_eta, rng)?;
            let output = click(output_survivors, &config.output_detector, rng);
            if output {
                tally.idler_singles_target += 1;
            }
            if herald && output {
                tally.coincidences += 1;
                tally.coincidences_by_bin[bin - 1] += 1;
            }
        }
    }
    Ok(())
}

/// splitmix64 stream: replica `index` of a run seeded with `base`.
pub fn replica_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Partition the cycles across `workers` replicas with independent seed
/// streams and merge the tallies. `workers = 1` is exactly [`simulate`].
/// Results are deterministic per (seed, workers) pair.
pub fn simulate_parallel(config: &SimConfig, workers: usize) -> Result<TallyCounters> {
    if workers == 0 {
        return Err(Error::InvalidParam("workers must be >= 1".into()));
    }
    if workers == 1 {
        return simulate(config);
    }
    config.validate()?;
    let workers = workers.min(config.n_cycles as usize).max(1);
    let base = config.n_cycles / workers as u64;
    let remainder = (config.n_cycles % workers as u64) as usize;
    let replicas: Vec<SimConfig> = (0..workers)
        .map(|i| {
            let mut replica = config.clone();
            replica.n_cycles = base + u64::from(i < remainder);
            replica.seed = replica_seed(config.seed, i as u64);
            replica
        })
        .collect();
    let tallies = replicas
        .par_iter()
        .map(simulate)
        .collect::<Result<Vec<_>>>()?;
    merge(&tallies)
}

/// Field-wise sum of tallies from runs of the same shape (depth and mode).
/// Estimates of the merged tally equal pooled statistics exactly.
pub fn merge(tallies: &[TallyCounters]) -> Result<TallyCounters> {
    let first = tallies
        .first()
        .ok_or_else(|| Error::MergeMismatch("nothing to merge".into()))?;
    let mut total = TallyCounters::zero(first.depth, first.mode);
    for t in tallies {
        if t.depth != total.depth || t.mode != total.mode {
            return Err(Error::MergeMismatch(format!(
                "mixed shapes: depth {} {} vs depth {} {}",
                total.depth,
                total.mode.label(),
                t.depth,
                t.mode.label()
            )));
        }
        total.cycles += t.cycles;
        total.herald_singles += t.herald_singles;
        total.idler_singles_target += t.idler_singles_target;
        total.idler_singles_offtarget += t.idler_singles_offtarget;
        total.coincidences += t.coincidences;
        total.captures += t.captures;
        total.deliveries += t.deliveries;
        total.dumps += t.dumps;
        for (acc, x) in total.heralds_by_bin.iter_mut().zip(&t.heralds_by_bin) {
            *acc += x;
        }
        for (acc, x) in total
            .coincidences_by_bin
            .iter_mut()
            .zip(&t.coincidences_by_bin)
        {
            *acc += x;
        }
        for (acc, x) in total
            .target_clicks_by_origin
            .iter_mut()
            .zip(&t.target_clicks_by_origin)
        {
            *acc += x;
        }
    }
    Ok(total)
}

/// One simulated run with its derived estimators.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub config: SimConfig,
    pub tally: TallyCounters,
    pub estimates: Estimates,
}

/// Paired multiplexed/simplex runs at one source setting.
#[derive(Debug, Clone)]
pub struct ModeComparison {
    pub mean_pairs: f64,
    pub multiplexed: SimRun,
    pub simplex: SimRun,
}

/// Run both modes at grid point `index` of a sweep, with the pinned seed
/// derivation base+2i (multiplexed) and base+2i+1 (simplex).
pub fn run_mode_pair(base: &SimConfig, index: u64, workers: usize) -> Result<ModeComparison> {
    let run = |mode: SimMode, seed_offset: u64| -> Result<SimRun> {
        let mut config = base.clone();
        config.mode = mode;
        config.seed = base.seed.wrapping_add(2 * index + seed_offset);
        let tally = simulate_parallel(&config, workers)?;
        let estimates = estimate(&tally);
        Ok(SimRun {
            config,
            tally,
            estimates,
        })
    };
    Ok(ModeComparison {
        mean_pairs: base.source.mean_pairs,
        multiplexed: run(SimMode::Multiplexed, 0)?,
        simplex: run(SimMode::Simplex, 1)?,
    })
}

/// Paired multiplexed/simplex estimates across a pump-power grid — the
/// dataset behind probability/efficiency/correlation vs heralding rate
/// curves.
pub fn compare_modes(
    base: &SimConfig,
    mean_pairs_grid: &[f64],
    workers: usize,
) -> Result<Vec<ModeComparison>> {
    if mean_pairs_grid.is_empty() {
        return Err(Error::InvalidParam("mean_pairs grid is empty".into()));
    }
    mean_pairs_grid
        .iter()
        .enumerate()
        .map(|(i, &mu)| {
            let mut point = base.clone();
            point.source.mean_pairs = mu;
            run_mode_pair(&point, i as u64, workers)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{expected_bin_contributions, multiplexed_delivery_probability};
    use crate::photon_stats::PairDistribution;

    fn ideal_config(mode: SimMode) -> SimConfig {
        SimConfig {
            source: PairSourceSpec {
                mean_pairs: 0.01,
                herald_efficiency: 1.0,
                idler_efficiency: 1.0,
                distribution: PairDistribution::Thermal,
            },
            mux: MuxSpec {
                depth: 4,
                loop_efficiency: 0.8,
                simplex_efficiency: 1.0,
                gate_efficiency: 1.0,
                herald_windows: vec![1.0; 4],
                policy: OverwritePolicy::KeepLast,
            },
            herald_detector: DetectorSpec::ideal(),
            output_detector: DetectorSpec::ideal(),
            n_cycles: 100_000,
            seed: 7,
            mode,
        }
    }

    #[test]
    fn vacuum_source_only_counts_cycles() {
        for mode in [SimMode::Multiplexed, SimMode::Simplex] {
            let mut config = ideal_config(mode);
            config.source.mean_pairs = 0.0;
            config.n_cycles = 10_000;
            let tally = simulate(&config).unwrap();
            assert_eq!(tally.cycles, 10_000);
            assert_eq!(tally.raw_heralds(), 0);
            assert_eq!(tally.idler_singles_target, 0);
            assert_eq!(tally.idler_singles_offtarget, 0);
            assert_eq!(tally.coincidences, 0);
            assert_eq!((tally.captures, tally.deliveries, tally.dumps), (0, 0, 0));
            let est = estimate(&tally);
            assert_eq!(est.p_bin.unwrap().value, 0.0);
            assert!(est.klyshko.is_none());
            assert!(est.g_hi.is_none());
            assert!(est.contributions_by_bin.is_none());
        }
    }

    #[test]
    fn simplex_click_probability_is_the_vacuum_complement() {
        // All efficiencies 1: a bin clicks iff it generated at least one pair.
        let mut config = ideal_config(SimMode::Simplex);
        config.source.mean_pairs = 0.02;
        config.n_cycles = 250_000; // 1e6 bins at depth 4
        let tally = simulate(&config).unwrap();
        let est = estimate(&tally);
        let p = est.p_bin.unwrap();
        let expected = 1.0 - 1.0 / 1.02; // 1 - thermal_pmf(0.02, 0)
        assert!(
            (p.value - expected).abs() < 4.0 * p.std_error,
            "p = {} +- {}, expected {expected}",
            p.value,
            p.std_error
        );
    }

    #[test]
    fn multiplexed_probability_tracks_the_closed_form() {
        // mu chosen so the single-pulse delivery probability is 0.0098
        let mut config = ideal_config(SimMode::Multiplexed);
        config.source.mean_pairs = 0.01;
        config.n_cycles = 400_000;
        let p_single = 0.01 / (1.01f64 * 1.01); // p_th(1) at unit efficiency
        let predicted = multiplexed_delivery_probability(p_single, 0.8, 4).unwrap();
        let tally = simulate(&config).unwrap();
        let est = estimate(&tally);
        let p = est.p_bin.unwrap();
        let tolerance = (4.0 * p.std_error).max(0.02 * predicted);
        assert!(
            (p.value - predicted).abs() < tolerance,
            "p = {} +- {}, predicted {predicted}",
            p.value,
            p.std_error
        );
    }

    #[test]
    fn seed_determinism_is_bitwise() {
        let config = ideal_config(SimMode::Multiplexed);
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        assert_eq!(a, b);
        let mut other = config.clone();
        other.seed += 1;
        assert_ne!(simulate(&other).unwrap(), a);
    }

    #[test]
    fn photon_conservation_in_tallies() {
        for policy in [OverwritePolicy::KeepLast, OverwritePolicy::KeepFirst] {
            let mut config = ideal_config(SimMode::Multiplexed);
            config.source.mean_pairs = 0.8; // force frequent overwrites
            config.mux.policy = policy;
            config.n_cycles = 20_000;
            let tally = simulate(&config).unwrap();
            // every cycle flushes, so captures split exactly into fates
            assert_eq!(tally.captures, tally.deliveries + tally.dumps);
            match policy {
                OverwritePolicy::KeepLast => assert!(tally.dumps > 0),
                OverwritePolicy::KeepFirst => assert_eq!(tally.dumps, 0),
            }
        }
    }

    #[test]
    fn offtarget_clicks_appear_once_overwrites_happen() {
        let mut config = ideal_config(SimMode::Multiplexed);
        config.source.mean_pairs = 0.8;
        config.n_cycles = 20_000;
        let tally = simulate(&config).unwrap();
        assert!(tally.idler_singles_offtarget > 0);
        assert!(tally.dumps >= tally.idler_singles_offtarget);
    }

    #[test]
    fn simplex_p_bin_does_not_depend_on_depth() {
        let mut reference: Option<Estimate> = None;
        for depth in [1u32, 2, 4, 8] {
            let mut config = ideal_config(SimMode::Simplex);
            config.mux.depth = depth;
            config.mux.herald_windows = vec![1.0; depth as usize];
            config.n_cycles = 400_000 / u64::from(depth);
            config.seed = 100 + u64::from(depth);
            let est = estimate(&simulate(&config).unwrap());
            let p = est.p_bin.unwrap();
            if let Some(prev) = reference {
                let sigma = (p.std_error.powi(2) + prev.std_error.powi(2)).sqrt();
                assert!(
                    (p.value - prev.value).abs() < 4.0 * sigma,
                    "depth {depth}: {} vs {}",
                    p.value,
                    prev.value
                );
            }
            reference = Some(p);
        }
    }

    #[test]
    fn simplex_klyshko_estimates_the_output_path() {
        let mut config = ideal_config(SimMode::Simplex);
        config.source.mean_pairs = 0.01;
        config.source.idler_efficiency = 0.3;
        config.n_cycles = 250_000;
        let est = estimate(&simulate(&config).unwrap());
        let k = est.klyshko.unwrap();
        assert!(
            (k.value - 0.3).abs() < (4.0 * k.std_error).max(0.01),
            "klyshko = {} +- {}",
            k.value,
            k.std_error
        );
    }

    #[test]
    fn contributions_match_the_low_occupancy_closed_form() {
        let mut config = ideal_config(SimMode::Multiplexed);
        config.source.mean_pairs = 0.002;
        config.n_cycles = 2_000_000;
        let est = estimate(&simulate(&config).unwrap());
        let contributions = est.contributions_by_bin.unwrap();
        let expected = expected_bin_contributions(0.002, 0.8, 4, &[1.0; 4]).unwrap();
        for (bin, (got, want)) in contributions.iter().zip(&expected).enumerate() {
            assert!(
                (got.value - want).abs() < 4.0 * got.std_error,
                "bin {}: {} +- {} vs {want}",
                bin + 1,
                got.value,
                got.std_error
            );
        }
        for w in contributions.windows(2) {
            assert!(w[0].value <= w[1].value);
        }
    }

    #[test]
    fn narrow_first_window_suppresses_its_heralds() {
        let mut config = ideal_config(SimMode::Multiplexed);
        config.source.mean_pairs = 0.01;
        config.mux.herald_windows = vec![89.0 / 121.5, 1.0, 1.0, 1.0];
        config.n_cycles = 500_000;
        let tally = simulate(&config).unwrap();
        let ratio = tally.heralds_by_bin[0] as f64 / tally.heralds_by_bin[3] as f64;
        let expected = 89.0 / 121.5;
        assert!((ratio - expected).abs() < 0.05, "ratio = {ratio}");
        // and the contribution split follows the windowed closed form
        let est = estimate(&tally);
        let contributions = est.contributions_by_bin.unwrap();
        let expected =
            expected_bin_contributions(0.01, 0.8, 4, &config.mux.herald_windows).unwrap();
        for (got, want) in contributions.iter().zip(&expected) {
            assert!((got.value - want).abs() < (4.0 * got.std_error).max(0.01));
        }
    }

    #[test]
    fn estimate_from_hand_built_tally() {
        let mut tally = TallyCounters::zero(4, SimMode::Multiplexed);
        tally.cycles = 1000;
        tally.herald_singles = 200;
        tally.coincidences = 50;
        tally.idler_singles_target = 60;
        let est = estimate(&tally);
        assert_eq!(est.klyshko.unwrap().value, 0.25);
        assert_eq!(est.p_bin.unwrap().value, 0.06);
        let g = est.g_hi.unwrap().value;
        assert!((g - 1000.0 * 50.0 / (200.0 * 60.0)).abs() < 1e-12);
    }

    #[test]
    fn merge_identity_commutativity_and_mismatch() {
        let config = ideal_config(SimMode::Multiplexed);
        let a = simulate(&config).unwrap();
        let mut config_b = config.clone();
        config_b.seed = 8;
        let b = simulate(&config_b).unwrap();

        let zero = TallyCounters::zero(4, SimMode::Multiplexed);
        assert_eq!(merge(&[a.clone(), zero]).unwrap(), a);
        assert_eq!(
            merge(&[a.clone(), b.clone()]).unwrap(),
            merge(&[b.clone(), a.clone()]).unwrap()
        );

        let simplex = TallyCounters::zero(4, SimMode::Simplex);
        assert!(merge(&[a.clone(), simplex]).is_err());
        let other_depth = TallyCounters::zero(2, SimMode::Multiplexed);
        assert!(merge(&[a, other_depth]).is_err());
        assert!(merge(&[]).is_err());
    }

    #[test]
    fn merged_replicas_pool_like_one_long_run() {
        let mut config = ideal_config(SimMode::Multiplexed);
        config.n_cycles = 125_000;
        let replicas: Vec<TallyCounters> = (0..8)
            .map(|i| {
                let mut c = config.clone();
                c.seed = replica_seed(1234, i);
                simulate(&c).unwrap()
            })
            .collect();
        let pooled = merge(&replicas).unwrap();
        assert_eq!(pooled.cycles, 1_000_000);

        // merge-then-estimate equals estimate-of-summed-counts exactly
        let mut manual = TallyCounters::zero(4, SimMode::Multiplexed);
        for r in &replicas {
            manual = merge(&[manual, r.clone()]).unwrap();
        }
        assert_eq!(estimate(&pooled), estimate(&manual));

        // and agrees statistically with a single long run
        let mut long = config.clone();
        long.n_cycles = 1_000_000;
        long.seed = 999;
        let long_est = estimate(&simulate(&long).unwrap());
        let pooled_est = estimate(&pooled);
        let (a, b) = (pooled_est.p_bin.unwrap(), long_est.p_bin.unwrap());
        let sigma = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.value - b.value).abs() < 5.0 * sigma);
    }

    #[test]
    fn parallel_matches_seed_and_worker_count() {
        let mut config = ideal_config(SimMode::Multiplexed);
        config.n_cycles = 50_000;
        let two_a = simulate_parallel(&config, 2).unwrap();
        let two_b = simulate_parallel(&config, 2).unwrap();
        assert_eq!(two_a, two_b);
        assert_eq!(two_a.cycles, 50_000);
        let one = simulate_parallel(&config, 1).unwrap();
        assert_eq!(one, simulate(&config).unwrap());
    }

    #[test]
    fn compare_modes_runs_the_grid() {
        let mut config = ideal_config(SimMode::Multiplexed);
        config.n_cycles = 5_000;
        let pairs = compare_modes(&config, &[0.0, 0.01], 1).unwrap();
        assert_eq!(pairs.len(), 2);
        // vacuum point: both modes silent
        assert_eq!(pairs[0].multiplexed.tally.raw_heralds(), 0);
        assert_eq!(pairs[0].simplex.tally.raw_heralds(), 0);
        assert!(pairs[1].multiplexed.tally.raw_heralds() > 0);
        assert!(compare_modes(&config, &[], 1).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected_before_running() {
        let mut config = ideal_config(SimMode::Multiplexed);
        config.n_cycles = 0;
        assert!(simulate(&config).is_err());
        let mut config = ideal_config(SimMode::Multiplexed);
        config.mux.herald_windows = vec![1.0; 3];
        assert!(simulate(&config).is_err());
        let mut config = ideal_config(SimMode::Multiplexed);
        config.source.mean_pairs = -1.0;
        assert!(simulate(&config).is_err());
    }
}
