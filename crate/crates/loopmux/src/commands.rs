//! Subcommand implementations. Each returns its full CSV document as a
//! string; writing happens once at the end so failed runs never leave
//! partial output files. Floats are formatted at a fixed 9 significant
//! digits, so output is byte-identical for a given config and seed.

use crate::analytics::{
    analytic_report, break_even_from_improvement, db_to_efficiency, AnalyticParams,
};
use crate::config::{apply_sweep_value, ResolvedConfig, ResolvedSweep, SweepKey};
use crate::error::{Error, Result};
use crate::sim::{estimate, run_mode_pair, simulate_parallel, Estimate, SimMode, TallyCounters};

/// Fixed-width float formatting: 9 significant digits, scientific.
pub fn fmt_g9(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(e: &Option<Estimate>) -> (String, String) {
    match e {
        Some(est) => (fmt_g9(est.value), fmt_g9(est.std_error)),
        None => (String::new(), String::new()),
    }
}

/// Resolve the loop-loss CLI flags; exactly one may be given, and with
/// neither the 1.0 dB reference loss applies.
pub fn resolve_loss(eta_loop: Option<f64>, loss_db: Option<f64>) -> Result<f64> {
    match (eta_loop, loss_db) {
        (Some(_), Some(_)) => Err(Error::InvalidParam(
            "--eta-loop and --loss-db are mutually exclusive".into(),
        )),
        (Some(eta), None) => {
            if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidParam(format!(
                    "--eta-loop must be in (0, 1], got {eta}"
                )));
            }
            Ok(eta)
        }
        (None, Some(db)) => db_to_efficiency(db),
        (None, None) => db_to_efficiency(1.0),
    }
}

/// Closed-form performance table: one row per depth 1..=m_max with the
/// delivery probability, per-bin improvement, rate ratio and N-source
/// speedup.
pub fn cmd_analytic(
    p_single: f64,
    loop_efficiency: f64,
    max_depth: u32,
    n_sources: u32,
    rep_rate_hz: f64,
) -> Result<String> {
    let params = AnalyticParams {
        p_single,
        loop_efficiency,
        rep_rate_hz,
        n_sources,
    };
    let rows = analytic_report(&params, max_depth)?;
    let mut csv = String::from("m,p1m,f_p1,f_C1,f_N\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.depth,
            fmt_g9(row.delivery_probability),
            fmt_g9(row.per_bin_improvement),
            fmt_g9(row.rate_ratio),
            fmt_g9(row.speedup),
        ));
    }
    Ok(csv)
}

fn herald_rate_hz(tally: &TallyCounters, rep_rate_hz: f64) -> f64 {
    rep_rate_hz * tally.raw_heralds() as f64 / tally.pump_bins() as f64
}

fn simulate_header(depth: u32) -> String {
    let mut header = String::from(
        "mode,mean_pairs,depth,cycles,herald_rate_hz,p_bin,p_bin_se,klyshko,klyshko_se,g_hi,g_hi_se",
    );
    for bin in 1..=depth {
        header.push_str(&format!(",contrib_b{bin},contrib_b{bin}_se"));
    }
    header.push('\n');
    header
}

fn simulate_row(config: &ResolvedConfig, tally: &TallyCounters) -> String {
    let est = estimate(tally);
    let (p_bin, p_bin_se) = fmt_opt(&est.p_bin);
    let (klyshko, klyshko_se) = fmt_opt(&est.klyshko);
    let (g_hi, g_hi_se) = fmt_opt(&est.g_hi);
    let mut row = format!(
        "{},{},{},{},{},{p_bin},{p_bin_se},{klyshko},{klyshko_se},{g_hi},{g_hi_se}",
        tally.mode.label(),
        fmt_g9(config.sim.source.mean_pairs),
        tally.depth,
        tally.cycles,
        fmt_g9(herald_rate_hz(tally, config.rep_rate_hz)),
    );
    for bin in 0..tally.depth as usize {
        match &est.contributions_by_bin {
            Some(contribs) => {
                row.push_str(&format!(
                    ",{},{}",
                    fmt_g9(contribs[bin].value),
                    fmt_g9(contribs[bin].std_error)
                ));
            }
            None => row.push_str(",,"),
        }
    }
    row.push('\n');
    row
}

/// Output of a single simulation run: the CSV document plus a short
/// human-readable summary.
pub struct SimulateOutput {
    pub csv: String,
    pub summary: String,
}

pub fn cmd_simulate(config: &ResolvedConfig, workers: usize) -> Result<SimulateOutput> {
    config.sim.validate()?;
    let tally = simulate_parallel(&config.sim, workers)?;
    let mut csv = simulate_header(tally.depth);
    csv.push_str(&simulate_row(config, &tally));

    let est = estimate(&tally);
    let mut summary = format!(
        "{} run: {} cycles x {} bins, {} heralds ({} off-target clicks)\n",
        tally.mode.label(),
        tally.cycles,
        tally.depth,
        tally.raw_heralds(),
        tally.idler_singles_offtarget,
    );
    let line = |name: &str, e: &Option<Estimate>| match e {
        Some(e) => format!("  {name} = {:.6} +- {:.6}\n", e.value, e.std_error),
        None => format!("  {name} = n/a (no counts)\n"),
    };
    summary.push_str(&line("p_bin  ", &est.p_bin));
    summary.push_str(&line("klyshko", &est.klyshko));
    summary.push_str(&line("g_hi   ", &est.g_hi));
    Ok(SimulateOutput { csv, summary })
}

fn sweep_header() -> &'static str {
    "key,value,mode,mean_pairs,depth,herald_rate_hz,p_bin,p_bin_se,p_bin_static_corrected,klyshko,klyshko_se,g_hi,g_hi_se\n"
}

fn sweep_row(
    key: SweepKey,
    value: f64,
    config: &ResolvedConfig,
    mean_pairs: f64,
    tally: &TallyCounters,
) -> String {
    let est = estimate(tally);
    let (p_bin, p_bin_se) = fmt_opt(&est.p_bin);
    let (klyshko, klyshko_se) = fmt_opt(&est.klyshko);
    let (g_hi, g_hi_se) = fmt_opt(&est.g_hi);
    // Back the static switch pass out of the simplex data so the two modes
    // compare on equal footing; multiplexed rows carry p_bin unchanged.
    let corrected = est.p_bin.map(|p| match tally.mode {
        SimMode::Simplex => p.value / config.sim.mux.simplex_efficiency,
        SimMode::Multiplexed => p.value,
    });
    let corrected = corrected.map(fmt_g9).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{p_bin},{p_bin_se},{corrected},{klyshko},{klyshko_se},{g_hi},{g_hi_se}\n",
        key.label(),
        fmt_g9(value),
        tally.mode.label(),
        fmt_g9(mean_pairs),
        tally.depth,
        fmt_g9(herald_rate_hz(tally, config.rep_rate_hz)),
    )
}

/// Parameter sweep: one multiplexed and one simplex row per grid point,
/// with seeds pinned to base+2i / base+2i+1.
pub fn cmd_sweep(sweep: &ResolvedSweep, workers: usize) -> Result<String> {
    let mut csv = String::from(sweep_header());
    for (i, &value) in sweep.values.iter().enumerate() {
        let point = apply_sweep_value(&sweep.base.sim, sweep.key, value);
        point.validate().map_err(|e| {
            Error::InvalidConfig(format!("sweep value {value} for {}: {e}", sweep.key.label()))
        })?;
        let pair = run_mode_pair(&point, i as u64, workers)?;
        let point_config = ResolvedConfig {
            sim: point.clone(),
            rep_rate_hz: sweep.base.rep_rate_hz,
        };
        csv.push_str(&sweep_row(
            sweep.key,
            value,
            &point_config,
            point.source.mean_pairs,
            &pair.multiplexed.tally,
        ));
        csv.push_str(&sweep_row(
            sweep.key,
            value,
            &point_config,
            point.source.mean_pairs,
            &pair.simplex.tally,
        ));
    }
    Ok(csv)
}

/// Optimal multiplexing depth per source count: for each N in 1..=n_max the
/// depth maximising the N-source speedup, the speedup there, and whether it
/// breaks even against simplex sources.
pub fn cmd_optimal_m(
    p_single: f64,
    loop_efficiency: f64,
    n_max: u32,
    max_depth: u32,
) -> Result<String> {
    if n_max < 1 {
        return Err(Error::InvalidParam("--n-max must be >= 1".into()));
    }
    let mut csv = String::from("n_sources,optimal_m,f_n_at_optimum,break_even\n");
    for n_sources in 1..=n_max {
        let depth = crate::analytics::optimal_depth(p_single, loop_efficiency, n_sources, max_depth)?;
        let speedup = crate::analytics::multi_source_speedup(
            p_single,
            loop_efficiency,
            depth,
            n_sources,
        )?;
        csv.push_str(&format!(
            "{n_sources},{depth},{},{}\n",
            fmt_g9(speedup),
            speedup >= 1.0,
        ));
    }
    Ok(csv)
}

/// Break-even N for a given improvement factor, as a writeable cell: the
/// count, or "never" when multiplexing cannot win.
pub fn break_even_cell(improvement: f64, depth: u32) -> Result<String> {
    Ok(match break_even_from_improvement(improvement, depth)? {
        Some(n) => n.to_string(),
        None => "never".to_string(),
    })
}
