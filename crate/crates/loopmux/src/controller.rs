//! Feed-forward switch control for the storage loop, at time-bin granularity.
//!
//! Clock bins are labelled 1 (early) to `depth` (late), cyclically. A herald
//! in some bin diverts that bin's idler photon into the loop (switch "cross")
//! and sets an occupancy flag; at the cycle boundary the loop contents are
//! routed to the output. A later herald inside the same cycle overwrites the
//! stored photon under the default [`OverwritePolicy::KeepLast`]: the older
//! photon is dumped to the output at the wrong time and the fresher,
//! lower-loss photon takes its place.
//!
//! The loop transit time equals one bin period, so a photon heralded in bin
//! `b` and delivered at the boundary has made `depth − b + 1` passes (see
//! [`passes_for_origin`]); intra-bin switch timing is abstracted away.

use crate::error::{Error, Result};

/// 2×2 switch configuration. Cross routes source→loop and loop→output; bar
/// routes source→output and loop→loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchState {
    Cross,
    Bar,
}

/// What to do when a herald arrives while the loop is already occupied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverwritePolicy {
    /// Replace the stored photon with the later, lower-loss one (the old
    /// photon is dumped off-target). This is how the hardware is configured.
    #[default]
    KeepLast,
    /// Counterfactual knob: keep the stored photon, losing the newcomer to
    /// the bypass path.
    KeepFirst,
}

/// Observable controller state after a clock step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerState {
    /// Bin about to be processed next, in 1..=depth.
    pub bin_counter: u32,
    pub occupied: bool,
    /// Origin bin of the stored photon; present iff `occupied`.
    pub stored_origin_bin: Option<u32>,
    /// Switch position driven by the last step (cross during capture and
    /// delivery, bar otherwise).
    pub switch: SwitchState,
}

/// Events emitted by one clock step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ControllerOutput {
    /// This bin's source output was diverted into the loop.
    pub capture: bool,
    /// Loop contents routed to the output at the cycle boundary.
    pub deliver: bool,
    /// Loop contents expelled off-target to make way for a later photon.
    /// Always accompanied by a capture of the newcomer.
    pub dump: bool,
    /// Herald bin of the delivered photon, when `deliver` is set.
    pub delivered_origin_bin: Option<u32>,
}

/// The feed-forward logic: cyclic bin counter, occupancy flag, and switch
/// sequencing. One instance is owned by one simulation worker.
#[derive(Debug, Clone)]
pub struct Controller {
    depth: u32,
    policy: OverwritePolicy,
    bin: u32,
    stored_origin: Option<u32>,
    switch: SwitchState,
}

impl Controller {
    /// Fresh controller at bin 1 with an empty loop and the switch at bar.
    pub fn new(depth: u32, policy: OverwritePolicy) -> Result<Self> {
        if depth < 1 {
            return Err(Error::InvalidParam("depth must be >= 1".into()));
        }
        Ok(Controller {
            depth,
            policy,
            bin: 1,
            stored_origin: None,
            switch: SwitchState::Bar,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn state(&self) -> ControllerState {
        ControllerState {
            bin_counter: self.bin,
            occupied: self.stored_origin.is_some(),
            stored_origin_bin: self.stored_origin,
            switch: self.switch,
        }
    }

    /// Consume one clock bin. Herald handling happens within the bin; if this
    /// is the last bin of the cycle, the boundary delivery happens at its end
    /// (a photon heralded in the final bin is delivered after exactly one
    /// pass). The bin counter then advances cyclically.
    pub fn step(&mut self, herald: bool) -> ControllerOutput {
        let bin = self.bin;
        let mut out = ControllerOutput::default();

        if herald {
            match (self.stored_origin, self.policy) {
                (None, _) => {
                    self.stored_origin = Some(bin);
                    out.capture = true;
                }
                (Some(_), OverwritePolicy::KeepLast) => {
                    // Cross event expels the old photon and admits the new one.
                    out.dump = true;
                    out.capture = true;
                    self.stored_origin = Some(bin);
                }
                (Some(_), OverwritePolicy::KeepFirst) => {
                    // Newcomer bypasses the loop; nothing changes but the clock.
                }
            }
        }

        if bin == self.depth {
            if let Some(origin) = self.stored_origin.take() {
                out.deliver = true;
                out.delivered_origin_bin = Some(origin);
            }
            self.bin = 1;
        } else {
            self.bin += 1;
        }

        self.switch = if out.capture || out.deliver {
            SwitchState::Cross
        } else {
            SwitchState::Bar
        };
        out
    }
}

/// Number of switch+loop passes a photon heralded in `origin_bin` makes
/// before the boundary delivery: depth − origin_bin + 1.
pub fn passes_for_origin(origin_bin: u32, depth: u32) -> Result<u32> {
    if origin_bin < 1 || origin_bin > depth {
        return Err(Error::InvalidParam(format!(
            "origin bin {origin_bin} outside 1..={depth}"
        )));
    }
    Ok(depth - origin_bin + 1)
}

/// Fold [`Controller::step`] over a herald sequence from the initial state.
/// The sequence is padded with `false` to a whole number of cycles, so every
/// stored photon is flushed by a boundary.
pub fn run_trace(
    heralds: &[bool],
    depth: u32,
    policy: OverwritePolicy,
) -> Result<Vec<ControllerOutput>> {
    let mut controller = Controller::new(depth, policy)?;
    let len = padded_len(heralds.len(), depth);
    Ok((0..len)
        .map(|i| controller.step(heralds.get(i).copied().unwrap_or(false)))
        .collect())
}

fn padded_len(len: usize, depth: u32) -> usize {
    let depth = depth as usize;
    len.div_ceil(depth).max(1) * depth
}

/// Render a trace as the textual fixture format, one step per line:
/// `cycle,bin,herald,capture,dump,deliver,origin` with 1-based cycle and bin,
/// flags as 0/1, and origin empty unless the step delivered.
pub fn render_trace(heralds: &[bool], outputs: &[ControllerOutput], depth: u32) -> String {
    let mut text = String::new();
    for (i, out) in outputs.iter().enumerate() {
        let cycle = i / depth as usize + 1;
        let bin = i % depth as usize + 1;
        let herald = heralds.get(i).copied().unwrap_or(false);
        let origin = out
            .delivered_origin_bin
            .map(|b| b.to_string())
            .unwrap_or_default();
        text.push_str(&format!(
            "{cycle},{bin},{},{},{},{},{origin}\n",
            u8::from(herald),
            u8::from(out.capture),
            u8::from(out.dump),
            u8::from(out.deliver),
        ));
    }
    text
}

/// Count (captures, deliveries, dumps) over a trace.
pub fn trace_totals(outputs: &[ControllerOutput]) -> (u64, u64, u64) {
    outputs.iter().fold((0, 0, 0), |(c, de, du), out| {
        (
            c + u64::from(out.capture),
            de + u64::from(out.deliver),
            du + u64::from(out.dump),
        )
    })
}
