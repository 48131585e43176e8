//! Constant-rate FIFO bit server.
//!
//! Units join the queue at their enqueue time and are served back to back
//! at `C` bits per second, so a unit's bits leave in one contiguous run that
//! starts at `max(previous exit, enqueue)`. Token delays then follow from
//! each covered token's decodability condition.

use crate::coder::{CodedStream, Decodability};
use crate::corpus::TokenEvent;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub rate_bps: f64,
}

impl ChannelSpec {
    pub fn new(rate_bps: f64) -> Result<Self> {
        if !(rate_bps.is_finite() && rate_bps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "channel rate must be positive and finite, got {rate_bps}"
            )));
        }
        Ok(ChannelSpec { rate_bps })
    }
}

/// Service schedule of every unit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelTrace {
    rate_bps: f64,
    /// Time the unit's first bit starts service.
    pub start: Vec<f64>,
    /// Time the unit's last bit leaves.
    pub exit: Vec<f64>,
    /// Channel bits served before the unit.
    pub offset: Vec<f64>,
    pub busy_time: f64,
}

impl ChannelTrace {
    pub fn len(&self) -> usize {
        self.exit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exit.is_empty()
    }

    pub fn total_bits(&self) -> f64 {
        match (self.offset.last(), self.start.last(), self.exit.last()) {
            (Some(&o), Some(&s), Some(&e)) => o + (e - s) * self.rate_bps,
            _ => 0.0,
        }
    }

    /// Exit time of 1-based channel bit `beta`, or `None` past the end.
    pub fn bit_exit(&self, beta: u64) -> Option<f64> {
        if beta == 0 {
            return None;
        }
        let b = beta as f64;
        // Last unit whose first bit is at or before `beta`.
        let u = self.offset.partition_point(|&o| o < b);
        if u == 0 {
            return None;
        }
        let u = u - 1;
        let within = b - self.offset[u];
        let t = self.start[u] + within / self.rate_bps;
        if t > self.exit[u] + 1e-9 {
            return None;
        }
        Some(t)
    }
}

/// Serves units in order; enqueue times must be non-decreasing.
pub fn serve(stream: &CodedStream, channel: ChannelSpec) -> ChannelTrace {
    let c = channel.rate_bps;
    let mut trace = ChannelTrace {
        rate_bps: c,
        ..ChannelTrace::default()
    };
    let mut free_at = 0.0f64;
    let mut served = 0.0f64;
    for unit in &stream.units {
        let start = free_at.max(unit.enqueue_time);
        let exit = start + unit.bit_count / c;
        trace.start.push(start);
        trace.exit.push(exit);
        trace.offset.push(served);
        trace.busy_time += unit.bit_count / c;
        served += unit.bit_count;
        // A zero-bit unit does not occupy the server.
        free_at = if unit.bit_count > 0.0 { exit } else { free_at };
    }
    trace
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayRecord {
    pub index: usize,
    pub arrival: f64,
    pub decode_time: f64,
    pub delay: f64,
}

impl DelayRecord {
    fn new(index: usize, arrival: f64, decode_time: f64) -> Self {
        let decode_time = decode_time.max(arrival);
        DelayRecord {
            index,
            arrival,
            decode_time,
            delay: decode_time - arrival,
        }
    }
}

pub const DELAY_CSV_HEADER: &str = "coder,alpha,token_index,t_arr,decode_time,delay_s";

pub fn delay_csv_line(coder: &str, alpha: f64, r: &DelayRecord) -> String {
    format!(
        "{coder},{alpha},{},{:.9},{:.9},{:.9}",
        r.index, r.arrival, r.decode_time, r.delay
    )
}

/// Per-token delays from each token's decodability condition.
///
/// A token covered by `UnitEnd` decodes when its unit's last bit exits; one
/// covered by `ChannelBit(β)` decodes when channel bit `β` exits, or when the
/// final bit exits if `β` lies beyond the stream.
pub fn delays(
    events: &[TokenEvent],
    coded: &CodedStream,
    channel: ChannelSpec,
) -> Result<Vec<DelayRecord>> {
    let trace = serve(coded, channel);
    let last_exit = trace.exit.last().copied().unwrap_or(0.0);
    let mut out: Vec<Option<DelayRecord>> = vec![None; events.len()];
    for (u, unit) in coded.units.iter().enumerate() {
        for &(n, dec) in &unit.covered {
            let event = events.get(n).ok_or_else(|| {
                Error::InvalidParameter(format!("unit covers token {n} beyond the stream"))
            })?;
            let decode = match dec {
                Decodability::UnitEnd => trace.exit[u],
                Decodability::ChannelBit(beta) => trace.bit_exit(beta).unwrap_or(last_exit),
            };
            out[n] = Some(DelayRecord::new(n, event.arrival_secs(), decode));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(n, r)| {
            r.ok_or_else(|| {
                Error::InvalidParameter(format!("token {n} is not covered by any unit"))
            })
        })
        .collect()
}

/// `D(n) = max(0, t_exit(n-1) - t_arr(n)) + b(n)/C`, one unit per token.
pub fn lindley_delays(
    arrivals: &[f64],
    bit_costs: &[f64],
    channel: ChannelSpec,
) -> Vec<DelayRecord> {
    let c = channel.rate_bps;
    let mut prev_exit = 0.0f64;
    arrivals
        .iter()
        .zip(bit_costs)
        .enumerate()
        .map(|(n, (&t, &b))| {
            let d = (prev_exit - t).max(0.0) + b / c;
            prev_exit = t + d;
            DelayRecord {
                index: n,
                arrival: t,
                decode_time: t + d,
                delay: d,
            }
        })
        .collect()
}

pub fn mean_delay(records: &[DelayRecord]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    Some(records.iter().map(|r| r.delay).sum::<f64>() / records.len() as f64)
}
