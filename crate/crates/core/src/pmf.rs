//! Integer frequency tables shared by every coder.

use crate::corpus::TokenId;
use crate::error::{Error, Result};

pub const MAX_PRECISION: u32 = 24;
pub const DEFAULT_PRECISION: u32 = 14;

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A next-token distribution as integer frequencies summing to `2^precision`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedPmf {
    freqs: Vec<u32>,
    /// `cum[i] = Σ_{j<i} freqs[j]`, length `V + 1`.
    cum: Vec<u32>,
    precision: u32,
}

impl QuantizedPmf {
    pub fn from_freqs(freqs: Vec<u32>, precision: u32) -> Result<Self> {
        check_precision(precision)?;
        if freqs.is_empty() {
            return Err(Error::Empty("frequency table"));
        }
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u64;
        cum.push(0);
        for &f in &freqs {
            acc += f as u64;
            if acc > 1 << precision {
                break;
            }
            cum.push(acc as u32);
        }
        if acc != 1 << precision {
            return Err(Error::InvalidParameter(format!(
                "frequencies sum to {acc}, expected 2^{precision}"
            )));
        }
        Ok(QuantizedPmf {
            freqs,
            cum,
            precision,
        })
    }

    pub fn uniform(vocab_size: usize, precision: u32) -> Result<Self> {
        quantize(&vec![1.0 / vocab_size as f64; vocab_size], precision)
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn total(&self) -> u32 {
        1 << self.precision
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cum
    }

    /// Frequency of `token`; zero for ids outside the table.
    pub fn freq(&self, token: TokenId) -> u32 {
        self.freqs.get(token as usize).copied().unwrap_or(0)
    }

    pub fn cum(&self, token: TokenId) -> u32 {
        self.cum[token as usize]
    }

    pub fn probability(&self, token: TokenId) -> f64 {
        self.freq(token) as f64 / self.total() as f64
    }

    /// `-log2(freq / 2^F)`, or `None` when the token has zero frequency.
    pub fn info_bits(&self, token: TokenId) -> Option<f64> {
        match self.freq(token) {
            0 => None,
            f => Some(self.precision as f64 - (f as f64).log2()),
        }
    }

    /// The symbol whose slot `[cum, cum + freq)` contains `target`.
    pub fn symbol_at(&self, target: u32) -> TokenId {
        debug_assert!(target < self.total());
        // First index with cum > target, minus one; zero-width slots are skipped.
        let upper = self.cum.partition_point(|&c| c <= target);
        (upper - 1) as TokenId
    }

    pub fn entropy_bits(&self) -> f64 {
        let total = self.total() as f64;
        self.freqs
            .iter()
            .filter(|&&f| f > 0)
            .map(|&f| {
                let p = f as f64 / total;
                -p * p.log2()
            })
            .sum()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.freqs.iter().map(|&f| f as f64 / total).collect()
    }

    pub fn support(&self) -> usize {
        self.freqs.iter().filter(|&&f| f > 0).count()
    }
}

fn check_precision(precision: u32) -> Result<()> {
    if !(1..=MAX_PRECISION).contains(&precision) {
        return Err(Error::InvalidParameter(format!(
            "precision must be in 1..={MAX_PRECISION}, got {precision}"
        )));
    }
    Ok(())
}

/// Apportions `2^precision` among the symbols of `probs`.
///
/// Symbols whose share would fall below one slot are pinned to exactly one;
/// the remaining budget is split over the rest by largest remainder, with
/// ties going to the lower id. Zero-probability symbols keep frequency zero.
pub fn quantize(probs: &[f64], precision: u32) -> Result<QuantizedPmf> {
    check_precision(precision)?;
    if probs.is_empty() {
        return Err(Error::Empty("probability vector"));
    }
    let mut sum = 0.0;
    for &p in probs {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid probability {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotNormalized { sum });
    }
    let total = 1u64 << precision;
    let support = probs.iter().filter(|&&p| p > 0.0).count();
    if support as u64 > total {
        return Err(Error::PrecisionTooLow {
            vocab_size: support,
            precision,
        });
    }

    let mut freqs = vec![0u32; probs.len()];
    let mut pinned = vec![false; probs.len()];
    let mut budget = total;
    let mut mass = sum;
    loop {
        let scale = budget as f64 / mass;
        let mut newly_pinned = 0u64;
        let mut pinned_mass = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 && !pinned[i] && p * scale < 1.0 {
                pinned[i] = true;
                freqs[i] = 1;
                newly_pinned += 1;
                pinned_mass += p;
            }
        }
        if newly_pinned == 0 {
            break;
        }
        budget -= newly_pinned;
        mass -= pinned_mass;
        if budget == 0 || mass <= 0.0 {
            break;
        }
    }

    let mut free: Vec<(usize, f64)> = Vec::new();
    if budget > 0 {
        let scale = budget as f64 / mass;
        let mut assigned = 0u64;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 && !pinned[i] {
                let ideal = p * scale;
                let base = ideal.floor().max(1.0);
                freqs[i] = base as u32;
                assigned += base as u64;
                free.push((i, ideal - base));
            }
        }
        let by_remainder =
            |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if assigned < budget {
            let mut remaining = (budget - assigned) as usize;
            while remaining > 0 && !free.is_empty() {
                let take = remaining.min(free.len());
                if take < free.len() {
                    free.select_nth_unstable_by(take - 1, by_remainder);
                }
                for &(i, _) in &free[..take] {
                    freqs[i] += 1;
                }
                remaining -= take;
            }
        } else if assigned > budget {
            // Only reachable through floating-point slack; shave the smallest
            // remainders among symbols that can spare a slot.
            let mut excess = assigned - budget;
            free.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            while excess > 0 {
                let before = excess;
                for &(i, _) in &free {
                    if excess == 0 {
                        break;
                    }
                    if freqs[i] > 1 {
                        freqs[i] -= 1;
                        excess -= 1;
                    }
                }
                if before == excess {
                    return Err(Error::PrecisionTooLow {
                        vocab_size: support,
                        precision,
                    });
                }
            }
        }
    }
    QuantizedPmf::from_freqs(freqs, precision)
}
