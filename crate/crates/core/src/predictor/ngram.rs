use std::collections::HashMap;

use crate::corpus::TokenId;

#[derive(Debug, Clone, Default)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

/// Adaptive n-gram counts with additive smoothing.
///
/// An order-`k` model conditions on the previous `k - 1` tokens. When that
/// context has never been observed, the model backs off to the longest
/// shorter context that has; the empty context is always available.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    delta: f64,
    vocab_size: usize,
    history: Vec<TokenId>,
    /// `tables[len]` holds contexts of length `len`.
    tables: Vec<HashMap<Vec<TokenId>, ContextCounts>>,
}

impl NgramModel {
    pub fn new(order: usize, delta: f64, vocab_size: usize) -> Self {
        NgramModel {
            order,
            delta,
            vocab_size,
            history: Vec::with_capacity(order),
            tables: vec![HashMap::new(); order],
        }
    }

    fn longest_context(&self) -> usize {
        (self.order - 1).min(self.history.len())
    }

    fn context(&self, len: usize) -> &[TokenId] {
        &self.history[self.history.len() - len..]
    }

    /// Smoothed next-token probabilities, dense over the vocabulary.
    pub fn probabilities(&self) -> Vec<f64> {
        let v = self.vocab_size as f64;
        for len in (0..=self.longest_context()).rev() {
            let counts = self.tables[len].get(self.context(len));
            match counts {
                Some(c) if c.total > 0 => {
                    let denom = c.total as f64 + self.delta * v;
                    let mut probs = vec![self.delta / denom; self.vocab_size];
                    for (&tok, &n) in &c.next {
                        probs[tok as usize] += n as f64 / denom;
                    }
                    return probs;
                }
                _ if len == 0 => break,
                _ => continue,
            }
        }
        vec![1.0 / v; self.vocab_size]
    }

    pub fn observe(&mut self, token: TokenId) {
        for len in 0..=self.longest_context() {
            let ctx = self.context(len).to_vec();
            let cell = self.tables[len].entry(ctx).or_default();
            cell.total += 1;
            *cell.next.entry(token).or_insert(0) += 1;
        }
        if self.order > 1 {
            if self.history.len() == self.order - 1 {
                self.history.remove(0);
            }
            self.history.push(token);
        }
    }

    pub fn count(&self, context: &[TokenId], token: TokenId) -> u64 {
        self.tables
            .get(context.len())
            .and_then(|t| t.get(context))
            .and_then(|c| c.next.get(&token))
            .copied()
            .unwrap_or(0)
    }
}
