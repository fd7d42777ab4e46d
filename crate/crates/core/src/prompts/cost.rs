//! Analytic token-cost model for each strategy.
//!
//! `n` is the story length in tokens, `o` the tokens of one model answer,
//! `t` the number of chunks and `m` the number of ToT voters. Inputs are
//! reals because `n / t` need not be integral.

use serde::{Deserialize, Serialize};

use super::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub calls: u64,
    pub input_tokens: f64,
    pub output_tokens: f64,
}

/// Call `t` of a chunked conversation re-reads the first `t` chunks and the
/// `t - 1` answers produced so far.
fn chunked(n: f64, t: u64, o: f64) -> CostEstimate {
    let tf = t as f64;
    let input = (1..=t)
        .map(|i| i as f64 * n / tf + (i - 1) as f64 * o)
        .sum();
    CostEstimate {
        calls: t,
        input_tokens: input,
        output_tokens: tf * o,
    }
}

pub fn estimate_cost(n: f64, t: u64, o: f64, m: u64, strategy: Strategy) -> CostEstimate {
    let t = t.max(1);
    match strategy {
        Strategy::Cot => CostEstimate {
            calls: 1,
            input_tokens: n,
            output_tokens: o,
        },
        Strategy::Dwm => chunked(n, t, o),
        Strategy::Tot => {
            let one = chunked(n, t, o);
            let mf = m as f64;
            CostEstimate {
                calls: one.calls * m,
                input_tokens: one.input_tokens * mf,
                output_tokens: one.output_tokens * mf,
            }
        }
        Strategy::StructJson | Strategy::StructYaml => CostEstimate {
            calls: 2,
            input_tokens: 2.0 * n + o,
            output_tokens: 2.0 * o,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cot_is_a_single_pass() {
        let c = estimate_cost(1000.0, 1, 100.0, 0, Strategy::Cot);
        assert_eq!(
            (c.calls, c.input_tokens, c.output_tokens),
            (1, 1000.0, 100.0)
        );
    }

    #[test]
    fn dwm_two_splits() {
        let c = estimate_cost(1000.0, 2, 100.0, 0, Strategy::Dwm);
        assert_eq!(
            (c.calls, c.input_tokens, c.output_tokens),
            (2, 1600.0, 200.0)
        );
    }

    #[test]
    fn dwm_closed_form() {
        for t in 1..=8u64 {
            let (n, o) = (900.0, 40.0);
            let tf = t as f64;
            let c = estimate_cost(n, t, o, 0, Strategy::Dwm);
            let closed = n * (tf + 1.0) / 2.0 + o * tf * (tf - 1.0) / 2.0;
            assert!((c.input_tokens - closed).abs() < 1e-9);
        }
    }

    #[test]
    fn tot_scales_with_voters() {
        let d = estimate_cost(1000.0, 3, 50.0, 0, Strategy::Dwm);
        let t = estimate_cost(1000.0, 3, 50.0, 4, Strategy::Tot);
        assert_eq!(t.calls, 12);
        assert_eq!(t.input_tokens, 4.0 * d.input_tokens);
    }
}
