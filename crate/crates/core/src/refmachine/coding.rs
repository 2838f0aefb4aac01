//! Length distribution induced by the END-delimited word code.
//!
//! `N(h) = (2^c - 1)^(h/c - 1)` programs have length `h` when `c | h`, none
//! otherwise, and `p(h) = N(h) 2^-h`. Consecutive lengths decay by exactly
//! `1 - 2^-c` per word. The geometric approximation `b^-h / (c nu)` with
//! `b = 1 + 2^-c` is reported alongside; `nu` normalizes it to unit mass over
//! the valid lengths.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::MachineConfig;

/// Exact number of valid programs of `h` bits.
pub fn count_programs(h: u32, cfg: &MachineConfig) -> BigUint {
    let c = cfg.word_bits as u32;
    if h < c || !h.is_multiple_of(c) {
        return BigUint::zero();
    }
    let body = h / c - 1;
    if body == 0 {
        return BigUint::one();
    }
    BigUint::from(cfg.usable_words()).pow(body)
}

/// `count_programs` as a float (saturates to infinity for huge counts).
pub fn count_programs_f64(h: u32, cfg: &MachineConfig) -> f64 {
    count_programs(h, cfg).to_f64().unwrap_or(f64::INFINITY)
}

/// Exact power of two for the normal range.
fn pow2(exp: i32) -> f64 {
    if (-1022..=1023).contains(&exp) {
        f64::from_bits(((1023 + exp) as u64) << 52)
    } else {
        2f64.powi(exp)
    }
}

/// `p(h) = N(h) 2^-h`. The integer count is exact; the only rounding is its
/// conversion to `f64` (at most 1 ulp), and the power-of-two scaling is exact
/// while the result stays normal.
pub fn coding_pmf(h: u32, cfg: &MachineConfig) -> f64 {
    let n = count_programs(h, cfg);
    if n.is_zero() {
        return 0.0;
    }
    // Scale in the integer domain first when the count would overflow f64.
    let bits = n.bits() as i64;
    if bits > 1000 {
        let shift = (bits - 60) as u32;
        let top = (n >> shift).to_f64().unwrap_or(0.0);
        return top * pow2(shift as i32 - h as i32);
    }
    n.to_f64().unwrap_or(f64::INFINITY) * pow2(-(h as i32))
}

/// Base of the geometric approximation, `1 + 2^-c`.
pub fn approx_base(cfg: &MachineConfig) -> f64 {
    1.0 + pow2(-(cfg.word_bits as i32))
}

/// `nu` such that `sum_{k>=1} b^-(kc) / (c nu) = 1`.
pub fn approx_normalizer(cfg: &MachineConfig) -> f64 {
    let c = cfg.word_bits as f64;
    let per_word = approx_base(cfg).powf(-c);
    per_word / (1.0 - per_word) / c
}

/// The approximation `b^-h / (c nu)`; `None` unless `c | h` and `h >= c`.
pub fn coding_pmf_approx(h: u32, cfg: &MachineConfig) -> Option<f64> {
    let c = cfg.word_bits as u32;
    if h < c || !h.is_multiple_of(c) {
        return None;
    }
    let b = approx_base(cfg);
    Some(b.powf(-(h as f64)) / (c as f64 * approx_normalizer(cfg)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingRow {
    pub h: u32,
    pub count: String,
    pub exact: f64,
    pub approx: Option<f64>,
    /// `(approx - exact) / exact` where both exist.
    pub rel_deviation: Option<f64>,
    pub b: f64,
}

/// One row per `h` in `1..=h_max`.
pub fn coding_table(h_max: u32, cfg: &MachineConfig) -> Vec<CodingRow> {
    let b = approx_base(cfg);
    (1..=h_max)
        .map(|h| {
            let exact = coding_pmf(h, cfg);
            let approx = coding_pmf_approx(h, cfg);
            let rel_deviation = approx.filter(|_| exact > 0.0).map(|a| (a - exact) / exact);
            CodingRow {
                h,
                count: count_programs(h, cfg).to_string(),
                exact,
                approx,
                rel_deviation,
                b,
            }
        })
        .collect()
}
