//! Closed-form parameter counts for SDT and CDT configurations, with the
//! depth sweep comparing the two families.

use super::models::DiscretizeMode;
use crate::error::{Error, Result};

/// N(SDT) = (R+1)(2^d - 1) + O 2^d; discretized internal nodes cost 2.
pub fn sdt_param_count(r: usize, o: usize, d: u32, discretized: bool) -> u64 {
    let nodes = (1u64 << d) - 1;
    let leaves = 1u64 << d;
    let per_node = if discretized { 2 } else { r as u64 + 1 };
    per_node * nodes + o as u64 * leaves
}

/// N(CDT) = [(R+1)(2^d1 - 1) + K R 2^d1] + [(K+1)(2^d2 - 1) + O 2^d2],
/// with discretized internal nodes costing 2 in whichever trees `mode`
/// hardens.
pub fn cdt_param_count(
    r: usize,
    k: usize,
    o: usize,
    d1: u32,
    d2: u32,
    mode: Option<DiscretizeMode>,
) -> u64 {
    let (f_hard, d_hard) = match mode {
        None => (false, false),
        Some(DiscretizeMode::FOnly) => (true, false),
        Some(DiscretizeMode::DOnly) => (false, true),
        Some(DiscretizeMode::FAndD) | Some(DiscretizeMode::Sdt) => (true, true),
    };
    let f_nodes = (1u64 << d1) - 1;
    let f_leaves = 1u64 << d1;
    let d_nodes = (1u64 << d2) - 1;
    let d_leaves = 1u64 << d2;
    let f_per_node = if f_hard { 2 } else { r as u64 + 1 };
    let d_per_node = if d_hard { 2 } else { k as u64 + 1 };
    f_per_node * f_nodes + (k * r) as u64 * f_leaves + d_per_node * d_nodes + o as u64 * d_leaves
}

/// One row of the parameter-count comparison sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub total_depth: u32,
    pub d1: u32,
    pub d2: u32,
    pub cdt: u64,
    pub sdt: u64,
    pub ratio: f64,
}

/// Compares N(CDT) with d1 = floor(d/2), d2 = ceil(d/2) against N(SDT) of
/// depth d over an inclusive total-depth range within [2, 20].
pub fn param_ratio_sweep(
    r: usize,
    k: usize,
    o: usize,
    depth_lo: u32,
    depth_hi: u32,
) -> Result<Vec<SweepRow>> {
    if depth_lo < 2 || depth_hi > 20 || depth_lo > depth_hi {
        return Err(Error::Spec(format!(
            "total depth range [{depth_lo}, {depth_hi}] must lie within [2, 20]"
        )));
    }
    Ok((depth_lo..=depth_hi)
        .map(|d| {
            let d1 = d / 2;
            let d2 = d.div_ceil(2);
            let cdt = cdt_param_count(r, k, o, d1, d2, None);
            let sdt = sdt_param_count(r, o, d, false);
            SweepRow {
                total_depth: d,
                d1,
                d2,
                cdt,
                sdt,
                ratio: cdt as f64 / sdt as f64,
            }
        })
        .collect())
}
