use num_complex::Complex64;

use super::model::{ModelKind, NnBank};
use super::schedule::{input_layout, schedule_gaps, InputLayout, ScheduleResult, ScheduledGap};
use crate::error::{Error, Result};
use crate::reconstruct::TwoWayResponse;
use crate::sim::{Gap, GapMap};

#[derive(Clone, Debug, PartialEq)]
pub struct NnRecovery {
    /// Response with every gap tone filled and marked available.
    pub response: TwoWayResponse,
    /// Order actually used.
    pub schedule: ScheduleResult,
    /// Network flops spent.
    pub flops: u64,
}

/// Fills every gap with the width-matched network, in scheduler order.
pub fn recover_gaps(resp: &TwoWayResponse, gaps: &GapMap, bank: &NnBank) -> Result<NnRecovery> {
    let avail = availability(resp, gaps)?;
    let schedule = schedule_gaps(gaps.gaps(), &avail);
    let (response, order, flops) = run(resp, schedule.gaps(), bank)?;
    Ok(NnRecovery {
        response,
        schedule: ScheduleResult {
            order,
            rounds: schedule.rounds,
        },
        flops,
    })
}

/// Same as [`recover_gaps`] but in plain ascending order; inputs that fall
/// in not-yet-recovered gaps are zero-padded.
pub fn recover_gaps_unscheduled(resp: &TwoWayResponse, gaps: &GapMap, bank: &NnBank) -> Result<NnRecovery> {
    availability(resp, gaps)?;
    let (response, order, flops) = run(resp, gaps.gaps().to_vec(), bank)?;
    let rounds = usize::from(!order.is_empty());
    Ok(NnRecovery {
        response,
        schedule: ScheduleResult { order, rounds },
        flops,
    })
}

fn availability(resp: &TwoWayResponse, gaps: &GapMap) -> Result<Vec<bool>> {
    let k = resp.grid.num_tones;
    gaps.validate(k)?;
    let mut avail = resp.available.clone();
    for g in gaps.gaps() {
        for i in g.indices() {
            avail[i] = false;
        }
    }
    Ok(avail)
}

fn run(resp: &TwoWayResponse, order: Vec<Gap>, bank: &NnBank) -> Result<(TwoWayResponse, Vec<ScheduledGap>, u64)> {
    let k = resp.grid.num_tones;
    let mut known = resp.available.clone();
    for g in &order {
        for i in g.indices() {
            known[i] = false;
        }
    }
    let mut h: Vec<Complex64> = resp
        .h_sq
        .iter()
        .zip(&known)
        .map(|(&v, &a)| if a { v } else { Complex64::default() })
        .collect();
    let mut flops = 0;
    let mut scheduled = Vec::with_capacity(order.len());

    for gap in order {
        let w = gap.width();
        let unrecoverable = |reason: String| Error::Unrecoverable {
            start: gap.start,
            width: w,
            reason,
        };
        let layout = input_layout(&gap, k).ok_or_else(|| unrecoverable(format!("fewer than {} tones beside it", 2 * w)))?;
        let kind = match layout {
            InputLayout::Interior { .. } => ModelKind::Interior,
            _ => ModelKind::Edge,
        };
        let model = bank.model(kind, w).ok_or_else(|| {
            unrecoverable(format!(
                "no {} model of width {w} (bank holds up to {})",
                kind.name(),
                bank.max_width()
            ))
        })?;
        let inputs_complete = layout.indices().into_iter().all(|i| known[i]);
        let out = match &layout {
            InputLayout::Interior { before, after } => model.forward(&h[before.clone()], &h[after.clone()])?,
            InputLayout::Below(r) => model.forward_one_sided(&h[r.clone()])?,
            InputLayout::Above(r) => {
                // Conjugate reversal maps a lower-edge gap onto the upper-edge layout.
                let mirrored: Vec<Complex64> = h[r.clone()].iter().rev().map(|v| v.conj()).collect();
                let mut out: Vec<Complex64> = model.forward_one_sided(&mirrored)?.iter().map(|v| v.conj()).collect();
                out.reverse();
                out
            }
        };
        flops += model.flops_per_call();
        for (i, v) in gap.indices().zip(out) {
            h[i] = v;
            known[i] = true;
        }
        scheduled.push(ScheduledGap { gap, inputs_complete });
    }

    Ok((TwoWayResponse::new(resp.grid, h, known)?, scheduled, flops))
}
