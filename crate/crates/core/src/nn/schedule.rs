use std::ops::Range;

use crate::sim::Gap;

/// Where a gap's network inputs come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputLayout {
    /// W tones on each side.
    Interior { before: Range<usize>, after: Range<usize> },
    /// 2W tones directly below the gap (gap at the upper band edge).
    Below(Range<usize>),
    /// 2W tones directly above the gap (gap at the lower band edge).
    Above(Range<usize>),
}

impl InputLayout {
    pub fn indices(&self) -> Vec<usize> {
        match self {
            InputLayout::Interior { before, after } => before.clone().chain(after.clone()).collect(),
            InputLayout::Below(r) | InputLayout::Above(r) => r.clone().collect(),
        }
    }
}

/// Input tones for a gap: two-sided when W tones fit on both sides, otherwise
/// 2W tones from whichever side has room. `None` if neither fits.
pub fn input_layout(gap: &Gap, num_tones: usize) -> Option<InputLayout> {
    let w = gap.width();
    let above_end = gap.end + 1;
    if gap.start >= w && above_end + w <= num_tones {
        Some(InputLayout::Interior {
            before: gap.start - w..gap.start,
            after: above_end..above_end + w,
        })
    } else if above_end + 2 * w <= num_tones {
        Some(InputLayout::Above(above_end..above_end + 2 * w))
    } else if gap.start >= 2 * w {
        Some(InputLayout::Below(gap.start - 2 * w..gap.start))
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduledGap {
    pub gap: Gap,
    /// False when some inputs were still unavailable when this gap's turn came
    /// (they get zero-padded).
    pub inputs_complete: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleResult {
    pub order: Vec<ScheduledGap>,
    /// Passes over the remaining gaps.
    pub rounds: usize,
}

impl ScheduleResult {
    pub fn gaps(&self) -> Vec<Gap> {
        self.order.iter().map(|s| s.gap).collect()
    }
}

fn inputs_ready(gap: &Gap, available: &[bool]) -> bool {
    match input_layout(gap, available.len()) {
        Some(layout) => layout.indices().into_iter().all(|k| available[k]),
        None => false,
    }
}

/// Orders gaps so that recovered tones can feed later gaps.
///
/// Each round schedules every gap whose inputs are all available and marks
/// its tones available. When a round makes no progress the remaining gaps
/// are appended smallest first.
pub fn schedule_gaps(gaps: &[Gap], available: &[bool]) -> ScheduleResult {
    let n = available.len();
    let mut avail = available.to_vec();
    for g in gaps {
        for k in g.indices().filter(|&k| k < n) {
            avail[k] = false;
        }
    }
    let initial = avail.clone();

    let mut current: Vec<Gap> = gaps.to_vec();
    let mut output: Vec<Gap> = Vec::with_capacity(gaps.len());
    let mut rounds = 0;
    while !current.is_empty() {
        rounds += 1;
        let (scheduled, not_scheduled): (Vec<Gap>, Vec<Gap>) =
            current.iter().partition(|g| inputs_ready(g, &avail));
        if not_scheduled.is_empty() {
            output.extend(scheduled);
            current.clear();
        } else if scheduled.is_empty() {
            // Fixed point: another pass would see the same unscheduled set.
            let mut rest = not_scheduled;
            rest.sort_by_key(Gap::width);
            output.extend(rest);
            current.clear();
        } else {
            for g in &scheduled {
                for k in g.indices() {
                    avail[k] = true;
                }
            }
            output.extend(scheduled);
            current = not_scheduled;
        }
    }

    // Replay the order to see which gaps run with zero-padded inputs.
    let mut avail = initial;
    let order = output
        .into_iter()
        .map(|gap| {
            let inputs_complete = inputs_ready(&gap, &avail);
            for k in gap.indices().filter(|&k| k < n) {
                avail[k] = true;
            }
            ScheduledGap { gap, inputs_complete }
        })
        .collect();
    ScheduleResult { order, rounds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(a: usize, b: usize) -> Gap {
        Gap::missing(a, b)
    }

    fn mask(k: usize, gaps: &[Gap]) -> Vec<bool> {
        (0..k).map(|i| !gaps.iter().any(|g| g.contains(i))).collect()
    }

    #[test]
    fn worked_example_order() {
        let gaps = [m(24, 26), m(29, 30), m(32, 32), m(34, 35)];
        let s = schedule_gaps(&gaps, &mask(80, &gaps));
        assert_eq!(s.gaps(), vec![m(32, 32), m(29, 30), m(34, 35), m(24, 26)]);
        assert!(s.order.iter().all(|g| g.inputs_complete));
        assert_eq!(s.rounds, 3);
    }

    #[test]
    fn lone_gap() {
        let gaps = [m(40, 41)];
        let s = schedule_gaps(&gaps, &mask(80, &gaps));
        assert_eq!(s.gaps(), gaps.to_vec());
        assert!(s.order[0].inputs_complete);
    }

    #[test]
    fn dependent_pair_is_ordered_by_dependency() {
        // {17,18} needs 15,16,19,20 only, so it is ready in the first round.
        let gaps = [m(21, 24), m(17, 18)];
        let s = schedule_gaps(&gaps, &mask(80, &gaps));
        assert_eq!(s.gaps(), vec![m(17, 18), m(21, 24)]);
        assert!(s.order.iter().all(|g| g.inputs_complete));
    }

    #[test]
    fn mutual_dependence_goes_smallest_first() {
        // Each gap's inputs reach into the other.
        let gaps = [m(23, 25), m(20, 21)];
        let s = schedule_gaps(&gaps, &mask(80, &gaps));
        assert_eq!(s.gaps(), vec![m(20, 21), m(23, 25)]);
        assert!(!s.order[0].inputs_complete);
        assert!(s.order[1].inputs_complete);
    }

    #[test]
    fn edge_layouts() {
        assert_eq!(input_layout(&m(0, 2), 80), Some(InputLayout::Above(3..9)));
        assert_eq!(input_layout(&m(78, 79), 80), Some(InputLayout::Below(74..78)));
        assert_eq!(
            input_layout(&m(24, 26), 80),
            Some(InputLayout::Interior { before: 21..24, after: 27..30 })
        );
        assert_eq!(input_layout(&m(1, 7), 10), None);
    }

    fn arb_gaps() -> impl Strategy<Value = Vec<Gap>> {
        proptest::collection::vec((0usize..76, 1usize..5), 0..8).prop_map(|raw| {
            let mut gaps: Vec<Gap> = Vec::new();
            for (s, w) in raw {
                let g = m(s, (s + w - 1).min(79));
                if gaps.iter().all(|o| g.end + 1 < o.start || o.end + 1 < g.start) {
                    gaps.push(g);
                }
            }
            gaps
        })
    }

    proptest! {
        #[test]
        fn output_is_permutation_and_idempotent(gaps in arb_gaps()) {
            let avail = mask(80, &gaps);
            let s = schedule_gaps(&gaps, &avail);
            let mut a = s.gaps();
            let mut b = gaps.clone();
            a.sort_by_key(|g| g.start);
            b.sort_by_key(|g| g.start);
            prop_assert_eq!(a, b);
            prop_assert!(s.rounds <= gaps.len().max(1));
            let again = schedule_gaps(&s.gaps(), &avail);
            prop_assert_eq!(again.gaps(), s.gaps());
        }
    }
}
