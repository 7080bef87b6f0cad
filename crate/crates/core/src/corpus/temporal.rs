//! Normalization of temporal-relation slider tuples.
//!
//! A raw tuple holds `(start1, start2, end1, end2)` for two events on the unit
//! interval. After normalization the earlier start sits at 0 and the later end
//! at 1, and the tuple is summarized by which event is locked to each end of
//! the scale plus, when one event's start and the other's end are both
//! interior, their relative order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this on the normalized scale are treated as coincident.
pub const LOCK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lock {
    E1,
    E2,
    Both,
}

impl Lock {
    pub const ALL: [Lock; 3] = [Lock::E1, Lock::E2, Lock::Both];

    pub fn index(self) -> usize {
        match self {
            Lock::E1 => 0,
            Lock::E2 => 1,
            Lock::Both => 2,
        }
    }
}

/// Relative order of the two free interior points, one from each event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreeOrder {
    E1Earlier,
    Tie,
    E2Earlier,
}

impl FreeOrder {
    pub const ALL: [FreeOrder; 3] = [FreeOrder::E1Earlier, FreeOrder::Tie, FreeOrder::E2Earlier];

    pub fn index(self) -> usize {
        match self {
            FreeOrder::E1Earlier => 0,
            FreeOrder::Tie => 1,
            FreeOrder::E2Earlier => 2,
        }
    }
}

/// True when the lock outcomes leave one event's start and the other event's
/// end in the interior of the scale.
pub fn has_free_pair(lock_start: Lock, lock_end: Lock) -> bool {
    matches!(
        (lock_start, lock_end),
        (Lock::E1, Lock::E2) | (Lock::E2, Lock::E1)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalTuple {
    pub start1: f64,
    pub start2: f64,
    pub end1: f64,
    pub end2: f64,
    pub lock_start: Lock,
    pub lock_end: Lock,
    pub free_order: Option<FreeOrder>,
}

impl TemporalTuple {
    pub fn values(&self) -> [f64; 4] {
        [self.start1, self.start2, self.end1, self.end2]
    }

    /// Whether the values already satisfy the normalized-form invariants.
    pub fn is_normalized(&self) -> bool {
        self.start1.min(self.start2) == 0.0
            && self.end1.max(self.end2) == 1.0
            && self.start1 <= self.end1
            && self.start2 <= self.end2
    }
}

fn order(e1_point: f64, e2_point: f64) -> FreeOrder {
    if (e1_point - e2_point).abs() <= LOCK_TOLERANCE {
        FreeOrder::Tie
    } else if e1_point < e2_point {
        FreeOrder::E1Earlier
    } else {
        FreeOrder::E2Earlier
    }
}

/// Rescale a raw `(start1, start2, end1, end2)` tuple and derive its lock and
/// free-order outcomes.
pub fn normalize_temporal(raw: [f64; 4]) -> Result<TemporalTuple> {
    let [s1, s2, e1, e2] = raw;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSpan(format!(
            "non-finite value in {raw:?}"
        )));
    }
    if s1 > e1 || s2 > e2 {
        return Err(Error::DegenerateSpan(format!(
            "inverted span in {raw:?}: each start must not exceed its end"
        )));
    }
    let lo = s1.min(s2);
    let hi = e1.max(e2);
    if hi <= lo {
        return Err(Error::DegenerateSpan(format!(
            "all points equal in {raw:?}"
        )));
    }
    let scale = hi - lo;
    let rescale = |v: f64| {
        if v == lo {
            0.0
        } else if v == hi {
            1.0
        } else {
            ((v - lo) / scale).clamp(0.0, 1.0)
        }
    };
    let (s1, s2, e1, e2) = (rescale(s1), rescale(s2), rescale(e1), rescale(e2));

    let lock_start = if (s1 - s2).abs() <= LOCK_TOLERANCE {
        Lock::Both
    } else if s1 < s2 {
        Lock::E1
    } else {
        Lock::E2
    };
    let lock_end = if (e1 - e2).abs() <= LOCK_TOLERANCE {
        Lock::Both
    } else if e1 > e2 {
        Lock::E1
    } else {
        Lock::E2
    };
    let free_order = match (lock_start, lock_end) {
        // e2 starts and e1 ends in the interior
        (Lock::E1, Lock::E2) => Some(order(e1, s2)),
        // e1 starts and e2 ends in the interior
        (Lock::E2, Lock::E1) => Some(order(s1, e2)),
        _ => None,
    };
    Ok(TemporalTuple {
        start1: s1,
        start2: s2,
        end1: e1,
        end2: e2,
        lock_start,
        lock_end,
        free_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_events_lock_both_ends() {
        let t = normalize_temporal([0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.lock_start, Lock::Both);
        assert_eq!(t.lock_end, Lock::Both);
        assert_eq!(t.free_order, None);
    }

    #[test]
    fn affine_rescale() {
        let t = normalize_temporal([0.2, 0.4, 0.8, 1.0]).unwrap();
        let expect = [0.0, 0.25, 0.75, 1.0];
        for (a, b) in t.values().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{:?}", t.values());
        }
        assert_eq!(t.lock_start, Lock::E1);
        assert_eq!(t.lock_end, Lock::E2);
        assert_eq!(t.free_order, Some(FreeOrder::E2Earlier));
    }

    #[test]
    fn coincident_interior_points_tie() {
        let t = normalize_temporal([0.0, 0.5, 0.5, 1.0]).unwrap();
        assert_eq!(t.lock_start, Lock::E1);
        assert_eq!(t.lock_end, Lock::E2);
        assert_eq!(t.free_order, Some(FreeOrder::Tie));
    }

    #[test]
    fn containment_has_no_free_pair() {
        let t = normalize_temporal([0.0, 0.3, 1.0, 0.6]).unwrap();
        assert_eq!(t.lock_start, Lock::E1);
        assert_eq!(t.lock_end, Lock::E1);
        assert_eq!(t.free_order, None);
    }

    #[test]
    fn degenerate_and_inverted_rejected() {
        assert!(matches!(
            normalize_temporal([0.3, 0.3, 0.3, 0.3]),
            Err(Error::DegenerateSpan(_))
        ));
        assert!(normalize_temporal([0.5, 0.0, 0.2, 1.0]).is_err());
    }

    fn raw_tuple() -> impl Strategy<Value = [f64; 4]> {
        (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_filter_map(
            "non-degenerate",
            |(a, b, c, d)| {
                let (s1, e1) = if a <= c { (a, c) } else { (c, a) };
                let (s2, e2) = if b <= d { (b, d) } else { (d, b) };
                (e1.max(e2) - s1.min(s2) > 1e-3).then_some([s1, s2, e1, e2])
            },
        )
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(raw in raw_tuple()) {
            let once = normalize_temporal(raw).unwrap();
            prop_assert!(once.is_normalized());
            let twice = normalize_temporal(once.values()).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
