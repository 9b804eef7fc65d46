//! Districting schemes and splitting schedules.
use serde::{Deserialize, Serialize};

use crate::error::{argument, configuration, Result};

/// `districts` districts sharing `seats` seats, each with between `min_size`
/// and `max_size` seats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DistrictingScheme {
    pub districts: u32,
    pub seats: u32,
    pub min_size: u32,
    pub max_size: u32,
}

impl DistrictingScheme {
    pub fn new(districts: u32, seats: u32, min_size: u32, max_size: u32) -> Result<Self> {
        if districts == 0 || min_size == 0 || min_size > max_size {
            return argument("scheme needs districts >= 1 and 1 <= min_size <= max_size");
        }
        if seats < districts * min_size || seats > districts * max_size {
            return argument(format!(
                "{seats} seats cannot be shared by {districts} districts of size {min_size}..={max_size}"
            ));
        }
        if 2 * min_size <= max_size {
            return argument("a district size must not be the sum of two district sizes");
        }
        Ok(DistrictingScheme { districts, seats, min_size, max_size })
    }

    pub fn single_member(districts: u32) -> Self {
        DistrictingScheme { districts, seats: districts, min_size: 1, max_size: 1 }
    }

    pub fn is_single_member(&self) -> bool {
        self.min_size == 1 && self.max_size == 1
    }

    pub fn is_district(&self, size: u32) -> bool {
        (self.min_size..=self.max_size).contains(&size)
    }

    /// A region that must be split further.
    pub fn is_multidistrict(&self, size: u32) -> bool {
        size > self.max_size
    }

    /// Range of district counts a region of `size` seats can hold.
    fn district_count_range(&self, size: u32) -> Option<(u32, u32)> {
        let lo = size.div_ceil(self.max_size);
        let hi = size / self.min_size;
        (lo >= 1 && lo <= hi).then_some((lo, hi))
    }

    /// Whether regions of these sizes can be split into exactly
    /// `districts` valid districts.
    ///
    /// Each region admits an interval of district counts, so the feasible
    /// totals also form an interval and the check is exact.
    pub fn completable(&self, sizes: &[u32]) -> bool {
        let mut lo = 0;
        let mut hi = 0;
        for &s in sizes {
            match self.district_count_range(s) {
                Some((a, b)) => {
                    lo += a;
                    hi += b;
                }
                None => return false,
            }
        }
        lo <= self.districts && self.districts <= hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// One side of every split is a district.
    DistrictOnly,
    /// Any sizes that keep the plan completable (single-member schemes only).
    AnyValid,
}

/// The sizes a multidistrict may be split into at each stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SplittingSchedule {
    pub kind: ScheduleKind,
    pub scheme: DistrictingScheme,
}

impl SplittingSchedule {
    pub fn new(kind: ScheduleKind, scheme: DistrictingScheme) -> Result<Self> {
        if kind == ScheduleKind::AnyValid && !scheme.is_single_member() {
            return configuration("any-valid splits are only available for single-member schemes");
        }
        Ok(SplittingSchedule { kind, scheme })
    }

    /// Allowed `(s1, s2)` pairs, `s1 <= s2`, for splitting a region of `s`
    /// seats out of a plan whose region sizes are `current_sizes`
    /// (which must include that region).
    pub fn pairs(&self, s: u32, current_sizes: &[u32]) -> Result<Vec<(u32, u32)>> {
        let pos = current_sizes
            .iter()
            .position(|&x| x == s)
            .ok_or_else(|| crate::Error::Argument(format!("no region of size {s} in plan")))?;
        let mut others = current_sizes.to_vec();
        others.remove(pos);
        Ok(self.pairs_given_others(s, &others))
    }

    pub(crate) fn pairs_given_others(&self, s: u32, others: &[u32]) -> Vec<(u32, u32)> {
        let mut sizes = others.to_vec();
        sizes.extend([0, 0]);
        let n = sizes.len();
        let mut out = Vec::new();
        let mut keep = |a: u32, b: u32, out: &mut Vec<(u32, u32)>| {
            sizes[n - 2] = a;
            sizes[n - 1] = b;
            let pair = (a.min(b), a.max(b));
            if self.scheme.completable(&sizes) && !out.contains(&pair) {
                out.push(pair);
            }
        };
        match self.kind {
            ScheduleKind::DistrictOnly => {
                for d in self.scheme.min_size..=self.scheme.max_size {
                    if d < s {
                        keep(d, s - d, &mut out);
                    }
                }
            }
            ScheduleKind::AnyValid => {
                for a in 1..=s / 2 {
                    keep(a, s - a, &mut out);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Whether a partial plan with these region sizes can arise under the
    /// schedule.
    pub fn admits(&self, sizes: &[u32]) -> bool {
        if sizes.len() > self.scheme.districts as usize || !self.scheme.completable(sizes) {
            return false;
        }
        match self.kind {
            ScheduleKind::DistrictOnly => {
                sizes.iter().filter(|&&s| !self.scheme.is_district(s)).count() <= 1
            }
            ScheduleKind::AnyValid => true,
        }
    }

    /// Pairs a merged region of `s` seats may be re-split into while the plan
    /// stays admissible; used by merge-split moves.
    pub fn resplit_pairs(&self, s: u32, others: &[u32]) -> Vec<(u32, u32)> {
        let mut sizes = others.to_vec();
        sizes.extend([0, 0]);
        let n = sizes.len();
        let mut out = Vec::new();
        for a in 1..=s / 2 {
            sizes[n - 2] = a;
            sizes[n - 1] = s - a;
            if self.admits(&sizes) {
                out.push((a, s - a));
            }
        }
        out
    }
}
