//! Signal schedules: one stage per junction per interval.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::topology::Stage;

/// A complete stage assignment over a horizon.  Stored junction-major, so a
/// junction's stage sequence is a contiguous slice.
///
/// Schedules order lexicographically over the flattened junction-major
/// sequence with `Horizontal < Vertical`; every solver breaks cost ties by
/// taking the lexicographically smallest schedule.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StageSchedule {
    n_junctions: usize,
    steps: usize,
    stages: Vec<Stage>,
}

impl StageSchedule {
    pub fn filled(n_junctions: usize, steps: usize, stage: Stage) -> StageSchedule {
        StageSchedule {
            n_junctions,
            steps,
            stages: vec![stage; n_junctions * steps],
        }
    }

    pub fn from_fn(
        n_junctions: usize,
        steps: usize,
        mut f: impl FnMut(usize, usize) -> Stage,
    ) -> StageSchedule {
        let mut stages = Vec::with_capacity(n_junctions * steps);
        for j in 0..n_junctions {
            for t in 0..steps {
                stages.push(f(j, t));
            }
        }
        StageSchedule {
            n_junctions,
            steps,
            stages,
        }
    }

    /// Build from a flattened junction-major bit vector, `false` meaning
    /// horizontal.  This is the encoding the harmony-search solver works on.
    pub fn from_bits(n_junctions: usize, steps: usize, bits: &[bool]) -> Result<StageSchedule> {
        if bits.len() != n_junctions * steps {
            return Err(Error::InvalidSchedule(format!(
                "expected {} bits for {} junctions x {} intervals, got {}",
                n_junctions * steps,
                n_junctions,
                steps,
                bits.len()
            )));
        }
        Ok(StageSchedule {
            n_junctions,
            steps,
            stages: bits
                .iter()
                .map(|&b| if b { Stage::Vertical } else { Stage::Horizontal })
                .collect(),
        })
    }

    /// Decode index `idx` of the full schedule space into a schedule, with
    /// the first flattened position as the most significant bit.  Iterating
    /// `idx` in ascending order therefore visits schedules in lexicographic
    /// order.
    pub fn from_index(n_junctions: usize, steps: usize, idx: u64) -> StageSchedule {
        let n = n_junctions * steps;
        debug_assert!(n <= 63 && idx < (1u64 << n));
        let mut stages = Vec::with_capacity(n);
        for p in 0..n {
            let bit = (idx >> (n - 1 - p)) & 1;
            stages.push(if bit == 0 {
                Stage::Horizontal
            } else {
                Stage::Vertical
            });
        }
        StageSchedule {
            n_junctions,
            steps,
            stages,
        }
    }

    pub fn n_junctions(&self) -> usize {
        self.n_junctions
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn stage(&self, junction: usize, interval: usize) -> Stage {
        self.stages[junction * self.steps + interval]
    }

    pub fn set(&mut self, junction: usize, interval: usize, stage: Stage) {
        self.stages[junction * self.steps + interval] = stage;
    }

    /// Stage sequence of one junction.
    pub fn junction_row(&self, junction: usize) -> &[Stage] {
        &self.stages[junction * self.steps..(junction + 1) * self.steps]
    }

    pub fn set_junction_row(&mut self, junction: usize, row: &[Stage]) {
        assert_eq!(row.len(), self.steps);
        self.stages[junction * self.steps..(junction + 1) * self.steps].copy_from_slice(row);
    }

    pub fn to_bits(&self) -> Vec<bool> {
        self.stages.iter().map(|&s| s == Stage::Vertical).collect()
    }

    /// Map every entry through `f`, preserving shape.  Used to derive the
    /// vehicle-layer schedule from a joint schedule under a coupling.
    pub fn map(&self, f: impl Fn(Stage) -> Stage) -> StageSchedule {
        StageSchedule {
            n_junctions: self.n_junctions,
            steps: self.steps,
            stages: self.stages.iter().map(|&s| f(s)).collect(),
        }
    }

    /// Compact hex identifier of the flattened bit pattern (horizontal = 0),
    /// most significant bit first.  Used to label schedules in reports.
    pub fn hash_id(&self) -> String {
        let bits = self.to_bits();
        let mut out = String::new();
        for chunk in bits.chunks(4) {
            let mut nibble = 0u8;
            for (i, &b) in chunk.iter().enumerate() {
                if b {
                    nibble |= 1 << (3 - i);
                }
            }
            let _ = write!(out, "{nibble:x}");
        }
        out
    }

    /// Number of entries that differ from `other`.
    pub fn hamming(&self, other: &StageSchedule) -> Result<usize> {
        self.check_same_shape(other)?;
        Ok(self
            .stages
            .iter()
            .zip(&other.stages)
            .filter(|(a, b)| a != b)
            .count())
    }

    pub fn check_same_shape(&self, other: &StageSchedule) -> Result<()> {
        if self.n_junctions != other.n_junctions || self.steps != other.steps {
            return Err(Error::InvalidSchedule(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.n_junctions, self.steps, other.n_junctions, other.steps
            )));
        }
        Ok(())
    }

    pub fn check_shape(&self, n_junctions: usize, steps: usize) -> Result<()> {
        if self.n_junctions != n_junctions || self.steps != steps {
            return Err(Error::InvalidSchedule(format!(
                "schedule is {}x{}, instance needs {}x{}",
                self.n_junctions, self.steps, n_junctions, steps
            )));
        }
        Ok(())
    }

    /// CSV rows `junction,interval,stage` with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("junction,interval,stage\n");
        for j in 0..self.n_junctions {
            for t in 0..self.steps {
                let _ = writeln!(out, "{},{},{}", j, t + 1, self.stage(j, t));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<StageSchedule> {
        let mut entries = Vec::new();
        let mut max_j = 0usize;
        let mut max_t = 0usize;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (ln == 0 && line.starts_with("junction")) {
                continue;
            }
            let mut parts = line.split(',');
            let (j, t, s) = (parts.next(), parts.next(), parts.next());
            let (Some(j), Some(t), Some(s)) = (j, t, s) else {
                return Err(Error::Parse(format!("schedule line {}: {line:?}", ln + 1)));
            };
            let j: usize = j
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad junction id {j:?}")))?;
            let t: usize = t
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad interval {t:?}")))?;
            if t == 0 {
                return Err(Error::Parse("intervals are numbered from 1".into()));
            }
            let stage = Stage::parse(s)?;
            max_j = max_j.max(j);
            max_t = max_t.max(t);
            entries.push((j, t - 1, stage));
        }
        if entries.is_empty() {
            return Err(Error::Parse("schedule file has no rows".into()));
        }
        let (n_junctions, steps) = (max_j + 1, max_t);
        let mut seen = vec![false; n_junctions * steps];
        let mut sched = StageSchedule::filled(n_junctions, steps, Stage::Horizontal);
        for (j, t, s) in entries {
            seen[j * steps + t] = true;
            sched.set(j, t, s);
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::Parse(
                "schedule file does not cover every junction/interval cell".into(),
            ));
        }
        Ok(sched)
    }
}

/// A possibly partial stage assignment: `None` means neither stage runs
/// (all-red).  Full schedules convert losslessly; all-red cells only occur
/// when checking relaxed-coupling feasibility.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalPlan {
    n_junctions: usize,
    steps: usize,
    modes: Vec<Option<Stage>>,
}

impl SignalPlan {
    pub fn new(n_junctions: usize, steps: usize, modes: Vec<Option<Stage>>) -> Result<SignalPlan> {
        if modes.len() != n_junctions * steps {
            return Err(Error::InvalidSchedule(format!(
                "plan needs {} cells, got {}",
                n_junctions * steps,
                modes.len()
            )));
        }
        Ok(SignalPlan {
            n_junctions,
            steps,
            modes,
        })
    }

    pub fn n_junctions(&self) -> usize {
        self.n_junctions
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn mode(&self, junction: usize, interval: usize) -> Option<Stage> {
        self.modes[junction * self.steps + interval]
    }
}

impl From<&StageSchedule> for SignalPlan {
    fn from(s: &StageSchedule) -> SignalPlan {
        SignalPlan {
            n_junctions: s.n_junctions,
            steps: s.steps,
            modes: s.stages.iter().map(|&st| Some(st)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_enumeration_is_lexicographic() {
        let a = StageSchedule::from_index(1, 3, 0);
        assert_eq!(a.junction_row(0), [Stage::Horizontal; 3]);
        let b = StageSchedule::from_index(1, 3, 1);
        assert_eq!(
            b.junction_row(0),
            [Stage::Horizontal, Stage::Horizontal, Stage::Vertical]
        );
        let mut prev = StageSchedule::from_index(2, 2, 0);
        for idx in 1..16 {
            let cur = StageSchedule::from_index(2, 2, idx);
            assert!(prev < cur, "enumeration not ascending at {idx}");
            prev = cur;
        }
    }

    #[test]
    fn bits_round_trip() {
        let s = StageSchedule::from_index(2, 3, 0b101_010);
        let bits = s.to_bits();
        let back = StageSchedule::from_bits(2, 3, &bits).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn csv_round_trip() {
        let s = StageSchedule::from_index(2, 3, 0b110_001);
        let text = s.to_csv();
        let back = StageSchedule::from_csv(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn hash_id_distinguishes_and_is_stable() {
        let a = StageSchedule::from_index(1, 5, 0b10110);
        assert_eq!(a.hash_id(), "b0");
        let b = StageSchedule::from_index(1, 5, 0b10111);
        assert_ne!(a.hash_id(), b.hash_id());
    }

    #[test]
    fn hamming_counts_differences() {
        let a = StageSchedule::from_index(1, 4, 0b0000);
        let b = StageSchedule::from_index(1, 4, 0b1010);
        assert_eq!(a.hamming(&b).unwrap(), 2);
        let c = StageSchedule::filled(2, 4, Stage::Horizontal);
        assert!(a.hamming(&c).is_err());
    }
}
