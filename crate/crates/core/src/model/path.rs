use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Instance, Slot};
use crate::error::ModelError;

/// Fully materialized channel realization over the horizon.
///
/// Indexed by slot (1-based through the accessors) then channel; `true` means busy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePath {
    t1_busy: Vec<Vec<bool>>,
    t2_busy: Vec<Vec<bool>>,
    t2_sensed_busy: Vec<Vec<bool>>,
}

impl SamplePath {
    pub fn from_parts(
        t1_busy: Vec<Vec<bool>>,
        t2_busy: Vec<Vec<bool>>,
        t2_sensed_busy: Vec<Vec<bool>>,
    ) -> Result<Self, ModelError> {
        let h = t1_busy.len();
        if t2_busy.len() != h || t2_sensed_busy.len() != h {
            return Err(ModelError::PathLength { got: t2_busy.len().min(t2_sensed_busy.len()), want: h });
        }
        let n1 = t1_busy.first().map_or(0, Vec::len);
        let n2 = t2_busy.first().map_or(0, Vec::len);
        for t in 0..h {
            if t1_busy[t].len() != n1 || t2_busy[t].len() != n2 || t2_sensed_busy[t].len() != n2 {
                return Err(ModelError::PathShape { slot: t as Slot + 1 });
            }
        }
        Ok(Self { t1_busy, t2_busy, t2_sensed_busy })
    }

    pub fn len(&self) -> usize {
        self.t1_busy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t1_busy.is_empty()
    }

    pub(crate) fn check_against(&self, inst: &Instance) -> Result<(), ModelError> {
        let want = inst.horizon() as usize;
        if self.len() != want {
            return Err(ModelError::PathLength { got: self.len(), want });
        }
        for t in 0..self.len() {
            if self.t1_busy[t].len() != inst.t1().len() || self.t2_busy[t].len() != inst.t2().len() {
                return Err(ModelError::PathShape { slot: t as Slot + 1 });
            }
        }
        Ok(())
    }

    pub fn t1_busy(&self, t: Slot, ch: usize) -> bool {
        self.t1_busy[t as usize - 1][ch]
    }
    pub fn t2_busy(&self, t: Slot, ch: usize) -> bool {
        self.t2_busy[t as usize - 1][ch]
    }
    pub fn t2_sensed_busy(&self, t: Slot, ch: usize) -> bool {
        self.t2_sensed_busy[t as usize - 1][ch]
    }

    /// T1 channels observed idle at `t` (Γ).
    pub fn idle_t1(&self, t: Slot) -> Vec<usize> {
        idle_indices(&self.t1_busy[t as usize - 1])
    }

    /// T2 channels sensed idle at `t` (S).
    pub fn sensed_idle_t2(&self, t: Slot) -> Vec<usize> {
        idle_indices(&self.t2_sensed_busy[t as usize - 1])
    }
}

fn idle_indices(busy: &[bool]) -> Vec<usize> {
    busy.iter().enumerate().filter(|(_, &b)| !b).map(|(i, _)| i).collect()
}

/// Draws a sample path for `inst`. Deterministic in `seed`.
///
/// Every slot consumes a fixed number of draws per channel so that paths for
/// instances with the same channel set line up slot by slot.
pub fn sample_path(inst: &Instance, seed: u64) -> SamplePath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = inst.horizon() as usize;
    let mut t1_busy = Vec::with_capacity(h);
    let mut t2_busy = Vec::with_capacity(h);
    let mut t2_sensed_busy = Vec::with_capacity(h);
    for _ in 0..h {
        t1_busy.push(inst.t1().iter().map(|c| rng.random::<f64>() >= c.idle_prob).collect());
        let mut busy = Vec::with_capacity(inst.t2().len());
        let mut sensed = Vec::with_capacity(inst.t2().len());
        for c in inst.t2() {
            let idle = rng.random::<f64>() < c.idle_prob;
            let u = rng.random::<f64>();
            let sensed_busy = if idle { u < c.false_alarm } else { u >= c.misdetection };
            busy.push(!idle);
            sensed.push(sensed_busy);
        }
        t2_busy.push(busy);
        t2_sensed_busy.push(sensed);
    }
    SamplePath { t1_busy, t2_busy, t2_sensed_busy }
}
