//! Link graph plus per-cluster sufficient statistics, kept in step.

use crate::model::{ClusterStats, Observations};
use crate::partition::{Assignments, LinkPlan, LinkState, MoveClass};

#[derive(Debug, Clone)]
pub(crate) struct ClusterState {
    pub links: LinkState,
    /// Statistics per slot; entries for free slots are stale.
    pub stats: Vec<ClusterStats>,
    pub obs: Observations,
}

impl ClusterState {
    pub fn new(obs: Observations, c: &Assignments) -> Self {
        let links = LinkState::new(c);
        let mut s = Self {
            links,
            stats: Vec::new(),
            obs,
        };
        s.refresh_stats();
        s
    }

    pub fn stats_of(&self, members: &[usize]) -> ClusterStats {
        self.obs.stats_of(members)
    }

    /// Recompute every live slot's statistics from its members.
    pub fn refresh_stats(&mut self) {
        let cap = self.links.slot_capacity();
        self.stats.resize(cap, ClusterStats::default());
        for slot in 0..cap {
            self.stats[slot] = if self.links.is_live(slot) {
                self.obs.stats_of(self.links.members(slot))
            } else {
                ClusterStats::default()
            };
        }
    }

    /// Apply a plan whose moving set has statistics `moving`. Returns the
    /// slot allocated by a birth.
    pub fn apply(&mut self, plan: &LinkPlan, moving: &ClusterStats) -> Option<usize> {
        let born = self.links.apply(plan);
        if self.stats.len() < self.links.slot_capacity() {
            self.stats.resize(self.links.slot_capacity(), ClusterStats::default());
        }
        match plan.class {
            MoveClass::FixedSame => {}
            MoveClass::Birth => {
                let slot = born.expect("birth allocates a slot");
                self.stats[plan.origin] = self.stats[plan.origin].without(moving);
                self.stats[slot] = *moving;
            }
            MoveClass::Death => {
                let joined = plan.joined.expect("death joins a slot");
                self.stats[joined] = self.stats[joined].merged(&self.stats[plan.origin]);
                self.stats[plan.origin] = ClusterStats::default();
            }
            MoveClass::FixedTransfer => {
                let joined = plan.joined.expect("transfer joins a slot");
                self.stats[plan.origin] = self.stats[plan.origin].without(moving);
                self.stats[joined] = self.stats[joined].merged(moving);
            }
        }
        born
    }
}
