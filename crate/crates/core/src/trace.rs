//! Stored chain output: run metadata, thinned samples and move counters.

use crate::model::Params;
use crate::partition::{Assignments, MoveClass};
use serde::{Deserialize, Serialize};

/// Identifies the run a trace came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: u64,
    pub chain: usize,
    pub config_digest: String,
    pub model: String,
    pub sampler: String,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub n: usize,
    pub distance_digest: String,
    /// Fit on a distance matrix augmented with unobserved points.
    pub augmented: bool,
    /// The samples carry no cluster parameters (collapsed sampler).
    pub collapsed: bool,
}

impl Default for TraceMeta {
    fn default() -> Self {
        Self {
            seed: 0,
            chain: 0,
            config_digest: String::new(),
            model: String::new(),
            sampler: String::new(),
            iterations: 0,
            burn_in: 0,
            thinning: 1,
            n: 0,
            distance_digest: String::new(),
            augmented: false,
            collapsed: false,
        }
    }
}

/// One retained iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub iteration: usize,
    pub k: usize,
    pub alpha: f64,
    pub scale: Option<f64>,
    pub log_post: f64,
    pub assignments: Assignments,
    /// Cluster parameters indexed by canonical cluster label; empty for a
    /// collapsed sampler.
    #[serde(default)]
    pub params: Vec<Params>,
    /// Imputed outcomes of unobserved points (joint prediction only).
    #[serde(default)]
    pub imputed: Vec<f64>,
}

/// Move kinds tracked for acceptance accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoveKind {
    Birth,
    Death,
    FixedSame,
    FixedTransfer,
    ParamMh,
}

impl MoveKind {
    pub const ALL: [MoveKind; 5] = [
        MoveKind::Birth,
        MoveKind::Death,
        MoveKind::FixedSame,
        MoveKind::FixedTransfer,
        MoveKind::ParamMh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MoveKind::Birth => "birth",
            MoveKind::Death => "death",
            MoveKind::FixedSame => "fixed-same",
            MoveKind::FixedTransfer => "fixed-transfer",
            MoveKind::ParamMh => "param-mh",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl From<MoveClass> for MoveKind {
    fn from(c: MoveClass) -> Self {
        match c {
            MoveClass::Birth => MoveKind::Birth,
            MoveClass::Death => MoveKind::Death,
            MoveClass::FixedSame => MoveKind::FixedSame,
            MoveClass::FixedTransfer => MoveKind::FixedTransfer,
        }
    }
}

/// Result of one proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveOutcome {
    pub kind: MoveKind,
    pub accepted: bool,
    pub log_ratio: f64,
}

/// Proposed / accepted counts per move kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveTally {
    proposed: [u64; 5],
    accepted: [u64; 5],
}

impl MoveTally {
    pub fn record(&mut self, kind: MoveKind, accepted: bool) {
        self.proposed[kind.index()] += 1;
        if accepted {
            self.accepted[kind.index()] += 1;
        }
    }

    pub fn record_outcome(&mut self, o: &MoveOutcome) {
        self.record(o.kind, o.accepted);
    }

    pub fn proposed(&self, kind: MoveKind) -> u64 {
        self.proposed[kind.index()]
    }

    pub fn accepted(&self, kind: MoveKind) -> u64 {
        self.accepted[kind.index()]
    }

    pub fn merge(&mut self, other: &MoveTally) {
        for k in 0..5 {
            self.proposed[k] += other.proposed[k];
            self.accepted[k] += other.accepted[k];
        }
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

/// A chain's retained samples with their provenance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceStore {
    pub meta: TraceMeta,
    pub samples: Vec<Sample>,
    /// Move counts over the retained (post-burn-in) iterations.
    pub tally: MoveTally,
}

impl TraceStore {
    pub fn new(meta: TraceMeta) -> Self {
        Self {
            meta,
            samples: Vec::new(),
            tally: MoveTally::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn k_series(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.k as f64).collect()
    }

    pub fn log_post_series(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.log_post).collect()
    }

    pub fn alpha_series(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.alpha).collect()
    }

    pub fn scale_series(&self) -> Vec<f64> {
        self.samples.iter().filter_map(|s| s.scale).collect()
    }
}

/// Iteration schedule shared by every sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

impl Schedule {
    pub fn validate(&self) -> crate::Result<()> {
        if self.thinning == 0 {
            return Err(crate::Error::Config("thinning must be at least 1".into()));
        }
        if self.burn_in > self.iterations {
            return Err(crate::Error::Config(format!(
                "burn-in {} exceeds iterations {}",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }

    /// Whether iteration `t` (0-based) is retained.
    pub fn keeps(&self, t: usize) -> bool {
        t >= self.burn_in && (t - self.burn_in).is_multiple_of(self.thinning)
    }

    pub fn retained(&self) -> usize {
        if self.iterations <= self.burn_in {
            0
        } else {
            (self.iterations - self.burn_in).div_ceil(self.thinning)
        }
    }
}
