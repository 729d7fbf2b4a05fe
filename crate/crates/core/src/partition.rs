//! The observation-link graph and the partitions it induces.
//!
//! Each observation `i` carries exactly one outgoing link `c[i]`. Clusters are
//! the connected components of the undirected view of that graph; every
//! component is a set of trees hanging off a single cycle (possibly a
//! self-loop).
//!
//! The pure functions ([`partition_from_assignments`], [`moving_set`],
//! [`classify_move`]) recompute everything from scratch. [`LinkState`] keeps
//! the same information up to date under single-link changes and is what the
//! samplers use.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The link vector `c`: `c[i]` is the observation that `i` links to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignments(Vec<usize>);

impl Assignments {
    pub fn new(links: Vec<usize>) -> Result<Self> {
        let n = links.len();
        if let Some((i, &j)) = links.iter().enumerate().find(|(_, &j)| j >= n) {
            return Err(Error::InvalidInput(format!(
                "link c[{i}] = {j} is out of range for {n} observations"
            )));
        }
        Ok(Self(links))
    }

    /// Every observation linked to itself (K = n).
    pub fn self_links(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn link(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    /// Copy of `self` with `c[i]` replaced by `j`.
    pub fn with_link(&self, i: usize, j: usize) -> Self {
        let mut links = self.0.clone();
        links[i] = j;
        Self(links)
    }

    pub fn n_self(&self) -> usize {
        self.0.iter().enumerate().filter(|(i, &c)| *i == c).count()
    }
}

/// Cluster labels and member sets induced by an assignment vector.
///
/// Labels are `0..K`, assigned in order of each cluster's smallest member, so
/// identical partitions always get identical labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Partition {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_of(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Members of each cluster, in increasing index order.
    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn cluster(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn num_clusters(&self) -> usize {
        self.members.len()
    }

    fn from_roots(roots: &[usize]) -> Self {
        let n = roots.len();
        let mut label_of_root = vec![usize::MAX; n];
        let mut labels = vec![0; n];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = roots[i];
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = members.len();
                members.push(Vec::new());
            }
            labels[i] = label_of_root[r];
            members[labels[i]].push(i);
        }
        Self { labels, members }
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Clusters are the undirected connected components of the graph with one
/// edge `i - c[i]` per observation.
pub fn partition_from_assignments(c: &Assignments) -> Partition {
    let n = c.len();
    let mut sets = DisjointSets::new(n);
    for (i, &j) in c.as_slice().iter().enumerate() {
        sets.union(i, j);
    }
    let roots: Vec<usize> = (0..n).map(|i| sets.find(i)).collect();
    Partition::from_roots(&roots)
}

fn children_of(c: &Assignments) -> Vec<Vec<usize>> {
    let mut children = vec![Vec::new(); c.len()];
    for (j, &target) in c.as_slice().iter().enumerate() {
        if target != j {
            children[target].push(j);
        }
    }
    children
}

/// The component containing `i` once `i`'s own outgoing link is removed.
///
/// With `i` as a sink, that component is exactly the set of observations
/// whose link path reaches `i`. Returned sorted.
pub fn moving_set(c: &Assignments, i: usize) -> Result<Vec<usize>> {
    check_index(c, i)?;
    let children = children_of(c);
    let mut seen = vec![false; c.len()];
    let mut out = vec![i];
    seen[i] = true;
    let mut head = 0;
    while head < out.len() {
        let v = out[head];
        head += 1;
        for &ch in &children[v] {
            if !seen[ch] {
                seen[ch] = true;
                out.push(ch);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn check_index(c: &Assignments, i: usize) -> Result<()> {
    if i >= c.len() {
        return Err(Error::InvalidInput(format!(
            "observation index {i} out of range for {} observations",
            c.len()
        )));
    }
    Ok(())
}

/// How a single-link change affects the partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveClass {
    /// The moving set splits off as a new cluster (K + 1).
    Birth,
    /// The moving set was a whole cluster and merges into another (K − 1).
    Death,
    /// Partition unchanged.
    FixedSame,
    /// The moving set leaves its cluster for another; K unchanged.
    FixedTransfer,
}

impl MoveClass {
    pub fn k_delta(self) -> isize {
        match self {
            MoveClass::Birth => 1,
            MoveClass::Death => -1,
            MoveClass::FixedSame | MoveClass::FixedTransfer => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MoveClass::Birth => "birth",
            MoveClass::Death => "death",
            MoveClass::FixedSame => "fixed-same",
            MoveClass::FixedTransfer => "fixed-transfer",
        }
    }
}

/// Original / moving / remaining / target sets of a proposed relink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveDecomposition {
    /// `i`'s cluster under the current links.
    pub original: Vec<usize>,
    /// Component of `i` with its outgoing link removed.
    pub moving: Vec<usize>,
    /// `original \ moving`.
    pub remaining: Vec<usize>,
    /// `i`'s cluster under the proposed links.
    pub target: Vec<usize>,
    pub class: MoveClass,
}

/// Decompose the move `c[i] <- c_star`. All sets are returned sorted.
pub fn classify_move(c: &Assignments, i: usize, c_star: usize) -> Result<MoveDecomposition> {
    check_index(c, i)?;
    check_index(c, c_star)?;
    let before = partition_from_assignments(c);
    let original = before.cluster(before.label_of(i)).to_vec();
    let moving = moving_set(c, i)?;
    let remaining: Vec<usize> = original
        .iter()
        .copied()
        .filter(|j| moving.binary_search(j).is_err())
        .collect();
    let after = partition_from_assignments(&c.with_link(i, c_star));
    let target = after.cluster(after.label_of(i)).to_vec();

    let in_moving = moving.binary_search(&c_star).is_ok();
    let in_original = original.binary_search(&c_star).is_ok();
    let class = match (remaining.is_empty(), in_moving, in_original) {
        (false, true, _) => MoveClass::Birth,
        (true, false, _) => MoveClass::Death,
        (false, false, false) => MoveClass::FixedTransfer,
        _ => MoveClass::FixedSame,
    };
    Ok(MoveDecomposition {
        original,
        moving,
        remaining,
        target,
        class,
    })
}

/// A relink resolved against a [`LinkState`]: which slots are touched and
/// which observations move.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkPlan {
    pub i: usize,
    pub c_star: usize,
    pub class: MoveClass,
    /// The moving set (unsorted, `i` first).
    pub moving: Vec<usize>,
    /// Slot of `i`'s current cluster.
    pub origin: usize,
    /// Slot of the cluster the moving set joins (death / transfer only).
    pub joined: Option<usize>,
}

/// Incrementally maintained link graph with cluster slots.
///
/// Clusters live in numbered slots. Slot ids are stable while a cluster
/// exists; a death frees its slot and the next birth reuses the most
/// recently freed one. [`LinkState::partition`] gives the canonical labelling.
#[derive(Debug, Clone)]
pub struct LinkState {
    links: Vec<usize>,
    children: Vec<Vec<usize>>,
    slot_of: Vec<usize>,
    slots: Vec<Vec<usize>>,
    free: Vec<usize>,
    live: usize,
    marks: Vec<u64>,
    epoch: u64,
}

impl LinkState {
    pub fn new(c: &Assignments) -> Self {
        let n = c.len();
        let partition = partition_from_assignments(c);
        let slots = partition.members().to_vec();
        let live = slots.len();
        Self {
            links: c.as_slice().to_vec(),
            children: children_of(c),
            slot_of: partition.labels().to_vec(),
            slots,
            free: Vec::new(),
            live,
            marks: vec![0; n],
            epoch: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.links.len()
    }

    pub fn link(&self, i: usize) -> usize {
        self.links[i]
    }

    pub fn links(&self) -> &[usize] {
        &self.links
    }

    pub fn slot_of(&self, i: usize) -> usize {
        self.slot_of[i]
    }

    pub fn members(&self, slot: usize) -> &[usize] {
        &self.slots[slot]
    }

    pub fn num_clusters(&self) -> usize {
        self.live
    }

    /// Upper bound (exclusive) on slot ids currently in use.
    pub fn slot_capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn is_live(&self, slot: usize) -> bool {
        slot < self.slots.len() && !self.slots[slot].is_empty()
    }

    pub fn live_slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.slots.len()).filter(move |&s| !self.slots[s].is_empty())
    }

    /// The slot a birth would allocate next.
    pub fn next_slot(&self) -> usize {
        self.free.last().copied().unwrap_or(self.slots.len())
    }

    pub fn assignments(&self) -> Assignments {
        Assignments(self.links.clone())
    }

    pub fn partition(&self) -> Partition {
        partition_from_assignments(&Assignments(self.links.clone()))
    }

    fn bump_epoch(&mut self) -> u64 {
        self.epoch += 1;
        self.epoch
    }

    fn mark_all(&mut self, items: &[usize]) {
        let e = self.bump_epoch();
        for &j in items {
            self.marks[j] = e;
        }
    }

    /// Moving set of `i` under the current links (unsorted, `i` first).
    pub fn moving_set(&mut self, i: usize) -> Vec<usize> {
        let e = self.bump_epoch();
        let mut out = vec![i];
        self.marks[i] = e;
        let mut head = 0;
        while head < out.len() {
            let v = out[head];
            head += 1;
            for &ch in &self.children[v] {
                if self.marks[ch] != e {
                    self.marks[ch] = e;
                    out.push(ch);
                }
            }
        }
        out
    }

    /// Whether `j` belongs to the set passed to the most recent
    /// `moving_set` / `plan` call.
    pub fn is_marked(&self, j: usize) -> bool {
        self.marks[j] == self.epoch
    }

    pub fn plan(&mut self, i: usize, c_star: usize) -> LinkPlan {
        let moving = self.moving_set(i);
        let origin = self.slot_of[i];
        let has_remaining = moving.len() < self.slots[origin].len();
        let (class, joined) = if self.is_marked(c_star) {
            let class = if has_remaining {
                MoveClass::Birth
            } else {
                MoveClass::FixedSame
            };
            (class, None)
        } else if self.slot_of[c_star] == origin {
            (MoveClass::FixedSame, None)
        } else {
            let class = if has_remaining {
                MoveClass::FixedTransfer
            } else {
                MoveClass::Death
            };
            (class, Some(self.slot_of[c_star]))
        };
        LinkPlan {
            i,
            c_star,
            class,
            moving,
            origin,
            joined,
        }
    }

    fn set_link(&mut self, i: usize, j: usize) {
        let old = self.links[i];
        if old == j {
            return;
        }
        if old != i {
            let kids = &mut self.children[old];
            let pos = kids.iter().position(|&x| x == i).expect("child list out of sync");
            kids.swap_remove(pos);
        }
        if j != i {
            self.children[j].push(i);
        }
        self.links[i] = j;
    }

    /// Apply a plan produced by [`LinkState::plan`] on the current state.
    /// Returns the slot allocated by a birth.
    pub fn apply(&mut self, plan: &LinkPlan) -> Option<usize> {
        self.set_link(plan.i, plan.c_star);
        match plan.class {
            MoveClass::FixedSame => None,
            MoveClass::Birth => {
                self.mark_all(&plan.moving);
                let slot = match self.free.pop() {
                    Some(s) => s,
                    None => {
                        self.slots.push(Vec::new());
                        self.slots.len() - 1
                    }
                };
                let e = self.epoch;
                let marks = &self.marks;
                self.slots[plan.origin].retain(|&j| marks[j] != e);
                for &j in &plan.moving {
                    self.slot_of[j] = slot;
                }
                self.slots[slot] = plan.moving.clone();
                self.live += 1;
                Some(slot)
            }
            MoveClass::Death => {
                let joined = plan.joined.expect("death without a joined slot");
                for &j in &plan.moving {
                    self.slot_of[j] = joined;
                }
                let moved = std::mem::take(&mut self.slots[plan.origin]);
                self.slots[joined].extend(moved);
                self.free.push(plan.origin);
                self.live -= 1;
                None
            }
            MoveClass::FixedTransfer => {
                let joined = plan.joined.expect("transfer without a joined slot");
                self.mark_all(&plan.moving);
                let e = self.epoch;
                let marks = &self.marks;
                self.slots[plan.origin].retain(|&j| marks[j] != e);
                for &j in &plan.moving {
                    self.slot_of[j] = joined;
                }
                self.slots[joined].extend_from_slice(&plan.moving);
                None
            }
        }
    }

    /// Relink `c[i] <- c_star`, returning the plan that was applied.
    pub fn relink(&mut self, i: usize, c_star: usize) -> LinkPlan {
        let plan = self.plan(i, c_star);
        self.apply(&plan);
        plan
    }
}
