//! Registered users: which node each one is, the tasks it claims and its bid.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;

/// Up to 64 task indices as a bit set.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSet(u64);

impl TaskSet {
    pub const MAX_TASKS: usize = 64;

    pub const fn empty() -> Self {
        TaskSet(0)
    }

    pub fn all(task_count: usize) -> Self {
        assert!(task_count <= Self::MAX_TASKS);
        if task_count == 64 {
            TaskSet(u64::MAX)
        } else {
            TaskSet((1u64 << task_count) - 1)
        }
    }

    pub fn from_tasks<I: IntoIterator<Item = usize>>(tasks: I) -> Self {
        let mut s = TaskSet::empty();
        for t in tasks {
            s.insert(t);
        }
        s
    }

    pub fn insert(&mut self, task: usize) {
        assert!(task < Self::MAX_TASKS, "task index {task} out of range");
        self.0 |= 1 << task;
    }

    #[inline]
    pub fn contains(self, task: usize) -> bool {
        task < Self::MAX_TASKS && self.0 >> task & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..Self::MAX_TASKS).filter(move |&t| self.contains(t))
    }

    pub fn union(self, other: TaskSet) -> TaskSet {
        TaskSet(self.0 | other.0)
    }

    pub fn bits(self) -> u64 {
        self.0
    }
}

impl fmt::Debug for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Public bidding information of one registered user.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bidder {
    pub node: NodeId,
    pub tasks: TaskSet,
    pub bid: f64,
}

pub type UserId = usize;

const NOT_REGISTERED: u32 = u32::MAX;

/// The registered user set with its claims and bids. Users are kept sorted by
/// node id, so a smaller `UserId` always means a smaller node id; every
/// tie-break in the crate prefers the smaller `UserId`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Market {
    bidders: Vec<Bidder>,
    task_count: usize,
    user_of_node: Vec<u32>,
}

impl Market {
    pub fn new(mut bidders: Vec<Bidder>, node_count: usize, task_count: usize) -> Result<Self> {
        if task_count == 0 || task_count > TaskSet::MAX_TASKS {
            return Err(Error::domain(format!("task count {task_count} not in 1..=64")));
        }
        bidders.sort_by_key(|b| b.node);
        let mut user_of_node = vec![NOT_REGISTERED; node_count];
        for (u, b) in bidders.iter().enumerate() {
            let slot = user_of_node
                .get_mut(b.node as usize)
                .ok_or_else(|| Error::domain(format!("bidder node {} out of range", b.node)))?;
            if *slot != NOT_REGISTERED {
                return Err(Error::domain(format!("node {} registered twice", b.node)));
            }
            if !(b.bid > 0.0 && b.bid.is_finite()) {
                return Err(Error::domain(format!("bid {} of node {} must be positive", b.bid, b.node)));
            }
            if b.tasks.iter().any(|t| t >= task_count) {
                return Err(Error::domain(format!("node {} claims a task outside 0..{task_count}", b.node)));
            }
            *slot = u as u32;
        }
        Ok(Market { bidders, task_count, user_of_node })
    }

    pub fn len(&self) -> usize {
        self.bidders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bidders.is_empty()
    }

    pub fn task_count(&self) -> usize {
        self.task_count
    }

    pub fn node_count(&self) -> usize {
        self.user_of_node.len()
    }

    pub fn bidders(&self) -> &[Bidder] {
        &self.bidders
    }

    #[inline]
    pub fn bidder(&self, u: UserId) -> &Bidder {
        &self.bidders[u]
    }

    #[inline]
    pub fn bid(&self, u: UserId) -> f64 {
        self.bidders[u].bid
    }

    #[inline]
    pub fn claims(&self, u: UserId) -> TaskSet {
        self.bidders[u].tasks
    }

    #[inline]
    pub fn user_of(&self, node: NodeId) -> Option<UserId> {
        match self.user_of_node.get(node as usize) {
            Some(&u) if u != NOT_REGISTERED => Some(u as UserId),
            _ => None,
        }
    }

    pub fn bids(&self) -> Vec<f64> {
        self.bidders.iter().map(|b| b.bid).collect()
    }

    /// Same market with user `u` bidding `bid` instead.
    pub fn with_bid(&self, u: UserId, bid: f64) -> Result<Market> {
        if !(bid > 0.0 && bid.is_finite()) {
            return Err(Error::domain(format!("bid {bid} must be positive")));
        }
        let mut m = self.clone();
        m.bidders[u].bid = bid;
        Ok(m)
    }

    /// Union of all claimed tasks.
    pub fn claimed_tasks(&self) -> TaskSet {
        self.bidders.iter().fold(TaskSet::empty(), |acc, b| acc.union(b.tasks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_set_ops() {
        let s = TaskSet::from_tasks([0, 2]);
        assert!(s.contains(0) && !s.contains(1) && s.contains(2));
        assert_eq!(s.len(), 2);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(TaskSet::all(3).len(), 3);
        assert_eq!(TaskSet::all(64).len(), 64);
        assert!(!s.contains(99));
    }

    #[test]
    fn market_sorts_and_indexes() {
        let m = Market::new(
            vec![
                Bidder { node: 5, tasks: TaskSet::from_tasks([0]), bid: 1.0 },
                Bidder { node: 2, tasks: TaskSet::from_tasks([1]), bid: 2.0 },
            ],
            6,
            2,
        )
        .unwrap();
        assert_eq!(m.bidder(0).node, 2);
        assert_eq!(m.user_of(5), Some(1));
        assert_eq!(m.user_of(3), None);
        assert_eq!(m.claimed_tasks(), TaskSet::all(2));
    }

    #[test]
    fn market_rejects_bad_input() {
        let b = |node, bid| Bidder { node, tasks: TaskSet::from_tasks([0]), bid };
        assert!(Market::new(vec![b(1, 1.0), b(1, 2.0)], 3, 1).is_err());
        assert!(Market::new(vec![b(9, 1.0)], 3, 1).is_err());
        assert!(Market::new(vec![b(0, 0.0)], 3, 1).is_err());
        assert!(Market::new(vec![Bidder { node: 0, tasks: TaskSet::from_tasks([3]), bid: 1.0 }], 3, 2).is_err());
    }
}
