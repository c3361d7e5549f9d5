// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! The spanning tree of handler rings under parents under a single root.
//!
//! `groups[0]` is the number of handlers per parent ring, `groups[1]` the
//! number of parents per grandparent ring, and so on; the last entry is the
//! size of the root's ring. Aggregators live at levels `1..=groups.len()`,
//! the root being the single aggregator at the top level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{AgentId, HandlerId, TopologyId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupTopology {
    groups: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("topology needs at least one group level")]
    NoLevels,
    #[error("group size at level {level} must be at least 1")]
    EmptyGroup { level: usize },
    #[error("topology has more than 255 levels")]
    TooDeep,
    #[error("topology has too many agents")]
    TooLarge,
    #[error("{0} is not part of this topology")]
    UnknownAgent(AgentId),
}

impl GroupTopology {
    pub fn new(groups: Vec<u32>) -> Result<Self, TopologyError> {
        if groups.is_empty() {
            return Err(TopologyError::NoLevels);
        }
        if groups.len() > u8::MAX as usize {
            return Err(TopologyError::TooDeep);
        }
        if let Some(level) = groups.iter().position(|&g| g == 0) {
            return Err(TopologyError::EmptyGroup { level });
        }
        let total = groups.iter().try_fold(1u64, |acc, &g| acc.checked_mul(g as u64));
        match total {
            Some(n) if n <= u32::MAX as u64 => Ok(GroupTopology { groups }),
            _ => Err(TopologyError::TooLarge),
        }
    }

    pub fn groups(&self) -> &[u32] {
        &self.groups
    }

    /// Number of aggregation layers above the handlers.
    pub fn depth(&self) -> u8 {
        self.groups.len() as u8
    }

    pub fn id(&self) -> TopologyId {
        // FNV-1a over the group sizes; stable across builds.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for g in &self.groups {
            for b in g.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        TopologyId(h)
    }

    pub fn handler_count(&self) -> u32 {
        self.count_at(0)
    }

    /// Number of agents at `level` (0 = handlers, depth = root).
    pub fn count_at(&self, level: u8) -> u32 {
        self.groups[level as usize..].iter().product()
    }

    /// Model thickness of a root slot in handler ticks: the product of all
    /// group sizes.
    pub fn predicted_thickness(&self) -> u64 {
        self.groups.iter().map(|&g| g as u64).product()
    }

    pub fn agent_at(&self, level: u8, index: u32) -> AgentId {
        if level == 0 {
            AgentId::Handler(HandlerId(index))
        } else if level == self.depth() {
            AgentId::Root
        } else {
            AgentId::Aggregator { level, index }
        }
    }

    /// Level and index of a handler or aggregator, if it belongs here.
    pub fn locate(&self, agent: AgentId) -> Option<(u8, u32)> {
        let (level, index) = match agent {
            AgentId::Handler(h) => (0, h.0),
            AgentId::Aggregator { level, index } if level < self.depth() => (level, index),
            AgentId::Root => (self.depth(), 0),
            _ => return None,
        };
        (index < self.count_at(level)).then_some((level, index))
    }

    pub fn contains(&self, agent: AgentId) -> bool {
        self.locate(agent).is_some()
    }

    pub fn parent_of(&self, agent: AgentId) -> Result<AgentId, TopologyError> {
        let (level, index) = self.locate(agent).ok_or(TopologyError::UnknownAgent(agent))?;
        if level == self.depth() {
            return Err(TopologyError::UnknownAgent(agent));
        }
        Ok(self.agent_at(level + 1, index / self.groups[level as usize]))
    }

    /// Children of an aggregator in ring order.
    pub fn children_of(&self, agent: AgentId) -> Result<Vec<AgentId>, TopologyError> {
        let (level, index) = self.locate(agent).ok_or(TopologyError::UnknownAgent(agent))?;
        if level == 0 {
            return Err(TopologyError::UnknownAgent(agent));
        }
        let size = self.groups[level as usize - 1];
        Ok((index * size..(index + 1) * size).map(|i| self.agent_at(level - 1, i)).collect())
    }

    /// Every aggregator, bottom level first, root last.
    pub fn aggregators(&self) -> Vec<AgentId> {
        (1..=self.depth())
            .flat_map(|level| (0..self.count_at(level)).map(move |i| (level, i)))
            .map(|(level, i)| self.agent_at(level, i))
            .collect()
    }

    pub fn handlers(&self) -> impl Iterator<Item = HandlerId> {
        (0..self.handler_count()).map(HandlerId)
    }
}
