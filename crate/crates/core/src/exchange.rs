//! Sensor model and information-exchange protocols.
//!
//! Three exchanges ship: silent (no messages), intent (agents at the front
//! broadcast their move) and full information (every agent broadcasts its
//! whole local state and remembers everything it receives). Every sensor
//! reading carries the current time, so all three are synchronous.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::adversary::{AgentId, ArrivalSchedule, Time};
use crate::kernel::{Action, EnvState};
use crate::topology::{LaneId, Move};

/// Where an agent is: not yet arrived, queued in a lane, or through the
/// intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LanePos {
    Absent,
    Queued(LaneId),
    Done,
}

impl LanePos {
    pub fn lane(self) -> Option<LaneId> {
        match self {
            LanePos::Queued(lane) => Some(lane),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SensorReading {
    pub front: bool,
    pub lane: LanePos,
    /// `None` for agents the schedule never brings in.
    pub intent: Option<LaneId>,
    pub time: Time,
}

impl SensorReading {
    /// The agent's move, when it is queued.
    pub fn mv(&self) -> Option<Move> {
        match (self.lane, self.intent) {
            (LanePos::Queued(source), Some(target)) => Some(Move { source, target }),
            _ => None,
        }
    }
}

/// Reads the sensors of `agent` in environment state `env`.
pub fn sensor_read(env: &EnvState, schedule: &ArrivalSchedule, agent: AgentId) -> SensorReading {
    let intent = schedule.arrival(agent).map(|a| a.intent);
    let (front, lane) = if env.done.contains(&agent) {
        (false, LanePos::Done)
    } else if let Some(slot) = env.slot_of(agent) {
        (slot.position == 0, LanePos::Queued(slot.lane))
    } else {
        (false, LanePos::Absent)
    };
    SensorReading {
        front,
        lane,
        intent,
        time: env.time,
    }
}

/// One round of a full-information memory: the reading the agent had, the
/// action it took and what it received.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryEntry {
    pub reading: SensorReading,
    pub action: Action,
    pub received: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Memory {
    Unit,
    /// Moves received in the last round, sorted and deduplicated.
    Moves(Vec<Move>),
    /// Every round so far, oldest first.
    History(Arc<Vec<HistoryEntry>>),
}

impl Memory {
    pub fn moves(&self) -> Option<&[Move]> {
        match self {
            Memory::Moves(moves) => Some(moves),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LocalState {
    pub memory: Memory,
    pub sensors: SensorReading,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Message {
    /// An intent broadcast. Carries no sender id.
    Move(Move),
    /// A full-information broadcast: the sender's previous local state, its
    /// action and its new reading.
    Snapshot {
        sender: AgentId,
        previous: Arc<LocalState>,
        action: Action,
        reading: SensorReading,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Exchange {
    Empty,
    Intent,
    Full,
}

impl fmt::Display for Exchange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn build_exchange_empty() -> Exchange {
    Exchange::Empty
}

pub fn build_exchange_intent() -> Exchange {
    Exchange::Intent
}

pub fn build_exchange_full() -> Exchange {
    Exchange::Full
}

impl Exchange {
    pub fn name(self) -> &'static str {
        match self {
            Exchange::Empty => "empty",
            Exchange::Intent => "intent",
            Exchange::Full => "full",
        }
    }

    pub fn initial_memory(self) -> Memory {
        match self {
            Exchange::Empty => Memory::Unit,
            Exchange::Intent => Memory::Moves(Vec::new()),
            Exchange::Full => Memory::History(Arc::new(Vec::new())),
        }
    }

    /// The message broadcast by `sender` after acting, given its new reading.
    pub fn message(
        self,
        sender: AgentId,
        previous: &LocalState,
        action: Action,
        reading: &SensorReading,
    ) -> Option<Message> {
        match self {
            Exchange::Empty => None,
            Exchange::Intent => {
                if reading.front {
                    reading.mv().map(Message::Move)
                } else {
                    None
                }
            }
            Exchange::Full => Some(Message::Snapshot {
                sender,
                previous: Arc::new(previous.clone()),
                action,
                reading: *reading,
            }),
        }
    }

    /// The new memory after a round. `received` must be sorted and deduplicated.
    pub fn update(self, previous: &LocalState, action: Action, received: &[Message]) -> Memory {
        match self {
            Exchange::Empty => Memory::Unit,
            Exchange::Intent => Memory::Moves(
                received
                    .iter()
                    .filter_map(|m| match m {
                        Message::Move(mv) => Some(*mv),
                        Message::Snapshot { .. } => None,
                    })
                    .collect(),
            ),
            Exchange::Full => {
                let mut entries = match &previous.memory {
                    Memory::History(h) => (**h).clone(),
                    _ => Vec::new(),
                };
                entries.push(HistoryEntry {
                    reading: previous.sensors,
                    action,
                    received: received.to_vec(),
                });
                Memory::History(Arc::new(entries))
            }
        }
    }
}
