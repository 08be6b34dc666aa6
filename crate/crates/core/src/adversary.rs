//! Arrival schedules, failure patterns, failure models, adversary histories
//! and bounded enumeration of adversary sets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::topology::{IntersectionSpec, LaneId, Move};

/// Rounds and times. Round `m + 1` runs between time `m` and time `m + 1`.
pub type Time = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(transparent)
)]
pub struct AgentId(pub u16);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// An agent enters the queue of `lane` at time `time` (during round `time`)
/// intending to leave by `intent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Arrival {
    pub time: Time,
    pub lane: LaneId,
    pub intent: LaneId,
}

impl Arrival {
    pub fn mv(&self) -> Move {
        Move {
            source: self.lane,
            target: self.intent,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(transparent)
)]
pub struct ArrivalSchedule {
    pub arrivals: BTreeMap<AgentId, Arrival>,
}

impl ArrivalSchedule {
    pub fn arrival(&self, agent: AgentId) -> Option<&Arrival> {
        self.arrivals.get(&agent)
    }

    /// The agent entering `lane` at `time`, if any.
    pub fn arriving(&self, time: Time, lane: LaneId) -> Option<AgentId> {
        self.arrivals
            .iter()
            .find(|(_, a)| a.time == time && a.lane == lane)
            .map(|(&id, _)| id)
    }

    fn first_conflict(&self) -> Option<(AgentId, AgentId)> {
        let mut slots: BTreeMap<(Time, LaneId), AgentId> = BTreeMap::new();
        for (&agent, arrival) in &self.arrivals {
            if let Some(&other) = slots.get(&(arrival.time, arrival.lane)) {
                return Some((other, agent));
            }
            slots.insert((arrival.time, arrival.lane), agent);
        }
        None
    }
}

/// Transmitter and receiver failures. Bits are 1 unless listed here.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FailurePattern {
    #[cfg_attr(feature = "serde", serde(default))]
    pub transmit_failures: BTreeSet<(Time, AgentId)>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub receive_failures: BTreeSet<(Time, AgentId)>,
}

impl FailurePattern {
    pub fn transmits(&self, time: Time, agent: AgentId) -> bool {
        !self.transmit_failures.contains(&(time, agent))
    }

    pub fn receives(&self, time: Time, agent: AgentId) -> bool {
        !self.receive_failures.contains(&(time, agent))
    }
}

/// The nondeterministic choices of one execution. The transmission
/// environment is fixed per scenario and lives in the context.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Adversary {
    pub id: u64,
    pub schedule: ArrivalSchedule,
    #[cfg_attr(feature = "serde", serde(default))]
    pub failures: FailurePattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FailureModel {
    /// No failures.
    #[cfg_attr(feature = "serde", serde(rename = "NF"))]
    NoFailures,
    /// Transmitters crash permanently; receivers never fail.
    #[cfg_attr(feature = "serde", serde(rename = "CR"))]
    Crash,
    /// Arbitrary transmit omissions; receivers never fail.
    #[cfg_attr(feature = "serde", serde(rename = "SO"))]
    SendOmission,
}

impl FailureModel {
    pub fn label(self) -> &'static str {
        match self {
            FailureModel::NoFailures => "NF",
            FailureModel::Crash => "CR",
            FailureModel::SendOmission => "SO",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("agents {0} and {1} enter the same lane at the same time")]
    ScheduleConflict(AgentId, AgentId),
    #[error("agent {0} arrives at time 0; arrivals start at time 1")]
    ArrivalAtTimeZero(AgentId),
    #[error("agent {agent} arrives on {mv}, which is not a move of the intersection")]
    NotAMove { agent: AgentId, mv: Move },
    #[error("failure model {model} forbids the transmit failure of {agent} at time {time}")]
    TransmitFailureForbidden {
        model: &'static str,
        time: Time,
        agent: AgentId,
    },
    #[error("crash failure of {agent} at time {time} is not permanent")]
    CrashNotMonotone { agent: AgentId, time: Time },
    #[error("failure model {model} forbids the receive failure of {agent} at time {time}")]
    ReceiveFailureForbidden {
        model: &'static str,
        time: Time,
        agent: AgentId,
    },
    #[error("enumeration cap must be positive")]
    ZeroCap,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

/// Checks `adversary` against conflict-freedom and the failure model over
/// times `[0, horizon)`.
pub fn validate_adversary(
    adversary: &Adversary,
    model: FailureModel,
    horizon: Time,
    spec: &IntersectionSpec,
) -> Result<(), AdversaryError> {
    if horizon == 0 {
        return Err(AdversaryError::ZeroHorizon);
    }
    for (&agent, arrival) in &adversary.schedule.arrivals {
        if arrival.time == 0 {
            return Err(AdversaryError::ArrivalAtTimeZero(agent));
        }
        if !spec.is_move(arrival.mv()) {
            return Err(AdversaryError::NotAMove {
                agent,
                mv: arrival.mv(),
            });
        }
    }
    if let Some((a, b)) = adversary.schedule.first_conflict() {
        return Err(AdversaryError::ScheduleConflict(a, b));
    }
    let failures = &adversary.failures;
    // None of the supported models has receiver failures.
    if let Some(&(time, agent)) = failures.receive_failures.iter().find(|(t, _)| *t < horizon) {
        return Err(AdversaryError::ReceiveFailureForbidden {
            model: model.label(),
            time,
            agent,
        });
    }
    match model {
        FailureModel::NoFailures => {
            if let Some(&(time, agent)) = failures
                .transmit_failures
                .iter()
                .find(|(t, _)| *t < horizon)
            {
                return Err(AdversaryError::TransmitFailureForbidden {
                    model: model.label(),
                    time,
                    agent,
                });
            }
        }
        FailureModel::Crash => {
            for &(time, agent) in &failures.transmit_failures {
                if let Some(later) = (time + 1..horizon).find(|&k| failures.transmits(k, agent)) {
                    return Err(AdversaryError::CrashNotMonotone { agent, time: later });
                }
            }
        }
        FailureModel::SendOmission => {}
    }
    Ok(())
}

/// The adversary's choices for a single round.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundChoices {
    /// Agents entering a queue during this round, by agent id.
    pub arrivals: Vec<(AgentId, Move)>,
    pub transmit_failures: Vec<AgentId>,
    pub receive_failures: Vec<AgentId>,
}

/// The adversary's choices for rounds `1..=m`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(transparent)
)]
pub struct AdversaryHistory {
    pub rounds: Vec<RoundChoices>,
}

impl AdversaryHistory {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn prefix(&self, m: usize) -> AdversaryHistory {
        AdversaryHistory {
            rounds: self.rounds[..m].to_vec(),
        }
    }
}

/// The choices of `adversary` in round `m + 1`.
pub fn round_choices(adversary: &Adversary, m: Time) -> RoundChoices {
    let arrivals = adversary
        .schedule
        .arrivals
        .iter()
        .filter(|(_, a)| a.time == m + 1)
        .map(|(&id, a)| (id, a.mv()))
        .collect();
    let pick = |set: &BTreeSet<(Time, AgentId)>| {
        set.iter()
            .filter(|(t, _)| *t == m)
            .map(|&(_, a)| a)
            .collect()
    };
    RoundChoices {
        arrivals,
        transmit_failures: pick(&adversary.failures.transmit_failures),
        receive_failures: pick(&adversary.failures.receive_failures),
    }
}

/// The adversary history of length `m`.
pub fn history(adversary: &Adversary, m: Time) -> AdversaryHistory {
    AdversaryHistory {
        rounds: (0..m).map(|k| round_choices(adversary, k)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Caps {
    pub max_adversaries: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_adversaries: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    pub adversaries: Vec<Adversary>,
    pub truncated: bool,
    pub caps: Caps,
}

/// Every conflict-free arrival schedule over `pool`, arrival times
/// `1..=horizon` and all moves, in odometer order (first pool agent most
/// significant, "no arrival" first).
pub fn enumerate_schedules(
    pool: &[AgentId],
    horizon: Time,
    spec: &IntersectionSpec,
) -> Vec<ArrivalSchedule> {
    let mut options: Vec<Option<Arrival>> = vec![None];
    for time in 1..=horizon {
        for mv in spec.moves() {
            options.push(Some(Arrival {
                time,
                lane: mv.source,
                intent: mv.target,
            }));
        }
    }
    let mut out = Vec::new();
    for digits in odometer(pool.len(), options.len()) {
        let mut schedule = ArrivalSchedule::default();
        let mut slots = BTreeSet::new();
        let mut ok = true;
        for (&agent, &d) in pool.iter().zip(&digits) {
            if let Some(arrival) = options[d] {
                if !slots.insert((arrival.time, arrival.lane)) {
                    ok = false;
                    break;
                }
                schedule.arrivals.insert(agent, arrival);
            }
        }
        if ok {
            out.push(schedule);
        }
    }
    out
}

/// Every failure pattern over `pool` and times `[0, horizon)` allowed by `model`.
pub fn enumerate_failure_patterns(
    model: FailureModel,
    pool: &[AgentId],
    horizon: Time,
) -> Vec<FailurePattern> {
    // Per agent: the set of silenced transmit times.
    let per_agent: Vec<Vec<Time>> = match model {
        FailureModel::NoFailures => return vec![FailurePattern::default()],
        // Crash at time c silences [c, horizon); `horizon` means no crash.
        FailureModel::Crash => (0..=horizon)
            .rev()
            .map(|c| (c..horizon).collect())
            .collect(),
        FailureModel::SendOmission => (0u32..(1 << horizon))
            .map(|mask| (0..horizon).filter(|t| mask & (1 << t) != 0).collect())
            .collect(),
    };
    odometer(pool.len(), per_agent.len())
        .map(|digits| {
            let mut pattern = FailurePattern::default();
            for (&agent, &d) in pool.iter().zip(&digits) {
                pattern
                    .transmit_failures
                    .extend(per_agent[d].iter().map(|&t| (t, agent)));
            }
            pattern
        })
        .collect()
}

/// All adversaries of the truncated model: schedules crossed with failure
/// patterns, ids assigned in emission order.
pub fn enumerate_adversaries(
    model: FailureModel,
    pool: &[AgentId],
    horizon: Time,
    spec: &IntersectionSpec,
    caps: Caps,
) -> Result<Enumeration, AdversaryError> {
    if caps.max_adversaries == 0 {
        return Err(AdversaryError::ZeroCap);
    }
    let schedules = enumerate_schedules(pool, horizon, spec);
    let patterns = enumerate_failure_patterns(model, pool, horizon);
    let mut adversaries = Vec::new();
    let mut truncated = false;
    'outer: for schedule in &schedules {
        for failures in &patterns {
            if adversaries.len() == caps.max_adversaries {
                truncated = true;
                break 'outer;
            }
            adversaries.push(Adversary {
                id: adversaries.len() as u64,
                schedule: schedule.clone(),
                failures: failures.clone(),
            });
        }
    }
    Ok(Enumeration {
        adversaries,
        truncated,
        caps,
    })
}

fn odometer(width: usize, base: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut next = Some(vec![0usize; width]);
    core::iter::from_fn(move || {
        let current = next.take()?;
        let mut digits = current.clone();
        let mut pos = width;
        while pos > 0 {
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < base {
                next = Some(digits);
                break;
            }
            digits[pos] = 0;
        }
        Some(current)
    })
}
