//! Intersection policies, `next` functions and their checkers.
//!
//! A policy maps an adversary history to the set of moves it permits in the
//! coming round. `next` picks the lane whose agents get first claim when
//! agents act outside the policy.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use thiserror::Error;

use crate::adversary::{history, Adversary, AdversaryHistory, AgentId, Time};
use crate::topology::{IntersectionSpec, LaneId, Move};
use crate::verdict::{Verdict, Witness};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("a cyclic policy needs at least one cell")]
    NoCells,
    #[error("cell {cell} permits conflicting moves {a} and {b}")]
    ConflictingCell { cell: usize, a: Move, b: Move },
    #[error("{0} is not a move of the intersection")]
    NotAMove(Move),
    #[error("the base of a priority policy must be cyclic")]
    NonCyclicBase,
    #[error("lane {0} is not an approach lane")]
    NotAnApproachLane(LaneId),
    #[error("cycle length must be positive")]
    ZeroCycle,
}

/// A policy table: sorted by history, one entry per history.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(transparent)
)]
pub struct PolicyTable {
    entries: Vec<(AdversaryHistory, Vec<Move>)>,
}

impl PolicyTable {
    /// Later duplicates of a history are ignored.
    pub fn from_entries(entries: impl IntoIterator<Item = (AdversaryHistory, Vec<Move>)>) -> Self {
        let mut map = BTreeMap::new();
        for (h, mut moves) in entries {
            moves.sort();
            moves.dedup();
            map.entry(h).or_insert(moves);
        }
        PolicyTable {
            entries: map.into_iter().collect(),
        }
    }

    pub fn get(&self, h: &AdversaryHistory) -> Option<&[Move]> {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(h))
            .ok()
            .map(|i| self.entries[i].1.as_slice())
    }

    pub fn entries(&self) -> &[(AdversaryHistory, Vec<Move>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Policy {
    Empty,
    /// `σ(h) = cells[|h| mod K]`; each cell sorted.
    Cyclic(Vec<Vec<Move>>),
    /// The base cycle restricted to lanes holding a queued priority agent.
    Priority {
        agents: BTreeSet<AgentId>,
        base: Vec<Vec<Move>>,
    },
    /// Histories outside the table permit nothing.
    Table(PolicyTable),
}

pub fn empty_policy() -> Policy {
    Policy::Empty
}

pub fn cyclic_policy(
    partition: Vec<Vec<Move>>,
    spec: &IntersectionSpec,
) -> Result<Policy, PolicyError> {
    if partition.is_empty() {
        return Err(PolicyError::NoCells);
    }
    let mut cells = Vec::with_capacity(partition.len());
    for (cell, mut moves) in partition.into_iter().enumerate() {
        moves.sort();
        moves.dedup();
        for (i, &a) in moves.iter().enumerate() {
            if !spec.is_move(a) {
                return Err(PolicyError::NotAMove(a));
            }
            if let Some(&b) = moves[i + 1..].iter().find(|&&b| spec.conflicts(a, b)) {
                return Err(PolicyError::ConflictingCell { cell, a, b });
            }
        }
        cells.push(moves);
    }
    Ok(Policy::Cyclic(cells))
}

pub fn priority_policy(agents: BTreeSet<AgentId>, base: Policy) -> Result<Policy, PolicyError> {
    match base {
        Policy::Cyclic(base) => Ok(Policy::Priority { agents, base }),
        _ => Err(PolicyError::NonCyclicBase),
    }
}

/// One cell per approach lane, each holding every move from that lane.
pub fn traffic_light_policy(spec: &IntersectionSpec) -> Result<Policy, PolicyError> {
    cyclic_policy(
        spec.lanes_in()
            .iter()
            .map(|&l| spec.moves_from(l).collect())
            .collect(),
        spec,
    )
}

impl Policy {
    /// `σ(h)` when it depends on `|h|` alone.
    pub fn at_len(&self, len: usize) -> Option<Vec<Move>> {
        match self {
            Policy::Empty => Some(Vec::new()),
            Policy::Cyclic(cells) => Some(cells[len % cells.len()].clone()),
            _ => None,
        }
    }

    pub fn eval(&self, h: &AdversaryHistory) -> Vec<Move> {
        match self {
            Policy::Empty | Policy::Cyclic(_) => self.at_len(h.len()).unwrap(),
            Policy::Priority { agents, base } => eval_priority(agents, base, h),
            Policy::Table(table) => table.get(h).map(<[Move]>::to_vec).unwrap_or_default(),
        }
    }

    /// `σ(H(α, m))` without materializing the history when it is not needed.
    pub fn eval_at(&self, adversary: &Adversary, m: Time) -> Vec<Move> {
        self.at_len(m as usize)
            .unwrap_or_else(|| self.eval(&history(adversary, m)))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Empty => "empty",
            Policy::Cyclic(_) => "cyclic",
            Policy::Priority { .. } => "priority",
            Policy::Table(_) => "table",
        }
    }
}

/// Replays the base cycle, assuming every permitted move with a queued front
/// agent is taken.
fn eval_priority(
    agents: &BTreeSet<AgentId>,
    base: &[Vec<Move>],
    h: &AdversaryHistory,
) -> Vec<Move> {
    let mut queues: BTreeMap<LaneId, Vec<(AgentId, Move)>> = BTreeMap::new();
    let permitted = |k: usize, queues: &BTreeMap<LaneId, Vec<(AgentId, Move)>>| {
        let cell = &base[k % base.len()];
        let hot: BTreeSet<LaneId> = queues
            .iter()
            .filter(|(_, q)| q.iter().any(|(a, _)| agents.contains(a)))
            .map(|(&l, _)| l)
            .collect();
        if hot.is_empty() {
            cell.clone()
        } else {
            cell.iter()
                .copied()
                .filter(|mv| hot.contains(&mv.source))
                .collect()
        }
    };
    for (k, round) in h.rounds.iter().enumerate() {
        let allowed = permitted(k, &queues);
        for q in queues.values_mut() {
            if q.first().is_some_and(|(_, mv)| allowed.contains(mv)) {
                q.remove(0);
            }
        }
        for &(agent, mv) in &round.arrivals {
            queues.entry(mv.source).or_default().push((agent, mv));
        }
    }
    permitted(h.len(), &queues)
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum NextFn {
    /// `lanes_in[|h| mod n]`.
    RoundRobin,
    /// `lanes_in[⌊|h| / k⌋ mod n]`.
    CycleHeld(u32),
    Constant(LaneId),
    /// Histories outside the table fall back to round-robin.
    Table(Vec<(AdversaryHistory, LaneId)>),
}

pub fn next_round_robin(h: &AdversaryHistory, spec: &IntersectionSpec) -> LaneId {
    NextFn::RoundRobin.eval(h, spec)
}

impl NextFn {
    pub fn validate(&self, spec: &IntersectionSpec) -> Result<(), PolicyError> {
        match self {
            NextFn::CycleHeld(0) => Err(PolicyError::ZeroCycle),
            NextFn::Constant(l) if !spec.is_in_lane(*l) => Err(PolicyError::NotAnApproachLane(*l)),
            NextFn::Table(entries) => match entries.iter().find(|(_, l)| !spec.is_in_lane(*l)) {
                Some(&(_, l)) => Err(PolicyError::NotAnApproachLane(l)),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// `next(h)` when it depends on `|h|` alone.
    pub fn at_len(&self, len: usize, spec: &IntersectionSpec) -> Option<LaneId> {
        let lanes = spec.lanes_in();
        match self {
            NextFn::RoundRobin => Some(lanes[len % lanes.len()]),
            NextFn::CycleHeld(k) => Some(lanes[(len / (*k).max(1) as usize) % lanes.len()]),
            NextFn::Constant(l) => Some(*l),
            NextFn::Table(_) => None,
        }
    }

    pub fn eval(&self, h: &AdversaryHistory, spec: &IntersectionSpec) -> LaneId {
        match self {
            NextFn::Table(entries) => entries
                .iter()
                .find(|(k, _)| k == h)
                .map(|&(_, l)| l)
                .unwrap_or_else(|| NextFn::RoundRobin.eval(h, spec)),
            _ => self.at_len(h.len(), spec).unwrap(),
        }
    }

    pub fn eval_at(&self, adversary: &Adversary, m: Time, spec: &IntersectionSpec) -> LaneId {
        self.at_len(m as usize, spec)
            .unwrap_or_else(|| self.eval(&history(adversary, m), spec))
    }

    /// Length of the cycle when `next` depends on `|h|` alone.
    pub fn period(&self, spec: &IntersectionSpec) -> Option<usize> {
        let n = spec.lanes_in().len();
        match self {
            NextFn::RoundRobin => Some(n),
            NextFn::CycleHeld(k) => Some((*k).max(1) as usize * n),
            NextFn::Constant(_) => Some(1),
            NextFn::Table(_) => None,
        }
    }
}

fn first_conflict(spec: &IntersectionSpec, moves: &[Move]) -> Option<(Move, Move)> {
    moves.iter().enumerate().find_map(|(i, &a)| {
        moves[i + 1..]
            .iter()
            .find(|&&b| spec.conflicts(a, b))
            .map(|&b| (a, b))
    })
}

/// No permitted set holds two conflicting moves. Exact for cyclic, priority,
/// empty and table policies; the history sample is unused for them.
pub fn check_conflict_free(
    sigma: &Policy,
    spec: &IntersectionSpec,
    histories: &[AdversaryHistory],
) -> Verdict {
    let _ = histories;
    let labelled: Vec<(alloc::string::String, &[Move])> = match sigma {
        Policy::Empty => Vec::new(),
        // Priority cells are subsets of base cells.
        Policy::Cyclic(cells) | Policy::Priority { base: cells, .. } => cells
            .iter()
            .enumerate()
            .map(|(i, c)| (format!("cell {i}"), c.as_slice()))
            .collect(),
        Policy::Table(table) => table
            .entries()
            .iter()
            .map(|(h, c)| (format!("history of length {}", h.len()), c.as_slice()))
            .collect(),
    };
    let failures = labelled
        .into_iter()
        .filter_map(|(label, moves)| {
            first_conflict(spec, moves)
                .map(|(a, b)| Witness::note(format!("{label} permits {a} and {b}")))
        })
        .collect();
    Verdict::from_failures(true, failures)
}

/// Every move is permitted infinitely often. Exact for empty and cyclic
/// policies; other policies are inconclusive.
pub fn check_fairness(sigma: &Policy, spec: &IntersectionSpec) -> Verdict {
    let covered: BTreeSet<Move> = match sigma {
        Policy::Empty => BTreeSet::new(),
        Policy::Cyclic(cells) => cells.iter().flatten().copied().collect(),
        _ => {
            return Verdict::inconclusive(alloc::vec![Witness::note(format!(
                "fairness of a {} policy is not decidable from a finite scan",
                sigma.name()
            ))])
        }
    };
    let failures = spec
        .moves()
        .into_iter()
        .filter(|mv| !covered.contains(mv))
        .map(|mv| Witness::note(format!("{mv} is never permitted")))
        .collect();
    Verdict::from_failures(true, failures)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Every move is infinitely often either permitted, or from the `next` lane
/// and compatible with everything permitted. Exact when both depend on `|h|`
/// alone; scanned over the lcm of the two periods.
pub fn check_pair_fairness(sigma: &Policy, next: &NextFn, spec: &IntersectionSpec) -> Verdict {
    let sigma_period = match sigma {
        Policy::Empty => 1,
        Policy::Cyclic(cells) => cells.len(),
        _ => {
            return Verdict::inconclusive(alloc::vec![Witness::note(format!(
                "{} policy is not periodic",
                sigma.name()
            ))])
        }
    };
    let Some(next_period) = next.period(spec) else {
        return Verdict::inconclusive(alloc::vec![Witness::note(
            "table next is not periodic".into()
        )]);
    };
    let period = sigma_period / gcd(sigma_period, next_period) * next_period;
    let phases: Vec<(Vec<Move>, LaneId)> = (0..period)
        .map(|p| (sigma.at_len(p).unwrap(), next.at_len(p, spec).unwrap()))
        .collect();
    let failures = spec
        .moves()
        .into_iter()
        .filter(|&mv| {
            !phases.iter().any(|(cell, lane)| {
                cell.contains(&mv)
                    || (*lane == mv.source && !cell.iter().any(|&c| spec.conflicts(mv, c)))
            })
        })
        .map(|mv| Witness::note(format!("{mv} is never served within a period of {period}")))
        .collect();
    Verdict::from_failures(true, failures)
}

/// Every permitted set is maximal among conflict-free sets. Exact for empty
/// and cyclic policies; otherwise checked on the given histories.
pub fn check_efficient(
    sigma: &Policy,
    spec: &IntersectionSpec,
    histories: &[AdversaryHistory],
) -> Verdict {
    let all = spec.moves();
    let (exact, sets): (bool, Vec<(usize, Vec<Move>)>) = match sigma {
        Policy::Empty => (true, alloc::vec![(0, Vec::new())]),
        Policy::Cyclic(cells) => (true, cells.iter().cloned().enumerate().collect()),
        _ => (
            false,
            histories.iter().map(|h| (h.len(), sigma.eval(h))).collect(),
        ),
    };
    let mut failures = Vec::new();
    for (k, set) in sets {
        if let Some(&extra) = all
            .iter()
            .find(|&&mv| !set.contains(&mv) && !set.iter().any(|&c| spec.conflicts(mv, c)))
        {
            let label = if exact { "cell" } else { "history of length" };
            failures.push(Witness::note(format!(
                "{label} {k}: {extra} could be added"
            )));
        }
    }
    Verdict::from_failures(exact, failures)
}
