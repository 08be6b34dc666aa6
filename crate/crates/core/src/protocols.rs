//! Concrete protocols, the two knowledge-based programs, and synthesis of
//! their implementations.
//!
//! `p_empty` and `p_intent` decide by building `Pos`, the set of moves that
//! agents in higher-priority lanes might be making this round, and going only
//! when their own move is compatible with all of it.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::adversary::{Adversary, AgentId, Time};
use crate::exchange::{Exchange, LocalState, SensorReading};
use crate::kernel::{step_with_actions, Action, ActionProtocol, Context, GlobalState, System};
use crate::knowledge::{fold_all, group_classes, EpistemicModel};
use crate::policy::{NextFn, Policy};
use crate::topology::{IntersectionSpec, LaneId, Move};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("{protocol} needs the {needed} exchange, not {found}")]
    WrongExchange {
        protocol: &'static str,
        needed: Exchange,
        found: Exchange,
    },
    #[error("the agent is not at the front")]
    NotFront,
    #[error("next must be computable from the time alone")]
    NextNotLocal,
    #[error("local state does not come from the intent exchange")]
    NotIntentMemory,
}

/// Go at the front when the light is green for your lane: lane `t mod n` at
/// time `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficLight {
    lanes: Vec<LaneId>,
}

pub fn traffic_light_protocol(spec: &IntersectionSpec) -> TrafficLight {
    TrafficLight {
        lanes: spec.lanes_in().to_vec(),
    }
}

impl ActionProtocol for TrafficLight {
    fn name(&self) -> String {
        "traffic_light".to_string()
    }

    fn act(&self, _: AgentId, local: &LocalState) -> Action {
        let s = &local.sensors;
        let green = self.lanes[s.time as usize % self.lanes.len()];
        if s.front && s.lane.lane() == Some(green) {
            Action::Go
        } else {
            Action::Noop
        }
    }
}

/// `stages[k]` is `Pos` after the `k`-th lane of the interval; `moves` is the
/// last stage (empty for an empty interval).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PosSet {
    pub moves: Vec<Move>,
    pub stages: Vec<(LaneId, Vec<Move>)>,
}

impl PosSet {
    pub fn stage(&self, lane: LaneId) -> Option<&[Move]> {
        self.stages
            .iter()
            .find(|(l, _)| *l == lane)
            .map(|(_, m)| m.as_slice())
    }
}

fn front_lane(reading: &SensorReading) -> Result<LaneId, ProtocolError> {
    match (reading.front, reading.lane.lane()) {
        (true, Some(lane)) => Ok(lane),
        _ => Err(ProtocolError::NotFront),
    }
}

/// Every lane in `[next, lane_i)` contributes each of its moves that is
/// compatible with everything already in `Pos`.
pub fn pos_set_empty(
    reading: &SensorReading,
    next: LaneId,
    spec: &IntersectionSpec,
) -> Result<PosSet, ProtocolError> {
    let own = front_lane(reading)?;
    let mut pos: Vec<Move> = Vec::new();
    let mut stages = Vec::new();
    for lane in spec.cyclic_interval(next, own) {
        let add: Vec<Move> = spec
            .moves_from(lane)
            .filter(|&mv| spec.compatible_with_set(mv, &pos))
            .collect();
        pos.extend(add);
        pos.sort();
        stages.push((lane, pos.clone()));
    }
    Ok(PosSet { moves: pos, stages })
}

/// As [`pos_set_empty`], except that a lane whose front was heard
/// contributes only the heard move, and only if it is compatible with `Pos`.
pub fn pos_set_intent(
    state: &LocalState,
    next: LaneId,
    spec: &IntersectionSpec,
) -> Result<PosSet, ProtocolError> {
    let own = front_lane(&state.sensors)?;
    let heard = state.memory.moves().ok_or(ProtocolError::NotIntentMemory)?;
    let mut pos: Vec<Move> = Vec::new();
    let mut stages = Vec::new();
    for lane in spec.cyclic_interval(next, own) {
        match heard.iter().find(|mv| mv.source == lane) {
            Some(&mv) => {
                if spec.compatible_with_set(mv, &pos) {
                    pos.push(mv);
                }
            }
            None => {
                let add: Vec<Move> = spec
                    .moves_from(lane)
                    .filter(|&mv| spec.compatible_with_set(mv, &pos))
                    .collect();
                pos.extend(add);
            }
        }
        pos.sort();
        stages.push((lane, pos.clone()));
    }
    Ok(PosSet { moves: pos, stages })
}

fn local_next(next: &NextFn, spec: &IntersectionSpec) -> Result<NextFn, ProtocolError> {
    match next.at_len(0, spec) {
        Some(_) => Ok(next.clone()),
        None => Err(ProtocolError::NextNotLocal),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PEmpty {
    spec: IntersectionSpec,
    next: NextFn,
}

pub fn p_empty(
    spec: &IntersectionSpec,
    next: &NextFn,
    exchange: Exchange,
) -> Result<PEmpty, ProtocolError> {
    if exchange != Exchange::Empty {
        return Err(ProtocolError::WrongExchange {
            protocol: "p_empty",
            needed: Exchange::Empty,
            found: exchange,
        });
    }
    Ok(PEmpty {
        spec: spec.clone(),
        next: local_next(next, spec)?,
    })
}

impl ActionProtocol for PEmpty {
    fn name(&self) -> String {
        "p_empty".to_string()
    }

    fn act(&self, _: AgentId, local: &LocalState) -> Action {
        let s = &local.sensors;
        let (Some(mv), true) = (s.mv(), s.front) else {
            return Action::Noop;
        };
        let next = self.next.at_len(s.time as usize, &self.spec).unwrap();
        let pos = pos_set_empty(s, next, &self.spec).expect("front reading");
        if self.spec.compatible_with_set(mv, &pos.moves) {
            Action::Go
        } else {
            Action::Noop
        }
    }

    fn exchange(&self) -> Option<Exchange> {
        Some(Exchange::Empty)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PIntent {
    spec: IntersectionSpec,
    next: NextFn,
}

pub fn p_intent(
    spec: &IntersectionSpec,
    next: &NextFn,
    exchange: Exchange,
) -> Result<PIntent, ProtocolError> {
    if exchange != Exchange::Intent {
        return Err(ProtocolError::WrongExchange {
            protocol: "p_intent",
            needed: Exchange::Intent,
            found: exchange,
        });
    }
    Ok(PIntent {
        spec: spec.clone(),
        next: local_next(next, spec)?,
    })
}

impl ActionProtocol for PIntent {
    fn name(&self) -> String {
        "p_intent".to_string()
    }

    fn act(&self, _: AgentId, local: &LocalState) -> Action {
        let s = &local.sensors;
        let (Some(mv), true) = (s.mv(), s.front) else {
            return Action::Noop;
        };
        let next = self.next.at_len(s.time as usize, &self.spec).unwrap();
        match pos_set_intent(local, next, &self.spec) {
            Ok(pos) if self.spec.compatible_with_set(mv, &pos.moves) => Action::Go,
            _ => Action::Noop,
        }
    }

    fn exchange(&self) -> Option<Exchange> {
        Some(Exchange::Intent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TableEntry {
    pub agent: AgentId,
    pub state: LocalState,
    pub action: Action,
}

/// A lookup protocol. States missing from the table map to `noop`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TableProtocol {
    pub name: String,
    pub exchange: Exchange,
    /// Sorted by `(agent, state)`, unique keys.
    entries: Vec<TableEntry>,
}

impl TableProtocol {
    /// Later duplicates of a key are ignored.
    pub fn new(
        name: String,
        exchange: Exchange,
        entries: impl IntoIterator<Item = TableEntry>,
    ) -> Self {
        let mut map = BTreeMap::new();
        for e in entries {
            map.entry((e.agent, e.state)).or_insert(e.action);
        }
        let entries = map
            .into_iter()
            .map(|((agent, state), action)| TableEntry {
                agent,
                state,
                action,
            })
            .collect();
        TableProtocol {
            name,
            exchange,
            entries,
        }
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn lookup(&self, agent: AgentId, state: &LocalState) -> Option<Action> {
        self.entries
            .binary_search_by(|e| (e.agent, &e.state).cmp(&(agent, state)))
            .ok()
            .map(|i| self.entries[i].action)
    }
}

impl ActionProtocol for TableProtocol {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn act(&self, agent: AgentId, local: &LocalState) -> Action {
        self.lookup(agent, local).unwrap_or(Action::Noop)
    }

    fn exchange(&self) -> Option<Exchange> {
        Some(self.exchange)
    }
}

/// The two shipped knowledge-based programs.
///
/// `Psigma`: go iff `K_i(front_i ∧ move_i ∈ σ)`.
/// `BigP`: go iff `K_i(front_i ∧ (move_i ∈ σ ∨ V_i))`.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum KbProgram {
    Psigma {
        policy: Policy,
    },
    BigP {
        policy: Policy,
        next: NextFn,
        /// Clause (a) of `V_i` ranges over all of `σ(H)`, not only over the
        /// σ-moves of going agents.
        strict_vi: bool,
    },
}

impl KbProgram {
    pub fn policy(&self) -> &Policy {
        match self {
            KbProgram::Psigma { policy } | KbProgram::BigP { policy, .. } => policy,
        }
    }

    pub fn name(&self) -> String {
        match self {
            KbProgram::Psigma { policy } => format!("P^sigma({})", policy.name()),
            KbProgram::BigP {
                policy, strict_vi, ..
            } => {
                format!(
                    "P({}{})",
                    policy.name(),
                    if *strict_vi { ", strict" } else { "" }
                )
            }
        }
    }
}

/// What the conditions read at one point, per pool index.
pub struct PointView<'a> {
    pub moves: &'a [Option<Move>],
    pub front: &'a [bool],
    /// `None` while not yet decided during synthesis.
    pub going: &'a [Option<bool>],
    pub sigma: &'a [Move],
    pub next: LaneId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Undecided(pub usize);

/// `V_i` at a point. `Err` names an agent whose action is needed but unknown.
pub fn v_condition(
    spec: &IntersectionSpec,
    view: &PointView<'_>,
    i: usize,
    strict: bool,
) -> Result<bool, Undecided> {
    let Some(own) = view.moves[i] else {
        return Ok(false);
    };
    if view.sigma.contains(&own) {
        return Ok(false);
    }
    if strict && view.sigma.iter().any(|&s| spec.conflicts(own, s)) {
        return Ok(false);
    }
    for j in 0..view.moves.len() {
        let (Some(mv), true) = (view.moves[j], view.front[j]) else {
            continue;
        };
        if j == i {
            continue;
        }
        let relevant =
            view.sigma.contains(&mv) || spec.in_cyclic_interval(mv.source, view.next, own.source);
        if !relevant {
            continue;
        }
        match view.going[j] {
            None => return Err(Undecided(j)),
            Some(true) if !spec.compatible(own, mv) => return Ok(false),
            Some(_) => {}
        }
    }
    Ok(true)
}

/// The program's condition (inside `K_i`) at a point.
pub fn kbp_condition(
    program: &KbProgram,
    spec: &IntersectionSpec,
    view: &PointView<'_>,
    i: usize,
) -> Result<bool, Undecided> {
    let Some(own) = view.moves[i] else {
        return Ok(false);
    };
    if !view.front[i] {
        return Ok(false);
    }
    if view.sigma.contains(&own) {
        return Ok(true);
    }
    match program {
        KbProgram::Psigma { .. } => Ok(false),
        KbProgram::BigP { strict_vi, .. } => v_condition(spec, view, i, *strict_vi),
    }
}

fn next_for(
    program: &KbProgram,
    adversary: &Adversary,
    m: Time,
    spec: &IntersectionSpec,
) -> LaneId {
    match program {
        KbProgram::BigP { next, .. } => next.eval_at(adversary, m, spec),
        KbProgram::Psigma { .. } => spec.lanes_in()[0],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KbpError {
    #[error("knowledge-based programs are evaluated only before the horizon (m = {0})")]
    AtHorizon(Time),
}

/// Truth of the program's condition at each point `(run, m < horizon)`,
/// indexed like [`EpistemicModel::index`].
fn condition_grid(system: &System, model: &EpistemicModel, program: &KbProgram) -> Vec<bool> {
    let spec = &system.context.spec;
    let n = system.context.pool.len();
    let mut truth = alloc::vec![false; model.class_ids().len()];
    for (r, run) in system.runs.iter().enumerate() {
        for m in 0..system.horizon() {
            let state = &run.states[m as usize];
            let moves: Vec<Option<Move>> = state.locals.iter().map(|l| l.sensors.mv()).collect();
            let front: Vec<bool> = state.locals.iter().map(|l| l.sensors.front).collect();
            let going: Vec<Option<bool>> = (0..n).map(|j| run.going(m, j)).collect();
            let sigma = program.policy().eval_at(&run.adversary, m);
            let next = next_for(program, &run.adversary, m, spec);
            let view = PointView {
                moves: &moves,
                front: &front,
                going: &going,
                sigma: &sigma,
                next,
            };
            for i in 0..n {
                truth[model.index(r, m, i)] =
                    kbp_condition(program, spec, &view, i).expect("runs are complete");
            }
        }
    }
    truth
}

/// The program's action at every point before the horizon: `[run][m][agent]`.
pub fn kbp_actions(
    system: &System,
    model: &EpistemicModel,
    program: &KbProgram,
) -> Vec<Vec<Vec<Action>>> {
    let truth = condition_grid(system, model, program);
    // Points at the horizon stay false, so their classes (which hold only
    // horizon points) never leak into earlier times.
    let known = fold_all(model.class_ids(), model.class_count(), &truth);
    let n = system.context.pool.len();
    (0..system.runs.len())
        .map(|r| {
            (0..system.horizon())
                .map(|m| {
                    (0..n)
                        .map(|i| {
                            if known[model.class(r, m, i) as usize] {
                                Action::Go
                            } else {
                                Action::Noop
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// The program's action for one agent at one point.
pub fn eval_kbp(
    system: &System,
    model: &EpistemicModel,
    run: usize,
    m: Time,
    agent: usize,
    program: &KbProgram,
) -> Result<Action, KbpError> {
    if m >= system.horizon() {
        return Err(KbpError::AtHorizon(m));
    }
    let spec = &system.context.spec;
    let n = system.context.pool.len();
    let holds = |r: usize, t: Time| {
        let run = &system.runs[r];
        let state = &run.states[t as usize];
        let moves: Vec<Option<Move>> = state.locals.iter().map(|l| l.sensors.mv()).collect();
        let front: Vec<bool> = state.locals.iter().map(|l| l.sensors.front).collect();
        let going: Vec<Option<bool>> = (0..n).map(|j| run.going(t, j)).collect();
        let sigma = program.policy().eval_at(&run.adversary, t);
        let next = next_for(program, &run.adversary, t, spec);
        let view = PointView {
            moves: &moves,
            front: &front,
            going: &going,
            sigma: &sigma,
            next,
        };
        kbp_condition(program, spec, &view, agent).expect("runs are complete")
    };
    let knows = model
        .members(model.class(run, m, agent))
        .iter()
        .all(|&(r, t)| holds(r as usize, t));
    Ok(if knows { Action::Go } else { Action::Noop })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthesisError {
    #[error("agent {agent} at time {time} cannot tell which lane is next (adversary {adversary})")]
    NotNextAware {
        adversary: u64,
        time: Time,
        agent: AgentId,
    },
    #[error("agent {agent} at time {time} depends on the undecided action of {other} (adversary {adversary})")]
    Unfixed {
        adversary: u64,
        time: Time,
        agent: AgentId,
        other: AgentId,
    },
}

/// Builds the unique implementation of `program` in the context, one time
/// level at a time.
///
/// At each level: non-fronts wait; agents knowing `front ∧ move ∈ σ` go;
/// the remaining fronts are decided lane by lane starting at `next`, each by
/// whether it knows the full condition given the decisions already fixed.
/// Fails when a decision needs one not yet made, which cannot happen in
/// σ-aware, next-aware contexts.
pub fn synthesize_implementation(
    ctx: &Context,
    adversaries: &[Adversary],
    program: &KbProgram,
) -> Result<TableProtocol, SynthesisError> {
    let spec = &ctx.spec;
    let n = ctx.pool.len();
    let lanes = spec.lanes_in().len();
    let mut states: Vec<GlobalState> = adversaries
        .iter()
        .map(|a| GlobalState::initial(ctx, a))
        .collect();
    let mut entries = Vec::new();

    for m in 0..ctx.horizon {
        let sigmas: Vec<Vec<Move>> = adversaries
            .iter()
            .map(|a| program.policy().eval_at(a, m))
            .collect();
        let nexts: Vec<LaneId> = adversaries
            .iter()
            .map(|a| next_for(program, a, m, spec))
            .collect();
        let (class_of, classes) =
            group_classes(states.iter().flat_map(|s| s.locals.iter().enumerate()));
        let point = |r: usize, i: usize| r * n + i;
        let witness = |p: usize| (adversaries[p / n].id, ctx.pool[p % n]);

        let mut moves = Vec::with_capacity(states.len() * n);
        let mut front = Vec::with_capacity(states.len() * n);
        for s in &states {
            moves.extend(s.locals.iter().map(|l| l.sensors.mv()));
            front.extend(s.locals.iter().map(|l| l.sensors.front));
        }
        let mut going: Vec<Option<bool>> = front
            .iter()
            .map(|&f| if f { None } else { Some(false) })
            .collect();

        // Permitted moves.
        let in_sigma: Vec<bool> = (0..going.len())
            .map(|p| front[p] && moves[p].is_some_and(|mv| sigmas[p / n].contains(&mv)))
            .collect();
        let known = fold_all(&class_of, classes, &in_sigma);
        let mut first_seen: Vec<Option<usize>> = alloc::vec![None; classes];
        for p in 0..going.len() {
            let c = class_of[p] as usize;
            first_seen[c].get_or_insert(p);
            if known[c] {
                going[p] = Some(true);
            }
        }

        // Violations, in priority order from `next`.
        let step_of = |p: usize| -> Option<usize> {
            let lane = moves[p]?.source;
            let next = spec.lane_index(nexts[p / n])?;
            Some((spec.lane_index(lane)? + lanes - next) % lanes)
        };
        for p in 0..going.len() {
            if going[p].is_none() {
                let rep = first_seen[class_of[p] as usize].unwrap();
                if step_of(p) != step_of(rep) {
                    let (adversary, agent) = witness(p);
                    return Err(SynthesisError::NotNextAware {
                        adversary,
                        time: m,
                        agent,
                    });
                }
            }
        }
        for step in 0..lanes {
            let mut truth = alloc::vec![true; going.len()];
            let mut touched = alloc::vec![false; classes];
            for r in 0..states.len() {
                let view_going = going[point(r, 0)..point(r, n)].to_vec();
                for i in 0..n {
                    let p = point(r, i);
                    if going[p].is_some() || step_of(p) != Some(step) {
                        continue;
                    }
                    let view = PointView {
                        moves: &moves[point(r, 0)..point(r, n)],
                        front: &front[point(r, 0)..point(r, n)],
                        going: &view_going,
                        sigma: &sigmas[r],
                        next: nexts[r],
                    };
                    truth[p] = kbp_condition(program, spec, &view, i).map_err(|Undecided(j)| {
                        SynthesisError::Unfixed {
                            adversary: adversaries[r].id,
                            time: m,
                            agent: ctx.pool[i],
                            other: ctx.pool[j],
                        }
                    })?;
                    touched[class_of[p] as usize] = true;
                }
            }
            let known = fold_all(&class_of, classes, &truth);
            for p in 0..going.len() {
                let c = class_of[p] as usize;
                if going[p].is_none() && touched[c] {
                    going[p] = Some(known[c]);
                }
            }
        }

        let mut next_states = Vec::with_capacity(states.len());
        for (r, s) in states.iter().enumerate() {
            let actions: Vec<Action> = (0..n)
                .map(|i| {
                    if going[point(r, i)] == Some(true) {
                        Action::Go
                    } else {
                        Action::Noop
                    }
                })
                .collect();
            for (i, &a) in actions.iter().enumerate() {
                if a == Action::Go {
                    entries.push(TableEntry {
                        agent: ctx.pool[i],
                        state: s.locals[i].clone(),
                        action: a,
                    });
                }
            }
            next_states.push(step_with_actions(ctx, s, &adversaries[r], actions).0);
        }
        states = next_states;
    }
    Ok(TableProtocol::new(
        format!("synthesized {}", program.name()),
        ctx.exchange,
        entries,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::{LanePos, Memory};
    use crate::topology::{validate_intersection, RawIntersection};
    use alloc::vec;
    use proptest::prelude::*;

    fn spec(n: u16, outs: &[u16], compat: Vec<(Move, Move)>) -> IntersectionSpec {
        validate_intersection(&RawIntersection {
            lanes_in: (1..=n).map(LaneId).collect(),
            lanes_out: outs.iter().copied().map(LaneId).collect(),
            compat,
        })
        .unwrap()
    }

    fn front(lane: u16, intent: u16, time: Time) -> SensorReading {
        SensorReading {
            front: true,
            lane: LanePos::Queued(LaneId(lane)),
            intent: Some(LaneId(intent)),
            time,
        }
    }

    fn with_memory(reading: SensorReading, heard: Vec<Move>) -> LocalState {
        LocalState {
            memory: Memory::Moves(heard),
            sensors: reading,
        }
    }

    #[test]
    fn traffic_light_follows_the_phase() {
        let s = spec(2, &[5], vec![]);
        let tl = traffic_light_protocol(&s);
        let local = |r| LocalState {
            memory: Memory::Unit,
            sensors: r,
        };
        assert_eq!(tl.act(AgentId(0), &local(front(1, 5, 2))), Action::Go);
        assert_eq!(tl.act(AgentId(0), &local(front(2, 5, 2))), Action::Noop);
        assert_eq!(tl.act(AgentId(0), &local(front(2, 5, 3))), Action::Go);
        let mut behind = front(1, 5, 2);
        behind.front = false;
        assert_eq!(tl.act(AgentId(0), &local(behind)), Action::Noop);
    }

    #[test]
    fn pos_empty_cases() {
        let s = spec(3, &[5], vec![]);
        assert!(pos_set_empty(&front(1, 5, 0), LaneId(1), &s)
            .unwrap()
            .moves
            .is_empty());
        assert_eq!(
            pos_set_empty(&front(2, 5, 0), LaneId(1), &s).unwrap().moves,
            vec![Move::new(1, 5)]
        );
        // Lane 2 contributes nothing: its only move conflicts with (1,5).
        let pos = pos_set_empty(&front(3, 5, 0), LaneId(1), &s).unwrap();
        assert_eq!(pos.moves, vec![Move::new(1, 5)]);
        assert_eq!(pos.stages.len(), 2);
        let mut behind = front(3, 5, 0);
        behind.front = false;
        assert_eq!(
            pos_set_empty(&behind, LaneId(1), &s),
            Err(ProtocolError::NotFront)
        );
    }

    #[test]
    fn p_empty_waits_behind_a_conflicting_higher_lane() {
        let s = spec(2, &[5], vec![]);
        let p = p_empty(&s, &NextFn::RoundRobin, Exchange::Empty).unwrap();
        let local = |r| LocalState {
            memory: Memory::Unit,
            sensors: r,
        };
        // next at time 0 is lane 1.
        assert_eq!(p.act(AgentId(0), &local(front(1, 5, 0))), Action::Go);
        assert_eq!(p.act(AgentId(0), &local(front(2, 5, 0))), Action::Noop);
        assert_eq!(p.act(AgentId(0), &local(front(2, 5, 1))), Action::Go);
        assert!(matches!(
            p_empty(&s, &NextFn::RoundRobin, Exchange::Intent),
            Err(ProtocolError::WrongExchange { .. })
        ));
    }

    #[test]
    fn pos_intent_cases() {
        let s = spec(
            3,
            &[5, 6],
            vec![
                (Move::new(1, 5), Move::new(3, 6)),
                (Move::new(2, 6), Move::new(3, 6)),
            ],
        );
        // Heard (1,5): only it enters from lane 1.
        let st = with_memory(front(2, 5, 0), vec![Move::new(1, 5)]);
        assert_eq!(
            pos_set_intent(&st, LaneId(1), &s).unwrap().moves,
            vec![Move::new(1, 5)]
        );
        // Heard (1,5) and (2,6), incompatible: lane 2 leaves Pos unchanged.
        let st = with_memory(front(3, 6, 0), vec![Move::new(1, 5), Move::new(2, 6)]);
        let pos = pos_set_intent(&st, LaneId(1), &s).unwrap();
        assert_eq!(pos.moves, vec![Move::new(1, 5)]);
        assert_eq!(pos.stage(LaneId(2)).unwrap(), pos.stage(LaneId(1)).unwrap());
        // Silent lane 2: all moves compatible with (1,5) are added; none are.
        let st = with_memory(front(3, 6, 0), vec![Move::new(1, 5)]);
        assert_eq!(
            pos_set_intent(&st, LaneId(1), &s).unwrap().moves,
            vec![Move::new(1, 5)]
        );
        // Nothing heard: lane 1 adds both of its moves.
        let st = with_memory(front(2, 6, 0), vec![]);
        assert_eq!(
            pos_set_intent(&st, LaneId(1), &s).unwrap().moves,
            vec![Move::new(1, 5), Move::new(1, 6)]
        );
    }

    #[test]
    fn p_intent_goes_at_next_regardless_of_memory() {
        let s = spec(2, &[5], vec![]);
        let p = p_intent(&s, &NextFn::RoundRobin, Exchange::Intent).unwrap();
        let st = with_memory(front(2, 5, 1), vec![Move::new(1, 5), Move::new(2, 5)]);
        assert_eq!(p.act(AgentId(0), &st), Action::Go);
        let st = with_memory(front(2, 5, 0), vec![]);
        assert_eq!(p.act(AgentId(0), &st), Action::Noop);
    }

    #[test]
    fn v_condition_needs_decided_higher_lanes() {
        let s = spec(2, &[5, 6], vec![(Move::new(1, 5), Move::new(2, 6))]);
        let moves = [Some(Move::new(1, 5)), Some(Move::new(2, 6))];
        let front = [true, true];
        let view = |going: &'static [Option<bool>]| PointView {
            moves: &moves,
            front: &front,
            going,
            sigma: &[],
            next: LaneId(1),
        };
        assert_eq!(
            v_condition(&s, &view(&[None, None]), 1, false),
            Err(Undecided(0))
        );
        assert_eq!(
            v_condition(&s, &view(&[Some(true), None]), 1, false),
            Ok(true)
        );
        // Agent 0 is at `next`: nothing ahead of it.
        assert_eq!(v_condition(&s, &view(&[None, None]), 0, false), Ok(true));
    }

    #[test]
    fn strict_vi_rejects_any_conflicting_permitted_move() {
        let s = spec(2, &[5, 6], vec![(Move::new(1, 5), Move::new(2, 6))]);
        let moves = [None, Some(Move::new(2, 6))];
        let front = [false, true];
        let going = [Some(false), None];
        let sigma = [Move::new(1, 6)];
        let view = PointView {
            moves: &moves,
            front: &front,
            going: &going,
            sigma: &sigma,
            next: LaneId(2),
        };
        assert_eq!(v_condition(&s, &view, 1, false), Ok(true));
        assert_eq!(v_condition(&s, &view, 1, true), Ok(false));
    }

    proptest! {
        #[test]
        fn pos_stages_grow_and_stay_compatible(seed in any::<u64>(), next in 1u16..4, own in 1u16..4, heard_mask in 0u8..8) {
            let lanes_in: Vec<LaneId> = (1..=3).map(LaneId).collect();
            let outs = [LaneId(7), LaneId(8)];
            let all: Vec<Move> = lanes_in.iter().flat_map(|&l| outs.iter().map(move |&o| Move { source: l, target: o })).collect();
            let mut compat = Vec::new();
            for (i, &a) in all.iter().enumerate() {
                for (j, &b) in all.iter().enumerate().skip(i + 1) {
                    if (seed >> ((i * 5 + j) % 64)) & 1 == 1 { compat.push((a, b)); }
                }
            }
            let s = validate_intersection(&RawIntersection { lanes_in, lanes_out: outs.to_vec(), compat }).unwrap();
            let reading = front(own, 7, 0);
            let heard: Vec<Move> = (1..=3u16).filter(|l| heard_mask >> (l - 1) & 1 == 1).map(|l| Move::new(l, 8)).collect();
            for pos in [pos_set_empty(&reading, LaneId(next), &s).unwrap(), pos_set_intent(&with_memory(reading, heard), LaneId(next), &s).unwrap()] {
                let mut prev: Vec<Move> = Vec::new();
                for (_, stage) in &pos.stages {
                    prop_assert!(prev.iter().all(|m| stage.contains(m)));
                    for m in stage.iter().filter(|m| !prev.contains(m)) {
                        prop_assert!(s.compatible_with_set(*m, &prev));
                    }
                    prev = stage.clone();
                }
                prop_assert_eq!(&pos.moves, &prev);
            }
        }
    }
}
