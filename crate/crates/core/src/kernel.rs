//! The round transition and run/system generation.
//!
//! A round runs in a fixed order: agents pick actions from their local
//! states, fronts that go are dequeued, new arrivals are enqueued, sensors
//! are read, messages are built from the new readings, receptions are
//! computed from the new queue positions, and memories are updated from the
//! old local states.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::adversary::{Adversary, AgentId, FailureModel, Time};
use crate::exchange::{sensor_read, Exchange, LocalState, Message, SensorReading};
use crate::topology::{IntersectionSpec, LaneId, Move, Slot, TransmissionEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Action {
    Go,
    Noop,
}

/// Everything a protocol may observe is its own local state.
pub trait ActionProtocol {
    fn name(&self) -> String;
    fn act(&self, agent: AgentId, local: &LocalState) -> Action;

    /// The exchange whose local states `act` understands; `None` for any.
    fn exchange(&self) -> Option<Exchange> {
        None
    }
}

impl<P: ActionProtocol + ?Sized> ActionProtocol for &P {
    fn name(&self) -> String {
        (**self).name()
    }

    fn act(&self, agent: AgentId, local: &LocalState) -> Action {
        (**self).act(agent, local)
    }

    fn exchange(&self) -> Option<Exchange> {
        (**self).exchange()
    }
}

/// An intersection context truncated to a finite agent pool and horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub spec: IntersectionSpec,
    pub env: TransmissionEnv,
    pub exchange: Exchange,
    pub model: FailureModel,
    /// Sorted, duplicate free.
    pub pool: Vec<AgentId>,
    pub horizon: Time,
}

impl Context {
    pub fn new(
        spec: IntersectionSpec,
        env: TransmissionEnv,
        exchange: Exchange,
        model: FailureModel,
        pool: impl IntoIterator<Item = AgentId>,
        horizon: Time,
    ) -> Self {
        let mut pool: Vec<AgentId> = pool.into_iter().collect();
        pool.sort();
        pool.dedup();
        Context {
            spec,
            env,
            exchange,
            model,
            pool,
            horizon,
        }
    }

    pub fn agent_index(&self, agent: AgentId) -> Option<usize> {
        self.pool.binary_search(&agent).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EnvState {
    pub time: Time,
    /// One queue per approach lane, in priority order; front first.
    pub queues: Vec<(LaneId, Vec<AgentId>)>,
    pub done: BTreeSet<AgentId>,
}

impl EnvState {
    pub fn empty(lanes_in: &[LaneId]) -> Self {
        EnvState {
            time: 0,
            queues: lanes_in.iter().map(|&l| (l, Vec::new())).collect(),
            done: BTreeSet::new(),
        }
    }

    pub fn slot_of(&self, agent: AgentId) -> Option<Slot> {
        self.queues.iter().find_map(|(lane, q)| {
            q.iter().position(|&a| a == agent).map(|p| Slot {
                lane: *lane,
                position: p as u32,
            })
        })
    }

    pub fn front_of(&self, lane: LaneId) -> Option<AgentId> {
        self.queues
            .iter()
            .find(|(l, _)| *l == lane)
            .and_then(|(_, q)| q.first().copied())
    }

    /// Agents at the front of some queue, in lane priority order.
    pub fn fronts(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.queues.iter().filter_map(|(_, q)| q.first().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalState {
    pub env: EnvState,
    /// Indexed like `Context::pool`.
    pub locals: Vec<LocalState>,
}

impl GlobalState {
    pub fn initial(ctx: &Context, adversary: &Adversary) -> Self {
        let env = EnvState::empty(ctx.spec.lanes_in());
        let locals = ctx
            .pool
            .iter()
            .map(|&a| LocalState {
                memory: ctx.exchange.initial_memory(),
                sensors: sensor_read(&env, &adversary.schedule, a),
            })
            .collect();
        GlobalState { env, locals }
    }

    pub fn reading(&self, index: usize) -> &SensorReading {
        &self.locals[index].sensors
    }
}

/// What happened during one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundRecord {
    /// The action each agent's protocol chose, indexed like the pool.
    pub actions: Vec<Action>,
    /// Agents that chose `go` while not at the front; treated as `noop`.
    pub invalid_go: Vec<AgentId>,
    pub broadcasts: Vec<Option<Message>>,
    /// Sorted and deduplicated.
    pub received: Vec<Vec<Message>>,
}

/// Runs one round given the actions already chosen by every agent.
pub fn step_with_actions(
    ctx: &Context,
    state: &GlobalState,
    adversary: &Adversary,
    actions: Vec<Action>,
) -> (GlobalState, RoundRecord) {
    let m = state.env.time;
    let mut env = state.env.clone();
    env.time = m + 1;

    let mut invalid_go = Vec::new();
    for (idx, &agent) in ctx.pool.iter().enumerate() {
        if actions[idx] == Action::Go && !state.reading(idx).front {
            invalid_go.push(agent);
        }
    }
    for (lane, queue) in env.queues.iter_mut() {
        if let Some(&front) = queue.first() {
            let idx = ctx
                .agent_index(front)
                .expect("queued agents come from the pool");
            if actions[idx] == Action::Go {
                queue.remove(0);
                env.done.insert(front);
            }
        }
        if let Some(arriving) = adversary.schedule.arriving(m + 1, *lane) {
            if ctx.agent_index(arriving).is_some() {
                queue.push(arriving);
            }
        }
    }

    let readings: Vec<SensorReading> = ctx
        .pool
        .iter()
        .map(|&a| sensor_read(&env, &adversary.schedule, a))
        .collect();
    let broadcasts: Vec<Option<Message>> = ctx
        .pool
        .iter()
        .enumerate()
        .map(|(idx, &a)| {
            ctx.exchange
                .message(a, &state.locals[idx], actions[idx], &readings[idx])
        })
        .collect();
    let slots: Vec<Option<Slot>> = ctx.pool.iter().map(|&a| env.slot_of(a)).collect();

    let mut received = Vec::with_capacity(ctx.pool.len());
    for (idx, &agent) in ctx.pool.iter().enumerate() {
        let mut inbox = Vec::new();
        if let (Some(to), true) = (slots[idx], adversary.failures.receives(m, agent)) {
            for (jdx, &sender) in ctx.pool.iter().enumerate() {
                let (Some(msg), Some(from)) = (&broadcasts[jdx], slots[jdx]) else {
                    continue;
                };
                if adversary.failures.transmits(m, sender) && ctx.env.reaches(from, to) {
                    inbox.push(msg.clone());
                }
            }
        }
        inbox.sort();
        inbox.dedup();
        received.push(inbox);
    }

    let locals = ctx
        .pool
        .iter()
        .enumerate()
        .map(|(idx, _)| LocalState {
            memory: ctx
                .exchange
                .update(&state.locals[idx], actions[idx], &received[idx]),
            sensors: readings[idx],
        })
        .collect();
    (
        GlobalState { env, locals },
        RoundRecord {
            actions,
            invalid_go,
            broadcasts,
            received,
        },
    )
}

pub fn step<P: ActionProtocol + ?Sized>(
    ctx: &Context,
    state: &GlobalState,
    protocol: &P,
    adversary: &Adversary,
) -> (GlobalState, RoundRecord) {
    let actions = ctx
        .pool
        .iter()
        .zip(&state.locals)
        .map(|(&a, local)| protocol.act(a, local))
        .collect();
    step_with_actions(ctx, state, adversary, actions)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub adversary: Adversary,
    /// `horizon + 1` states.
    pub states: Vec<GlobalState>,
    /// `horizon` rounds; `rounds[m]` leads from `states[m]` to `states[m + 1]`.
    pub rounds: Vec<RoundRecord>,
}

impl Run {
    pub fn horizon(&self) -> Time {
        self.rounds.len() as Time
    }

    pub fn local(&self, m: Time, index: usize) -> &LocalState {
        &self.states[m as usize].locals[index]
    }

    pub fn is_front(&self, m: Time, index: usize) -> bool {
        self.states[m as usize].locals[index].sensors.front
    }

    /// Whether the agent goes in round `m + 1`: front at `m`, not front at
    /// `m + 1`. `None` at the horizon.
    pub fn going(&self, m: Time, index: usize) -> Option<bool> {
        if m >= self.horizon() {
            return None;
        }
        Some(self.is_front(m, index) && !self.is_front(m + 1, index))
    }

    /// Pool indices of the agents going in round `m + 1`.
    pub fn go_set(&self, m: Time) -> Option<Vec<usize>> {
        if m >= self.horizon() {
            return None;
        }
        let n = self.states[0].locals.len();
        Some((0..n).filter(|&i| self.going(m, i) == Some(true)).collect())
    }

    /// The time the agent goes, if it does so before the horizon.
    pub fn gotime(&self, index: usize) -> Option<Time> {
        (0..self.horizon()).find(|&m| self.going(m, index) == Some(true))
    }

    pub fn mv(&self, m: Time, index: usize) -> Option<Move> {
        self.states[m as usize].locals[index].sensors.mv()
    }
}

pub fn generate_run<P: ActionProtocol + ?Sized>(
    ctx: &Context,
    protocol: &P,
    adversary: &Adversary,
) -> Run {
    let mut states = Vec::with_capacity(ctx.horizon as usize + 1);
    let mut rounds = Vec::with_capacity(ctx.horizon as usize);
    states.push(GlobalState::initial(ctx, adversary));
    for _ in 0..ctx.horizon {
        let (next, record) = step(ctx, states.last().unwrap(), protocol, adversary);
        states.push(next);
        rounds.push(record);
    }
    Run {
        adversary: adversary.clone(),
        states,
        rounds,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("adversary id {0} appears more than once")]
    DuplicateAdversary(u64),
}

/// All runs of one protocol over one adversary set.
#[derive(Debug, Clone)]
pub struct System {
    pub context: Context,
    pub protocol: String,
    /// In adversary id order.
    pub runs: Vec<Run>,
    by_adversary: BTreeMap<u64, usize>,
}

impl System {
    pub fn from_runs(
        context: Context,
        protocol: String,
        mut runs: Vec<Run>,
    ) -> Result<Self, KernelError> {
        runs.sort_by_key(|r| r.adversary.id);
        let mut by_adversary = BTreeMap::new();
        for (i, run) in runs.iter().enumerate() {
            if by_adversary.insert(run.adversary.id, i).is_some() {
                return Err(KernelError::DuplicateAdversary(run.adversary.id));
            }
        }
        Ok(System {
            context,
            protocol,
            runs,
            by_adversary,
        })
    }

    /// The run with the given adversary: the corresponding run across systems.
    pub fn run_for(&self, adversary_id: u64) -> Option<&Run> {
        self.by_adversary.get(&adversary_id).map(|&i| &self.runs[i])
    }

    pub fn adversary_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.by_adversary.keys().copied()
    }

    pub fn horizon(&self) -> Time {
        self.context.horizon
    }
}

pub fn generate_system<P: ActionProtocol + ?Sized>(
    ctx: &Context,
    protocol: &P,
    adversaries: &[Adversary],
) -> Result<System, KernelError> {
    let mut ids = BTreeSet::new();
    for a in adversaries {
        if !ids.insert(a.id) {
            return Err(KernelError::DuplicateAdversary(a.id));
        }
    }
    let runs = adversaries
        .iter()
        .map(|a| generate_run(ctx, protocol, a))
        .collect();
    System::from_runs(ctx.clone(), protocol.name(), runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{Arrival, ArrivalSchedule, FailurePattern};
    use crate::exchange::{LanePos, Memory};
    use crate::topology::{validate_intersection, RawIntersection};
    use alloc::string::ToString;
    use alloc::vec;

    struct Always(Action);

    impl ActionProtocol for Always {
        fn name(&self) -> String {
            "always".to_string()
        }
        fn act(&self, _: AgentId, _: &LocalState) -> Action {
            self.0
        }
    }

    struct FrontGoes;

    impl ActionProtocol for FrontGoes {
        fn name(&self) -> String {
            "front-goes".to_string()
        }
        fn act(&self, _: AgentId, local: &LocalState) -> Action {
            if local.sensors.front {
                Action::Go
            } else {
                Action::Noop
            }
        }
    }

    fn ctx(exchange: Exchange, model: FailureModel, pool: u16, horizon: Time) -> Context {
        let spec = validate_intersection(&RawIntersection {
            lanes_in: vec![LaneId(1), LaneId(2)],
            lanes_out: vec![LaneId(5), LaneId(6)],
            compat: vec![],
        })
        .unwrap();
        let env = TransmissionEnv::front_only(&spec);
        Context::new(spec, env, exchange, model, (0..pool).map(AgentId), horizon)
    }

    fn adversary(id: u64, arrivals: &[(u16, Time, u16, u16)]) -> Adversary {
        Adversary {
            id,
            schedule: ArrivalSchedule {
                arrivals: arrivals
                    .iter()
                    .map(|&(a, t, l, o)| {
                        (
                            AgentId(a),
                            Arrival {
                                time: t,
                                lane: LaneId(l),
                                intent: LaneId(o),
                            },
                        )
                    })
                    .collect(),
            },
            failures: FailurePattern::default(),
        }
    }

    #[test]
    fn idle_round_only_advances_time() {
        let c = ctx(Exchange::Empty, FailureModel::NoFailures, 2, 3);
        let a = adversary(0, &[]);
        let s0 = GlobalState::initial(&c, &a);
        let (s1, rec) = step(&c, &s0, &Always(Action::Noop), &a);
        assert_eq!(s1.env.time, 1);
        assert!(s1.env.queues.iter().all(|(_, q)| q.is_empty()));
        assert!(rec.invalid_go.is_empty());
    }

    #[test]
    fn dequeue_happens_before_enqueue() {
        let c = ctx(Exchange::Empty, FailureModel::NoFailures, 2, 3);
        let a = adversary(0, &[(0, 1, 1, 5), (1, 2, 1, 6)]);
        let run = generate_run(&c, &FrontGoes, &a);
        assert_eq!(run.states[1].env.front_of(LaneId(1)), Some(AgentId(0)));
        assert!(run.states[2].env.done.contains(&AgentId(0)));
        assert_eq!(run.states[2].env.front_of(LaneId(1)), Some(AgentId(1)));
        assert_eq!(run.gotime(0), Some(1));
    }

    #[test]
    fn arrival_first_appears_at_its_time() {
        let c = ctx(Exchange::Empty, FailureModel::NoFailures, 1, 2);
        let a = adversary(0, &[(0, 1, 2, 5)]);
        let run = generate_run(&c, &Always(Action::Noop), &a);
        assert_eq!(run.states[0].locals[0].sensors.lane, LanePos::Absent);
        assert_eq!(
            run.states[1].locals[0].sensors.lane,
            LanePos::Queued(LaneId(2))
        );
        assert!(run.states[1].locals[0].sensors.front);
    }

    #[test]
    fn horizon_zero_has_only_the_initial_state() {
        let c = ctx(Exchange::Empty, FailureModel::NoFailures, 1, 0);
        let run = generate_run(&c, &Always(Action::Noop), &adversary(0, &[(0, 1, 2, 5)]));
        assert_eq!(run.states.len(), 1);
        assert!(run.rounds.is_empty());
    }

    #[test]
    fn non_front_go_is_flagged_and_ignored() {
        let c = ctx(Exchange::Empty, FailureModel::NoFailures, 2, 2);
        let a = adversary(0, &[(0, 1, 1, 5), (1, 1, 2, 5)]);
        let run = generate_run(&c, &Always(Action::Go), &a);
        // At time 0 nobody is queued: both `go`s are invalid.
        assert_eq!(run.rounds[0].invalid_go, vec![AgentId(0), AgentId(1)]);
        assert_eq!(run.states[1].env.fronts().count(), 2);
        assert!(run.rounds[1].invalid_go.is_empty());
    }

    #[test]
    fn send_omission_reception_is_atomic_at_the_front() {
        // Fronts 0 (lane 1) and 1 (lane 2); 0's transmitter fails in round 1.
        let c = ctx(Exchange::Intent, FailureModel::SendOmission, 2, 1);
        let mut a = adversary(0, &[(0, 1, 1, 5), (1, 1, 2, 6)]);
        a.failures.transmit_failures.insert((0, AgentId(0)));
        let run = generate_run(&c, &Always(Action::Noop), &a);
        let expected = vec![Message::Move(Move::new(2, 6))];
        assert_eq!(run.rounds[0].received[0], expected);
        assert_eq!(run.rounds[0].received[1], expected);
        assert_eq!(
            run.states[1].locals[0].memory,
            Memory::Moves(vec![Move::new(2, 6)])
        );
    }

    #[test]
    fn runs_are_deterministic_and_systems_correspond() {
        let c = ctx(Exchange::Intent, FailureModel::NoFailures, 2, 3);
        let advs = [
            adversary(0, &[(0, 1, 1, 5)]),
            adversary(1, &[(1, 2, 2, 6)]),
            adversary(2, &[]),
        ];
        let s1 = generate_system(&c, &FrontGoes, &advs).unwrap();
        let s2 = generate_system(&c, &Always(Action::Noop), &advs).unwrap();
        assert_eq!(s1.runs.len(), 3);
        for id in s1.adversary_ids() {
            let (r, r2) = (s1.run_for(id).unwrap(), s2.run_for(id).unwrap());
            assert_eq!(r.states[0], r2.states[0]);
        }
        assert_eq!(
            generate_run(&c, &FrontGoes, &advs[0]),
            generate_run(&c, &FrontGoes, &advs[0])
        );
        let dup = [advs[0].clone(), advs[0].clone()];
        assert_eq!(
            generate_system(&c, &FrontGoes, &dup).unwrap_err(),
            KernelError::DuplicateAdversary(0)
        );
    }
}
