//! Property checkers over generated systems.
//!
//! Temporal checks are bounded by the horizon: `going` is defined only for
//! `m < horizon`, and anything that would need a later time is reported as
//! inconclusive rather than guessed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::adversary::{Adversary, AgentId, FailureModel, Time};
use crate::exchange::{Exchange, LanePos};
use crate::kernel::{generate_system, Action, ActionProtocol, Context, KernelError, System};
use crate::knowledge::{fold_all, fold_any, EpistemicModel};
use crate::policy::{NextFn, Policy, PolicyTable};
use crate::protocols::{kbp_actions, pos_set_intent, KbProgram};
use crate::topology::{LaneId, Move};
use crate::verdict::{Verdict, Witness};

pub use crate::knowledge::PointPredicate;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("the systems were generated from different adversary sets")]
    MismatchedAdversaries,
    #[error("the systems have different agent pools or horizons")]
    MismatchedContexts,
    #[error("check needs {needed}, context has {found}")]
    Precondition { needed: &'static str, found: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn agent_ids(system: &System, indices: impl IntoIterator<Item = usize>) -> Vec<AgentId> {
    indices
        .into_iter()
        .map(|i| system.context.pool[i])
        .collect()
}

/// GO sets, gotimes and front sets of every run, by pool index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoRecord {
    /// `[run][m]` for `m < horizon`.
    pub go_sets: Vec<Vec<Vec<usize>>>,
    /// `[run][agent]`; `None` when the agent has not gone by the horizon.
    pub gotimes: Vec<Vec<Option<Time>>>,
    /// `[run][m]` for `m ≤ horizon`.
    pub fronts: Vec<Vec<Vec<usize>>>,
}

impl GoRecord {
    pub fn of(system: &System) -> Self {
        let n = system.context.pool.len();
        let h = system.horizon();
        let mut go_sets = Vec::new();
        let mut gotimes = Vec::new();
        let mut fronts = Vec::new();
        for run in &system.runs {
            go_sets.push((0..h).map(|m| run.go_set(m).unwrap()).collect());
            gotimes.push((0..n).map(|i| run.gotime(i)).collect());
            fronts.push(
                (0..=h)
                    .map(|m| (0..n).filter(|&i| run.is_front(m, i)).collect())
                    .collect(),
            );
        }
        GoRecord {
            go_sets,
            gotimes,
            fronts,
        }
    }
}

/// Nobody goes unless at the front.
pub fn check_validity(system: &System) -> Verdict {
    let mut failures = Vec::new();
    for run in &system.runs {
        for (m, round) in run.rounds.iter().enumerate() {
            if !round.invalid_go.is_empty() {
                failures.push(Witness::at(
                    run.adversary.id,
                    m as Time,
                    round.invalid_go.clone(),
                    "go issued away from the front".into(),
                ));
            }
        }
    }
    Verdict::from_failures(true, failures)
}

/// No two agents going in the same round have incompatible moves.
pub fn check_safety(system: &System) -> Verdict {
    let spec = &system.context.spec;
    let mut failures = Vec::new();
    for run in &system.runs {
        for m in 0..system.horizon() {
            let go = run.go_set(m).unwrap();
            for (k, &i) in go.iter().enumerate() {
                for &j in &go[k + 1..] {
                    let (a, b) = (run.mv(m, i).unwrap(), run.mv(m, j).unwrap());
                    if !spec.compatible(a, b) {
                        failures.push(Witness::at(
                            run.adversary.id,
                            m,
                            agent_ids(system, [i, j]),
                            format!("{a} and {b} go together"),
                        ));
                    }
                }
            }
        }
    }
    Verdict::from_failures(true, failures)
}

/// Every agent goes within `bound` rounds of first reaching the front.
/// Agents whose deadline lies past the horizon and who have not gone are
/// inconclusive.
pub fn check_liveness_bounded(system: &System, bound: Time) -> Verdict {
    let h = system.horizon();
    let mut failures = Vec::new();
    let mut open = Vec::new();
    for run in &system.runs {
        for i in 0..system.context.pool.len() {
            let Some(first) = (0..=h).find(|&m| run.is_front(m, i)) else {
                continue;
            };
            let deadline = first + bound;
            match run.gotime(i) {
                Some(g) if g < deadline => {}
                Some(g) => failures.push(Witness::at(
                    run.adversary.id,
                    first,
                    agent_ids(system, [i]),
                    format!("front at {first}, goes only at {g}"),
                )),
                None if deadline <= h => failures.push(Witness::at(
                    run.adversary.id,
                    first,
                    agent_ids(system, [i]),
                    format!("front at {first}, still waiting at {deadline}"),
                )),
                None => open.push(Witness::at(
                    run.adversary.id,
                    first,
                    agent_ids(system, [i]),
                    format!("front at {first}, deadline {deadline} is past the horizon"),
                )),
            }
        }
    }
    Verdict::from_parts(true, failures, open)
}

/// The agent is at the front and its move is compatible with every move of
/// the agents going at `(run, m)`. Requires `m < horizon`.
pub fn safe_to_go(system: &System, run: usize, m: Time, agent: usize) -> bool {
    let r = &system.runs[run];
    let spec = &system.context.spec;
    let Some(own) = r.mv(m, agent) else {
        return false;
    };
    if !r.is_front(m, agent) {
        return false;
    }
    r.go_set(m)
        .unwrap()
        .into_iter()
        .filter(|&j| j != agent)
        .all(|j| spec.compatible(own, r.mv(m, j).unwrap()))
}

fn waiting_at(system: &System, run: usize, m: Time) -> Vec<usize> {
    let go = system.runs[run].go_set(m).unwrap();
    (0..system.context.pool.len())
        .filter(|&i| !go.contains(&i) && safe_to_go(system, run, m, i))
        .collect()
}

/// Fails with every point where a safe-to-go agent waits.
pub fn find_unnecessary_waiting(system: &System) -> Verdict {
    let mut found = Vec::new();
    for r in 0..system.runs.len() {
        for m in 0..system.horizon() {
            let waiting = waiting_at(system, r, m);
            if !waiting.is_empty() {
                found.push(Witness::at(
                    system.runs[r].adversary.id,
                    m,
                    agent_ids(system, waiting),
                    "safe to go but waits".into(),
                ));
            }
        }
    }
    Verdict::from_failures(true, found)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Comparison {
    /// Never worse and strictly better somewhere.
    FirstDominates,
    SecondDominates,
    Equal,
    Incomparable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ComparisonReport {
    pub outcome: Comparison,
    pub first_wins: Vec<Witness>,
    pub second_wins: Vec<Witness>,
    /// Lexicographic only: divergences where neither GO set contains the other.
    pub blocking: Vec<Witness>,
    /// Pairs the horizon leaves undecided; ignored by `outcome`.
    pub inconclusive: Vec<Witness>,
}

impl ComparisonReport {
    fn new(
        first_wins: Vec<Witness>,
        second_wins: Vec<Witness>,
        blocking: Vec<Witness>,
        inconclusive: Vec<Witness>,
    ) -> Self {
        let outcome = match (
            first_wins.is_empty(),
            second_wins.is_empty(),
            blocking.is_empty(),
        ) {
            (_, _, false) | (false, false, true) => Comparison::Incomparable,
            (false, true, true) => Comparison::FirstDominates,
            (true, false, true) => Comparison::SecondDominates,
            (true, true, true) => Comparison::Equal,
        };
        ComparisonReport {
            outcome,
            first_wins,
            second_wins,
            blocking,
            inconclusive,
        }
    }

    pub fn exact(&self) -> bool {
        self.inconclusive.is_empty()
    }
}

fn paired<'a>(p: &'a System, q: &'a System) -> Result<Vec<(usize, usize)>, VerifyError> {
    if p.context.pool != q.context.pool || p.horizon() != q.horizon() {
        return Err(VerifyError::MismatchedContexts);
    }
    if !p.adversary_ids().eq(q.adversary_ids()) {
        return Err(VerifyError::MismatchedAdversaries);
    }
    // Both are sorted by adversary id.
    Ok((0..p.runs.len()).map(|r| (r, r)).collect())
}

/// Pointwise comparison of gotimes over corresponding runs.
///
/// An agent that has gone on one side but not the other by the horizon is
/// decided: the waiting side's gotime is at least the horizon. Only agents
/// queued on both sides at the horizon are inconclusive.
pub fn compare_domination(p: &System, q: &System) -> Result<ComparisonReport, VerifyError> {
    let pairs = paired(p, q)?;
    let (mut pw, mut qw, mut open) = (Vec::new(), Vec::new(), Vec::new());
    let h = p.horizon();
    for (rp, rq) in pairs {
        let (a, b) = (&p.runs[rp], &q.runs[rq]);
        let id = a.adversary.id;
        for i in 0..p.context.pool.len() {
            let who = agent_ids(p, [i]);
            match (a.gotime(i), b.gotime(i)) {
                (Some(x), Some(y)) if x < y => {
                    pw.push(Witness::at(id, x, who, format!("goes at {x} vs {y}")))
                }
                (Some(x), Some(y)) if y < x => {
                    qw.push(Witness::at(id, y, who, format!("goes at {x} vs {y}")))
                }
                (Some(x), None) => pw.push(Witness::at(
                    id,
                    x,
                    who,
                    format!("goes at {x} vs not by {h}"),
                )),
                (None, Some(y)) => qw.push(Witness::at(
                    id,
                    y,
                    who,
                    format!("not by {h} vs goes at {y}"),
                )),
                (None, None) if matches!(a.local(h, i).sensors.lane, LanePos::Queued(_)) => open
                    .push(Witness::at(
                        id,
                        h,
                        who,
                        "queued on both sides at the horizon".into(),
                    )),
                _ => {}
            }
        }
    }
    Ok(ComparisonReport::new(pw, qw, Vec::new(), open))
}

/// First time before the horizon at which the GO sets differ.
fn first_divergence(
    p: &System,
    rp: usize,
    q: &System,
    rq: usize,
) -> Option<(Time, Vec<usize>, Vec<usize>)> {
    (0..p.horizon()).find_map(|m| {
        let (a, b) = (p.runs[rp].go_set(m).unwrap(), q.runs[rq].go_set(m).unwrap());
        (a != b).then_some((m, a, b))
    })
}

/// Lexicographic comparison: at the first divergence the side whose GO set
/// strictly contains the other's wins the pair.
pub fn compare_lex_domination(p: &System, q: &System) -> Result<ComparisonReport, VerifyError> {
    let pairs = paired(p, q)?;
    let (mut pw, mut qw, mut blocking) = (Vec::new(), Vec::new(), Vec::new());
    for (rp, rq) in pairs {
        let Some((m, a, b)) = first_divergence(p, rp, q, rq) else {
            continue;
        };
        let id = p.runs[rp].adversary.id;
        let sa: BTreeSet<usize> = a.iter().copied().collect();
        let sb: BTreeSet<usize> = b.iter().copied().collect();
        let detail = format!(
            "GO {:?} vs {:?}",
            agent_ids(p, a.clone()),
            agent_ids(q, b.clone())
        );
        let diff: BTreeSet<usize> = sa.symmetric_difference(&sb).copied().collect();
        let w = Witness::at(id, m, agent_ids(p, diff), detail);
        if sb.is_subset(&sa) {
            pw.push(w);
        } else if sa.is_subset(&sb) {
            qw.push(w);
        } else {
            blocking.push(w);
        }
    }
    Ok(ComparisonReport::new(pw, qw, blocking, Vec::new()))
}

/// Wherever `q`'s GO set strictly contains `p`'s at the first divergence,
/// some agent waits unnecessarily in `p` at that point. Needs `q` safe.
pub fn check_waiting_at_divergence(p: &System, q: &System) -> Result<Verdict, VerifyError> {
    let pairs = paired(p, q)?;
    let mut failures = Vec::new();
    for (rp, rq) in pairs {
        let Some((m, a, b)) = first_divergence(p, rp, q, rq) else {
            continue;
        };
        if a.iter().all(|i| b.contains(i)) && waiting_at(p, rp, m).is_empty() {
            failures.push(Witness::at(
                p.runs[rp].adversary.id,
                m,
                agent_ids(p, b),
                "other side goes more here, yet nobody waits unnecessarily".into(),
            ));
        }
    }
    Ok(Verdict::from_failures(true, failures))
}

/// The candidate's actions equal the program's at every point before the
/// horizon, knowledge being evaluated in the candidate's own system.
pub fn check_implements_in(
    system: &System,
    model: &EpistemicModel,
    program: &KbProgram,
) -> Verdict {
    let expected = kbp_actions(system, model, program);
    let mut failures = Vec::new();
    for (r, run) in system.runs.iter().enumerate() {
        for (m, round) in run.rounds.iter().enumerate() {
            for (i, (&got, &want)) in round.actions.iter().zip(&expected[r][m]).enumerate() {
                if got != want {
                    failures.push(Witness::at(
                        run.adversary.id,
                        m as Time,
                        agent_ids(system, [i]),
                        format!("protocol does {got:?}, program says {want:?}"),
                    ));
                }
            }
        }
    }
    Verdict::from_failures(true, failures)
}

pub fn check_implements<P: ActionProtocol + ?Sized>(
    ctx: &Context,
    adversaries: &[Adversary],
    candidate: &P,
    program: &KbProgram,
) -> Result<Verdict, VerifyError> {
    let system = generate_system(ctx, candidate, adversaries)?;
    let model = EpistemicModel::new(&system);
    Ok(check_implements_in(&system, &model, program))
}

/// The policy a protocol follows: each realized history maps to the moves of
/// the agents that go after it.
pub fn extract_policy(system: &System) -> Policy {
    let mut entries = Vec::new();
    for run in &system.runs {
        for m in 0..system.horizon() {
            let moves = run
                .go_set(m)
                .unwrap()
                .into_iter()
                .map(|i| run.mv(m, i).unwrap())
                .collect();
            entries.push((crate::adversary::history(&run.adversary, m), moves));
        }
    }
    Policy::Table(PolicyTable::from_entries(entries))
}

/// Queued agents always know which moves from their lane are permitted.
pub fn check_sigma_awareness(system: &System, model: &EpistemicModel, sigma: &Policy) -> Verdict {
    let mut seen: BTreeMap<u32, (Vec<Move>, usize, Time)> = BTreeMap::new();
    let mut failures = Vec::new();
    for (r, run) in system.runs.iter().enumerate() {
        for m in 0..=system.horizon() {
            let permitted = sigma.eval_at(&run.adversary, m);
            for i in 0..system.context.pool.len() {
                let LanePos::Queued(lane) = run.local(m, i).sensors.lane else {
                    continue;
                };
                let mine: Vec<Move> = permitted
                    .iter()
                    .copied()
                    .filter(|mv| mv.source == lane)
                    .collect();
                let c = model.class(r, m, i);
                let (first, fr, _) = seen.entry(c).or_insert((mine.clone(), r, m));
                if *first != mine {
                    failures.push(Witness::at(
                        run.adversary.id,
                        m,
                        agent_ids(system, [i]),
                        format!(
                            "permitted {mine:?} here but {first:?} in indistinguishable adversary {}",
                            system.runs[*fr].adversary.id
                        ),
                    ));
                }
            }
        }
    }
    Verdict::from_failures(true, failures)
}

/// Every agent always knows the `next` lane.
pub fn check_next_awareness(system: &System, model: &EpistemicModel, next: &NextFn) -> Verdict {
    let spec = &system.context.spec;
    let mut seen: BTreeMap<u32, LaneId> = BTreeMap::new();
    let mut failures = Vec::new();
    for (r, run) in system.runs.iter().enumerate() {
        for m in 0..=system.horizon() {
            let lane = next.eval_at(&run.adversary, m, spec);
            for i in 0..system.context.pool.len() {
                let first = *seen.entry(model.class(r, m, i)).or_insert(lane);
                if first != lane {
                    failures.push(Witness::at(
                        run.adversary.id,
                        m,
                        agent_ids(system, [i]),
                        format!("next is {lane} here but {first} in an indistinguishable point"),
                    ));
                }
            }
        }
    }
    Verdict::from_failures(true, failures)
}

/// Without failures, every front agent knows, for each lane, either that
/// some agent is at its front or that it is empty.
pub fn check_sufficiently_rich_knowledge(
    system: &System,
    model: &EpistemicModel,
) -> Result<Verdict, VerifyError> {
    if system.context.model != FailureModel::NoFailures {
        return Err(VerifyError::Precondition {
            needed: "NF",
            found: system.context.model.label().into(),
        });
    }
    let lanes = system.context.spec.lanes_in();
    let mut failures = Vec::new();
    for (k, &lane) in lanes.iter().enumerate() {
        let mut occupied = alloc::vec![false; model.class_ids().len()];
        for (r, run) in system.runs.iter().enumerate() {
            for m in 0..=system.horizon() {
                let busy = !run.states[m as usize].env.queues[k].1.is_empty();
                for i in 0..system.context.pool.len() {
                    occupied[model.index(r, m, i)] = busy;
                }
            }
        }
        let knows_busy = fold_all(model.class_ids(), model.class_count(), &occupied);
        let maybe_busy = fold_any(model.class_ids(), model.class_count(), &occupied);
        for (r, run) in system.runs.iter().enumerate() {
            for m in 0..=system.horizon() {
                for i in 0..system.context.pool.len() {
                    let c = model.class(r, m, i) as usize;
                    if run.is_front(m, i) && !knows_busy[c] && maybe_busy[c] {
                        failures.push(Witness::at(
                            run.adversary.id,
                            m,
                            agent_ids(system, [i]),
                            format!("does not know whether lane {lane} is occupied"),
                        ));
                    }
                }
            }
        }
    }
    Ok(Verdict::from_failures(true, failures))
}

fn require_intent_with_failures(system: &System) -> Result<(), VerifyError> {
    let ctx = &system.context;
    if ctx.exchange != Exchange::Intent || ctx.model == FailureModel::NoFailures {
        return Err(VerifyError::Precondition {
            needed: "intent exchange under CR or SO",
            found: format!("{} exchange under {}", ctx.exchange, ctx.model.label()),
        });
    }
    Ok(())
}

/// Front agents at the same point remember the same moves.
pub fn check_front_memory_agreement(system: &System) -> Result<Verdict, VerifyError> {
    require_intent_with_failures(system)?;
    let mut failures = Vec::new();
    for run in &system.runs {
        for (m, state) in run.states.iter().enumerate() {
            let fronts: Vec<usize> = (0..state.locals.len())
                .filter(|&i| state.locals[i].sensors.front)
                .collect();
            for w in fronts.windows(2) {
                if state.locals[w[0]].memory != state.locals[w[1]].memory {
                    failures.push(Witness::at(
                        run.adversary.id,
                        m as Time,
                        agent_ids(system, [w[0], w[1]]),
                        "front agents remember different moves".into(),
                    ));
                }
            }
        }
    }
    Ok(Verdict::from_failures(true, failures))
}

/// For each front agent and move from a lane in `[next, lane_i)`: the move
/// is in `Pos_i` iff the agent considers it possible that some front agent
/// makes that move this round.
pub fn check_pos_knowledge(
    system: &System,
    model: &EpistemicModel,
    next: &NextFn,
) -> Result<Verdict, VerifyError> {
    require_intent_with_failures(system)?;
    let spec = &system.context.spec;
    let n = system.context.pool.len();
    // Moves some going front agent makes, per class, over the class.
    let mut possible: BTreeMap<u32, BTreeSet<Move>> = BTreeMap::new();
    let going_moves = |r: usize, m: Time| -> BTreeSet<Move> {
        let run = &system.runs[r];
        run.go_set(m)
            .unwrap()
            .into_iter()
            .map(|j| run.mv(m, j).unwrap())
            .collect()
    };
    let mut failures = Vec::new();
    for (r, run) in system.runs.iter().enumerate() {
        for m in 0..system.horizon() {
            let lane_next = next.eval_at(&run.adversary, m, spec);
            for i in 0..n {
                let local = run.local(m, i);
                let Ok(pos) = pos_set_intent(local, lane_next, spec) else {
                    continue;
                };
                let own = local.sensors.lane.lane().unwrap();
                let c = model.class(r, m, i);
                let maybe = possible.entry(c).or_insert_with(|| {
                    model
                        .members(c)
                        .iter()
                        .flat_map(|&(r2, t)| going_moves(r2 as usize, t))
                        .collect()
                });
                for lane in spec.cyclic_interval(lane_next, own) {
                    for mv in spec.moves_from(lane) {
                        let in_pos = pos.moves.contains(&mv);
                        if in_pos != maybe.contains(&mv) {
                            failures.push(Witness::at(
                                run.adversary.id,
                                m,
                                agent_ids(system, [i]),
                                format!(
                                    "{mv}: in Pos = {in_pos}, considered possible = {}",
                                    !in_pos
                                ),
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(Verdict::from_failures(true, failures))
}

/// Corresponding runs pass through the same environment states and every
/// agent takes the same action at every point.
pub fn check_behavioral_equivalence(p: &System, q: &System) -> Result<Verdict, VerifyError> {
    let pairs = paired(p, q)?;
    let mut failures = Vec::new();
    for (rp, rq) in pairs {
        let (a, b) = (&p.runs[rp], &q.runs[rq]);
        let differs = (0..p.horizon()).find(|&m| {
            let (x, y) = (&a.rounds[m as usize], &b.rounds[m as usize]);
            let act = |v: &[Action], i: usize| v[i] == Action::Go && a.is_front(m, i);
            (0..p.context.pool.len()).any(|i| act(&x.actions, i) != act(&y.actions, i))
                || x.invalid_go != y.invalid_go
        });
        if let Some(m) = differs {
            failures.push(Witness::at(
                a.adversary.id,
                m,
                Vec::new(),
                "actions differ".into(),
            ));
        }
    }
    Ok(Verdict::from_failures(true, failures))
}
