//! Indistinguishability classes and the knowledge operator over a finite
//! system.
//!
//! Agent `i` cannot tell two points apart when its local states there are
//! equal. Every local state carries the time, so classes never mix times.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::adversary::Time;
use crate::exchange::LocalState;
use crate::kernel::System;

/// A property of a point `(run, m)` of a system.
pub trait PointPredicate {
    fn holds(&self, system: &System, run: usize, m: Time) -> bool;
}

impl<F: Fn(&System, usize, Time) -> bool> PointPredicate for F {
    fn holds(&self, system: &System, run: usize, m: Time) -> bool {
        self(system, run, m)
    }
}

/// Numbers the distinct `(agent, local state)` keys in iteration order.
pub fn group_classes<'a>(keys: impl Iterator<Item = (usize, &'a LocalState)>) -> (Vec<u32>, usize) {
    let mut ids: BTreeMap<(usize, &LocalState), u32> = BTreeMap::new();
    let mut out = Vec::new();
    for key in keys {
        let next = ids.len() as u32;
        out.push(*ids.entry(key).or_insert(next));
    }
    (out, ids.len())
}

/// AND of `truth` within each class.
pub fn fold_all(class_of: &[u32], classes: usize, truth: &[bool]) -> Vec<bool> {
    let mut acc = alloc::vec![true; classes];
    for (&c, &t) in class_of.iter().zip(truth) {
        acc[c as usize] &= t;
    }
    acc
}

/// OR of `truth` within each class.
pub fn fold_any(class_of: &[u32], classes: usize, truth: &[bool]) -> Vec<bool> {
    let mut acc = alloc::vec![false; classes];
    for (&c, &t) in class_of.iter().zip(truth) {
        acc[c as usize] |= t;
    }
    acc
}

/// The indistinguishability partition of every point of a system.
///
/// Points are flattened as `(run * (horizon + 1) + m) * agents + agent`.
#[derive(Debug, Clone)]
pub struct EpistemicModel {
    agents: usize,
    levels: usize,
    class_of: Vec<u32>,
    members: Vec<Vec<(u32, Time)>>,
}

impl EpistemicModel {
    pub fn new(system: &System) -> Self {
        let agents = system.context.pool.len();
        let levels = system.horizon() as usize + 1;
        let keys = system
            .runs
            .iter()
            .flat_map(|run| run.states.iter().flat_map(|s| s.locals.iter().enumerate()));
        let (class_of, classes) = group_classes(keys);
        let mut members = alloc::vec![Vec::new(); classes];
        for (flat, &c) in class_of.iter().enumerate() {
            let point = flat / agents;
            members[c as usize].push(((point / levels) as u32, (point % levels) as Time));
        }
        EpistemicModel {
            agents,
            levels,
            class_of,
            members,
        }
    }

    pub fn index(&self, run: usize, m: Time, agent: usize) -> usize {
        (run * self.levels + m as usize) * self.agents + agent
    }

    pub fn class(&self, run: usize, m: Time, agent: usize) -> u32 {
        self.class_of[self.index(run, m, agent)]
    }

    pub fn class_count(&self) -> usize {
        self.members.len()
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_of
    }

    /// Points of a class as `(run, m)`.
    pub fn members(&self, class: u32) -> &[(u32, Time)] {
        &self.members[class as usize]
    }

    /// `K_agent φ` at `(run, m)`.
    pub fn knows<P: PointPredicate + ?Sized>(
        &self,
        system: &System,
        run: usize,
        m: Time,
        agent: usize,
        phi: &P,
    ) -> bool {
        self.members(self.class(run, m, agent))
            .iter()
            .all(|&(r, t)| phi.holds(system, r as usize, t))
    }

    /// `¬K_agent ¬φ` at `(run, m)`.
    pub fn considers_possible<P: PointPredicate + ?Sized>(
        &self,
        system: &System,
        run: usize,
        m: Time,
        agent: usize,
        phi: &P,
    ) -> bool {
        self.members(self.class(run, m, agent))
            .iter()
            .any(|&(r, t)| phi.holds(system, r as usize, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{enumerate_adversaries, AgentId, Caps, FailureModel};
    use crate::exchange::{Exchange, LanePos};
    use crate::kernel::{generate_system, Action, ActionProtocol, Context};
    use crate::topology::{validate_intersection, LaneId, RawIntersection, TransmissionEnv};
    use alloc::string::{String, ToString};
    use alloc::vec;

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

    fn system(exchange: Exchange) -> System {
        let spec = validate_intersection(&RawIntersection {
            lanes_in: vec![LaneId(1), LaneId(2)],
            lanes_out: vec![LaneId(3)],
            compat: vec![],
        })
        .unwrap();
        let env = TransmissionEnv::front_only(&spec);
        let ctx = Context::new(
            spec.clone(),
            env,
            exchange,
            FailureModel::NoFailures,
            [AgentId(0), AgentId(1)],
            3,
        );
        let advs = enumerate_adversaries(
            FailureModel::NoFailures,
            &ctx.pool,
            3,
            &spec,
            Caps::default(),
        )
        .unwrap();
        generate_system(&ctx, &FrontGoes, &advs.adversaries).unwrap()
    }

    #[test]
    fn local_facts_are_known_exactly_when_true() {
        let sys = system(Exchange::Empty);
        let model = EpistemicModel::new(&sys);
        for r in 0..sys.runs.len() {
            for m in 0..=3 {
                for i in 0..2 {
                    let front = |s: &System, r: usize, t: Time| s.runs[r].is_front(t, i);
                    assert_eq!(
                        model.knows(&sys, r, m, i, &front),
                        sys.runs[r].is_front(m, i)
                    );
                    let not_front = |s: &System, r: usize, t: Time| !s.runs[r].is_front(t, i);
                    assert_eq!(
                        model.knows(&sys, r, m, i, &not_front),
                        !sys.runs[r].is_front(m, i)
                    );
                }
            }
        }
    }

    #[test]
    fn knowledge_is_veridical() {
        let sys = system(Exchange::Intent);
        let model = EpistemicModel::new(&sys);
        let other_queued =
            |s: &System, r: usize, t: Time| s.runs[r].local(t, 1).sensors.lane != LanePos::Absent;
        for r in 0..sys.runs.len() {
            for m in 0..=3 {
                if model.knows(&sys, r, m, 0, &other_queued) {
                    assert!(other_queued(&sys, r, m));
                }
            }
        }
    }

    #[test]
    fn intent_lets_a_front_agent_learn_the_other_front() {
        let sys = system(Exchange::Intent);
        let model = EpistemicModel::new(&sys);
        let empty = EpistemicModel::new(&system(Exchange::Empty));
        let other_front = |s: &System, r: usize, t: Time| s.runs[r].is_front(t, 1);
        let mut learned = 0;
        for r in 0..sys.runs.len() {
            for m in 0..=3 {
                if sys.runs[r].is_front(m, 0) && sys.runs[r].is_front(m, 1) {
                    assert!(model.knows(&sys, r, m, 0, &other_front));
                    learned += 1;
                }
            }
        }
        assert!(learned > 0);
        // Silent agents never know about each other.
        let silent = system(Exchange::Empty);
        for r in 0..silent.runs.len() {
            for m in 0..=3 {
                assert!(!empty.knows(&silent, r, m, 0, &other_front));
            }
        }
    }
}
