//! Line-delimited run traces. One record per point `(run, t)`; the round
//! fields describe round `t` and are empty at the horizon.
//!
//! Messages of round `t` are built after the move, from the readings at
//! `t + 1`, so `msgs_out` may name agents that first appear at `t + 1`.

use std::io::{self, Write};

use serde::Serialize;

use intersection_core::adversary::{AgentId, Time};
use intersection_core::exchange::Message;
use intersection_core::kernel::{Action, Run, System};
use intersection_core::topology::LaneId;

#[derive(Debug, Serialize)]
pub struct Queue<'a> {
    pub lane: LaneId,
    pub agents: &'a [AgentId],
}

#[derive(Debug, Serialize)]
pub struct AgentAction {
    pub agent: AgentId,
    pub action: Action,
}

#[derive(Debug, Serialize)]
pub struct Outgoing<'a> {
    pub agent: AgentId,
    pub msg: &'a Message,
}

#[derive(Debug, Serialize)]
pub struct Incoming<'a> {
    pub agent: AgentId,
    pub msgs: &'a [Message],
}

/// Field order is the serialization order.
#[derive(Debug, Serialize)]
pub struct TraceRecord<'a> {
    pub run: u64,
    pub t: Time,
    pub queues: Vec<Queue<'a>>,
    pub done: Vec<AgentId>,
    /// Queued agents only.
    pub actions: Vec<AgentAction>,
    pub msgs_out: Vec<Outgoing<'a>>,
    pub msgs_in: Vec<Incoming<'a>>,
}

pub fn records<'a>(system: &'a System, run: &'a Run) -> impl Iterator<Item = TraceRecord<'a>> + 'a {
    let pool = &system.context.pool;
    run.states.iter().enumerate().map(move |(t, state)| {
        let env = &state.env;
        let queues = env
            .queues
            .iter()
            .map(|(lane, agents)| Queue {
                lane: *lane,
                agents,
            })
            .collect();
        let (actions, msgs_out, msgs_in) = match run.rounds.get(t) {
            None => (Vec::new(), Vec::new(), Vec::new()),
            Some(round) => {
                let actions = pool
                    .iter()
                    .enumerate()
                    .filter(|&(_, &a)| env.slot_of(a).is_some())
                    .map(|(i, &agent)| AgentAction {
                        agent,
                        action: round.actions[i],
                    })
                    .collect();
                let out = pool
                    .iter()
                    .zip(&round.broadcasts)
                    .filter_map(|(&agent, msg)| msg.as_ref().map(|msg| Outgoing { agent, msg }))
                    .collect();
                let inc = pool
                    .iter()
                    .zip(&round.received)
                    .filter(|(_, msgs)| !msgs.is_empty())
                    .map(|(&agent, msgs)| Incoming { agent, msgs })
                    .collect();
                (actions, out, inc)
            }
        };
        TraceRecord {
            run: run.adversary.id,
            t: t as Time,
            queues,
            done: env.done.iter().copied().collect(),
            actions,
            msgs_out,
            msgs_in,
        }
    })
}

/// Writes every run of the system in adversary order.
pub fn write_trace<W: Write>(system: &System, mut out: W) -> io::Result<()> {
    for run in &system.runs {
        for record in records(system, run) {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use intersection_core::adversary::{enumerate_adversaries, Caps, FailureModel};
    use intersection_core::exchange::Exchange;
    use intersection_core::kernel::{generate_system, Context};
    use intersection_core::protocols::traffic_light_protocol;
    use intersection_core::topology::{validate_intersection, RawIntersection, TransmissionEnv};

    fn system() -> System {
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
            Exchange::Intent,
            FailureModel::NoFailures,
            [AgentId(0), AgentId(1)],
            2,
        );
        let advs = enumerate_adversaries(
            FailureModel::NoFailures,
            &ctx.pool,
            2,
            &spec,
            Caps::default(),
        )
        .unwrap();
        generate_system(&ctx, &traffic_light_protocol(&spec), &advs.adversaries).unwrap()
    }

    #[test]
    fn one_line_per_point_with_stable_key_order() {
        let sys = system();
        let mut buf = Vec::new();
        write_trace(&sys, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), sys.runs.len() * 3);
        for line in text.lines() {
            let keys = [
                "\"run\"",
                "\"t\"",
                "\"queues\"",
                "\"done\"",
                "\"actions\"",
                "\"msgs_out\"",
                "\"msgs_in\"",
            ];
            let at: Vec<usize> = keys.iter().map(|k| line.find(k).unwrap()).collect();
            assert!(at.windows(2).all(|w| w[0] < w[1]), "{line}");
        }
    }

    #[test]
    fn horizon_record_has_no_round() {
        let sys = system();
        let last = records(&sys, &sys.runs[0]).last().unwrap();
        assert_eq!(last.t, 2);
        assert!(last.actions.is_empty() && last.msgs_out.is_empty() && last.msgs_in.is_empty());
    }
}
