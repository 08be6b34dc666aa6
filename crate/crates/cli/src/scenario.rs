//! Scenario files: one JSON document per intersection context plus the
//! protocols to run in it.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};

use intersection_core::adversary::{
    enumerate_adversaries, validate_adversary, Adversary, AgentId, Arrival, ArrivalSchedule, Caps,
    FailureModel, FailurePattern, Time,
};
use intersection_core::exchange::Exchange;
use intersection_core::kernel::{ActionProtocol, Context};
use intersection_core::policy::{
    cyclic_policy, priority_policy, traffic_light_policy, NextFn, Policy,
};
use intersection_core::protocols::{
    p_empty, p_intent, synthesize_implementation, traffic_light_protocol, KbProgram, TableProtocol,
};
use intersection_core::topology::{
    validate_intersection, validate_transmission_env, IntersectionSpec, LaneId, Move,
    RawIntersection, RawTransmission, Slot,
};

/// A move written as `[in_lane, out_lane]`.
pub type MoveRow = [u16; 2];
/// A queue slot written as `[lane, position]`.
pub type SlotRow = [u32; 2];

fn mv(row: MoveRow) -> Move {
    Move::new(row[0], row[1])
}

fn slot(row: SlotRow) -> Slot {
    Slot {
        lane: LaneId(row[0] as u16),
        position: row[1],
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionSection {
    pub lanes_in: Vec<u16>,
    pub lanes_out: Vec<u16>,
    /// Compatible pairs; symmetry is implied.
    #[serde(default)]
    pub compat: Vec<[MoveRow; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionSection {
    #[serde(default)]
    pub reach: Vec<[SlotRow; 2]>,
    #[serde(default)]
    pub absent: Vec<[SlotRow; 2]>,
    #[serde(default)]
    pub max_depth: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalRow {
    pub agent: u16,
    pub time: Time,
    pub lane: u16,
    pub intent: u16,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitAdversary {
    pub id: u64,
    pub arrivals: Vec<ArrivalRow>,
    /// `[time, agent]` pairs whose transmitter is silent.
    #[serde(default)]
    pub transmit_failures: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySection {
    pub pool: Vec<u16>,
    /// When absent, every adversary of the failure model is enumerated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<ExplicitAdversary>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySection {
    #[default]
    Empty,
    TrafficLight,
    Cyclic {
        cells: Vec<Vec<MoveRow>>,
    },
    Priority {
        agents: Vec<u16>,
        cells: Vec<Vec<MoveRow>>,
    },
    /// A policy file written by `extract`, relative to the scenario.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextSection {
    #[default]
    RoundRobin,
    CycleHeld(u32),
    Constant(u16),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramKind {
    #[default]
    BigP,
    Psigma,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolSel {
    TrafficLight,
    PEmpty,
    PIntent,
    /// The unique implementation of the scenario's program.
    Synthesized,
    /// A table file written by `synthesize`, relative to the scenario.
    Table(PathBuf),
}

impl ProtocolSel {
    /// A file-name-safe label.
    pub fn label(&self) -> String {
        match self {
            ProtocolSel::TrafficLight => "traffic_light".into(),
            ProtocolSel::PEmpty => "p_empty".into(),
            ProtocolSel::PIntent => "p_intent".into(),
            ProtocolSel::Synthesized => "synthesized".into(),
            ProtocolSel::Table(p) => {
                format!(
                    "table-{}",
                    p.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Validity,
    Safety,
    Liveness,
    UnnecessaryWaiting,
    Implements,
    SigmaAwareness,
    NextAwareness,
    SufficientlyRich,
    FrontMemory,
    PosKnowledge,
    ConflictFree,
    Fairness,
    PairFairness,
    Efficient,
}

impl CheckName {
    pub const ALL: [CheckName; 14] = [
        CheckName::Validity,
        CheckName::Safety,
        CheckName::Liveness,
        CheckName::UnnecessaryWaiting,
        CheckName::Implements,
        CheckName::SigmaAwareness,
        CheckName::NextAwareness,
        CheckName::SufficientlyRich,
        CheckName::FrontMemory,
        CheckName::PosKnowledge,
        CheckName::ConflictFree,
        CheckName::Fairness,
        CheckName::PairFairness,
        CheckName::Efficient,
    ];

    /// Checks the scenario's policy rather than a protocol.
    pub fn is_policy_check(self) -> bool {
        matches!(
            self,
            CheckName::ConflictFree
                | CheckName::Fairness
                | CheckName::PairFairness
                | CheckName::Efficient
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckName::Validity => "validity",
            CheckName::Safety => "safety",
            CheckName::Liveness => "liveness",
            CheckName::UnnecessaryWaiting => "unnecessary_waiting",
            CheckName::Implements => "implements",
            CheckName::SigmaAwareness => "sigma_awareness",
            CheckName::NextAwareness => "next_awareness",
            CheckName::SufficientlyRich => "sufficiently_rich",
            CheckName::FrontMemory => "front_memory",
            CheckName::PosKnowledge => "pos_knowledge",
            CheckName::ConflictFree => "conflict_free",
            CheckName::Fairness => "fairness",
            CheckName::PairFairness => "pair_fairness",
            CheckName::Efficient => "efficient",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub intersection: IntersectionSection,
    #[serde(default)]
    pub transmission: TransmissionSection,
    pub exchange: Exchange,
    pub failure_model: FailureModel,
    pub adversaries: AdversarySection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub next: NextSection,
    #[serde(default)]
    pub program: ProgramKind,
    #[serde(default)]
    pub strict_vi: bool,
    pub protocols: Vec<ProtocolSel>,
    pub horizon: Time,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liveness_bound: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_adversaries: Option<usize>,
    /// Checks run by `verify` when none are given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<CheckName>>,
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub horizon: Option<Time>,
    pub liveness_bound: Option<Time>,
    pub max_adversaries: Option<usize>,
    pub strict_vi: bool,
}

/// A scenario resolved into core values.
pub struct Loaded {
    pub scenario: Scenario,
    pub base_dir: PathBuf,
    pub spec: IntersectionSpec,
    pub context: Context,
    pub adversaries: Vec<Adversary>,
    /// The enumeration stopped at the adversary cap.
    pub truncated: bool,
    pub policy: Policy,
    pub next: NextFn,
    pub program: KbProgram,
    pub liveness_bound: Time,
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Loaded> {
    let mut scenario = read_scenario(path)?;
    if let Some(h) = overrides.horizon {
        scenario.horizon = h;
    }
    if let Some(b) = overrides.liveness_bound {
        scenario.liveness_bound = Some(b);
    }
    if let Some(c) = overrides.max_adversaries {
        scenario.max_adversaries = Some(c);
    }
    scenario.strict_vi |= overrides.strict_vi;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    resolve(scenario, base_dir)
}

pub fn resolve(scenario: Scenario, base_dir: PathBuf) -> Result<Loaded> {
    let s = &scenario;
    if s.protocols.is_empty() {
        bail!("field `protocols`: at least one protocol is required");
    }
    let spec = validate_intersection(&RawIntersection {
        lanes_in: s
            .intersection
            .lanes_in
            .iter()
            .copied()
            .map(LaneId)
            .collect(),
        lanes_out: s
            .intersection
            .lanes_out
            .iter()
            .copied()
            .map(LaneId)
            .collect(),
        compat: s
            .intersection
            .compat
            .iter()
            .map(|[a, b]| (mv(*a), mv(*b)))
            .collect(),
    })
    .context("field `intersection`")?;
    let env = validate_transmission_env(
        &RawTransmission {
            reach: s
                .transmission
                .reach
                .iter()
                .map(|[a, b]| (slot(*a), slot(*b)))
                .collect(),
            absent: s
                .transmission
                .absent
                .iter()
                .map(|[a, b]| (slot(*a), slot(*b)))
                .collect(),
            max_depth: s.transmission.max_depth,
        },
        &spec,
    )
    .context("field `transmission`")?;

    let pool: Vec<AgentId> = s.adversaries.pool.iter().copied().map(AgentId).collect();
    if pool.is_empty() {
        bail!("field `adversaries.pool`: at least one agent is required");
    }
    let context = Context::new(
        spec.clone(),
        env,
        s.exchange,
        s.failure_model,
        pool.clone(),
        s.horizon,
    );
    let caps = Caps {
        max_adversaries: s.max_adversaries.unwrap_or(Caps::default().max_adversaries),
    };
    let (adversaries, truncated) = match &s.adversaries.explicit {
        None => {
            let e = enumerate_adversaries(s.failure_model, &context.pool, s.horizon, &spec, caps)
                .context("field `adversaries`")?;
            (e.adversaries, e.truncated)
        }
        Some(list) => (explicit_adversaries(list, &context)?, false),
    };

    let policy = match &s.policy {
        PolicySection::Empty => Policy::Empty,
        PolicySection::TrafficLight => traffic_light_policy(&spec)?,
        PolicySection::Cyclic { cells } => cyclic_policy(
            cells
                .iter()
                .map(|c| c.iter().copied().map(mv).collect())
                .collect(),
            &spec,
        )
        .context("field `policy`")?,
        PolicySection::Priority { agents, cells } => priority_policy(
            agents.iter().copied().map(AgentId).collect(),
            cyclic_policy(
                cells
                    .iter()
                    .map(|c| c.iter().copied().map(mv).collect())
                    .collect(),
                &spec,
            )
            .context("field `policy`")?,
        )?,
        PolicySection::File { path } => {
            let full = base_dir.join(path);
            let text = fs::read_to_string(&full)
                .with_context(|| format!("field `policy`: reading {}", full.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("field `policy`: parsing {}", full.display()))?
        }
    };
    let next = match s.next {
        NextSection::RoundRobin => NextFn::RoundRobin,
        NextSection::CycleHeld(k) => NextFn::CycleHeld(k),
        NextSection::Constant(l) => NextFn::Constant(LaneId(l)),
    };
    next.validate(&spec).context("field `next`")?;
    let program = match s.program {
        ProgramKind::BigP => KbProgram::BigP {
            policy: policy.clone(),
            next: next.clone(),
            strict_vi: s.strict_vi,
        },
        ProgramKind::Psigma => KbProgram::Psigma {
            policy: policy.clone(),
        },
    };
    let liveness_bound = s
        .liveness_bound
        .unwrap_or(spec.lanes_in().len() as Time + 1);
    Ok(Loaded {
        scenario,
        base_dir,
        spec,
        context,
        adversaries,
        truncated,
        policy,
        next,
        program,
        liveness_bound,
    })
}

fn explicit_adversaries(list: &[ExplicitAdversary], ctx: &Context) -> Result<Vec<Adversary>> {
    let mut ids = BTreeSet::new();
    let mut out = Vec::new();
    for (k, a) in list.iter().enumerate() {
        if !ids.insert(a.id) {
            bail!("field `adversaries.explicit[{k}]`: duplicate id {}", a.id);
        }
        let mut schedule = ArrivalSchedule::default();
        for row in &a.arrivals {
            if ctx.agent_index(AgentId(row.agent)).is_none() {
                bail!(
                    "field `adversaries.explicit[{k}]`: agent {} is not in the pool",
                    row.agent
                );
            }
            schedule.arrivals.insert(
                AgentId(row.agent),
                Arrival {
                    time: row.time,
                    lane: LaneId(row.lane),
                    intent: LaneId(row.intent),
                },
            );
        }
        let failures = FailurePattern {
            transmit_failures: a
                .transmit_failures
                .iter()
                .map(|&[t, ag]| (t, AgentId(ag as u16)))
                .collect(),
            receive_failures: Default::default(),
        };
        let adversary = Adversary {
            id: a.id,
            schedule,
            failures,
        };
        validate_adversary(&adversary, ctx.model, ctx.horizon, &ctx.spec)
            .with_context(|| format!("field `adversaries.explicit[{k}]`"))?;
        out.push(adversary);
    }
    Ok(out)
}

pub fn read_table(path: &Path) -> Result<TableProtocol> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading table {}", path.display()))?;
    let raw: TableProtocol =
        serde_json::from_str(&text).with_context(|| format!("parsing table {}", path.display()))?;
    Ok(TableProtocol::new(
        raw.name.clone(),
        raw.exchange,
        raw.entries().to_vec(),
    ))
}

/// Builds a runnable protocol for the scenario's context.
pub fn build_protocol(sel: &ProtocolSel, loaded: &Loaded) -> Result<Box<dyn ActionProtocol>> {
    let ex = loaded.context.exchange;
    let protocol: Box<dyn ActionProtocol> = match sel {
        ProtocolSel::TrafficLight => Box::new(traffic_light_protocol(&loaded.spec)),
        ProtocolSel::PEmpty => Box::new(p_empty(&loaded.spec, &loaded.next, ex)?),
        ProtocolSel::PIntent => Box::new(p_intent(&loaded.spec, &loaded.next, ex)?),
        ProtocolSel::Synthesized => Box::new(synthesize_implementation(
            &loaded.context,
            &loaded.adversaries,
            &loaded.program,
        )?),
        ProtocolSel::Table(path) => Box::new(read_table(&loaded.base_dir.join(path))?),
    };
    if let Some(needed) = protocol.exchange() {
        if needed != ex {
            bail!(
                "protocol {} needs the {needed} exchange, scenario uses {ex}",
                sel.label()
            );
        }
    }
    Ok(protocol)
}
