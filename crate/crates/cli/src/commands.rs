//! The five commands. Each returns a report and writes its files under the
//! output directory; printing and exit codes are left to the caller.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};

use intersection_core::adversary::{history, AdversaryHistory};
use intersection_core::kernel::{generate_system, System};
use intersection_core::knowledge::EpistemicModel;
use intersection_core::policy::{
    check_conflict_free, check_efficient, check_fairness, check_pair_fairness, Policy,
};
use intersection_core::protocols::{synthesize_implementation, KbProgram};
use intersection_core::verdict::{Status, Verdict, Witness};
use intersection_core::verify::{
    check_behavioral_equivalence, check_front_memory_agreement, check_implements_in,
    check_liveness_bounded, check_next_awareness, check_pos_knowledge, check_safety,
    check_sigma_awareness, check_sufficiently_rich_knowledge, check_validity,
    check_waiting_at_divergence, compare_domination, compare_lex_domination, extract_policy,
    find_unnecessary_waiting, Comparison, ComparisonReport,
};

use crate::report::{Report, Section};
use crate::scenario::{
    build_protocol, load, read_table, CheckName, Loaded, Overrides, ProtocolSel,
};
use crate::trace::write_trace;

/// Checks `verify` runs when neither the command line nor the scenario
/// names any.
pub const DEFAULT_CHECKS: [CheckName; 5] = [
    CheckName::Validity,
    CheckName::Safety,
    CheckName::Liveness,
    CheckName::UnnecessaryWaiting,
    CheckName::Implements,
];

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub overrides: Overrides,
    pub out: PathBuf,
    pub checks: Option<Vec<CheckName>>,
    /// Protocol labels selecting among the scenario's protocols.
    pub protocols: Option<Vec<String>>,
    /// `compare` fails unless both outcomes match.
    pub expect: Option<Comparison>,
}

/// 0 on pass, 1 on fail or a disallowed inconclusive.
pub fn exit_code(status: Status, allow_inconclusive: bool) -> i32 {
    match status {
        Status::Pass => 0,
        Status::Inconclusive if allow_inconclusive => 0,
        _ => 1,
    }
}

fn out_file(opts: &Options, loaded: &Loaded, suffix: &str) -> Result<PathBuf> {
    fs::create_dir_all(&opts.out).with_context(|| format!("creating {}", opts.out.display()))?;
    Ok(opts.out.join(format!("{}.{suffix}", loaded.scenario.name)))
}

fn write_report(opts: &Options, loaded: &Loaded, report: &Report) -> Result<()> {
    let path = out_file(opts, loaded, &format!("{}.report.json", report.command))?;
    fs::write(&path, report.to_json()).with_context(|| format!("writing {}", path.display()))
}

fn selected(loaded: &Loaded, opts: &Options) -> Result<Vec<ProtocolSel>> {
    let all = &loaded.scenario.protocols;
    match &opts.protocols {
        None => Ok(all.clone()),
        Some(labels) => labels
            .iter()
            .map(|l| {
                all.iter()
                    .find(|p| &p.label() == l)
                    .cloned()
                    .ok_or_else(|| {
                        let known: Vec<String> = all.iter().map(ProtocolSel::label).collect();
                        anyhow!(
                            "unknown protocol `{l}`; the scenario has {}",
                            known.join(", ")
                        )
                    })
            })
            .collect(),
    }
}

fn system_for(loaded: &Loaded, sel: &ProtocolSel) -> Result<System> {
    let protocol = build_protocol(sel, loaded)?;
    Ok(generate_system(
        &loaded.context,
        &*protocol,
        &loaded.adversaries,
    )?)
}

/// Every adversary history realized up to the horizon.
fn histories(loaded: &Loaded) -> Vec<AdversaryHistory> {
    let set: BTreeSet<AdversaryHistory> = loaded
        .adversaries
        .iter()
        .flat_map(|a| (0..=loaded.context.horizon).map(move |m| history(a, m)))
        .collect();
    set.into_iter().collect()
}

fn go_statistics(system: &System) -> String {
    let (mut gone, mut waiting) = (0usize, 0usize);
    for run in &system.runs {
        for i in 0..system.context.pool.len() {
            match run.gotime(i) {
                Some(_) => gone += 1,
                None if run
                    .adversary
                    .schedule
                    .arrival(system.context.pool[i])
                    .is_some() =>
                {
                    waiting += 1
                }
                None => {}
            }
        }
    }
    format!(
        "{} runs, {gone} crossings, {waiting} agents not through by the horizon",
        system.runs.len()
    )
}

pub fn simulate(scenario: &Path, opts: &Options) -> Result<Report> {
    let loaded = load(scenario, &opts.overrides)?;
    let mut report = Report::new("simulate", &loaded);
    for sel in selected(&loaded, opts)? {
        let label = sel.label();
        let system = system_for(&loaded, &sel)?;
        let path = out_file(opts, &loaded, &format!("{label}.trace.jsonl"))?;
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_trace(&system, BufWriter::new(file))
            .with_context(|| format!("writing {}", path.display()))?;
        report.push(
            Section::from_verdict(&label, "run", Verdict::pass(true), loaded.truncated)
                .with_detail(go_statistics(&system)),
        );
        report.push(Section::from_verdict(
            &label,
            "validity",
            check_validity(&system),
            loaded.truncated,
        ));
        report.push(Section::from_verdict(
            &label,
            "safety",
            check_safety(&system),
            loaded.truncated,
        ));
    }
    write_report(opts, &loaded, &report)?;
    Ok(report)
}

fn policy_check(
    loaded: &Loaded,
    check: CheckName,
    hs: &mut Option<Vec<AdversaryHistory>>,
) -> Verdict {
    let spec = &loaded.spec;
    let sigma = &loaded.policy;
    match check {
        CheckName::ConflictFree => {
            check_conflict_free(sigma, spec, hs.get_or_insert_with(|| histories(loaded)))
        }
        CheckName::Efficient => {
            check_efficient(sigma, spec, hs.get_or_insert_with(|| histories(loaded)))
        }
        CheckName::Fairness => check_fairness(sigma, spec),
        CheckName::PairFairness => check_pair_fairness(sigma, &loaded.next, spec),
        _ => unreachable!("not a policy check"),
    }
}

fn protocol_check(
    loaded: &Loaded,
    system: &System,
    model: &mut Option<EpistemicModel>,
    check: CheckName,
) -> Result<Verdict> {
    let needs_model = matches!(
        check,
        CheckName::Implements
            | CheckName::SigmaAwareness
            | CheckName::NextAwareness
            | CheckName::SufficientlyRich
            | CheckName::PosKnowledge
    );
    if needs_model && model.is_none() {
        *model = Some(EpistemicModel::new(system));
    }
    let model = || model.as_ref().expect("built above");
    Ok(match check {
        CheckName::Validity => check_validity(system),
        CheckName::Safety => check_safety(system),
        CheckName::Liveness => check_liveness_bounded(system, loaded.liveness_bound),
        CheckName::UnnecessaryWaiting => find_unnecessary_waiting(system),
        CheckName::Implements => check_implements_in(system, model(), &loaded.program),
        CheckName::SigmaAwareness => check_sigma_awareness(system, model(), &loaded.policy),
        CheckName::NextAwareness => check_next_awareness(system, model(), &loaded.next),
        CheckName::SufficientlyRich => check_sufficiently_rich_knowledge(system, model())?,
        CheckName::FrontMemory => check_front_memory_agreement(system)?,
        CheckName::PosKnowledge => check_pos_knowledge(system, model(), &loaded.next)?,
        _ => unreachable!("not a protocol check"),
    })
}

pub fn verify(scenario: &Path, opts: &Options) -> Result<Report> {
    let loaded = load(scenario, &opts.overrides)?;
    let checks: Vec<CheckName> = opts
        .checks
        .clone()
        .or_else(|| loaded.scenario.checks.clone())
        .unwrap_or_else(|| DEFAULT_CHECKS.to_vec());
    let mut report = Report::new("verify", &loaded);
    let policy_label = format!("policy:{}", loaded.policy.name());
    let mut hs = None;
    for &check in checks.iter().filter(|c| c.is_policy_check()) {
        let verdict = policy_check(&loaded, check, &mut hs);
        report.push(Section::from_verdict(
            &policy_label,
            check.name(),
            verdict,
            loaded.truncated,
        ));
    }
    if checks.iter().any(|c| !c.is_policy_check()) {
        for sel in selected(&loaded, opts)? {
            let label = sel.label();
            let system = system_for(&loaded, &sel)?;
            let mut model = None;
            for &check in checks.iter().filter(|c| !c.is_policy_check()) {
                let verdict = protocol_check(&loaded, &system, &mut model, check)
                    .with_context(|| format!("check `{}` on {label}", check.name()))?;
                report.push(Section::from_verdict(
                    &label,
                    check.name(),
                    verdict,
                    loaded.truncated,
                ));
            }
        }
    }
    write_report(opts, &loaded, &report)?;
    Ok(report)
}

pub fn comparison_name(c: Comparison) -> &'static str {
    match c {
        Comparison::FirstDominates => "first_dominates",
        Comparison::SecondDominates => "second_dominates",
        Comparison::Equal => "equal",
        Comparison::Incomparable => "incomparable",
    }
}

pub fn parse_comparison(s: &str) -> Option<Comparison> {
    [
        Comparison::FirstDominates,
        Comparison::SecondDominates,
        Comparison::Equal,
        Comparison::Incomparable,
    ]
    .into_iter()
    .find(|&c| comparison_name(c) == s)
}

fn comparison_section(
    label: &str,
    check: &str,
    c: ComparisonReport,
    expect: Option<Comparison>,
    truncated: bool,
) -> Section {
    let detail = format!(
        "{}: {} first wins, {} second wins, {} blocking, {} open",
        comparison_name(c.outcome),
        c.first_wins.len(),
        c.second_wins.len(),
        c.blocking.len(),
        c.inconclusive.len()
    );
    let exact = c.exact();
    let mut witnesses: Vec<Witness> = Vec::new();
    witnesses.extend(c.first_wins.iter().map(|w| tagged(w, "first wins")));
    witnesses.extend(c.second_wins.iter().map(|w| tagged(w, "second wins")));
    witnesses.extend(c.blocking.iter().map(|w| tagged(w, "blocking")));
    witnesses.extend(c.inconclusive.iter().map(|w| tagged(w, "open")));
    let verdict = match expect {
        Some(e) if e != c.outcome => {
            // The mismatch itself is the witness; an `equal` outcome has no others.
            witnesses.push(Witness::note(format!(
                "expected {}, got {}",
                comparison_name(e),
                comparison_name(c.outcome)
            )));
            Verdict::from_failures(exact, witnesses)
        }
        _ if !exact => Verdict::inconclusive(witnesses),
        _ => Verdict {
            status: Status::Pass,
            exact,
            witnesses,
        },
    };
    Section::from_verdict(label, check, verdict, truncated).with_detail(detail)
}

fn tagged(w: &Witness, tag: &str) -> Witness {
    Witness {
        detail: format!("{tag}: {}", w.detail),
        ..w.clone()
    }
}

pub fn compare(scenario: &Path, opts: &Options) -> Result<Report> {
    let loaded = load(scenario, &opts.overrides)?;
    let sels = selected(&loaded, opts)?;
    let [first, second] = &sels[..] else {
        bail!(
            "compare needs exactly two protocols, got {}; select them with --protocols",
            sels.len()
        );
    };
    let label = format!("{} vs {}", first.label(), second.label());
    let (p, q) = (system_for(&loaded, first)?, system_for(&loaded, second)?);
    let mut report = Report::new("compare", &loaded);
    let dom = compare_domination(&p, &q)?;
    let lex = compare_lex_domination(&p, &q)?;
    let strict = [dom.outcome, lex.outcome];
    report.push(comparison_section(
        &label,
        "domination",
        dom,
        opts.expect,
        loaded.truncated,
    ));
    report.push(comparison_section(
        &label,
        "lex_domination",
        lex,
        opts.expect,
        loaded.truncated,
    ));
    // A strictly dominated side must wait unnecessarily where the sides part.
    if strict.contains(&Comparison::FirstDominates) {
        let v = check_waiting_at_divergence(&q, &p)?;
        report.push(Section::from_verdict(
            &second.label(),
            "waiting_at_divergence",
            v,
            loaded.truncated,
        ));
    }
    if strict.contains(&Comparison::SecondDominates) {
        let v = check_waiting_at_divergence(&p, &q)?;
        report.push(Section::from_verdict(
            &first.label(),
            "waiting_at_divergence",
            v,
            loaded.truncated,
        ));
    }
    write_report(opts, &loaded, &report)?;
    Ok(report)
}

pub fn synthesize(scenario: &Path, opts: &Options) -> Result<Report> {
    let loaded = load(scenario, &opts.overrides)?;
    let mut report = Report::new("synthesize", &loaded);
    let label = "synthesized";
    let table =
        match synthesize_implementation(&loaded.context, &loaded.adversaries, &loaded.program) {
            Ok(t) => t,
            Err(e) => {
                let w = Witness::note(e.to_string());
                report.push(Section::from_verdict(
                    label,
                    "synthesis",
                    Verdict::from_failures(true, vec![w]),
                    false,
                ));
                write_report(opts, &loaded, &report)?;
                return Ok(report);
            }
        };
    let system = generate_system(&loaded.context, &table, &loaded.adversaries)?;
    let model = EpistemicModel::new(&system);
    let sigma = check_sigma_awareness(&system, &model, loaded.program.policy());
    let aware = sigma.passed();
    report.push(Section::from_verdict(
        label,
        "sigma_awareness",
        sigma,
        loaded.truncated,
    ));
    if let KbProgram::BigP { next, .. } = &loaded.program {
        let v = check_next_awareness(&system, &model, next);
        let ok = v.passed();
        report.push(Section::from_verdict(
            label,
            "next_awareness",
            v,
            loaded.truncated,
        ));
        if !ok {
            write_report(opts, &loaded, &report)?;
            return Ok(report);
        }
    }
    if !aware {
        write_report(opts, &loaded, &report)?;
        return Ok(report);
    }
    let path = out_file(opts, &loaded, "synthesized.table.json")?;
    let mut json = serde_json::to_string_pretty(&table)?;
    json.push('\n');
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    let reloaded = read_table(&path)?;
    let rsys = generate_system(&loaded.context, &reloaded, &loaded.adversaries)?;
    let rmodel = EpistemicModel::new(&rsys);
    let implements = check_implements_in(&rsys, &rmodel, &loaded.program);
    report.push(
        Section::from_verdict(label, "implements", implements, loaded.truncated)
            .with_detail(format!("{} table entries", reloaded.entries().len())),
    );
    write_report(opts, &loaded, &report)?;
    Ok(report)
}

pub fn extract(scenario: &Path, opts: &Options) -> Result<Report> {
    let loaded = load(scenario, &opts.overrides)?;
    let sels = selected(&loaded, opts)?;
    let sel = match &sels[..] {
        [only] => only.clone(),
        _ if opts.protocols.is_none() => sels[0].clone(),
        _ => bail!("extract needs one protocol, got {}", sels.len()),
    };
    let label = sel.label();
    let system = system_for(&loaded, &sel)?;
    let mut report = Report::new("extract", &loaded);
    let validity = check_validity(&system);
    let safety = check_safety(&system);
    let ok = validity.passed() && safety.passed();
    report.push(Section::from_verdict(
        &label,
        "validity",
        validity,
        loaded.truncated,
    ));
    report.push(Section::from_verdict(
        &label,
        "safety",
        safety,
        loaded.truncated,
    ));
    if !ok {
        write_report(opts, &loaded, &report)?;
        return Ok(report);
    }
    let sigma = extract_policy(&system);
    let path = out_file(opts, &loaded, &format!("{label}.policy.json"))?;
    let mut json = serde_json::to_string_pretty(&sigma)?;
    json.push('\n');
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    let reloaded: Policy = serde_json::from_str(&fs::read_to_string(&path)?)?;
    let entries = match &reloaded {
        Policy::Table(t) => t.len(),
        _ => 0,
    };
    let cf = check_conflict_free(&reloaded, &loaded.spec, &histories(&loaded));
    report.push(
        Section::from_verdict(&label, "conflict_free", cf, loaded.truncated)
            .with_detail(format!("{entries} histories")),
    );
    let model = EpistemicModel::new(&system);
    let program = KbProgram::Psigma { policy: reloaded };
    report.push(Section::from_verdict(
        &label,
        "implements",
        check_implements_in(&system, &model, &program),
        loaded.truncated,
    ));
    write_report(opts, &loaded, &report)?;
    Ok(report)
}

/// Behavioral equivalence of two of the scenario's protocols over every
/// reachable state.
pub fn equivalent(scenario: &Path, opts: &Options, a: &str, b: &str) -> Result<Verdict> {
    let loaded = load(scenario, &opts.overrides)?;
    let find = |l: &str| {
        loaded
            .scenario
            .protocols
            .iter()
            .find(|p| p.label() == l)
            .cloned()
            .ok_or_else(|| anyhow!("unknown protocol `{l}`"))
    };
    let (p, q) = (
        system_for(&loaded, &find(a)?)?,
        system_for(&loaded, &find(b)?)?,
    );
    Ok(check_behavioral_equivalence(&p, &q)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inconclusive_passes_only_when_allowed() {
        assert_eq!(exit_code(Status::Pass, false), 0);
        assert_eq!(exit_code(Status::Fail, true), 1);
        assert_eq!(exit_code(Status::Inconclusive, false), 1);
        assert_eq!(exit_code(Status::Inconclusive, true), 0);
    }

    #[test]
    fn comparison_names_roundtrip() {
        for c in [
            Comparison::FirstDominates,
            Comparison::SecondDominates,
            Comparison::Equal,
            Comparison::Incomparable,
        ] {
            assert_eq!(parse_comparison(comparison_name(c)), Some(c));
        }
    }

    #[test]
    fn an_unmet_expectation_fails() {
        let c = ComparisonReport {
            outcome: Comparison::Equal,
            first_wins: vec![],
            second_wins: vec![],
            blocking: vec![],
            inconclusive: vec![],
        };
        let s = comparison_section(
            "p vs q",
            "lex_domination",
            c.clone(),
            Some(Comparison::FirstDominates),
            false,
        );
        assert_eq!(s.status, Status::Fail);
        assert_eq!(
            comparison_section("p vs q", "lex_domination", c, None, false).status,
            Status::Pass
        );
    }
}
