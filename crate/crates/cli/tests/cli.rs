//! End-to-end behavior of the `intersection` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

use intersection_cli::scenario::{load, Overrides};
use intersection_core::kernel::{generate_system, Action};
use intersection_core::protocols::{traffic_light_protocol, TableEntry, TableProtocol};

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
}

/// A shipped scenario with `edit` applied, written into `dir`.
fn variant(dir: &Path, base: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(shipped(base)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(format!("{}.json", v["name"].as_str().unwrap()));
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn intersection(args: &[&str], scenario: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intersection"))
        .arg(args[0])
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(&args[1..])
        .output()
        .unwrap()
}

fn report(out: &Path, scenario: &str, command: &str) -> Value {
    serde_json::from_str(
        &fs::read_to_string(out.join(format!("{scenario}.{command}.report.json"))).unwrap(),
    )
    .unwrap()
}

#[test]
fn exit_status_follows_the_report() {
    let out = TempDir::new().unwrap();
    let s = shipped("a-two-fronts");
    assert_eq!(
        intersection(&["verify"], &s, out.path()).status.code(),
        Some(1)
    );
    let ok = intersection(&["verify", "--checks", "validity,safety"], &s, out.path());
    assert_eq!(ok.status.code(), Some(0));
    let r = report(out.path(), "a-two-fronts", "verify");
    assert_eq!(r["status"], "pass");
    assert_eq!(r["sections"].as_array().unwrap().len(), 4);
    assert_eq!(r["context_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn caps_make_passes_inconclusive() {
    let out = TempDir::new().unwrap();
    let s = shipped("a-empty-nf");
    let o = intersection(
        &["verify", "--checks", "safety", "--caps", "5"],
        &s,
        out.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let r = report(out.path(), "a-empty-nf", "verify");
    assert_eq!(
        (
            r["truncated"].clone(),
            r["adversaries"].clone(),
            r["status"].clone()
        ),
        (json!(true), json!(5), json!("inconclusive"))
    );
    let o = intersection(
        &[
            "verify",
            "--checks",
            "safety",
            "--caps",
            "5",
            "--allow-inconclusive",
        ],
        &s,
        out.path(),
    );
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn overrides_change_the_context_hash() {
    let out = TempDir::new().unwrap();
    let s = shipped("a-empty-nf");
    intersection(&["verify", "--checks", "validity"], &s, out.path());
    let a = report(out.path(), "a-empty-nf", "verify")["context_hash"].clone();
    intersection(
        &["verify", "--checks", "validity", "--horizon", "2"],
        &s,
        out.path(),
    );
    let b = report(out.path(), "a-empty-nf", "verify")["context_hash"].clone();
    assert_ne!(a, b);
}

#[test]
fn horizon_zero_traces_initial_states_only() {
    let out = TempDir::new().unwrap();
    let o = intersection(
        &["simulate", "--horizon", "0", "--protocols", "traffic_light"],
        &shipped("a-empty-nf"),
        out.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let trace =
        fs::read_to_string(out.path().join("a-empty-nf.traffic_light.trace.jsonl")).unwrap();
    let lines: Vec<Value> = trace
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 1);
    assert_eq!(lines[0]["t"], 0);
}

#[test]
fn silent_traces_have_one_block_per_schedule() {
    let out = TempDir::new().unwrap();
    let dir = TempDir::new().unwrap();
    // One exit, horizon 3, two agents: the brute-force schedule count is 43.
    let s = variant(dir.path(), "a-empty-nf", |v| {
        v["name"] = json!("single-exit");
        v["intersection"] = json!({"lanes_in": [1, 2], "lanes_out": [3], "compat": []});
        v["horizon"] = json!(3);
    });
    intersection(&["simulate", "--protocols", "p_empty"], &s, out.path());
    let trace = fs::read_to_string(out.path().join("single-exit.p_empty.trace.jsonl")).unwrap();
    let starts = trace.lines().filter(|l| l.contains("\"t\":0,")).count();
    assert_eq!((starts, trace.lines().count()), (43, 43 * 4));
}

#[test]
fn invalid_scenarios_exit_2_naming_the_field() {
    let out = TempDir::new().unwrap();
    let dir = TempDir::new().unwrap();
    let bad = variant(dir.path(), "a-empty-nf", |v| {
        v["name"] = json!("bad-compat");
        v["intersection"]["compat"] = json!([[[1, 3], [9, 4]]]);
    });
    let o = intersection(&["simulate"], &bad, out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("intersection"));

    let o = intersection(
        &["simulate", "--protocols", "nonesuch"],
        &shipped("a-empty-nf"),
        out.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nonesuch"));

    // p_intent reads intent memory, which a silent exchange never fills.
    let wrong = variant(dir.path(), "a-empty-nf", |v| {
        v["name"] = json!("wrong-exchange");
        v["protocols"] = json!(["p_intent"]);
    });
    assert_eq!(
        intersection(&["simulate"], &wrong, out.path())
            .status
            .code(),
        Some(2)
    );

    let lossy = shipped("a-intent-so");
    let o = intersection(
        &["verify", "--checks", "sufficiently_rich"],
        &lossy,
        out.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn equal_protocols_compare_equal() {
    let out = TempDir::new().unwrap();
    let o = intersection(
        &[
            "compare",
            "--protocols",
            "p_empty,synthesized",
            "--expect",
            "equal",
        ],
        &shipped("a-empty-nf"),
        out.path(),
    );
    let r = report(out.path(), "a-empty-nf", "compare");
    let lex = &r["sections"][1];
    assert_eq!(lex["check"], "lex_domination");
    assert_eq!(lex["status"], "pass");
    // Agents still queued at the horizon leave pointwise domination open.
    assert_eq!(r["sections"][0]["status"], "inconclusive");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synthesize_writes_a_table_that_reloads() {
    let out = TempDir::new().unwrap();
    let o = intersection(&["synthesize"], &shipped("b-empty-nf"), out.path());
    assert_eq!(o.status.code(), Some(0));
    let table = out.path().join("b-empty-nf.synthesized.table.json");
    let dir = TempDir::new().unwrap();
    fs::copy(&table, dir.path().join("synth.json")).unwrap();
    let s = variant(dir.path(), "b-empty-nf", |v| {
        v["name"] = json!("reloaded");
        v["protocols"] = json!([{"table": "synth.json"}, "p_empty"]);
    });
    let o = intersection(&["compare", "--expect", "equal"], &s, out.path());
    let r = report(out.path(), "reloaded", "compare");
    assert_eq!(
        r["sections"][1]["status"],
        "pass",
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn synthesize_refuses_a_policy_agents_cannot_see() {
    let out = TempDir::new().unwrap();
    let dir = TempDir::new().unwrap();
    // Whether the priority agent is queued behind you is invisible without messages.
    let s = variant(dir.path(), "a-empty-nf", |v| {
        v["name"] = json!("priority");
        v["policy"] = json!({"kind": "priority", "agents": [1], "cells": [[[1, 3], [1, 4]], [[2, 3], [2, 4]]]});
        v["horizon"] = json!(3);
    });
    let o = intersection(&["synthesize"], &s, out.path());
    assert_eq!(o.status.code(), Some(1));
    let r = report(out.path(), "priority", "synthesize");
    assert_eq!(r["sections"][0]["check"], "sigma_awareness");
    assert_eq!(r["sections"][0]["status"], "fail");
    assert!(!out.path().join("priority.synthesized.table.json").exists());
}

#[test]
fn extract_refuses_an_unsafe_protocol() {
    let out = TempDir::new().unwrap();
    let dir = TempDir::new().unwrap();
    // Every front goes at once, whatever the others do.
    let loaded = load(&shipped("a-intent-nf"), &Overrides::default()).unwrap();
    let light = generate_system(
        &loaded.context,
        &traffic_light_protocol(&loaded.spec),
        &loaded.adversaries,
    )
    .unwrap();
    let entries = light.runs.iter().flat_map(|run| {
        run.states.iter().flat_map(|s| {
            s.locals
                .iter()
                .enumerate()
                .filter(|(_, l)| l.sensors.front)
                .map(|(i, l)| TableEntry {
                    agent: loaded.context.pool[i],
                    state: l.clone(),
                    action: Action::Go,
                })
        })
    });
    let reckless = TableProtocol::new(
        "reckless".into(),
        loaded.context.exchange,
        entries.collect::<Vec<_>>(),
    );
    fs::write(
        dir.path().join("reckless.json"),
        serde_json::to_string(&reckless).unwrap(),
    )
    .unwrap();
    let s = variant(dir.path(), "a-intent-nf", |v| {
        v["name"] = json!("reckless-run");
        v["protocols"] = json!([{"table": "reckless.json"}]);
    });
    let o = intersection(&["extract"], &s, out.path());
    assert_eq!(o.status.code(), Some(1));
    let r = report(out.path(), "reckless-run", "extract");
    assert_eq!(r["sections"][1]["check"], "safety");
    assert_eq!(r["sections"][1]["status"], "fail");
    assert!(!out
        .path()
        .join("reckless-run.table-reckless.policy.json")
        .exists());
}

#[test]
fn extract_of_a_never_going_protocol_is_empty() {
    let out = TempDir::new().unwrap();
    let dir = TempDir::new().unwrap();
    let idle = TableProtocol::new(
        "idle".into(),
        intersection_core::exchange::Exchange::Empty,
        Vec::new(),
    );
    fs::write(
        dir.path().join("idle.json"),
        serde_json::to_string(&idle).unwrap(),
    )
    .unwrap();
    let s = variant(dir.path(), "a-empty-nf", |v| {
        v["name"] = json!("idle-run");
        v["protocols"] = json!([{"table": "idle.json"}]);
    });
    let o = intersection(&["extract"], &s, out.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let policy: Value = serde_json::from_str(
        &fs::read_to_string(out.path().join("idle-run.table-idle.policy.json")).unwrap(),
    )
    .unwrap();
    assert!(policy["table"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e[1].as_array().unwrap().is_empty()));
}
