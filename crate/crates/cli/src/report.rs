//! Structured reports. No timestamps: equal inputs give equal bytes.

use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use intersection_core::verdict::{Status, Verdict, Witness};

use crate::scenario::{Loaded, Scenario};

/// Witnesses kept per section; the full count is still reported.
pub const WITNESS_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Section {
    pub protocol: String,
    pub check: String,
    pub status: Status,
    pub exact: bool,
    pub witness_count: usize,
    pub witnesses: Vec<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Section {
    /// A truncated adversary set can only weaken a pass to inconclusive.
    pub fn from_verdict(protocol: &str, check: &str, verdict: Verdict, truncated: bool) -> Self {
        let mut status = verdict.status;
        let exact = verdict.exact && !truncated;
        if truncated && status == Status::Pass {
            status = Status::Inconclusive;
        }
        let witness_count = verdict.witnesses.len();
        let mut witnesses = verdict.witnesses;
        witnesses.truncate(WITNESS_LIMIT);
        Section {
            protocol: protocol.to_string(),
            check: check.to_string(),
            status,
            exact,
            witness_count,
            witnesses,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub command: String,
    pub scenario: String,
    pub context_hash: String,
    pub adversaries: usize,
    pub truncated: bool,
    pub status: Status,
    pub sections: Vec<Section>,
}

impl Report {
    pub fn new(command: &str, loaded: &Loaded) -> Self {
        Report {
            command: command.to_string(),
            scenario: loaded.scenario.name.clone(),
            context_hash: context_hash(&loaded.scenario),
            adversaries: loaded.adversaries.len(),
            truncated: loaded.truncated,
            status: Status::Pass,
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, section: Section) {
        self.status = combine(self.status, section.status);
        self.sections.push(section);
    }

    pub fn section(&self, protocol: &str, check: &str) -> Option<&Section> {
        self.sections
            .iter()
            .find(|s| s.protocol == protocol && s.check == check)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// One line per section.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let _ = write!(
                out,
                "{:<24} {:<22} {:<12}",
                s.protocol,
                s.check,
                s.status.to_string()
            );
            if s.witness_count > 0 {
                let _ = write!(out, " {} witnesses", s.witness_count);
            }
            if let Some(d) = &s.detail {
                let _ = write!(out, " ({d})");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "{}: {}", self.command, self.status);
        out
    }
}

/// Fail beats inconclusive beats pass.
pub fn combine(a: Status, b: Status) -> Status {
    match (a, b) {
        (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
        (Status::Inconclusive, _) | (_, Status::Inconclusive) => Status::Inconclusive,
        _ => Status::Pass,
    }
}

/// SHA-256 of the canonical JSON of the scenario after overrides.
pub fn context_hash(scenario: &Scenario) -> String {
    let canonical = serde_json::to_vec(scenario).expect("scenarios serialize");
    let digest = Sha256::digest(&canonical);
    let mut hex = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(hex, "{b:02x}");
    }
    hex
}
