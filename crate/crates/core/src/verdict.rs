//! Three-valued check outcomes with witnesses.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::adversary::{AgentId, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "snake_case")
)]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
        })
    }
}

/// A point (or a whole run, or nothing more specific) backing a verdict.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Witness {
    pub adversary: Option<u64>,
    pub time: Option<Time>,
    pub agents: Vec<AgentId>,
    pub detail: String,
}

impl Witness {
    pub fn at(adversary: u64, time: Time, agents: Vec<AgentId>, detail: String) -> Self {
        Witness {
            adversary: Some(adversary),
            time: Some(time),
            agents,
            detail,
        }
    }

    pub fn note(detail: String) -> Self {
        Witness {
            adversary: None,
            time: None,
            agents: Vec::new(),
            detail,
        }
    }
}

/// Invariant: `Fail` carries at least one witness.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Verdict {
    pub status: Status,
    /// The outcome is not an artifact of truncation or of a bounded scan.
    pub exact: bool,
    /// Sorted.
    pub witnesses: Vec<Witness>,
}

impl Verdict {
    pub fn pass(exact: bool) -> Self {
        Verdict {
            status: Status::Pass,
            exact,
            witnesses: Vec::new(),
        }
    }

    pub fn inconclusive(witnesses: Vec<Witness>) -> Self {
        Self::sorted(Status::Inconclusive, false, witnesses)
    }

    /// Fails iff `failures` is nonempty.
    pub fn from_failures(exact: bool, failures: Vec<Witness>) -> Self {
        if failures.is_empty() {
            Self::pass(exact)
        } else {
            Self::sorted(Status::Fail, exact, failures)
        }
    }

    /// Fail if any failure, else inconclusive if any open item, else pass.
    pub fn from_parts(exact: bool, failures: Vec<Witness>, open: Vec<Witness>) -> Self {
        if !failures.is_empty() {
            Self::sorted(Status::Fail, exact, failures)
        } else if !open.is_empty() {
            Self::inconclusive(open)
        } else {
            Self::pass(exact)
        }
    }

    fn sorted(status: Status, exact: bool, mut witnesses: Vec<Witness>) -> Self {
        witnesses.sort();
        witnesses.dedup();
        Verdict {
            status,
            exact,
            witnesses,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}
