use std::collections::HashMap;
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Brochure, ParallelCorpus};
use crate::{Error, Result};

/// Default suffix stripped from ids to form the duplicate-group key,
/// e.g. `amoxil_v2`, `amoxil-batch-14`, `amoxil rev3` all group as `amoxil`.
pub const DEFAULT_SUFFIX_PATTERN: &str = r"(?i)(?:[-_ .](?:v|ver|version|rev|revision|batch|lot)[-_ .]?\d+[a-z]?)+$";

#[derive(Clone, Debug)]
pub enum Preference {
    /// Keep the last member of each group in input order.
    KeepLast,
    KeepFirst,
    /// Keep the first listed id present in the group; groups with no
    /// listed member fall back to the last one.
    Ranked(Vec<String>),
}

#[derive(Clone, Debug)]
pub struct DuplicatePolicy {
    pub suffix: Regex,
    pub preference: Preference,
}

impl Default for DuplicatePolicy {
    fn default() -> Self {
        DuplicatePolicy {
            suffix: Regex::new(DEFAULT_SUFFIX_PATTERN).expect("valid default pattern"),
            preference: Preference::KeepLast,
        }
    }
}

impl DuplicatePolicy {
    pub fn with_pattern(pattern: &str, preference: Preference) -> Result<Self> {
        let suffix = Regex::new(pattern).map_err(|e| Error::validation(format!("bad duplicate pattern: {e}")))?;
        Ok(DuplicatePolicy { suffix, preference })
    }

    pub fn group_key<'a>(&self, id: &'a str) -> std::borrow::Cow<'a, str> {
        self.suffix.replace(id, "")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalReason {
    Duplicate,
    Incomplete,
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemovalReason::Duplicate => "duplicate",
            RemovalReason::Incomplete => "incomplete",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub brochure_id: String,
    pub reason: RemovalReason,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub removals: Vec<Removal>,
}

impl RemovalReport {
    pub fn count(&self, reason: RemovalReason) -> usize {
        self.removals.iter().filter(|r| r.reason == reason).count()
    }

    pub fn is_empty(&self) -> bool {
        self.removals.is_empty()
    }

    /// `brochure_id<TAB>reason`, one removal per line.
    pub fn to_tsv(&self) -> String {
        self.removals
            .iter()
            .map(|r| format!("{}\t{}\n", r.brochure_id, r.reason))
            .collect()
    }
}

/// Removes incomplete brochures (no target text), then keeps one brochure
/// per duplicate group according to `policy`. Surviving brochures keep
/// their input order.
pub fn clean_duplicates(brochures: Vec<Brochure>, policy: &DuplicatePolicy) -> (ParallelCorpus, RemovalReport) {
    let mut report = RemovalReport::default();
    let mut complete = Vec::with_capacity(brochures.len());
    for b in brochures {
        if b.is_incomplete() {
            report.removals.push(Removal {
                brochure_id: b.id.clone(),
                reason: RemovalReason::Incomplete,
            });
        } else {
            complete.push(b);
        }
    }

    let mut groups: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, b) in complete.iter().enumerate() {
        groups.entry(policy.group_key(&b.id).into_owned()).or_default().push(i);
    }
    let mut keep = vec![false; complete.len()];
    for members in groups.values() {
        let chosen = match &policy.preference {
            Preference::KeepFirst => members[0],
            Preference::KeepLast => *members.last().expect("non-empty group"),
            Preference::Ranked(order) => order
                .iter()
                .find_map(|id| members.iter().copied().find(|&m| &complete[m].id == id))
                .unwrap_or(*members.last().expect("non-empty group")),
        };
        keep[chosen] = true;
    }

    let mut kept = Vec::new();
    for (b, k) in complete.into_iter().zip(keep) {
        if k {
            kept.push(b);
        } else {
            report.removals.push(Removal {
                brochure_id: b.id,
                reason: RemovalReason::Duplicate,
            });
        }
    }
    (ParallelCorpus::new(kept), report)
}
