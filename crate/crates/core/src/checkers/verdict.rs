use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Json>,
}

/// Per-property outcomes plus counters. A property that failed once stays
/// failed, with the first witness found.
///
/// Counters whose name ends in `-max` merge by maximum, all others by sum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub properties: BTreeMap<String, PropertyResult>,
    pub counters: BTreeMap<String, u64>,
}

impl Verdict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pass(&mut self, name: &str) {
        self.set(name, Status::Pass, None);
    }

    pub fn fail(&mut self, name: &str, witness: Json) {
        self.set(name, Status::Fail, Some(witness));
    }

    pub fn not_applicable(&mut self, name: &str) {
        self.set(name, Status::NotApplicable, None);
    }

    /// Passes on `Ok`, fails with the witness on `Err`.
    pub fn record(&mut self, name: &str, result: Result<(), Json>) {
        match result {
            Ok(()) => self.pass(name),
            Err(w) => self.fail(name, w),
        }
    }

    fn set(&mut self, name: &str, status: Status, witness: Option<Json>) {
        use std::collections::btree_map::Entry;
        match self.properties.entry(name.to_string()) {
            Entry::Vacant(v) => {
                v.insert(PropertyResult { status, witness });
            }
            Entry::Occupied(mut o) => {
                let cur = o.get_mut();
                let replace = match (cur.status, status) {
                    (Status::Fail, _) => false,
                    (_, Status::Fail) => true,
                    (Status::NotApplicable, Status::Pass) => true,
                    _ => false,
                };
                if replace {
                    *cur = PropertyResult { status, witness };
                }
            }
        }
    }

    pub fn count(&mut self, name: &str, by: u64) {
        let slot = self.counters.entry(name.to_string()).or_insert(0);
        if name.ends_with("-max") {
            *slot = (*slot).max(by);
        } else {
            *slot += by;
        }
    }

    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }

    pub fn status(&self, name: &str) -> Option<Status> {
        self.properties.get(name).map(|p| p.status)
    }

    pub fn passed(&self) -> bool {
        self.properties.values().all(|p| p.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &PropertyResult)> {
        self.properties
            .iter()
            .filter(|(_, p)| p.status == Status::Fail)
            .map(|(n, p)| (n.as_str(), p))
    }

    pub fn merge(&mut self, other: Verdict) {
        for (name, p) in other.properties {
            self.set(&name, p.status, p.witness);
        }
        for (name, v) in other.counters {
            self.count(&name, v);
        }
    }

    pub fn to_json(&self) -> Json {
        serde_json::to_value(self).expect("verdict serializes")
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, p) in &self.properties {
            let status = match p.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::NotApplicable => "n/a",
            };
            write!(f, "  {name:<28} {status}")?;
            if let Some(w) = &p.witness {
                write!(f, "  {w}")?;
            }
            writeln!(f)?;
        }
        for (name, v) in &self.counters {
            writeln!(f, "  {name:<28} {v}")?;
        }
        Ok(())
    }
}
