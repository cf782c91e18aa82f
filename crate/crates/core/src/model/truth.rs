use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Millis;
use crate::error::{Error, Result};

/// Half-open time range `[start, end)` in epoch milliseconds, serialized as
/// a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeRange(pub Millis, pub Millis);

impl TimeRange {
    pub fn contains(&self, t: Millis) -> bool {
        self.0 <= t && t < self.1
    }

    pub fn covers(&self, start: Millis, end: Millis) -> bool {
        self.0 <= start && end <= self.1
    }

    fn overlaps(&self, other: &TimeRange) -> bool {
        self.0 < other.1 && other.0 < self.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Colocated,
    NonColocated,
}

impl Label {
    pub fn is_colocated(self) -> bool {
        self == Label::Colocated
    }

    pub fn from_colocated(colocated: bool) -> Self {
        if colocated {
            Label::Colocated
        } else {
            Label::NonColocated
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Colocated => "colocated",
            Label::NonColocated => "non_colocated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "colocated" | "1" | "true" => Some(Label::Colocated),
            "non_colocated" | "0" | "false" => Some(Label::NonColocated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: String,
    pub members: Vec<String>,
    pub ranges: Vec<TimeRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscenario {
    pub name: String,
    pub ranges: Vec<TimeRange>,
}

/// Colocation groups over time plus named subscenario windows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(default)]
    pub groups: Vec<Group>,
    #[serde(default)]
    pub subscenarios: Vec<Subscenario>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        let mut per_device: BTreeMap<&str, Vec<(usize, TimeRange)>> = BTreeMap::new();
        for (gi, g) in self.groups.iter().enumerate() {
            for r in &g.ranges {
                if r.0 >= r.1 {
                    return Err(Error::InvariantViolation(format!(
                        "group {} has empty range [{}, {})",
                        g.id, r.0, r.1
                    )));
                }
            }
            for m in &g.members {
                per_device
                    .entry(m.as_str())
                    .or_default()
                    .extend(g.ranges.iter().map(|&r| (gi, r)));
            }
        }
        for (device, ranges) in &per_device {
            for (i, (ga, ra)) in ranges.iter().enumerate() {
                for (gb, rb) in &ranges[i + 1..] {
                    if ga != gb && ra.overlaps(rb) {
                        return Err(Error::InvariantViolation(format!(
                            "device {device} belongs to groups {} and {} at the same time",
                            self.groups[*ga].id, self.groups[*gb].id
                        )));
                    }
                }
            }
        }
        let mut by_name: BTreeMap<&str, Vec<TimeRange>> = BTreeMap::new();
        for s in &self.subscenarios {
            by_name.entry(s.name.as_str()).or_default().extend(s.ranges.iter().copied());
        }
        for (name, ranges) in &by_name {
            for (i, a) in ranges.iter().enumerate() {
                if a.0 >= a.1 {
                    return Err(Error::InvariantViolation(format!("subscenario {name} has an empty range")));
                }
                if ranges[i + 1..].iter().any(|b| a.overlaps(b)) {
                    return Err(Error::InvariantViolation(format!(
                        "subscenario {name} has overlapping ranges"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Group the device belongs to at instant `t`.
    pub fn group_at(&self, device: &str, t: Millis) -> Option<&str> {
        self.groups
            .iter()
            .find(|g| g.members.iter().any(|m| m == device) && g.ranges.iter().any(|r| r.contains(t)))
            .map(|g| g.id.as_str())
    }

    pub fn devices(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().flat_map(|g| g.members.iter().map(String::as_str))
    }

    /// Label of the pair over `[start, end)`: colocated when the devices share
    /// a group throughout, non-colocated when they never share one, `None`
    /// when membership changes inside the interval.
    pub fn label_over(&self, a: &str, b: &str, start: Millis, end: Millis) -> Option<Label> {
        let mut cuts = vec![start];
        for g in &self.groups {
            if g.members.iter().any(|m| m == a || m == b) {
                for r in &g.ranges {
                    for edge in [r.0, r.1] {
                        if edge > start && edge < end {
                            cuts.push(edge);
                        }
                    }
                }
            }
        }
        cuts.sort_unstable();
        cuts.dedup();
        let mut shared = 0usize;
        for &t in &cuts {
            match (self.group_at(a, t), self.group_at(b, t)) {
                (Some(ga), Some(gb)) if ga == gb => shared += 1,
                _ => {}
            }
        }
        if shared == cuts.len() {
            Some(Label::Colocated)
        } else if shared == 0 {
            Some(Label::NonColocated)
        } else {
            None
        }
    }

    pub fn subscenario_ranges(&self, name: &str) -> Result<Vec<TimeRange>> {
        let ranges: Vec<TimeRange> = self
            .subscenarios
            .iter()
            .filter(|s| s.name == name)
            .flat_map(|s| s.ranges.iter().copied())
            .collect();
        if self.subscenarios.iter().any(|s| s.name == name) {
            Ok(ranges)
        } else {
            Err(Error::NotFound(format!("subscenario {name}")))
        }
    }
}
