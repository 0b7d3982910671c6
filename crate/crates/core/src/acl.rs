//! Access decisions: an ordered static rule list evaluated first-match,
//! overlaid by per-(participant, place) dynamic grants and revocations.
//!
//! A participant may enter a place when some rule covering their role, the
//! place and the action has an `Allow` operation and its condition holds,
//! unless a ledger-recorded dynamic entry for that exact pair says
//! otherwise. No matching rule means deny.

use alloc::collections::BTreeSet;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{DepartmentId, Participant, ParticipantId, PhysicalPlace, PlaceId, Role};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Create,
    Read,
    Update,
    Delete,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Create, Action::Read, Action::Update, Action::Delete];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operation {
    Allow,
    Deny,
}

pub const MINUTES_PER_DAY: u16 = 1440;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Condition {
    Always,
    /// Half-open UTC window `[start, end)` in minutes of the day. A start
    /// after the end wraps midnight; equal bounds describe an empty window.
    #[serde(rename_all = "camelCase")]
    TimeWindow { start_minute_of_day: u16, end_minute_of_day: u16 },
    /// The requester's department equals the place's department.
    DepartmentMatch,
}

impl Condition {
    pub fn is_satisfied(&self, participant: &Participant, place: &PhysicalPlace, at: Timestamp) -> bool {
        match *self {
            Condition::Always => true,
            Condition::TimeWindow { start_minute_of_day: start, end_minute_of_day: end } => {
                let m = at.minute_of_day();
                if start <= end {
                    start <= m && m < end
                } else {
                    m >= start || m < end
                }
            }
            Condition::DepartmentMatch => participant.department_id.as_ref() == Some(&place.department_id),
        }
    }
}

/// Which places a rule covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ResourcePattern {
    Place(PlaceId),
    Department(DepartmentId),
    Any,
}

impl ResourcePattern {
    pub fn matches(&self, place: &PhysicalPlace) -> bool {
        match self {
            ResourcePattern::Place(id) => *id == place.place_id,
            ResourcePattern::Department(dept) => *dept == place.department_id,
            ResourcePattern::Any => true,
        }
    }
}

impl fmt::Display for ResourcePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourcePattern::Place(id) => f.write_str(id.as_str()),
            ResourcePattern::Department(dept) => write!(f, "dept:{dept}:*"),
            ResourcePattern::Any => f.write_str("*"),
        }
    }
}

impl FromStr for ResourcePattern {
    type Err = &'static str;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "*" {
            return Ok(ResourcePattern::Any);
        }
        if let Some(dept) = s.strip_prefix("dept:").and_then(|rest| rest.strip_suffix(":*")) {
            if dept.is_empty() {
                return Err("empty department in resource pattern");
            }
            return Ok(ResourcePattern::Department(dept.into()));
        }
        if s.is_empty() || s.contains('*') {
            return Err("resource pattern must be a place id, dept:<id>:* or *");
        }
        Ok(ResourcePattern::Place(s.into()))
    }
}

impl Serialize for ResourcePattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ResourcePattern {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AclRule {
    pub rule_id: String,
    pub roles: BTreeSet<Role>,
    pub resource_pattern: ResourcePattern,
    pub actions: BTreeSet<Action>,
    pub operation: Operation,
    pub condition: Condition,
}

impl AclRule {
    pub fn check(&self) -> Result<(), String> {
        if self.rule_id.is_empty() {
            return Err("ruleId must be non-empty".into());
        }
        if self.roles.is_empty() {
            return Err(alloc::format!("rule {}: roles must be non-empty", self.rule_id));
        }
        if self.actions.is_empty() {
            return Err(alloc::format!("rule {}: actions must be non-empty", self.rule_id));
        }
        if let Condition::TimeWindow { start_minute_of_day, end_minute_of_day } = self.condition {
            if start_minute_of_day >= MINUTES_PER_DAY || end_minute_of_day >= MINUTES_PER_DAY {
                return Err(alloc::format!("rule {}: time window minutes must be below 1440", self.rule_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AccessRequest<'a> {
    pub participant: &'a Participant,
    pub place: &'a PhysicalPlace,
    pub action: Action,
    pub at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Effect {
    Grant,
    Revoke,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DynamicEntry {
    pub participant_id: ParticipantId,
    pub place_id: PlaceId,
    pub effect: Effect,
    pub seq: u64,
    pub granted_by: ParticipantId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all_fields = "camelCase")]
pub enum DecisionSource {
    Static { rule_id: String },
    Dynamic { seq: u64 },
    DefaultDeny,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Operation,
    pub source: DecisionSource,
}

impl Decision {
    pub const DEFAULT_DENY: Decision = Decision { outcome: Operation::Deny, source: DecisionSource::DefaultDeny };

    pub fn is_allow(&self) -> bool {
        self.outcome == Operation::Allow
    }
}

pub fn match_rule(rule: &AclRule, request: &AccessRequest<'_>) -> bool {
    rule.roles.contains(&request.participant.role)
        && rule.resource_pattern.matches(request.place)
        && rule.actions.contains(&request.action)
        && rule.condition.is_satisfied(request.participant, request.place, request.at)
}

/// First matching rule wins; no match is a default deny.
pub fn decide_static(rules: &[AclRule], request: &AccessRequest<'_>) -> Decision {
    rules
        .iter()
        .find(|rule| match_rule(rule, request))
        .map(|rule| Decision { outcome: rule.operation, source: DecisionSource::Static { rule_id: rule.rule_id.clone() } })
        .unwrap_or(Decision::DEFAULT_DENY)
}

/// Static decision overridden, for physical entry (`Read`) only, by the
/// latest dynamic entry for the requester and place.
pub fn decide_effective(rules: &[AclRule], overlay: &[DynamicEntry], request: &AccessRequest<'_>) -> Decision {
    if request.action == Action::Read {
        let latest = overlay
            .iter()
            .filter(|e| e.participant_id == request.participant.participant_id && e.place_id == request.place.place_id)
            .max_by_key(|e| e.seq);
        if let Some(entry) = latest {
            let outcome = match entry.effect {
                Effect::Grant => Operation::Allow,
                Effect::Revoke => Operation::Deny,
            };
            return Decision { outcome, source: DecisionSource::Dynamic { seq: entry.seq } };
        }
    }
    decide_static(rules, request)
}
