//! Independent reference model of access decisions over plain strings.

use doorchain_core::acl::{AclRule, Action, Condition, DecisionSource, DynamicEntry, Effect, Operation, ResourcePattern};
use doorchain_core::domain::Role;
use doorchain_core::Decision;
use rand::Rng;

#[derive(Debug, Clone)]
pub enum Cond {
    Always,
    Window(u16, u16),
    SameDept,
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub id: String,
    pub roles: Vec<&'static str>,
    /// "*", "dept:<d>:*" or a place id.
    pub pattern: String,
    pub actions: Vec<&'static str>,
    pub allow: bool,
    pub cond: Cond,
}

pub const ROLES: [&str; 4] = ["Admin", "CEO", "Manager", "Employee"];
pub const ACTIONS: [&str; 4] = ["Create", "Read", "Update", "Delete"];
/// (place, department)
pub const PLACES: [(&str, &str); 4] = [("door-1", "dept-x"), ("door-2", "dept-x"), ("door-y1", "dept-y"), ("lobby", "dept-z")];
pub const DEPTS: [Option<&str>; 4] = [Some("dept-x"), Some("dept-y"), Some("dept-z"), None];

pub struct Query<'a> {
    pub role: &'a str,
    pub dept: Option<&'a str>,
    pub place: &'a str,
    pub place_dept: &'a str,
    pub action: &'a str,
    pub minute: u16,
}

/// Returns (allow, Some(rule id)) or (false, None) for the default deny.
pub fn decide(rules: &[Rule], q: &Query<'_>) -> (bool, Option<String>) {
    for rule in rules {
        if !rule.roles.contains(&q.role) || !rule.actions.contains(&q.action) {
            continue;
        }
        let covers = if rule.pattern == "*" {
            true
        } else if let Some(d) = rule.pattern.strip_prefix("dept:") {
            d.trim_end_matches(":*") == q.place_dept
        } else {
            rule.pattern == q.place
        };
        if !covers {
            continue;
        }
        let holds = match rule.cond {
            Cond::Always => true,
            Cond::SameDept => q.dept == Some(q.place_dept),
            Cond::Window(s, e) if s < e => (s..e).contains(&q.minute),
            Cond::Window(s, e) if s > e => q.minute >= s || q.minute < e,
            Cond::Window(_, _) => false,
        };
        if holds {
            return (rule.allow, Some(rule.id.clone()));
        }
    }
    (false, None)
}

/// Dynamic overlay: (participant, place, grant?, seq).
pub fn decide_with_overlay(
    rules: &[Rule],
    overlay: &[(&str, &str, bool, u64)],
    participant: &str,
    q: &Query<'_>,
) -> (bool, Option<String>, Option<u64>) {
    if q.action == "Read" {
        let mut best: Option<(bool, u64)> = None;
        for &(p, place, grant, seq) in overlay {
            if p == participant && place == q.place && best.is_none_or(|(_, s)| seq > s) {
                best = Some((grant, seq));
            }
        }
        if let Some((grant, seq)) = best {
            return (grant, None, Some(seq));
        }
    }
    let (allow, id) = decide(rules, q);
    (allow, id, None)
}

pub fn random_rule<R: Rng>(rng: &mut R, id: usize) -> Rule {
    let pick = |rng: &mut R, all: &[&'static str]| -> Vec<&'static str> {
        let v: Vec<_> = all.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        if v.is_empty() { vec![all[rng.gen_range(0..all.len())]] } else { v }
    };
    let pattern = match rng.gen_range(0..3) {
        0 => "*".to_string(),
        1 => format!("dept:{}:*", PLACES[rng.gen_range(0..PLACES.len())].1),
        _ => PLACES[rng.gen_range(0..PLACES.len())].0.to_string(),
    };
    let cond = match rng.gen_range(0..4) {
        0 => Cond::Always,
        1 => Cond::SameDept,
        _ => Cond::Window(rng.gen_range(0..1440), rng.gen_range(0..1440)),
    };
    Rule {
        id: format!("r{id}"),
        roles: pick(rng, &ROLES),
        pattern,
        actions: pick(rng, &ACTIONS),
        allow: rng.gen_bool(0.5),
        cond,
    }
}

pub fn to_acl_rule(rule: &Rule) -> AclRule {
    AclRule {
        rule_id: rule.id.clone(),
        roles: rule.roles.iter().map(|r| Role::parse(r).unwrap()).collect(),
        resource_pattern: rule.pattern.parse::<ResourcePattern>().unwrap(),
        actions: rule.actions.iter().map(|a| action(a)).collect(),
        operation: if rule.allow { Operation::Allow } else { Operation::Deny },
        condition: match rule.cond {
            Cond::Always => Condition::Always,
            Cond::SameDept => Condition::DepartmentMatch,
            Cond::Window(s, e) => Condition::TimeWindow { start_minute_of_day: s, end_minute_of_day: e },
        },
    }
}

pub fn action(name: &str) -> Action {
    match name {
        "Create" => Action::Create,
        "Read" => Action::Read,
        "Update" => Action::Update,
        "Delete" => Action::Delete,
        other => panic!("unknown action {other}"),
    }
}

pub fn to_overlay(entries: &[(&str, &str, bool, u64)]) -> Vec<DynamicEntry> {
    entries
        .iter()
        .map(|&(p, place, grant, seq)| DynamicEntry {
            participant_id: p.into(),
            place_id: place.into(),
            effect: if grant { Effect::Grant } else { Effect::Revoke },
            seq,
            granted_by: "admin".into(),
        })
        .collect()
}

/// Whether an implementation decision agrees with the oracle's verdict.
pub fn agrees(decision: &Decision, allow: bool, rule: Option<String>, seq: Option<u64>) -> bool {
    let source = match (rule, seq) {
        (_, Some(seq)) => DecisionSource::Dynamic { seq },
        (Some(rule_id), None) => DecisionSource::Static { rule_id },
        (None, None) => DecisionSource::DefaultDeny,
    };
    decision.is_allow() == allow && decision.source == source
}

/// Minutes worth probing for a rule set: every window boundary and its
/// neighbours, plus the ends of the day.
pub fn probe_minutes(rules: &[Rule]) -> Vec<u16> {
    let mut out = vec![0, 1, 719, 720, 1438, 1439];
    for rule in rules {
        if let Cond::Window(s, e) = rule.cond {
            for b in [s, e] {
                out.extend([b.saturating_sub(1), b, (b + 1).min(1439)]);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}
