#[path = "common/acl_oracle.rs"]
mod oracle;

use doorchain_core::acl::{decide_effective, decide_static, AccessRequest};
use doorchain_core::domain::{Participant, PhysicalPlace, Role};
use doorchain_core::Timestamp;
use oracle::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 2026-01-01T00:00:00Z
const MIDNIGHT: i64 = 1_767_225_600_000;

fn at_minute(minute: u16) -> Timestamp {
    Timestamp::from_millis(MIDNIGHT + i64::from(minute) * 60_000 + 17_000)
}

#[test]
fn static_decisions_match_oracle_exhaustively() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0usize;
    for set in 0..200 {
        let rules: Vec<Rule> = (0..rng.gen_range(0..7)).map(|i| random_rule(&mut rng, i)).collect();
        let acl: Vec<_> = rules.iter().map(to_acl_rule).collect();
        for role in ROLES {
            for dept in DEPTS {
                let participant = Participant::new("p", "P", Role::parse(role).unwrap(), dept);
                for (place_id, place_dept) in PLACES {
                    let place = PhysicalPlace::new(place_id, place_id, place_dept);
                    for action_name in ACTIONS {
                        for minute in probe_minutes(&rules) {
                            let q = Query { role, dept, place: place_id, place_dept, action: action_name, minute };
                            let (allow, rule) = decide(&rules, &q);
                            let request = AccessRequest { participant: &participant, place: &place, action: action(action_name), at: at_minute(minute) };
                            let got = decide_static(&acl, &request);
                            assert!(agrees(&got, allow, rule, None), "set {set}: {q_role} {dept:?} {place_id} {action_name} @{minute}: {got:?}", q_role = role);
                            checked += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(checked > 100_000);
}

#[test]
fn overlay_decisions_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let people = ["alice", "bob", "carol"];
    for _ in 0..10_000 {
        let rules: Vec<Rule> = (0..rng.gen_range(0..4)).map(|i| random_rule(&mut rng, i)).collect();
        let acl: Vec<_> = rules.iter().map(to_acl_rule).collect();
        let mut seqs: Vec<u64> = (0..50).collect();
        let entries: Vec<(&str, &str, bool, u64)> = (0..rng.gen_range(0..8))
            .map(|_| {
                let seq = seqs.swap_remove(rng.gen_range(0..seqs.len()));
                (people[rng.gen_range(0..3)], PLACES[rng.gen_range(0..PLACES.len())].0, rng.gen_bool(0.5), seq)
            })
            .collect();
        let who = people[rng.gen_range(0..3)];
        let role = ROLES[rng.gen_range(0..4)];
        let dept = DEPTS[rng.gen_range(0..DEPTS.len())];
        let (place_id, place_dept) = PLACES[rng.gen_range(0..PLACES.len())];
        let action_name = ACTIONS[rng.gen_range(0..4)];
        let minute = rng.gen_range(0..1440);

        let q = Query { role, dept, place: place_id, place_dept, action: action_name, minute };
        let (allow, rule, seq) = decide_with_overlay(&rules, &entries, who, &q);
        let participant = Participant::new(who, who, Role::parse(role).unwrap(), dept);
        let place = PhysicalPlace::new(place_id, place_id, place_dept);
        let request = AccessRequest { participant: &participant, place: &place, action: action(action_name), at: at_minute(minute) };
        let got = decide_effective(&acl, &to_overlay(&entries), &request);
        assert!(agrees(&got, allow, rule, seq), "{entries:?} {who} {place_id} {action_name}: {got:?}");
    }
}

proptest! {
    #[test]
    fn default_deny_without_rules_or_overlay(role in 0usize..4, place in 0usize..4, action_ix in 0usize..4, minute in 0u16..1440) {
        let participant = Participant::new("p", "P", Role::parse(ROLES[role]).unwrap(), Some("dept-x"));
        let place = PhysicalPlace::new(PLACES[place].0, "", PLACES[place].1);
        let request = AccessRequest { participant: &participant, place: &place, action: action(ACTIONS[action_ix]), at: at_minute(minute) };
        prop_assert_eq!(decide_effective(&[], &[], &request), doorchain_core::Decision::DEFAULT_DENY);
    }

    /// Entry order in the overlay never changes the decision.
    #[test]
    fn overlay_order_is_irrelevant(grants in proptest::collection::vec(any::<bool>(), 1..8), seed in any::<u64>()) {
        let entries: Vec<(&str, &str, bool, u64)> = grants.iter().enumerate().map(|(i, g)| ("alice", "door-1", *g, i as u64 * 3)).collect();
        let mut shuffled = entries.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        let participant = Participant::new("alice", "A", Role::Employee, None);
        let place = PhysicalPlace::new("door-1", "", "dept-x");
        let request = AccessRequest { participant: &participant, place: &place, action: action("Read"), at: at_minute(0) };
        let a = decide_effective(&[], &to_overlay(&entries), &request);
        let b = decide_effective(&[], &to_overlay(&shuffled), &request);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.is_allow(), *grants.last().unwrap());
    }
}
