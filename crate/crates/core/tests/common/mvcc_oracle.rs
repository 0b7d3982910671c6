//! Sequential reference model of MVCC block validation and a random
//! workload driver that checks the real validator against it.

use std::collections::BTreeMap;

use doorchain_core::{TransactionEnvelope, Validity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::common::*;

type Entry = (Vec<u8>, (u64, u32));

/// Sequential reference model of block validation over plain maps.
#[derive(Default)]
pub struct Oracle {
    state: BTreeMap<String, Entry>,
}

impl Oracle {
    pub fn from_ledger(ledger: &doorchain_core::Ledger) -> Self {
        let state = ledger
            .state()
            .iter()
            .map(|(k, v)| (k.to_string(), (v.value.clone(), (v.version.block_height, v.version.tx_offset))))
            .collect();
        Oracle { state }
    }

    pub fn apply_block(&mut self, height: u64, txs: &[TransactionEnvelope]) -> Vec<Validity> {
        let mut flags = Vec::new();
        for (offset, tx) in txs.iter().enumerate() {
            let fresh = tx.rwset.reads.iter().all(|r| {
                let current = self.state.get(&r.key).map(|(_, v)| *v);
                current == r.version.map(|v| (v.block_height, v.tx_offset))
            });
            if fresh {
                for w in &tx.rwset.writes {
                    match &w.value {
                        Some(value) => {
                            self.state.insert(w.key.clone(), (value.clone(), (height, offset as u32)));
                        }
                        None => {
                            self.state.remove(&w.key);
                        }
                    }
                }
                flags.push(Validity::Valid);
            } else {
                flags.push(Validity::InvalidMvcc);
            }
        }
        flags
    }

    pub fn state_hash(&self) -> [u8; 32] {
        let mut sha = Sha256::new();
        for (key, (value, (height, offset))) in &self.state {
            sha.update((key.len() as u32).to_be_bytes());
            sha.update(key.as_bytes());
            sha.update((value.len() as u32).to_be_bytes());
            sha.update(value);
            sha.update(height.to_be_bytes());
            sha.update(offset.to_be_bytes());
        }
        sha.finalize().into()
    }
}

/// Proposes `count` random transactions, all simulated against the same
/// snapshot, so that conflicts are likely.
fn concurrent_batch(fx: &mut Fixture, rng: &mut ChaCha8Rng, count: usize) -> Vec<TransactionEnvelope> {
    let people = ["alice", "bob", "mike"];
    let places = ["door-1", "door-2", "door-y1"];
    let admin = fx.admin.clone();
    let carol = fx.card("carol");
    (0..count)
        .map(|_| {
            let who = people[rng.gen_range(0..people.len())];
            let place = places[rng.gen_range(0..places.len())];
            let proposal = match rng.gen_range(0..4) {
                0 => fx.propose(&admin, grant(who, place)),
                1 => fx.propose(&carol, revoke(who, place)),
                _ => {
                    let card = fx.card(who);
                    fx.propose(&card, check(place))
                }
            };
            fx.endorse(&proposal)
        })
        .collect()
}

pub fn run_against_oracle(seed: u64, total: usize) {
    if let Err(e) = check_against_oracle(seed, total, None) {
        panic!("{e}");
    }
}

/// Runs `total` random transactions through real validation and the model.
/// With `block_size`, every block holds exactly that many transactions, all
/// simulated against the same snapshot; otherwise batch and block sizes vary.
pub fn check_against_oracle(seed: u64, total: usize, block_size: Option<usize>) -> Result<(), String> {
    let mut fx = Fixture::new(default_rules(), 2).with_org();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oracle = Oracle::from_ledger(fx.peers[0].ledger());
    let mut done = 0;
    while done < total {
        let batch = block_size.unwrap_or_else(|| rng.gen_range(1..=12)).min(total - done);
        let txs = concurrent_batch(&mut fx, &mut rng, batch);
        done += batch;
        // The orderer may split a batch across blocks of at most 10.
        let mut rest = txs.as_slice();
        while !rest.is_empty() {
            let take = match block_size {
                Some(_) => rest.len(),
                None => rng.gen_range(1..=rest.len().min(10)),
            };
            let (block, tail) = rest.split_at(take);
            rest = tail;
            let height = fx.peers[0].ledger().height() + 1;
            let expected = oracle.apply_block(height, block);
            let summary = fx.commit(block.to_vec());
            if summary.validity != expected {
                return Err(format!("seed {seed} height {height}: flags {:?}, model {expected:?}", summary.validity));
            }
        }
        if fx.peers[0].ledger().state_hash().0 != oracle.state_hash() {
            return Err(format!("seed {seed}: state hash differs from the model after {done} transactions"));
        }
    }
    let hashes = fx.state_hashes();
    if !hashes.windows(2).all(|w| w[0] == w[1]) {
        return Err(format!("seed {seed}: peers diverged"));
    }
    Ok(())
}
