//! Doorchain node: in-process peer network, event bus, HTTP gateway, CLI
//! client and benchmark harness on top of `doorchain-core`.

pub mod bench;
pub mod cardfile;
pub mod client;
pub mod config;
pub mod events;
pub mod gateway;
pub mod network;
pub mod store;

use doorchain_core::Timestamp;

/// Wall-clock time as a ledger timestamp.
pub fn now() -> Timestamp {
    let ms = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as i64);
    Timestamp::from_millis(ms)
}
