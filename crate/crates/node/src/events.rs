//! Post-commit event bus: an in-memory log of committed events with
//! per-subscriber cursors.

use std::collections::{BTreeSet, HashMap};

use doorchain_core::chaincode::{ChainEvent, EventKind};
use doorchain_core::domain::PlaceId;
use doorchain_core::ledger::EventId;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

pub type SubscriptionId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeliveredEvent {
    pub id: EventId,
    pub event: ChainEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventFilter {
    /// `None` matches every kind.
    pub kinds: Option<BTreeSet<EventKind>>,
    pub place: Option<PlaceId>,
}

impl EventFilter {
    pub fn kinds(kinds: impl IntoIterator<Item = EventKind>) -> Self {
        EventFilter { kinds: Some(kinds.into_iter().collect()), place: None }
    }

    pub fn matches(&self, event: &ChainEvent) -> bool {
        self.kinds.as_ref().is_none_or(|k| k.contains(&event.kind))
            && self.place.as_ref().is_none_or(|p| event.place_id.as_ref() == Some(p))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("unknown subscription {0}")]
    UnknownSubscription(SubscriptionId),
}

struct Subscription {
    filter: EventFilter,
    /// Index into the log of the next event to examine.
    cursor: usize,
}

#[derive(Default)]
struct Inner {
    log: Vec<DeliveredEvent>,
    subscriptions: HashMap<SubscriptionId, Subscription>,
    next_id: SubscriptionId,
}

pub struct EventBus {
    inner: Mutex<Inner>,
    published: watch::Sender<usize>,
}

impl Default for EventBus {
    fn default() -> Self {
        Self::new()
    }
}

impl EventBus {
    pub fn new() -> Self {
        EventBus { inner: Mutex::new(Inner::default()), published: watch::channel(0).0 }
    }

    /// Appends the events of one committed block. Ids must increase.
    pub fn publish(&self, events: impl IntoIterator<Item = (EventId, ChainEvent)>) {
        let mut inner = self.inner.lock();
        for (id, event) in events {
            if let Some(last) = inner.log.last() {
                assert!(id > last.id, "events must be published in commit order");
            }
            inner.log.push(DeliveredEvent { id, event });
        }
        let len = inner.log.len();
        drop(inner);
        self.published.send_replace(len);
    }

    pub fn subscribe(&self, filter: EventFilter) -> SubscriptionId {
        self.subscribe_after(filter, None)
    }

    /// Subscribes starting after `after`, or from the beginning.
    pub fn subscribe_after(&self, filter: EventFilter, after: Option<EventId>) -> SubscriptionId {
        let mut inner = self.inner.lock();
        let cursor = after.map_or(0, |after| inner.log.partition_point(|e| e.id <= after));
        let id = inner.next_id;
        inner.next_id += 1;
        inner.subscriptions.insert(id, Subscription { filter, cursor });
        id
    }

    pub fn unsubscribe(&self, id: SubscriptionId) -> Result<(), BusError> {
        self.inner.lock().subscriptions.remove(&id).map(|_| ()).ok_or(BusError::UnknownSubscription(id))
    }

    /// Up to `max` matching events past the subscription's cursor, in
    /// commit order. Advances the cursor past everything examined.
    pub fn poll(&self, id: SubscriptionId, max: usize) -> Result<Vec<DeliveredEvent>, BusError> {
        let mut inner = self.inner.lock();
        let Inner { log, subscriptions, .. } = &mut *inner;
        let sub = subscriptions.get_mut(&id).ok_or(BusError::UnknownSubscription(id))?;
        let mut out = Vec::new();
        while sub.cursor < log.len() && out.len() < max {
            let event = &log[sub.cursor];
            sub.cursor += 1;
            if sub.filter.matches(&event.event) {
                out.push(event.clone());
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<DeliveredEvent> {
        self.inner.lock().log.clone()
    }

    /// Receiver that changes whenever events are published.
    pub fn watch(&self) -> watch::Receiver<usize> {
        self.published.subscribe()
    }
}
