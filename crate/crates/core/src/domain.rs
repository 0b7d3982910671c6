//! Business entities and identity cards.

use alloc::string::String;
use core::fmt;

use rand_core::CryptoRngCore;
use serde::{Deserialize, Serialize};

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::crypto::{PublicKey, SecretKey, Signature};
use crate::time::Timestamp;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Debug::fmt(&self.0, f)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(String::from(s))
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }

        impl Canonical for $name {
            fn encode(&self, enc: &mut Encoder) {
                enc.put_str(&self.0);
            }

            fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
                dec.get_string().map(Self)
            }
        }
    };
}

id_type!(ParticipantId);
id_type!(PlaceId);
id_type!(
    /// Department identifier; also the scope of CEO authority and delegations.
    DepartmentId
);
id_type!(CardId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Admin,
    #[serde(rename = "CEO")]
    Ceo,
    Manager,
    Employee,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Admin, Role::Ceo, Role::Manager, Role::Employee];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "Admin",
            Role::Ceo => "CEO",
            Role::Manager => "Manager",
            Role::Employee => "Employee",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Participant {
    pub participant_id: ParticipantId,
    pub display_name: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub department_id: Option<DepartmentId>,
}

impl Participant {
    pub fn new(id: &str, display_name: &str, role: Role, department: Option<&str>) -> Self {
        Participant {
            participant_id: id.into(),
            display_name: display_name.into(),
            role,
            department_id: department.map(DepartmentId::from),
        }
    }

    /// Field-level invariants: a non-empty id, and a department for every CEO.
    pub fn check(&self) -> Result<(), &'static str> {
        if self.participant_id.as_str().is_empty() {
            return Err("participantId must be non-empty");
        }
        if self.role == Role::Ceo && self.department_id.as_ref().is_none_or(|d| d.as_str().is_empty()) {
            return Err("a CEO participant must carry a departmentId");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Department {
    pub department_id: DepartmentId,
    pub name: String,
    pub ceo_participant_id: ParticipantId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PhysicalPlace {
    pub place_id: PlaceId,
    pub description: String,
    pub department_id: DepartmentId,
}

impl PhysicalPlace {
    pub fn new(id: &str, description: &str, department: &str) -> Self {
        PhysicalPlace { place_id: id.into(), description: description.into(), department_id: department.into() }
    }
}

/// Credential binding a participant to a verification key, certified by the
/// network's issuing authority.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IdentityCard {
    pub card_id: CardId,
    pub participant_id: ParticipantId,
    pub public_key: PublicKey,
    pub certificate: Signature,
    pub issued_at: Timestamp,
}

const CARD_CERT_DOMAIN: &str = "doorchain-card-v1";

impl IdentityCard {
    /// The bytes the issuer signs: (cardId, participantId, publicKey).
    pub fn certified_bytes(card_id: &CardId, participant_id: &ParticipantId, public_key: &PublicKey) -> alloc::vec::Vec<u8> {
        let mut enc = Encoder::new();
        enc.put_str(CARD_CERT_DOMAIN).put(card_id).put(participant_id).put(public_key);
        enc.into_bytes()
    }
}

impl Canonical for IdentityCard {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.card_id)
            .put(&self.participant_id)
            .put(&self.public_key)
            .put(&self.certificate)
            .put(&self.issued_at);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(IdentityCard {
            card_id: dec.get()?,
            participant_id: dec.get()?,
            public_key: dec.get()?,
            certificate: dec.get()?,
            issued_at: dec.get()?,
        })
    }
}

/// A card together with the holder's private key, as kept by the card owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HolderCard {
    pub card: IdentityCard,
    pub private_key: SecretKey,
}

/// Anything that can answer "is this participant registered?".
pub trait ParticipantDirectory {
    fn is_registered(&self, id: &ParticipantId) -> bool;
}

impl<F: Fn(&ParticipantId) -> bool> ParticipantDirectory for F {
    fn is_registered(&self, id: &ParticipantId) -> bool {
        self(id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CardError {
    UnknownParticipant(ParticipantId),
}

impl fmt::Display for CardError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CardError::UnknownParticipant(id) => write!(f, "unknown participant {id}"),
        }
    }
}

impl core::error::Error for CardError {}

/// Certifies `holder_key` for `participant_id` with a fresh random card id.
pub fn issue_card<R: CryptoRngCore + ?Sized>(
    directory: &impl ParticipantDirectory,
    participant_id: &ParticipantId,
    holder_key: PublicKey,
    issuer: &SecretKey,
    issued_at: Timestamp,
    rng: &mut R,
) -> Result<IdentityCard, CardError> {
    if !directory.is_registered(participant_id) {
        return Err(CardError::UnknownParticipant(participant_id.clone()));
    }
    let mut nonce = [0u8; 16];
    rng.fill_bytes(&mut nonce);
    let card_id = CardId(alloc::format!("card-{}", hex::encode(nonce)));
    Ok(certify(card_id, participant_id.clone(), holder_key, issuer, issued_at))
}

/// Generates a holder key pair and issues a card for it.
pub fn issue_holder_card<R: CryptoRngCore + ?Sized>(
    directory: &impl ParticipantDirectory,
    participant_id: &ParticipantId,
    issuer: &SecretKey,
    issued_at: Timestamp,
    rng: &mut R,
) -> Result<HolderCard, CardError> {
    let private_key = SecretKey::generate(rng);
    let card = issue_card(directory, participant_id, private_key.public_key(), issuer, issued_at, rng)?;
    Ok(HolderCard { card, private_key })
}

/// Builds a card with a caller-chosen id. The caller is responsible for id freshness.
pub fn certify(
    card_id: CardId,
    participant_id: ParticipantId,
    public_key: PublicKey,
    issuer: &SecretKey,
    issued_at: Timestamp,
) -> IdentityCard {
    let certificate = issuer.sign(&IdentityCard::certified_bytes(&card_id, &participant_id, &public_key));
    IdentityCard { card_id, participant_id, public_key, certificate, issued_at }
}

pub fn verify_card(card: &IdentityCard, issuer: &PublicKey) -> bool {
    issuer.verify(
        &IdentityCard::certified_bytes(&card.card_id, &card.participant_id, &card.public_key),
        &card.certificate,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn registry(id: &ParticipantId) -> bool {
        id.as_str() == "alice"
    }

    fn ca() -> SecretKey {
        SecretKey::from_seed([42; 32])
    }

    fn alice_card() -> IdentityCard {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let holder = SecretKey::generate(&mut rng);
        issue_card(&registry, &"alice".into(), holder.public_key(), &ca(), Timestamp::from_millis(0), &mut rng).unwrap()
    }

    #[test]
    fn issued_card_verifies() {
        let card = alice_card();
        assert_eq!(card.participant_id.as_str(), "alice");
        assert!(verify_card(&card, &ca().public_key()));
    }

    #[test]
    fn successive_cards_have_distinct_ids() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let a = issue_holder_card(&registry, &"alice".into(), &ca(), Timestamp::EPOCH, &mut rng).unwrap();
        let b = issue_holder_card(&registry, &"alice".into(), &ca(), Timestamp::EPOCH, &mut rng).unwrap();
        assert_ne!(a.card.card_id, b.card.card_id);
    }

    #[test]
    fn unregistered_participant_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let err = issue_holder_card(&registry, &"ghost".into(), &ca(), Timestamp::EPOCH, &mut rng).unwrap_err();
        assert_eq!(err, CardError::UnknownParticipant("ghost".into()));
    }

    #[test]
    fn wrong_issuer_key_rejects() {
        assert!(!verify_card(&alice_card(), &SecretKey::from_seed([43; 32]).public_key()));
    }

    #[test]
    fn ceo_requires_department() {
        assert!(Participant::new("c", "C", Role::Ceo, None).check().is_err());
        assert!(Participant::new("c", "C", Role::Ceo, Some("dept-x")).check().is_ok());
        assert!(Participant::new("", "E", Role::Employee, None).check().is_err());
    }

    #[test]
    fn role_json_labels() {
        assert_eq!(serde_json::to_string(&Role::Ceo).unwrap(), "\"CEO\"");
        for role in Role::ALL {
            assert_eq!(Role::parse(role.as_str()), Some(role));
        }
    }

    #[derive(Debug, Clone, Copy)]
    enum Field {
        CardId,
        ParticipantId,
        PublicKey,
    }

    proptest! {
        #[test]
        fn mutating_any_certified_byte_breaks_the_card(
            field in prop_oneof![Just(Field::CardId), Just(Field::ParticipantId), Just(Field::PublicKey)],
            pos in any::<proptest::sample::Index>(),
            flip in 1u8..=255,
        ) {
            let mut card = alice_card();
            match field {
                Field::CardId => {
                    let mut bytes = card.card_id.0.clone().into_bytes();
                    let i = pos.index(bytes.len());
                    bytes[i] ^= flip;
                    card.card_id = CardId(String::from_utf8_lossy(&bytes).into_owned());
                }
                Field::ParticipantId => {
                    let mut bytes = card.participant_id.0.clone().into_bytes();
                    let i = pos.index(bytes.len());
                    bytes[i] ^= flip;
                    card.participant_id = ParticipantId(String::from_utf8_lossy(&bytes).into_owned());
                }
                Field::PublicKey => {
                    let i = pos.index(32);
                    card.public_key.0[i] ^= flip;
                }
            }
            prop_assert!(!verify_card(&card, &ca().public_key()));
        }
    }
}
