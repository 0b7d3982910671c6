//! Card export/import: one JSON document per card.

use std::path::Path;

use anyhow::Context;
use doorchain_core::domain::{HolderCard, IdentityCard};
use doorchain_core::SecretKey;
use serde::{Deserialize, Serialize};

/// On-disk card. Holder-side cards carry `privateKey`; `gateway` is the
/// client-side connection profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CardFile {
    #[serde(flatten)]
    pub card: IdentityCard,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub private_key: Option<SecretKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gateway: Option<String>,
}

impl CardFile {
    pub fn holder(holder: &HolderCard, gateway: Option<String>) -> Self {
        CardFile { card: holder.card.clone(), private_key: Some(holder.private_key.clone()), gateway }
    }

    pub fn public(card: IdentityCard) -> Self {
        CardFile { card, private_key: None, gateway: None }
    }

    pub fn to_holder(&self) -> anyhow::Result<HolderCard> {
        let private_key = self.private_key.clone().context("card file has no private key")?;
        anyhow::ensure!(private_key.public_key() == self.card.public_key, "private key does not match the card's public key");
        Ok(HolderCard { card: self.card.clone(), private_key })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading card {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing card {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing card {}", path.display()))
    }
}
