use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Switches that remove one model component at a time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationConfig {
    /// Aggregate the social graph into `h^S`; when off `h^S` is a zero vector.
    pub use_social: bool,
    /// Fuse opinion embeddings into interactions; when off `e_r` is a zero vector.
    pub use_opinion: bool,
    /// Item attention α; when off the item aggregation is a plain mean.
    pub attn_item: bool,
    /// Social attention β.
    pub attn_social: bool,
    /// User attention μ.
    pub attn_user: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::FULL
    }
}

impl AblationConfig {
    pub const FULL: Self = Self {
        use_social: true,
        use_opinion: true,
        attn_item: true,
        attn_social: true,
        attn_user: true,
    };

    /// The seven named variants in reporting order.
    pub const VARIANT_NAMES: [&'static str; 7] = ["full", "sn", "opinion", "alpha", "beta", "alphabeta", "mu"];

    pub fn variant(name: &str) -> Option<Self> {
        let f = Self::FULL;
        Some(match name.to_ascii_lowercase().as_str() {
            "full" => f,
            "sn" => Self { use_social: false, ..f },
            "opinion" => Self { use_opinion: false, ..f },
            "alpha" => Self { attn_item: false, ..f },
            "beta" => Self { attn_social: false, ..f },
            "alphabeta" | "alpha&beta" => Self {
                attn_item: false,
                attn_social: false,
                ..f
            },
            "mu" => Self { attn_user: false, ..f },
            _ => return None,
        })
    }

    /// Name of the matching variant, or a flag string for other combinations.
    pub fn name(&self) -> String {
        for n in Self::VARIANT_NAMES {
            if Self::variant(n).as_ref() == Some(self) {
                return n.to_string();
            }
        }
        format!(
            "custom(social={},opinion={},alpha={},beta={},mu={})",
            self.use_social, self.use_opinion, self.attn_item, self.attn_social, self.attn_user
        )
    }

    /// Component-wise AND of two configurations.
    pub fn compose(self, other: Self) -> Self {
        Self {
            use_social: self.use_social && other.use_social,
            use_opinion: self.use_opinion && other.use_opinion,
            attn_item: self.attn_item && other.attn_item,
            attn_social: self.attn_social && other.attn_social,
            attn_user: self.attn_user && other.attn_user,
        }
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for AblationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::variant(s).ok_or_else(|| {
            Error::Config(format!(
                "unknown variant {s:?}; expected one of {}",
                Self::VARIANT_NAMES.join(", ")
            ))
        })
    }
}
