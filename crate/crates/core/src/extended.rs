use core::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A value in `ℕ ∪ {∞}`.
///
/// The derived ordering places every finite value below `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Budget {
    Finite(u32),
    Infinite,
}

impl Budget {
    pub const ZERO: Budget = Budget::Finite(0);

    pub fn is_finite(self) -> bool {
        matches!(self, Budget::Finite(_))
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Budget::Finite(v) => Some(v),
            Budget::Infinite => None,
        }
    }

    /// `self + n`, saturating to `Infinite` once the sum reaches `cap`.
    pub fn add_capped(self, n: u32, cap: u32) -> Budget {
        match self {
            Budget::Finite(v) => match v.checked_add(n) {
                Some(sum) if sum < cap => Budget::Finite(sum),
                _ => Budget::Infinite,
            },
            Budget::Infinite => Budget::Infinite,
        }
    }

    /// True when a remaining budget of `k` is at least this value.
    pub fn is_covered_by(self, k: u32) -> bool {
        match self {
            Budget::Finite(v) => v <= k,
            Budget::Infinite => false,
        }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::ZERO
    }
}

impl From<u32> for Budget {
    fn from(v: u32) -> Self {
        Budget::Finite(v)
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Finite(v) => write!(f, "{v}"),
            Budget::Infinite => f.write_str("inf"),
        }
    }
}

// Serialized as a plain integer, or the string "inf".
impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Budget::Finite(v) => serializer.serialize_u32(*v),
            Budget::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BudgetVisitor;

        impl Visitor<'_> for BudgetVisitor {
            type Value = Budget;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative integer or \"inf\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Budget, E> {
                u32::try_from(v)
                    .map(Budget::Finite)
                    .map_err(|_| E::custom("budget out of range"))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Budget, E> {
                u32::try_from(v)
                    .map(Budget::Finite)
                    .map_err(|_| E::custom("budget must be a non-negative integer"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Budget, E> {
                if v == "inf" {
                    Ok(Budget::Infinite)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(BudgetVisitor)
    }
}
