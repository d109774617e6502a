use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::ProfileError;

/// The adversary's cap on website accesses. Shared by reference between
/// parallel dummy clients; consumption is an atomic check-and-add.
#[derive(Debug)]
pub struct QueryBudget {
    max_queries: u64,
    consumed: AtomicU64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub max_queries: u64,
    pub consumed: u64,
}

impl QueryBudget {
    pub fn new(max_queries: u64) -> Self {
        Self {
            max_queries,
            consumed: AtomicU64::new(0),
        }
    }

    pub fn max_queries(&self) -> u64 {
        self.max_queries
    }

    pub fn consumed(&self) -> u64 {
        self.consumed.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> u64 {
        self.max_queries - self.consumed()
    }

    /// Takes `n` accesses or fails without taking any.
    pub fn try_consume(&self, n: u64) -> Result<(), ProfileError> {
        self.consumed
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| {
                c.checked_add(n).filter(|&next| next <= self.max_queries)
            })
            .map(|_| ())
            .map_err(|c| ProfileError::BudgetExceeded {
                required: n,
                available: self.max_queries - c,
                shortfall: n - (self.max_queries - c),
            })
    }

    pub fn report(&self) -> BudgetReport {
        BudgetReport {
            max_queries: self.max_queries,
            consumed: self.consumed(),
        }
    }
}

impl Clone for QueryBudget {
    fn clone(&self) -> Self {
        Self {
            max_queries: self.max_queries,
            consumed: AtomicU64::new(self.consumed()),
        }
    }
}

impl Serialize for QueryBudget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.report().serialize(s)
    }
}

impl<'de> Deserialize<'de> for QueryBudget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = BudgetReport::deserialize(d)?;
        if r.consumed > r.max_queries {
            return Err(serde::de::Error::custom("consumed exceeds max_queries"));
        }
        Ok(Self {
            max_queries: r.max_queries,
            consumed: AtomicU64::new(r.consumed),
        })
    }
}
