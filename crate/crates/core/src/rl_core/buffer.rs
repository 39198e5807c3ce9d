use crate::error::{invalid, Result};
use crate::policy_repr::PolicyRecord;

/// Stored policies with their on-policy data, evicted oldest first once
/// the total step count would exceed `capacity`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyBuffer {
    records: Vec<PolicyRecord>,
    capacity: usize,
    steps: usize,
}

impl PolicyBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return invalid("buffer capacity must be positive");
        }
        Ok(Self {
            records: Vec::new(),
            capacity,
            steps: 0,
        })
    }

    /// Appends a record and returns how many old ones were evicted.
    pub fn push(&mut self, record: PolicyRecord) -> Result<usize> {
        if record.steps() > self.capacity {
            return invalid(format!(
                "record with {} steps exceeds buffer capacity {}",
                record.steps(),
                self.capacity
            ));
        }
        self.steps += record.steps();
        self.records.push(record);
        let mut evict = 0;
        let mut steps = self.steps;
        while steps > self.capacity {
            steps -= self.records[evict].steps();
            evict += 1;
        }
        self.records.drain(..evict);
        self.steps = steps;
        Ok(evict)
    }

    pub fn records(&self) -> &[PolicyRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&PolicyRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}
