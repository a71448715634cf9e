use serde::{Deserialize, Serialize};

/// Weight of one payload byte.
pub const BYTE_WEIGHT: u64 = 1;
/// Weight of one hash invocation during verification.
pub const HASH_WEIGHT: u64 = 60;
/// Weight of one storage write.
pub const WRITE_WEIGHT: u64 = 5_000;

/// Work done by one accepted synchronization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostReport {
    pub payload_bytes: u64,
    pub hash_invocations: u64,
    pub nodes_verified: u64,
    pub storage_writes: u64,
    /// Number of values the payload proves.
    pub values: u64,
    pub total_cost: u64,
    pub per_value_cost: f64,
}

impl CostReport {
    pub fn new(
        payload_bytes: u64,
        hash_invocations: u64,
        nodes_verified: u64,
        storage_writes: u64,
        values: u64,
    ) -> Self {
        let total_cost = payload_bytes * BYTE_WEIGHT
            + hash_invocations * HASH_WEIGHT
            + storage_writes * WRITE_WEIGHT;
        CostReport {
            payload_bytes,
            hash_invocations,
            nodes_verified,
            storage_writes,
            values,
            total_cost,
            per_value_cost: total_cost as f64 / values.max(1) as f64,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights() {
        let r = CostReport::new(100, 2, 3, 1, 4);
        assert_eq!(r.total_cost, 100 + 120 + 5_000);
        assert_eq!(r.per_value_cost, 5_220.0 / 4.0);
        assert!(r.to_json_line().contains("\"perValueCost\":1305.0"));
    }
}
