//! IoT metering contract: immutable device metadata plus a rolling commitment
//! over every accepted reading.

use serde::{Deserialize, Serialize};

use crate::canonical_struct;
use crate::codec::Canonical;
use crate::crypto::{sha256_concat, Address, Hash32};

use super::ContractError;

/// Largest magnitude accepted for a single reading.
pub const MAX_ABS_ENERGY_WH: i64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterMetadata {
    pub device_type: String,
    pub measurement_type: String,
    pub unit: String,
    pub owner: Address,
}
canonical_struct!(MeterMetadata { device_type, measurement_type, unit, owner });

/// Energy metered by a device over one slot. Positive values are
/// consumption, negative values net generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyReading {
    pub slot: u64,
    pub energy_wh: i64,
    pub device: Address,
}
canonical_struct!(EnergyReading { slot, energy_wh, device });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterState {
    pub metadata: MeterMetadata,
    pub latest: Option<EnergyReading>,
    pub readings_root: Hash32,
    pub count: u64,
}
canonical_struct!(MeterState { metadata, latest, readings_root, count });

/// One step of the readings commitment: `sha256(root || canonical(reading))`.
pub fn fold_reading(root: &Hash32, reading: &EnergyReading) -> Hash32 {
    sha256_concat(&[&root.0, &reading.to_canonical_bytes()])
}

impl MeterState {
    pub fn new(device_type: String, measurement_type: String, owner: Address) -> Self {
        Self {
            metadata: MeterMetadata {
                device_type,
                measurement_type,
                unit: "Wh".to_string(),
                owner,
            },
            latest: None,
            readings_root: Hash32::ZERO,
            count: 0,
        }
    }

    /// Accepts a reading from the device owner. Slots must strictly increase,
    /// which gives at most one accepted reading per slot.
    pub fn update(
        &mut self,
        address: &Address,
        reading: EnergyReading,
        sender: &Address,
    ) -> Result<(), ContractError> {
        if *sender != self.metadata.owner {
            return Err(ContractError::Unauthorized("meter owner"));
        }
        if reading.device != *address {
            return Err(ContractError::Invalid(format!(
                "reading for device {} sent to meter {}",
                reading.device, address
            )));
        }
        if reading.energy_wh.abs() > MAX_ABS_ENERGY_WH {
            return Err(ContractError::Invalid(format!(
                "reading {} Wh out of bounds",
                reading.energy_wh
            )));
        }
        if let Some(latest) = &self.latest {
            if reading.slot <= latest.slot {
                return Err(ContractError::Invalid(format!(
                    "duplicate or stale slot {} (latest {})",
                    reading.slot, latest.slot
                )));
            }
        }
        self.readings_root = fold_reading(&self.readings_root, &reading);
        self.latest = Some(reading);
        self.count += 1;
        Ok(())
    }
}

/// Functional form of [`MeterState::update`].
pub fn meter_update(
    state: &MeterState,
    address: &Address,
    reading: EnergyReading,
    sender: &Address,
) -> Result<MeterState, ContractError> {
    let mut next = state.clone();
    next.update(address, reading, sender)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    const OWNER: Address = Address([1u8; 20]);
    const METER: Address = Address([2u8; 20]);

    fn meter() -> MeterState {
        MeterState::new("smart-meter".into(), "energy".into(), OWNER)
    }

    fn reading(slot: u64, energy_wh: i64) -> EnergyReading {
        EnergyReading {
            slot,
            energy_wh,
            device: METER,
        }
    }

    #[test]
    fn first_reading() {
        let m = meter_update(&meter(), &METER, reading(0, 1500), &OWNER).unwrap();
        assert_eq!(m.count, 1);
        assert_eq!(m.latest.unwrap().slot, 0);
        assert_eq!(m.metadata, meter().metadata);
    }

    #[test]
    fn readings_root_is_hash_fold() {
        let readings = [reading(0, 1500), reading(1, -200), reading(2, 0)];
        let mut m = meter();
        for r in readings {
            m.update(&METER, r, &OWNER).unwrap();
        }
        // Independent fold over the raw canonical bytes.
        let mut expected = [0u8; 32];
        for r in readings {
            let mut buf = expected.to_vec();
            buf.extend_from_slice(&r.slot.to_be_bytes());
            buf.extend_from_slice(&r.energy_wh.to_be_bytes());
            buf.extend_from_slice(&r.device.0);
            expected = crate::crypto::sha256(&buf).0;
        }
        assert_eq!(m.readings_root, Hash32(expected));
        assert_eq!(m.count, 3);
    }

    #[test]
    fn rejects_non_owner_duplicate_and_out_of_bounds() {
        let m = meter_update(&meter(), &METER, reading(5, 10), &OWNER).unwrap();
        assert!(meter_update(&m, &METER, reading(6, 10), &Address([3u8; 20])).is_err());
        assert!(meter_update(&m, &METER, reading(5, 99), &OWNER).is_err());
        assert!(meter_update(&m, &METER, reading(4, 99), &OWNER).is_err());
        assert!(meter_update(&m, &METER, reading(7, MAX_ABS_ENERGY_WH + 1), &OWNER).is_err());
        assert!(meter_update(&m, &METER, reading(7, -MAX_ABS_ENERGY_WH), &OWNER).is_ok());
    }

    #[test]
    fn reading_for_other_device_rejected() {
        let mut r = reading(0, 1);
        r.device = Address([9u8; 20]);
        assert!(meter_update(&meter(), &METER, r, &OWNER).is_err());
    }
}
