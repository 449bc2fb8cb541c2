use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::timebase::{sample_period_for, Nanos};

/// OFDM frame/slot parameters. Defaults are the reference 10 MHz setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhyConfig {
    pub bandwidth_hz: u64,
    pub payload_symbols: u32,
    pub preamble_symbols: u32,
    pub fft_len: u32,
    pub cp_len: u32,
    pub guard_samples: u32,
    pub slots_per_frame: u32,
}

impl Default for PhyConfig {
    fn default() -> Self {
        PhyConfig {
            bandwidth_hz: 10_000_000,
            payload_symbols: 128,
            preamble_symbols: 4,
            fft_len: 64,
            cp_len: 16,
            guard_samples: 360,
            slots_per_frame: 19,
        }
    }
}

impl PhyConfig {
    /// Reduced-payload variant used for low-latency runs.
    pub fn short_packet() -> Self {
        PhyConfig {
            payload_symbols: 12,
            guard_samples: 80,
            ..PhyConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        sample_period_for(self.bandwidth_hz)?;
        if self.fft_len == 0 {
            return Err(ProtocolError::InvalidPhy("fft_len must be positive".into()));
        }
        if self.preamble_symbols == 0 {
            return Err(ProtocolError::InvalidPhy(
                "preamble_symbols must be positive".into(),
            ));
        }
        if self.slots_per_frame < 2 {
            return Err(ProtocolError::InvalidPhy(format!(
                "slots_per_frame must be at least 2, got {}",
                self.slots_per_frame
            )));
        }
        Ok(())
    }

    pub fn sample_period(&self) -> Nanos {
        sample_period_for(self.bandwidth_hz).expect("validated bandwidth")
    }

    pub fn symbol_samples(&self) -> u64 {
        (self.fft_len + self.cp_len) as u64
    }

    /// Samples occupied by a packet's preamble and payload.
    pub fn airtime_samples(&self) -> u64 {
        (self.payload_symbols + self.preamble_symbols) as u64 * self.symbol_samples()
    }

    pub fn slot_samples(&self) -> u64 {
        self.airtime_samples() + self.guard_samples as u64
    }

    pub fn airtime(&self) -> Nanos {
        Nanos(self.airtime_samples() as i64 * self.sample_period().0)
    }

    pub fn slot_duration(&self) -> Nanos {
        Nanos(self.slot_samples() as i64 * self.sample_period().0)
    }

    pub fn frame_duration(&self) -> Nanos {
        self.slot_duration() * self.slots_per_frame as i64
    }

    pub fn frame_samples(&self) -> u64 {
        self.slot_samples() * self.slots_per_frame as u64
    }
}

pub fn slot_duration(phy: &PhyConfig) -> Nanos {
    phy.slot_duration()
}
