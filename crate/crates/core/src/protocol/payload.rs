//! Canonical wire form of beacon and data payloads.
//!
//! Fields are written in declaration order as little-endian fixed-width
//! integers. Variable-length lists carry a `u16` count prefix.

use thiserror::Error;

use crate::timebase::{HostTime, RadioTime};
use crate::NodeId;

use super::SlotAddress;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("payload truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("unknown application message tag {0}")]
    UnknownTag(u8),
    #[error("list of {0} entries exceeds the u16 count field")]
    TooLong(usize),
}

/// One device's uplink as observed by the AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feedback {
    pub device: NodeId,
    /// The radio timestamp the device tagged on that uplink, echoed so the
    /// device can pair this observation with its own record.
    pub tx_echo: RadioTime,
    /// AP radio time of detection.
    pub rx_time: RadioTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleDirective {
    pub slot: u32,
    pub owner: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeaconPayload {
    pub frame: u64,
    pub tx_radio_time: RadioTime,
    pub feedback: Vec<Feedback>,
    pub directives: Vec<ScheduleDirective>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPacketPayload {
    pub sender: NodeId,
    pub slot: SlotAddress,
    pub tx_radio_time: RadioTime,
    pub host_tx_time: HostTime,
    pub body: Vec<u8>,
}

/// Application content carried in a data packet body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppMessage {
    Filler,
    Request {
        id: u64,
    },
    Reply {
        id: u64,
        dest: NodeId,
        echo_host_tx: HostTime,
    },
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn count(&mut self, n: usize) -> Result<(), DecodeError> {
        let n = u16::try_from(n).map_err(|_| DecodeError::TooLong(n))?;
        self.u16(n);
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or(DecodeError::Truncated(self.pos))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice length checked"))
    }
    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_le_bytes(self.take()?))
    }
    fn rest(&mut self) -> &'a [u8] {
        let r = &self.buf[self.pos..];
        self.pos = self.buf.len();
        r
    }
    fn finish(self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

impl BeaconPayload {
    pub fn encode(&self) -> Result<Vec<u8>, DecodeError> {
        let mut w = Writer(Vec::with_capacity(20 + 18 * self.feedback.len()));
        w.u64(self.frame);
        w.i64(self.tx_radio_time.ticks());
        w.count(self.feedback.len())?;
        for f in &self.feedback {
            w.u16(f.device.0);
            w.i64(f.tx_echo.ticks());
            w.i64(f.rx_time.ticks());
        }
        w.count(self.directives.len())?;
        for d in &self.directives {
            w.u32(d.slot);
            w.u16(d.owner.0);
        }
        Ok(w.0)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        let frame = r.u64()?;
        let tx_radio_time = RadioTime::from_ticks(r.i64()?);
        let n = r.u16()? as usize;
        let mut feedback = Vec::with_capacity(n);
        for _ in 0..n {
            feedback.push(Feedback {
                device: NodeId(r.u16()?),
                tx_echo: RadioTime::from_ticks(r.i64()?),
                rx_time: RadioTime::from_ticks(r.i64()?),
            });
        }
        let n = r.u16()? as usize;
        let mut directives = Vec::with_capacity(n);
        for _ in 0..n {
            directives.push(ScheduleDirective {
                slot: r.u32()?,
                owner: NodeId(r.u16()?),
            });
        }
        r.finish()?;
        Ok(BeaconPayload {
            frame,
            tx_radio_time,
            feedback,
            directives,
        })
    }
}

impl DataPacketPayload {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::with_capacity(38 + self.body.len()));
        w.u16(self.sender.0);
        w.u64(self.slot.frame);
        w.u32(self.slot.slot);
        w.i64(self.tx_radio_time.ticks());
        w.i64(self.host_tx_time.ticks());
        w.0.extend_from_slice(&self.body);
        w.0
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        let sender = NodeId(r.u16()?);
        let frame = r.u64()?;
        let slot = r.u32()?;
        let tx_radio_time = RadioTime::from_ticks(r.i64()?);
        let host_tx_time = HostTime::from_ticks(r.i64()?);
        let body = r.rest().to_vec();
        Ok(DataPacketPayload {
            sender,
            slot: SlotAddress { frame, slot },
            tx_radio_time,
            host_tx_time,
            body,
        })
    }
}

impl AppMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer(Vec::with_capacity(27));
        match *self {
            AppMessage::Filler => w.u8(0),
            AppMessage::Request { id } => {
                w.u8(1);
                w.u64(id);
            }
            AppMessage::Reply {
                id,
                dest,
                echo_host_tx,
            } => {
                w.u8(2);
                w.u64(id);
                w.u16(dest.0);
                w.i64(echo_host_tx.ticks());
            }
        }
        w.0
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(buf);
        let msg = match r.u8()? {
            0 => AppMessage::Filler,
            1 => AppMessage::Request { id: r.u64()? },
            2 => AppMessage::Reply {
                id: r.u64()?,
                dest: NodeId(r.u16()?),
                echo_host_tx: HostTime::from_ticks(r.i64()?),
            },
            t => return Err(DecodeError::UnknownTag(t)),
        };
        r.finish()?;
        Ok(msg)
    }
}
