//! Deterministic discrete-event core: clock, event queue, and the
//! receiver-side channel model with piggyback dissemination.

pub mod channel;
pub mod events;

pub use channel::{
    resolve_receptions, ActiveTransmissions, ChannelParams, DefragBeacon, PiggybackPayload,
    ReceptionOutcome, ReceptionStatus, Transmission, TxId,
};
pub use events::{EventKind, EventQueue, SimError};
