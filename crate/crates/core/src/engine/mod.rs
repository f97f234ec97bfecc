//! Packet-level protocol simulation and BER sweeps.

mod config;
mod packet;
mod protocol;
mod sweep;

pub use config::{AllocationMode, CsiMode, PowerUpdate, RandomizerMode, ReceiverMode, SystemConfig};
pub use packet::{estimate_channels, packet_channels, packet_schemes, run_packet, PacketResult};
pub use protocol::{broadcast_phase, relay_phase, reliable_set, stack, LinkRngs};
pub use sweep::{run_point, sweep, write_csv, BerPoint, CSV_HEADER, THREADS_ENV};
