//! 6LoWPAN adaptation and the lossy radio medium.

pub mod frag;
pub mod header;
pub mod link;

pub use frag::{fragment, FragError, FragmentBudget, FragmentHeader, Reassembler};
pub use header::{compress, decompress, COMPRESSED_HEADER_LEN};
pub use link::{transmit, Frame, LinkModel, LinkStats, Topology, TransmitOutcome, FRAME_PAYLOAD};

/// Budget used for every frame in the simulator.
pub fn default_budget() -> FragmentBudget {
    FragmentBudget::for_frame_payload(FRAME_PAYLOAD)
}
