//! File formats, reports and batch experiments around `mcsched-core`.

pub mod experiment;
pub mod formats;
pub mod report;

use mcsched_core::sim::{DropReason, EventKind, GhostKind, ImcrProtocol, Trace};

/// Guesses the protocol that produced a trace from the events it contains.
/// A trace without ghosts or dropped rem-jobs is reported as `Naive`; the
/// reclaiming protocols behave identically until they create a ghost.
pub fn infer_protocol(trace: &Trace) -> ImcrProtocol {
    for e in trace.iter() {
        match &e.kind {
            EventKind::GhostCreated { kind: GhostKind::WcetReclaim, .. } => {
                return ImcrProtocol::WcetReclaim
            }
            EventKind::GhostCreated { kind: GhostKind::WcrtSimulate, .. } => {
                return ImcrProtocol::WcrtSimulate
            }
            EventKind::JobDropped { reason: DropReason::RemDropped, .. } => return ImcrProtocol::Drop,
            _ => {}
        }
    }
    ImcrProtocol::Naive
}
