//! Station-side state machine for the network-coded handover.
//!
//! 1. Equal signal from both APs starts probing.
//! 2. The station reports the dof it still needs to both APs.
//! 3. AP1 switches to coded broadcast while AP2 authenticates and
//!    pre-associates the station.
//! 4. The station keeps acknowledging dof to both APs until the AP2
//!    association completes, then detaches from AP1.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolState {
    AssociatedAp1,
    Probing,
    /// Receiving coded packets from both APs.
    DualCoded,
    /// AP1 is gone; the AP2 association is finishing.
    Reassociating,
    AssociatedAp2,
}

impl ProtocolState {
    /// APs the station holds an association with (pre-association counts).
    pub fn associations(self) -> &'static [ApId] {
        match self {
            ProtocolState::AssociatedAp1 | ProtocolState::Probing => &[ApId::Ap1],
            ProtocolState::DualCoded => &[ApId::Ap1, ApId::Ap2],
            ProtocolState::Reassociating | ProtocolState::AssociatedAp2 => &[ApId::Ap2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ApId {
    Ap1,
    Ap2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    /// Signal strength from both APs is about equal.
    SignalParity,
    /// AP2 answered the probes.
    ProbeResponse,
    /// No usable neighbour answered.
    ProbeTimeout,
    /// The receiver's remaining degrees of freedom.
    DofReport {
        dof_needed: u32,
    },
    /// The link to AP1 dropped before the AP2 association finished.
    Ap1Lost,
    AssociationComplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    SendProbes,
    AckDof {
        ap: ApId,
        dof_needed: u32,
    },
    ActivateCodedBroadcast {
        ap: ApId,
        dof_needed: u32,
    },
    PreAssociate {
        ap: ApId,
    },
    Detach {
        ap: ApId,
    },
    /// The event is not valid in the current state; nothing changed.
    Rejected {
        state: ProtocolState,
        event: Event,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub state: ProtocolState,
    pub actions: Vec<Action>,
}

fn ack_both(dof_needed: u32) -> [Action; 2] {
    [
        Action::AckDof {
            ap: ApId::Ap1,
            dof_needed,
        },
        Action::AckDof {
            ap: ApId::Ap2,
            dof_needed,
        },
    ]
}

/// Advance the machine by one event. Invalid events leave the state as is
/// and emit a single [`Action::Rejected`].
pub fn protocol_step(state: ProtocolState, event: Event) -> Step {
    use ProtocolState::*;
    let (next, actions) = match (state, event) {
        (AssociatedAp1, Event::SignalParity) => (Probing, vec![Action::SendProbes]),
        (Probing, Event::ProbeResponse) => (Probing, vec![]),
        (Probing, Event::ProbeTimeout) => (AssociatedAp1, vec![]),
        (Probing, Event::DofReport { dof_needed }) => {
            let mut actions = ack_both(dof_needed).to_vec();
            actions.push(Action::ActivateCodedBroadcast {
                ap: ApId::Ap1,
                dof_needed,
            });
            actions.push(Action::PreAssociate { ap: ApId::Ap2 });
            (DualCoded, actions)
        }
        (DualCoded, Event::DofReport { dof_needed }) => (DualCoded, ack_both(dof_needed).to_vec()),
        (DualCoded, Event::AssociationComplete) => {
            (AssociatedAp2, vec![Action::Detach { ap: ApId::Ap1 }])
        }
        (DualCoded, Event::Ap1Lost) => (Reassociating, vec![Action::Detach { ap: ApId::Ap1 }]),
        (Reassociating, Event::DofReport { dof_needed }) => (
            Reassociating,
            vec![Action::AckDof {
                ap: ApId::Ap2,
                dof_needed,
            }],
        ),
        (Reassociating, Event::AssociationComplete) => (AssociatedAp2, vec![]),
        (state, event) => (state, vec![Action::Rejected { state, event }]),
    };
    Step {
        state: next,
        actions,
    }
}

/// Single-owner wrapper that keeps the current state.
#[derive(Debug, Clone)]
pub struct HandoverProtocol {
    state: ProtocolState,
}

impl Default for HandoverProtocol {
    fn default() -> Self {
        HandoverProtocol {
            state: ProtocolState::AssociatedAp1,
        }
    }
}

impl HandoverProtocol {
    pub fn state(&self) -> ProtocolState {
        self.state
    }

    pub fn handle(&mut self, event: Event) -> Vec<Action> {
        let step = protocol_step(self.state, event);
        self.state = step.state;
        step.actions
    }
}
