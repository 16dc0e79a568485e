//! One architect's game: dialogue, world, and an append-only event log.

use builder_core::agent::{turn_streaming, DecisionKind, Predictor, SessionState};
use builder_core::world::{BuildAction, WorldState};

use crate::protocol::{detail_for, world_from_blocks, ClientMessage, ServerMessage, UtteranceCategory};
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Client(ClientMessage),
    Server(ServerMessage),
}

#[derive(Debug)]
pub struct Session {
    pub id: u64,
    state: SessionState,
    log: Vec<Event>,
    max_steps: usize,
}

impl Session {
    pub fn new(id: u64, max_steps: usize) -> Self {
        Self {
            id,
            state: SessionState::default(),
            log: Vec::new(),
            max_steps,
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.state.world
    }

    pub fn events(&self) -> &[Event] {
        &self.log
    }

    /// Handles one client message, passing every reply to `emit` in order.
    /// Always emits at least one message.
    pub fn handle<P: Predictor + ?Sized>(&mut self, model: &P, msg: ClientMessage, emit: &mut dyn FnMut(ServerMessage)) {
        let Session { state, log, max_steps, .. } = self;
        log.push(Event::Client(msg.clone()));
        let mut send = |m: ServerMessage| {
            log.push(Event::Server(m.clone()));
            emit(m);
        };
        match msg {
            ClientMessage::Reset => {
                *state = SessionState::default();
                send(ServerMessage::world(&state.world));
            }
            ClientMessage::SetWorld { blocks } => match world_from_blocks(&blocks) {
                Ok(w) => {
                    state.world = w;
                    send(ServerMessage::world(&state.world));
                }
                Err(e) => send(ServerMessage::error(e.to_string())),
            },
            ClientMessage::Utterance { text } => {
                let result = turn_streaming(model, state, &text, *max_steps, &mut |a: &BuildAction| send(ServerMessage::action(a)));
                send(match result {
                    Ok(d) => match d.kind {
                        DecisionKind::Execute { .. } => ServerMessage::world(&state.world),
                        DecisionKind::Ask => utterance(UtteranceCategory::Ask),
                        DecisionKind::Others => utterance(UtteranceCategory::Others),
                    },
                    Err(e) => ServerMessage::error(ServiceError::from(e).to_string()),
                });
            }
        }
    }
}

fn utterance(category: UtteranceCategory) -> ServerMessage {
    ServerMessage::AgentUtterance {
        category,
        detail: detail_for(category).to_string(),
    }
}

/// Rebuilds the world from a log: client resets and accepted world loads,
/// then every streamed agent action in order.
pub fn replay(events: &[Event]) -> Result<WorldState, ServiceError> {
    let mut w = WorldState::empty();
    let mut pending: Option<WorldState> = None;
    for e in events {
        match e {
            Event::Client(ClientMessage::Reset) => w = WorldState::empty(),
            // Only applied once the server acknowledges it with a world message.
            Event::Client(ClientMessage::SetWorld { blocks }) => pending = world_from_blocks(blocks).ok(),
            Event::Server(ServerMessage::World { .. }) => {
                if let Some(p) = pending.take() {
                    w = p;
                }
            }
            Event::Server(ServerMessage::AgentAction { action }) => {
                let a = BuildAction::try_from(action).map_err(|e| ServiceError::Protocol(e.to_string()))?;
                w = w.apply(&a).map_err(|e| ServiceError::Protocol(e.to_string()))?;
            }
            Event::Client(ClientMessage::Utterance { .. }) => pending = None,
            Event::Server(_) => {}
        }
    }
    Ok(w)
}
