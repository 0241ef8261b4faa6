//! Single-threaded session state. Everything that touches the grid goes
//! through [`SessionCore`], so agent steps and human acts are totally ordered.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use spg_core::{ColorId, Event, RunLog, SimConfig, World};

use crate::protocol::{ErrorCode, Message, Role};

pub type ClientId = u64;

// Keeps cell assignment off the world's random stream.
const ASSIGN_STREAM: u64 = 0x5eed_ce11_a551_9000;

#[derive(Debug, Clone, PartialEq)]
pub enum Recipient {
    All,
    Client(ClientId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub to: Recipient,
    pub msg: Message,
}

impl Outgoing {
    fn all(msg: Message) -> Self {
        Outgoing { to: Recipient::All, msg }
    }

    fn to(client: ClientId, msg: Message) -> Self {
        Outgoing { to: Recipient::Client(client), msg }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuessRecord {
    pub observer: ClientId,
    pub step: u64,
    pub cell: usize,
    pub correct: bool,
}

pub struct SessionCore {
    world: World,
    clients: BTreeMap<ClientId, Role>,
    player: Option<(ClientId, usize)>,
    next_client: ClientId,
    assign_rng: ChaCha8Rng,
    log: RunLog,
    guesses: Vec<GuessRecord>,
}

impl SessionCore {
    pub fn new(config: SimConfig) -> spg_core::Result<Self> {
        let world = World::new(config.clone())?;
        let log = RunLog::new(config.clone(), world.grid().clone());
        Ok(SessionCore {
            assign_rng: ChaCha8Rng::seed_from_u64(config.seed ^ ASSIGN_STREAM),
            world,
            clients: BTreeMap::new(),
            player: None,
            next_client: 1,
            log,
            guesses: Vec::new(),
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// Every agent step and human act applied so far.
    pub fn transcript(&self) -> &RunLog {
        &self.log
    }

    pub fn guesses(&self) -> &[GuessRecord] {
        &self.guesses
    }

    pub fn human_cell(&self) -> Option<usize> {
        self.player.map(|(_, cell)| cell)
    }

    pub fn client_count(&self) -> usize {
        self.clients.len()
    }

    pub fn state_message(&self, reset: bool) -> Message {
        Message::State {
            step: self.world.steps_taken(),
            cells: self.world.grid().cells().iter().map(|c| c.0).collect(),
            reset,
        }
    }

    /// Registers a client. Players get a random free cell; the second
    /// player is refused.
    pub fn join(&mut self, role: Role) -> Result<(ClientId, Vec<Outgoing>), Message> {
        if role == Role::Player && self.player.is_some() {
            return Err(Message::error(ErrorCode::PlayerTaken, "session already has a human player"));
        }
        let id = self.next_client;
        self.next_client += 1;
        self.clients.insert(id, role);
        let mut out = Vec::new();
        if role == Role::Player {
            let cell = self.assign_rng.gen_range(0..self.world.grid().len());
            self.player = Some((id, cell));
            self.world.set_held_cell(Some(cell));
            out.push(Outgoing::to(id, Message::Assign { cell }));
        }
        out.push(Outgoing::to(id, self.state_message(false)));
        Ok((id, out))
    }

    pub fn leave(&mut self, client: ClientId) {
        self.clients.remove(&client);
        if self.player.is_some_and(|(id, _)| id == client) {
            self.player = None;
            self.world.set_held_cell(None);
        }
    }

    /// One agent decision, broadcast as a full state.
    pub fn tick(&mut self) -> spg_core::Result<(Event, Outgoing)> {
        let event = self.world.step()?;
        self.log.push(event.clone());
        let msg = self.state_message(event.reference_reset);
        Ok((event, Outgoing::all(msg)))
    }

    /// Recolours `cell` on behalf of `client`, which must own it.
    pub fn apply_human_act(&mut self, client: ClientId, cell: usize, color: u8) -> Vec<Outgoing> {
        match self.player {
            Some((owner, owned)) if owner == client && owned == cell => {}
            _ => {
                return vec![Outgoing::to(
                    client,
                    Message::error(ErrorCode::NotOwner, format!("cell {cell} is not yours")),
                )]
            }
        }
        if color as usize >= self.world.config().k {
            return vec![Outgoing::to(
                client,
                Message::error(ErrorCode::BadColor, format!("colour {color} out of range")),
            )];
        }
        match self.world.apply_external(cell, ColorId(color)) {
            Ok(event) => {
                let reset = event.reference_reset;
                self.log.push(event);
                vec![Outgoing::all(self.state_message(reset))]
            }
            Err(e) => vec![Outgoing::to(client, Message::error(ErrorCode::BadCell, e.to_string()))],
        }
    }

    /// Acts on the sender's own cell, as carried by `act{color}`.
    pub fn act(&mut self, client: ClientId, color: u8) -> Vec<Outgoing> {
        match self.player {
            Some((owner, cell)) if owner == client => self.apply_human_act(client, cell, color),
            _ => vec![Outgoing::to(
                client,
                Message::error(ErrorCode::NotOwner, "only the player may act"),
            )],
        }
    }

    pub fn submit_guess(&mut self, client: ClientId, cell: usize) -> Vec<Outgoing> {
        if self.clients.get(&client) != Some(&Role::Observer) {
            return vec![Outgoing::to(client, Message::error(ErrorCode::NotObserver, "only observers may guess"))];
        }
        let Some((_, human)) = self.player else {
            return vec![Outgoing::to(client, Message::error(ErrorCode::NoHuman, "no human in this session"))];
        };
        if cell >= self.world.grid().len() {
            return vec![Outgoing::to(client, Message::error(ErrorCode::BadCell, format!("cell {cell} out of range")))];
        }
        let correct = cell == human;
        self.guesses.push(GuessRecord {
            observer: client,
            step: self.world.steps_taken(),
            cell,
            correct,
        });
        vec![Outgoing::to(client, Message::GuessResult { correct })]
    }

    /// Routes a client message that does not open a session.
    pub fn handle(&mut self, client: ClientId, msg: Message) -> Vec<Outgoing> {
        match msg {
            Message::Act { color } => self.act(client, color),
            Message::Guess { cell } => self.submit_guess(client, cell),
            other => vec![Outgoing::to(
                client,
                Message::error(ErrorCode::BadMessage, format!("unexpected message {other:?}")),
            )],
        }
    }
}
