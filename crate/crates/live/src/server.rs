//! Hosts sessions over WebSocket. Each session runs as one task that owns its
//! [`SessionCore`]; connections talk to it only through a command channel.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{self, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use spg_core::SimConfig;
use tokio::sync::{mpsc, oneshot};
use tokio::time::{interval, sleep_until, Instant, MissedTickBehavior};

use crate::protocol::{ErrorCode, Message, Role};
use crate::session::{ClientId, Outgoing, Recipient, SessionCore};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("session limit of {0} reached")]
    Capacity(usize),
    #[error(transparent)]
    Config(#[from] spg_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_sessions: usize,
    pub idle_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_sessions: 64,
            idle_timeout: Duration::from_secs(600),
        }
    }
}

enum Command {
    Join {
        role: Role,
        out: mpsc::UnboundedSender<Message>,
        reply: oneshot::Sender<Result<ClientId, Message>>,
    },
    Message(ClientId, Message),
    Leave(ClientId),
}

#[derive(Clone)]
struct SessionHandle {
    commands: mpsc::UnboundedSender<Command>,
}

/// Registry of running sessions.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    next_id: Mutex<u64>,
}

impl Service {
    pub fn new(config: ServiceConfig) -> Self {
        Service {
            inner: Arc::new(Inner {
                config,
                sessions: Mutex::new(HashMap::new()),
                next_id: Mutex::new(1),
            }),
        }
    }

    /// Starts a world stepping once per `tick` and returns its session id.
    pub fn host_session(&self, config: SimConfig, tick: Duration) -> Result<String, ServiceError> {
        let core = SessionCore::new(config)?;
        let mut sessions = self.inner.sessions.lock().expect("session registry poisoned");
        sessions.retain(|_, h| !h.commands.is_closed());
        if sessions.len() >= self.inner.config.max_sessions {
            return Err(ServiceError::Capacity(self.inner.config.max_sessions));
        }
        let id = {
            let mut next = self.inner.next_id.lock().expect("id counter poisoned");
            let id = next.to_string();
            *next += 1;
            id
        };
        let (tx, rx) = mpsc::unbounded_channel();
        sessions.insert(id.clone(), SessionHandle { commands: tx });
        let idle = self.inner.config.idle_timeout;
        let service = self.clone();
        let sid = id.clone();
        tokio::spawn(async move {
            session_loop(core, tick, idle, rx).await;
            service.inner.sessions.lock().expect("session registry poisoned").remove(&sid);
            tracing::info!(session = %sid, "session closed");
        });
        Ok(id)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let sessions = self.inner.sessions.lock().expect("session registry poisoned");
        let mut ids: Vec<String> = sessions
            .iter()
            .filter(|(_, h)| !h.commands.is_closed())
            .map(|(id, _)| id.clone())
            .collect();
        ids.sort();
        ids
    }

    fn handle(&self, id: &str) -> Option<SessionHandle> {
        self.inner.sessions.lock().expect("session registry poisoned").get(id).cloned()
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/ws", get(ws_upgrade))
            .route("/sessions", post(create_session).get(list_sessions))
            .with_state(self.clone())
    }

    /// Serves until the listener fails.
    pub async fn serve(&self, addr: SocketAddr) -> Result<(), ServiceError> {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        self.serve_on(listener).await
    }

    pub async fn serve_on(&self, listener: tokio::net::TcpListener) -> Result<(), ServiceError> {
        tracing::info!(addr = ?listener.local_addr().ok(), "listening");
        axum::serve(listener, self.router()).await?;
        Ok(())
    }
}

async fn session_loop(
    mut core: SessionCore,
    tick: Duration,
    idle_timeout: Duration,
    mut commands: mpsc::UnboundedReceiver<Command>,
) {
    let mut clients: HashMap<ClientId, mpsc::UnboundedSender<Message>> = HashMap::new();
    let mut ticker = interval(tick);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    // first tick fires immediately
    ticker.tick().await;
    let mut idle_deadline = Instant::now() + idle_timeout;

    loop {
        tokio::select! {
            _ = ticker.tick() => {
                match core.tick() {
                    Ok((_, out)) => deliver(&clients, vec![out]),
                    Err(e) => {
                        tracing::error!(error = %e, "step failed");
                        break;
                    }
                }
            }
            cmd = commands.recv() => {
                let Some(cmd) = cmd else { break };
                match cmd {
                    Command::Join { role, out, reply } => match core.join(role) {
                        Ok((id, msgs)) => {
                            clients.insert(id, out);
                            let _ = reply.send(Ok(id));
                            deliver(&clients, msgs);
                        }
                        Err(msg) => {
                            let _ = reply.send(Err(msg));
                        }
                    },
                    Command::Message(id, msg) => {
                        let out = core.handle(id, msg);
                        deliver(&clients, out);
                    }
                    Command::Leave(id) => {
                        clients.remove(&id);
                        core.leave(id);
                        if clients.is_empty() {
                            idle_deadline = Instant::now() + idle_timeout;
                        }
                    }
                }
            }
            _ = sleep_until(idle_deadline), if clients.is_empty() => break,
        }
    }
}

fn deliver(clients: &HashMap<ClientId, mpsc::UnboundedSender<Message>>, out: Vec<Outgoing>) {
    for o in out {
        match o.to {
            Recipient::All => {
                for tx in clients.values() {
                    let _ = tx.send(o.msg.clone());
                }
            }
            Recipient::Client(id) => {
                if let Some(tx) = clients.get(&id) {
                    let _ = tx.send(o.msg);
                }
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    #[serde(default)]
    config: SimConfig,
    #[serde(default = "default_tick_ms")]
    tick_ms: u64,
}

fn default_tick_ms() -> u64 {
    200
}

#[derive(Debug, Serialize)]
struct Created {
    session: String,
}

async fn create_session(
    State(service): State<Service>,
    Json(req): Json<CreateSession>,
) -> axum::response::Response {
    match service.host_session(req.config, Duration::from_millis(req.tick_ms.max(1))) {
        Ok(session) => Json(Created { session }).into_response(),
        Err(e) => {
            let code = match e {
                ServiceError::Capacity(_) => ErrorCode::Capacity,
                _ => ErrorCode::BadMessage,
            };
            (
                axum::http::StatusCode::SERVICE_UNAVAILABLE,
                Json(Message::error(code, e.to_string())),
            )
                .into_response()
        }
    }
}

async fn list_sessions(State(service): State<Service>) -> Json<Vec<String>> {
    Json(service.session_ids())
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(service): State<Service>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, service))
}

async fn send(socket: &mut WebSocket, msg: &Message) -> bool {
    socket.send(ws::Message::Text(msg.to_text().into())).await.is_ok()
}

async fn connection(mut socket: WebSocket, service: Service) {
    // The first frame must be hello{session, role}.
    let (session, role) = loop {
        match socket.recv().await {
            Some(Ok(ws::Message::Text(text))) => match Message::from_text(&text) {
                Ok(Message::Hello { session, role }) => break (session, role),
                Ok(_) | Err(_) => {
                    let err = Message::error(ErrorCode::BadMessage, "expected hello{session, role}");
                    if !send(&mut socket, &err).await {
                        return;
                    }
                }
            },
            Some(Ok(ws::Message::Close(_))) | None | Some(Err(_)) => return,
            Some(Ok(_)) => {}
        }
    };
    let Some(handle) = service.handle(&session) else {
        let _ = send(&mut socket, &Message::error(ErrorCode::UnknownSession, format!("no session {session:?}"))).await;
        return;
    };

    let (out_tx, mut out_rx) = mpsc::unbounded_channel();
    let (reply_tx, reply_rx) = oneshot::channel();
    if handle
        .commands
        .send(Command::Join { role, out: out_tx, reply: reply_tx })
        .is_err()
    {
        let _ = send(&mut socket, &Message::error(ErrorCode::UnknownSession, "session ended")).await;
        return;
    }
    let client = match reply_rx.await {
        Ok(Ok(id)) => id,
        Ok(Err(msg)) => {
            let _ = send(&mut socket, &msg).await;
            return;
        }
        Err(_) => return,
    };

    let (mut sink, mut stream) = socket.split();
    let writer = tokio::spawn(async move {
        while let Some(msg) = out_rx.recv().await {
            if sink.send(ws::Message::Text(msg.to_text().into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(frame) = stream.next().await {
        let text = match frame {
            Ok(ws::Message::Text(text)) => text,
            Ok(ws::Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        let msg = Message::from_text(&text)
            .unwrap_or_else(|e| Message::error(ErrorCode::BadMessage, e.to_string()));
        if handle.commands.send(Command::Message(client, msg)).is_err() {
            break;
        }
    }
    let _ = handle.commands.send(Command::Leave(client));
    writer.abort();
}
