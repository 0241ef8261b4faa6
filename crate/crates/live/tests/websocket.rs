use std::net::SocketAddr;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use spg_core::{run, SimConfig};
use spg_live::{ErrorCode, Message, Role, Service, ServiceConfig};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::time::timeout;
use tokio_tungstenite::tungstenite;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn start(config: ServiceConfig) -> (Service, SocketAddr) {
    let service = Service::new(config);
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let s = service.clone();
    tokio::spawn(async move { s.serve_on(listener).await.unwrap() });
    (service, addr)
}

async fn connect(addr: SocketAddr, session: &str, role: Role) -> Ws {
    let (mut ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    send(&mut ws, &Message::Hello { session: session.into(), role }).await;
    ws
}

async fn send(ws: &mut Ws, msg: &Message) {
    ws.send(tungstenite::Message::Text(msg.to_text().into())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> Message {
    loop {
        let frame = timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("timed out waiting for a message")
            .expect("stream ended")
            .unwrap();
        if let tungstenite::Message::Text(t) = frame {
            return Message::from_text(&t).unwrap();
        }
    }
}

/// Next message that is not a state broadcast.
async fn recv_non_state(ws: &mut Ws) -> Message {
    loop {
        let m = recv(ws).await;
        if !matches!(m, Message::State { .. }) {
            return m;
        }
    }
}

#[tokio::test]
async fn act_is_broadcast_within_two_ticks() {
    let (service, addr) = start(ServiceConfig::default()).await;
    let id = service
        .host_session(SimConfig { seed: 3, ..SimConfig::default() }, Duration::from_millis(200))
        .unwrap();
    let mut player = connect(addr, &id, Role::Player).await;
    let cell = match recv(&mut player).await {
        Message::Assign { cell } => cell,
        other => panic!("expected assign, got {other:?}"),
    };
    let (step0, cells0) = match recv(&mut player).await {
        Message::State { step, cells, .. } => (step, cells),
        other => panic!("expected state, got {other:?}"),
    };
    let wanted = 1 - cells0[cell];
    send(&mut player, &Message::Act { color: wanted }).await;
    loop {
        match recv(&mut player).await {
            Message::State { step, cells, .. } => {
                if cells[cell] == wanted {
                    assert!(step <= step0 + 2, "reflected at step {step}, act after {step0}");
                    break;
                }
                assert!(step <= step0 + 2, "act not reflected by step {step}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[tokio::test]
async fn tick_rate_is_honoured() {
    let (service, addr) = start(ServiceConfig::default()).await;
    let id = service.host_session(SimConfig::default(), Duration::from_millis(200)).unwrap();
    let mut obs = connect(addr, &id, Role::Observer).await;
    let first = match recv(&mut obs).await {
        Message::State { step, .. } => step,
        other => panic!("{other:?}"),
    };
    tokio::time::sleep(Duration::from_millis(1000)).await;
    let mut last = first;
    while let Ok(Some(Ok(tungstenite::Message::Text(t)))) =
        timeout(Duration::from_millis(50), obs.next()).await
    {
        if let Message::State { step, .. } = Message::from_text(&t).unwrap() {
            last = step;
        }
    }
    let steps = last - first;
    assert!((4..=6).contains(&steps), "{steps} steps in one second");
}

#[tokio::test]
async fn unperturbed_session_replays_offline_run() {
    let (service, addr) = start(ServiceConfig::default()).await;
    let config = SimConfig { seed: 41, ..SimConfig::default() };
    let id = service.host_session(config.clone(), Duration::from_millis(2)).unwrap();
    let mut obs = connect(addr, &id, Role::Observer).await;
    let offline = run(&SimConfig { steps: 400, ..config }).unwrap();
    let grids: Vec<Vec<u8>> = offline
        .states()
        .map(|g| g.cells().iter().map(|c| c.0).collect())
        .collect();
    let resets: Vec<bool> = offline.events.iter().map(|e| e.reference_reset).collect();
    let mut checked = 0;
    while checked < 200 {
        if let Message::State { step, cells, reset } = recv(&mut obs).await {
            if step == 0 {
                assert_eq!(cells, offline.initial.cells().iter().map(|c| c.0).collect::<Vec<_>>());
                continue;
            }
            let i = step as usize - 1;
            assert_eq!(cells, grids[i], "step {step}");
            assert_eq!(reset, resets[i], "step {step}");
            checked += 1;
        }
    }
}

#[tokio::test]
async fn guess_flow() {
    let (service, addr) = start(ServiceConfig::default()).await;
    let id = service.host_session(SimConfig::default(), Duration::from_millis(50)).unwrap();

    let mut obs = connect(addr, &id, Role::Observer).await;
    send(&mut obs, &Message::Guess { cell: 0 }).await;
    assert!(matches!(
        recv_non_state(&mut obs).await,
        Message::Error { code: ErrorCode::NoHuman, .. }
    ));

    let mut player = connect(addr, &id, Role::Player).await;
    let Message::Assign { cell } = recv_non_state(&mut player).await else {
        panic!("expected assign")
    };
    send(&mut obs, &Message::Guess { cell }).await;
    assert_eq!(recv_non_state(&mut obs).await, Message::GuessResult { correct: true });
    send(&mut obs, &Message::Guess { cell: (cell + 1) % 25 }).await;
    assert_eq!(recv_non_state(&mut obs).await, Message::GuessResult { correct: false });

    send(&mut player, &Message::Guess { cell }).await;
    assert!(matches!(
        recv_non_state(&mut player).await,
        Message::Error { code: ErrorCode::NotObserver, .. }
    ));
    send(&mut obs, &Message::Act { color: 1 }).await;
    assert!(matches!(
        recv_non_state(&mut obs).await,
        Message::Error { code: ErrorCode::NotOwner, .. }
    ));
    send(&mut player, &Message::Act { color: 9 }).await;
    assert!(matches!(
        recv_non_state(&mut player).await,
        Message::Error { code: ErrorCode::BadColor, .. }
    ));

    let mut second = connect(addr, &id, Role::Player).await;
    assert!(matches!(recv(&mut second).await, Message::Error { code: ErrorCode::PlayerTaken, .. }));
}

#[tokio::test]
async fn bad_handshakes() {
    let (_service, addr) = start(ServiceConfig::default()).await;
    let mut ws = connect(addr, "nope", Role::Observer).await;
    assert!(matches!(recv(&mut ws).await, Message::Error { code: ErrorCode::UnknownSession, .. }));

    let (mut ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    ws.send(tungstenite::Message::Text("{\"kind\":\"act\",\"color\":1}".into())).await.unwrap();
    assert!(matches!(recv(&mut ws).await, Message::Error { code: ErrorCode::BadMessage, .. }));
}

#[tokio::test]
async fn sessions_are_independent_and_bounded() {
    let (service, _addr) = start(ServiceConfig { max_sessions: 2, ..ServiceConfig::default() }).await;
    let a = service.host_session(SimConfig { seed: 1, ..SimConfig::default() }, Duration::from_millis(100)).unwrap();
    let b = service.host_session(SimConfig { seed: 2, ..SimConfig::default() }, Duration::from_millis(100)).unwrap();
    assert_ne!(a, b);
    assert_eq!(service.session_ids().len(), 2);
    assert!(matches!(
        service.host_session(SimConfig::default(), Duration::from_millis(100)),
        Err(spg_live::ServiceError::Capacity(2))
    ));
}

#[tokio::test]
async fn idle_sessions_expire() {
    let (service, addr) = start(ServiceConfig {
        idle_timeout: Duration::from_millis(300),
        ..ServiceConfig::default()
    })
    .await;
    let id = service.host_session(SimConfig::default(), Duration::from_millis(20)).unwrap();
    let mut obs = connect(addr, &id, Role::Observer).await;
    recv(&mut obs).await;
    tokio::time::sleep(Duration::from_millis(500)).await;
    assert_eq!(service.session_ids(), vec![id.clone()], "a connected session stays alive");
    obs.close(None).await.unwrap();
    tokio::time::sleep(Duration::from_millis(800)).await;
    assert!(service.session_ids().is_empty());
}

#[tokio::test]
async fn sessions_created_over_http() {
    let (service, addr) = start(ServiceConfig::default()).await;
    let body = r#"{"config":{"seed":9,"horizon":5},"tick_ms":100}"#;
    let mut tcp = TcpStream::connect(addr).await.unwrap();
    let req = format!(
        "POST /sessions HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    tcp.write_all(req.as_bytes()).await.unwrap();
    let mut resp = String::new();
    tcp.read_to_string(&mut resp).await.unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains(r#"{"session":"1"}"#), "{resp}");
    assert_eq!(service.session_ids(), vec!["1".to_string()]);
}
