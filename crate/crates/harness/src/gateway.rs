//! Live websocket gateway.
//!
//! The simulation runs on a dedicated thread and is the only writer of world
//! state. Clients connect to `/ws`; the first one to connect holds the
//! operator seat and every later client is a read-only observer until the
//! seat frees up. Operator messages are queued to the simulation thread,
//! which drains the queue before each physics tick and records the tick
//! index of every input so the session can be replayed offline.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use sartrack_core::geometry::VelocityCommand;
use sartrack_core::mission::OperatorInput;
use sartrack_core::sim::{LogRow, Simulation};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tracing::{debug, info, warn};

use crate::protocol::{ClientMessage, RecordedInput, Role, ServerMessage};

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Simulated seconds per wall-clock second; `None` runs unpaced.
    pub speed: Option<f64>,
    /// Stop after this much simulated time.
    pub max_duration_s: Option<f64>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            speed: Some(1.0),
            max_duration_s: None,
        }
    }
}

/// Everything needed to reproduce a live session offline.
#[derive(Debug, Clone, Default)]
pub struct SessionLog {
    pub inputs: Vec<RecordedInput>,
    pub telemetry: Vec<LogRow>,
}

/// Hands every queued input to `sim`, in order, and records it.
fn drain(sim: &mut Simulation, rx: &mut mpsc::UnboundedReceiver<OperatorInput>, log: &mut SessionLog) {
    while let Ok(input) = rx.try_recv() {
        log.inputs.push(RecordedInput::new(sim.tick(), &input));
        sim.push_input(input);
    }
}

fn run_simulation(
    mut sim: Simulation,
    config: GatewayConfig,
    mut rx: mpsc::UnboundedReceiver<OperatorInput>,
    state_tx: watch::Sender<Arc<String>>,
    stop: Arc<AtomicBool>,
) -> SessionLog {
    let mut log = SessionLog::default();
    let start = Instant::now();
    let max_ticks = config
        .max_duration_s
        .map(|d| (d / sim.dt()).round() as u64);
    let mut pending_events: Vec<String> = Vec::new();

    while !stop.load(Ordering::Relaxed) {
        if max_ticks.is_some_and(|m| sim.tick() >= m) {
            break;
        }
        if let Some(speed) = config.speed {
            let due = Duration::from_secs_f64(sim.time() / speed);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                thread::sleep(wait);
            }
        }
        drain(&mut sim, &mut rx, &mut log);
        let record = sim.step();
        pending_events.extend(record.events.iter().map(ToString::to_string));
        let control = record.flags.control;
        log.telemetry.push(record.log_row());
        if control {
            let msg = ServerMessage::state(&sim.snapshot(), std::mem::take(&mut pending_events));
            state_tx.send_replace(Arc::new(msg.to_json()));
        }
    }
    info!(ticks = sim.tick(), inputs = log.inputs.len(), "simulation stopped");
    log
}

#[derive(Clone)]
struct AppState {
    inbound: mpsc::UnboundedSender<OperatorInput>,
    state: watch::Receiver<Arc<String>>,
    operator: Arc<Mutex<Option<u64>>>,
    next_client: Arc<AtomicU64>,
}

impl AppState {
    /// Takes the operator seat if it is free.
    fn claim(&self, client: u64) -> Role {
        let mut seat = self.operator.lock().expect("operator seat lock");
        match *seat {
            Some(holder) if holder != client => Role::Observer,
            _ => {
                *seat = Some(client);
                Role::Operator
            }
        }
    }

    fn release(&self, client: u64) {
        let mut seat = self.operator.lock().expect("operator seat lock");
        if *seat == Some(client) {
            *seat = None;
            // A vanished operator must not leave the UAV drifting.
            let _ = self.inbound.send(OperatorInput {
                manual_velocity: Some(VelocityCommand::ZERO),
                button: None,
            });
        }
    }
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/ws", get(ws_handler))
        .route("/state", get(latest_state))
        .with_state(state)
}

async fn latest_state(State(app): State<AppState>) -> impl IntoResponse {
    let body = app.state.borrow().as_ref().clone();
    ([(axum::http::header::CONTENT_TYPE, "application/json")], body)
}

async fn ws_handler(ws: WebSocketUpgrade, State(app): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client_session(socket, app))
}

async fn client_session(socket: WebSocket, app: AppState) {
    let client = app.next_client.fetch_add(1, Ordering::Relaxed);
    let role = app.claim(client);
    info!(client, ?role, "client connected");
    let (mut sink, mut stream) = socket.split();
    let mut state = app.state.clone();

    let hello = ServerMessage::Hello { role }.to_json();
    if sink.send(Message::Text(hello.into())).await.is_err() {
        app.release(client);
        return;
    }

    loop {
        tokio::select! {
            changed = state.changed() => {
                if changed.is_err() {
                    break;
                }
                let json = state.borrow_and_update().as_ref().clone();
                if sink.send(Message::Text(json.into())).await.is_err() {
                    break;
                }
            }
            msg = stream.next() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                if let Some(reply) = handle_text(&app, client, text.as_str()) {
                    if sink.send(Message::Text(reply.to_json().into())).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
    app.release(client);
    info!(client, "client disconnected");
}

/// Applies one client message; returns an error reply when it is rejected.
fn handle_text(app: &AppState, client: u64, text: &str) -> Option<ServerMessage> {
    let error = |message: String| Some(ServerMessage::Error { message });
    if app.claim(client) != Role::Operator {
        return error("observers are read-only".into());
    }
    let msg: ClientMessage = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => return error(format!("invalid message: {e}")),
    };
    match msg.to_input() {
        Ok(input) => {
            debug!(client, ?msg, "operator input");
            if app.inbound.send(input).is_err() {
                return error("simulation has stopped".into());
            }
            None
        }
        Err(e) => error(e),
    }
}

/// A running gateway.
pub struct Gateway {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    sim_thread: thread::JoinHandle<SessionLog>,
    server: tokio::task::JoinHandle<()>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
}

impl Gateway {
    /// Binds `addr` and starts both the simulation thread and the server.
    pub async fn start(sim: Simulation, config: GatewayConfig, addr: SocketAddr) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = mpsc::unbounded_channel();
        let initial = ServerMessage::state(&sim.snapshot(), Vec::new()).to_json();
        let (state_tx, state_rx) = watch::channel(Arc::new(initial));
        let stop = Arc::new(AtomicBool::new(false));

        let sim_stop = stop.clone();
        let sim_thread = thread::Builder::new()
            .name("sartrack-sim".into())
            .spawn(move || run_simulation(sim, config, rx, state_tx, sim_stop))?;

        let app = AppState {
            inbound: tx,
            state: state_rx,
            operator: Arc::default(),
            next_client: Arc::default(),
        };
        let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(async move {
            let serve = axum::serve(listener, router(app)).with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            });
            if let Err(e) = serve.await {
                warn!(error = %e, "gateway server failed");
            }
        });
        info!(%addr, "gateway listening");
        Ok(Self {
            addr,
            stop,
            sim_thread,
            server,
            shutdown: Some(shutdown_tx),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn is_finished(&self) -> bool {
        self.sim_thread.is_finished()
    }

    /// Waits for the simulation to end (duration limit or [`Gateway::stop`]),
    /// then shuts the server down and returns the session log.
    pub async fn join(mut self) -> SessionLog {
        let handle = self.sim_thread;
        let log = tokio::task::spawn_blocking(move || handle.join())
            .await
            .expect("join task")
            .expect("simulation thread panicked");
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        // Open websockets keep graceful shutdown waiting; do not hang on them.
        let _ = tokio::time::timeout(Duration::from_secs(2), &mut self.server).await;
        self.server.abort();
        log
    }

    /// Asks the simulation thread to stop after the current tick.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::Relaxed);
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }
}

/// Re-runs a recorded session: each input is queued before the tick it was
/// recorded at, exactly as the live loop did.
pub fn replay(mut sim: Simulation, inputs: &[RecordedInput], ticks: u64) -> Result<Vec<LogRow>, String> {
    let mut rows = Vec::with_capacity(ticks as usize);
    let mut next = 0;
    for _ in 0..ticks {
        while let Some(rec) = inputs.get(next) {
            if rec.tick > sim.tick() {
                break;
            }
            if rec.tick < sim.tick() {
                return Err(format!("input {next} at tick {} is out of order", rec.tick));
            }
            sim.push_input(rec.to_input()?);
            next += 1;
        }
        rows.push(sim.step().log_row());
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn app() -> (AppState, mpsc::UnboundedReceiver<OperatorInput>) {
        let (tx, rx) = mpsc::unbounded_channel();
        let (_state_tx, state_rx) = watch::channel(Arc::new(String::new()));
        (
            AppState {
                inbound: tx,
                state: state_rx,
                operator: Arc::default(),
                next_client: Arc::default(),
            },
            rx,
        )
    }

    #[test]
    fn first_client_is_operator() {
        let (app, _rx) = app();
        assert_eq!(app.claim(0), Role::Operator);
        assert_eq!(app.claim(1), Role::Observer);
        assert_eq!(app.claim(0), Role::Operator);
        app.release(1);
        assert_eq!(app.claim(1), Role::Observer);
        app.release(0);
        assert_eq!(app.claim(1), Role::Operator);
    }

    #[test]
    fn operator_release_zeroes_manual() {
        let (app, mut rx) = app();
        app.claim(3);
        app.release(3);
        let input = rx.try_recv().unwrap();
        assert_eq!(input.manual_velocity, Some(VelocityCommand::ZERO));
        // Observers leaving send nothing.
        app.claim(4);
        app.release(5);
        assert!(rx.try_recv().is_err());
    }

    #[test]
    fn observer_messages_are_rejected() {
        let (app, mut rx) = app();
        app.claim(0);
        let reply = handle_text(&app, 1, r#"{"type":"set_mode","mode":"search"}"#);
        assert!(matches!(reply, Some(ServerMessage::Error { .. })));
        assert!(rx.try_recv().is_err());
        assert!(handle_text(&app, 0, r#"{"type":"set_mode","mode":"search"}"#).is_none());
        assert!(rx.try_recv().is_ok());
        let reply = handle_text(&app, 0, "not json");
        assert!(matches!(reply, Some(ServerMessage::Error { .. })));
    }
}
