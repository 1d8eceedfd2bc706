//! In-process topic broker mirroring the deployment topology: producers
//! append flow records to "GANs_raw", a scoring consumer attaches model
//! predictions and forwards only predicted-malicious traffic to
//! "GANs_raw_predictions". An optional newline-delimited JSON socket
//! front-end exposes the same verbs on the wire.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::classifiers::Predictor;
use crate::ingest::FlowRecord;

/// Raw traffic topic.
pub const RAW_TOPIC: &str = "GANs_raw";
/// Predicted-malicious traffic topic; the scoring consumer is its only writer.
pub const PREDICTIONS_TOPIC: &str = "GANs_raw_predictions";
/// Socket front-end default port.
pub const DEFAULT_PORT: u16 = 9092;

pub type Payload = serde_json::Map<String, Value>;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("topic name cannot be empty")]
    EmptyTopicName,
    #[error("topic {0:?} already exists")]
    DuplicateTopic(String),
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("payload cannot be empty")]
    EmptyPayload,
    #[error("consumer offset {committed} is past the end of {topic:?} ({len} messages)")]
    OffsetPastEnd { topic: String, committed: u64, len: u64 },
    #[error("scoring consumer cannot read and write the same topic")]
    SelfForward,
    #[error("socket error: {0}")]
    Io(#[from] std::io::Error),
}

/// Injected time source; timestamps land on envelopes at produce time.
pub trait Clock: Send {
    fn now_ms(&mut self) -> u64;
}

/// Wall clock.
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&mut self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// Fixed-cadence clock for reproducible timelines.
pub struct StepClock {
    next: u64,
    step: u64,
}

impl StepClock {
    pub fn new(start_ms: u64, step_ms: u64) -> Self {
        StepClock { next: start_ms, step: step_ms }
    }
}

impl Clock for StepClock {
    fn now_ms(&mut self) -> u64 {
        let now = self.next;
        self.next += self.step;
        now
    }
}

/// One broker message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub topic: String,
    pub offset: u64,
    pub timestamp: u64,
    pub payload: Payload,
}

/// Append-only log; `next_offset` always equals the message count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicLog {
    pub name: String,
    pub messages: Vec<Envelope>,
    pub next_offset: u64,
}

impl TopicLog {
    fn new(name: &str) -> Self {
        TopicLog { name: name.to_string(), messages: Vec::new(), next_offset: 0 }
    }
}

/// A consumer's position in one topic; `committed` offsets are never replayed
/// through the same state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsumerState {
    pub topic: String,
    pub committed: u64,
}

impl ConsumerState {
    pub fn new(topic: impl Into<String>) -> Self {
        ConsumerState { topic: topic.into(), committed: 0 }
    }
}

struct BrokerInner {
    topics: BTreeMap<String, TopicLog>,
    clock: Box<dyn Clock>,
}

/// Topic broker; a single lock serializes appends, so per-topic offsets are
/// contiguous and timestamps non-decreasing under any interleaving.
pub struct Broker {
    inner: Mutex<BrokerInner>,
}

impl Broker {
    pub fn new(clock: Box<dyn Clock>) -> Self {
        Broker { inner: Mutex::new(BrokerInner { topics: BTreeMap::new(), clock }) }
    }

    pub fn with_system_clock() -> Self {
        Broker::new(Box::new(SystemClock))
    }

    /// Broker with exactly the raw and predictions topics.
    pub fn default_topology(clock: Box<dyn Clock>) -> Self {
        let broker = Broker::new(clock);
        broker.create_topic(RAW_TOPIC).expect("fresh broker");
        broker.create_topic(PREDICTIONS_TOPIC).expect("fresh broker");
        broker
    }

    pub fn create_topic(&self, name: &str) -> Result<(), StreamError> {
        if name.is_empty() {
            return Err(StreamError::EmptyTopicName);
        }
        let mut inner = self.inner.lock().unwrap();
        if inner.topics.contains_key(name) {
            return Err(StreamError::DuplicateTopic(name.to_string()));
        }
        inner.topics.insert(name.to_string(), TopicLog::new(name));
        Ok(())
    }

    pub fn topics(&self) -> Vec<String> {
        self.inner.lock().unwrap().topics.keys().cloned().collect()
    }

    /// Appends one message; returns its offset.
    pub fn produce(&self, topic: &str, payload: Payload) -> Result<u64, StreamError> {
        if payload.is_empty() {
            return Err(StreamError::EmptyPayload);
        }
        let mut inner = self.inner.lock().unwrap();
        let now = inner.clock.now_ms();
        let log = inner
            .topics
            .get_mut(topic)
            .ok_or_else(|| StreamError::UnknownTopic(topic.to_string()))?;
        let offset = log.next_offset;
        // A wall clock can step backwards; the per-topic timeline must not.
        let timestamp = log.messages.last().map_or(now, |m| m.timestamp.max(now));
        log.messages.push(Envelope { topic: topic.to_string(), offset, timestamp, payload });
        log.next_offset += 1;
        Ok(offset)
    }

    /// Next `max_batch` messages at the consumer's committed offset, in
    /// offset order; advances the state past what it returns.
    pub fn consume(
        &self,
        state: &mut ConsumerState,
        max_batch: usize,
    ) -> Result<Vec<Envelope>, StreamError> {
        let inner = self.inner.lock().unwrap();
        let log = inner
            .topics
            .get(&state.topic)
            .ok_or_else(|| StreamError::UnknownTopic(state.topic.clone()))?;
        let len = log.messages.len() as u64;
        if state.committed > len {
            return Err(StreamError::OffsetPastEnd {
                topic: state.topic.clone(),
                committed: state.committed,
                len,
            });
        }
        let from = state.committed as usize;
        let to = (from + max_batch).min(log.messages.len());
        let batch = log.messages[from..to].to_vec();
        state.committed = to as u64;
        Ok(batch)
    }

    pub fn topic_len(&self, topic: &str) -> Result<u64, StreamError> {
        let inner = self.inner.lock().unwrap();
        inner
            .topics
            .get(topic)
            .map(|log| log.next_offset)
            .ok_or_else(|| StreamError::UnknownTopic(topic.to_string()))
    }

    /// Full copy of one topic's log.
    pub fn snapshot(&self, topic: &str) -> Result<Vec<Envelope>, StreamError> {
        let inner = self.inner.lock().unwrap();
        inner
            .topics
            .get(topic)
            .map(|log| log.messages.clone())
            .ok_or_else(|| StreamError::UnknownTopic(topic.to_string()))
    }
}

/// Flow record as a wire payload: feature name → value pairs plus "Label".
pub fn record_payload(feature_names: &[String], record: &FlowRecord) -> Payload {
    let mut payload = Payload::new();
    for (name, &value) in feature_names.iter().zip(&record.features) {
        payload.insert(name.clone(), value.into());
    }
    payload.insert("Label".to_string(), u64::from(record.label).into());
    payload
}

/// Feature vector back out of a payload, in schema order; `None` marks a
/// malformed message (missing key or non-numeric value).
pub fn payload_features(payload: &Payload, feature_names: &[String]) -> Option<Vec<f64>> {
    feature_names.iter().map(|name| payload.get(name).and_then(Value::as_f64)).collect()
}

/// Outcome tallies of one scoring pass; `processed` always equals
/// `forwarded + benign + malformed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringStats {
    pub processed: u64,
    pub forwarded: u64,
    pub benign: u64,
    pub malformed: u64,
}

/// Reads every message on `in_topic` once, attaches the model's prediction,
/// and forwards only predicted-malicious messages to `out_topic`. Malformed
/// payloads are counted, never silently dropped.
pub fn scoring_consumer<P>(
    broker: &Broker,
    model: &P,
    feature_names: &[String],
    in_topic: &str,
    out_topic: &str,
) -> Result<ScoringStats, StreamError>
where
    P: Predictor + ?Sized,
{
    if in_topic == out_topic {
        return Err(StreamError::SelfForward);
    }
    broker.topic_len(in_topic)?;
    broker.topic_len(out_topic)?;

    let mut state = ConsumerState::new(in_topic);
    let mut stats = ScoringStats { processed: 0, forwarded: 0, benign: 0, malformed: 0 };
    loop {
        let batch = broker.consume(&mut state, 256)?;
        if batch.is_empty() {
            return Ok(stats);
        }
        for envelope in batch {
            stats.processed += 1;
            let Some(features) = payload_features(&envelope.payload, feature_names) else {
                stats.malformed += 1;
                continue;
            };
            let prediction = model.predict(&features);
            if prediction == 1 {
                let mut payload = envelope.payload;
                payload.insert("prediction".to_string(), u64::from(prediction).into());
                broker.produce(out_topic, payload)?;
                stats.forwarded += 1;
            } else {
                stats.benign += 1;
            }
        }
    }
}

/// One socket request: `verb` is PRODUCE, CONSUME, or CREATE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireRequest {
    pub verb: String,
    pub topic: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireResponse {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub messages: Option<Vec<Envelope>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl WireResponse {
    fn ok_offset(offset: u64) -> Self {
        WireResponse { ok: true, offset: Some(offset), messages: None, error: None }
    }

    fn ok_messages(messages: Vec<Envelope>) -> Self {
        WireResponse { ok: true, offset: None, messages: Some(messages), error: None }
    }

    fn ok_empty() -> Self {
        WireResponse { ok: true, offset: None, messages: None, error: None }
    }

    fn err(message: impl Into<String>) -> Self {
        WireResponse { ok: false, offset: None, messages: None, error: Some(message.into()) }
    }
}

fn handle_request(broker: &Broker, request: WireRequest) -> WireResponse {
    match request.verb.as_str() {
        "CREATE" => match broker.create_topic(&request.topic) {
            Ok(()) => WireResponse::ok_empty(),
            Err(e) => WireResponse::err(e.to_string()),
        },
        "PRODUCE" => {
            let Some(payload) = request.payload else {
                return WireResponse::err("PRODUCE requires a payload");
            };
            match broker.produce(&request.topic, payload) {
                Ok(offset) => WireResponse::ok_offset(offset),
                Err(e) => WireResponse::err(e.to_string()),
            }
        }
        "CONSUME" => {
            let mut state = ConsumerState {
                topic: request.topic.clone(),
                committed: request.offset.unwrap_or(0),
            };
            match broker.consume(&mut state, request.max.unwrap_or(256)) {
                Ok(messages) => WireResponse::ok_messages(messages),
                Err(e) => WireResponse::err(e.to_string()),
            }
        }
        other => WireResponse::err(format!("unknown verb {other:?}")),
    }
}

fn serve_client(broker: &Broker, stream: TcpStream, shutdown: &AtomicBool) {
    stream.set_read_timeout(Some(Duration::from_millis(50))).ok();
    let mut writer = match stream.try_clone() {
        Ok(w) => w,
        Err(_) => return,
    };
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    while !shutdown.load(Ordering::Relaxed) {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) => return,
            Ok(_) => {
                if line.trim().is_empty() {
                    continue;
                }
                let response = match serde_json::from_str::<WireRequest>(&line) {
                    Ok(request) => handle_request(broker, request),
                    Err(e) => WireResponse::err(format!("bad request: {e}")),
                };
                let mut encoded = serde_json::to_string(&response).expect("response serializes");
                encoded.push('\n');
                if writer.write_all(encoded.as_bytes()).is_err() {
                    return;
                }
            }
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(_) => return,
        }
    }
}

/// Running socket front-end; dropping without `shutdown` leaks the thread.
pub struct SocketServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl SocketServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, waits for in-flight connections to drain.
    pub fn shutdown(mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(handle) = self.accept_thread.take() {
            handle.join().ok();
        }
    }
}

/// Binds `addr` (e.g. "127.0.0.1:9092", port 0 for ephemeral) and serves the
/// broker over newline-delimited JSON.
pub fn serve(broker: Arc<Broker>, addr: &str) -> Result<SocketServer, StreamError> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let shutdown = Arc::new(AtomicBool::new(false));

    let accept_shutdown = Arc::clone(&shutdown);
    let accept_thread = std::thread::spawn(move || {
        let mut clients: Vec<JoinHandle<()>> = Vec::new();
        while !accept_shutdown.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let broker = Arc::clone(&broker);
                    let flag = Arc::clone(&accept_shutdown);
                    clients.push(std::thread::spawn(move || serve_client(&broker, stream, &flag)));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(_) => break,
            }
        }
        for client in clients {
            client.join().ok();
        }
    });

    Ok(SocketServer { addr, shutdown, accept_thread: Some(accept_thread) })
}
