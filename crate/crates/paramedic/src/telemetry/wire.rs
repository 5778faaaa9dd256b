//! Newline-delimited JSON wire adapter for external vehicle processes.
//!
//! Frames are UTF-8, one JSON object per `\n`-terminated line. Telemetry
//! events use a `"type"` discriminator of `sample`, `status`,
//! `waypoint_reached`, `landed` or `mission_timeout`; control responses
//! (`started`, `upload_ack`, `final_status`, `error`) share the stream.
//! Commands flow the other way with a `"cmd"` discriminator
//! (`start_mission`, `upload_params`, `stop_mission`).
//!
//! One connection carries one mission: [`WireLink`] consumes its transport
//! when the mission starts, and [`serve`] runs the vehicle side of a single
//! session over any byte stream (TCP socket or subprocess stdio).

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    AbortReason, FinalStatus, LinkError, MissionHandle, MissionPlan, TelemetryEvent, UploadAck,
    VehicleLink,
};
use crate::paramdb::{ParamSet, ValidationError, Violation};
use crate::Scalar;

/// Encode one telemetry event as a single wire line (no trailing newline).
pub fn encode_event(event: &TelemetryEvent) -> String {
    serde_json::to_string(event).expect("telemetry events always serialize")
}

/// Decode one wire line into a telemetry event, enforcing the type
/// invariants: samples carry a non-negative time and `alt == pos.z` within
/// 1e-9; status text is non-empty.
pub fn decode_event(line: &str) -> Result<TelemetryEvent, LinkError> {
    let event: TelemetryEvent =
        serde_json::from_str(line).map_err(|e| LinkError::Protocol(e.to_string()))?;
    match &event {
        TelemetryEvent::Sample(sample) => sample.check().map_err(LinkError::Protocol)?,
        TelemetryEvent::Status(status) if status.text.is_empty() => {
            return Err(LinkError::Protocol("status frame with empty text".into()));
        }
        _ => {}
    }
    Ok(event)
}

/// Monitor-to-vehicle command frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    StartMission { params: ParamSet, plan: MissionPlan },
    UploadParams { params: ParamSet },
    StopMission,
}

/// Vehicle-to-monitor control frames, interleaved with telemetry events.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ControlMsg {
    Started,
    UploadAck { effective_t: Scalar },
    FinalStatus { status: FinalStatus },
    Error {
        kind: String,
        detail: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        violations: Vec<Violation>,
    },
}

/// Any downstream line: a telemetry event or a control message.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DownFrame {
    Event(TelemetryEvent),
    Control(ControlMsg),
}

fn write_frame<W: Write, T: Serialize>(writer: &mut W, frame: &T) -> std::io::Result<()> {
    let line = serde_json::to_string(frame).expect("wire frames always serialize");
    writer.write_all(line.as_bytes())?;
    writer.write_all(b"\n")?;
    writer.flush()
}

/// Client side of the wire protocol. Consumed by the first
/// [`VehicleLink::start_mission`] call; reconnect for the next mission.
pub struct WireLink {
    transport: Option<(Box<dyn BufRead + Send>, Box<dyn Write + Send>)>,
    ack_timeout: Duration,
}

impl WireLink {
    /// Wrap an already-open byte stream pair (e.g. a child process's stdio).
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Self {
        Self {
            transport: Some((Box::new(BufReader::new(reader)), Box::new(writer))),
            ack_timeout: Duration::from_secs(10),
        }
    }

    /// Connect to a vehicle process listening on `addr`.
    pub fn connect_tcp(addr: SocketAddr, connect_timeout: Duration) -> Result<Self, LinkError> {
        let stream = TcpStream::connect_timeout(&addr, connect_timeout)
            .map_err(|e| LinkError::Connection(format!("{addr}: {e}")))?;
        let read_half = stream
            .try_clone()
            .map_err(|e| LinkError::Connection(e.to_string()))?;
        Ok(Self::from_streams(read_half, stream))
    }

    /// Wall-clock budget for upload acknowledgments and final-status replies.
    pub fn with_ack_timeout(mut self, timeout: Duration) -> Self {
        self.ack_timeout = timeout;
        self
    }
}

impl VehicleLink for WireLink {
    fn start_mission(
        &mut self,
        params: &ParamSet,
        plan: &MissionPlan,
    ) -> Result<Box<dyn MissionHandle>, LinkError> {
        let (mut reader, mut writer) = self
            .transport
            .take()
            .ok_or_else(|| LinkError::Connection("wire transport already consumed".into()))?;
        write_frame(
            &mut writer,
            &Command::StartMission { params: params.clone(), plan: plan.clone() },
        )?;

        // The vehicle answers with `started` (or `error`) before any event.
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(LinkError::Connection("vehicle closed before starting".into()));
            }
            if line.trim().is_empty() {
                continue;
            }
            let frame: DownFrame = serde_json::from_str(line.trim_end())
                .map_err(|e| LinkError::Protocol(e.to_string()))?;
            match frame {
                DownFrame::Control(ControlMsg::Started) => break,
                DownFrame::Control(ControlMsg::Error { kind, detail, violations }) => {
                    return Err(refusal_to_error(&kind, detail, violations));
                }
                other => {
                    return Err(LinkError::Protocol(format!(
                        "expected started frame, got {other:?}"
                    )))
                }
            }
        }

        let (tx, rx) = mpsc::channel();
        let pump = std::thread::spawn(move || pump_frames(reader, tx));
        Ok(Box::new(WireMission {
            rx,
            writer,
            pending: VecDeque::new(),
            final_status: None,
            terminal_seen: false,
            disconnected: false,
            stopped: None,
            ack_timeout: self.ack_timeout,
            _pump: pump,
        }))
    }
}

fn refusal_to_error(kind: &str, detail: String, violations: Vec<Violation>) -> LinkError {
    match kind {
        "validation" => LinkError::Validation(ValidationError { violations }),
        _ => LinkError::Protocol(format!("{kind}: {detail}")),
    }
}

fn pump_frames(mut reader: Box<dyn BufRead + Send>, tx: Sender<DownFrame>) {
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        match serde_json::from_str::<DownFrame>(trimmed) {
            Ok(frame) => {
                if tx.send(frame).is_err() {
                    return;
                }
            }
            Err(e) => {
                log::warn!("dropping malformed wire frame: {e}");
                return;
            }
        }
    }
}

struct WireMission {
    rx: Receiver<DownFrame>,
    writer: Box<dyn Write + Send>,
    pending: VecDeque<TelemetryEvent>,
    final_status: Option<FinalStatus>,
    terminal_seen: bool,
    disconnected: bool,
    stopped: Option<FinalStatus>,
    ack_timeout: Duration,
    _pump: JoinHandle<()>,
}

impl WireMission {
    fn absorb_control(&mut self, msg: ControlMsg) {
        if let ControlMsg::FinalStatus { status } = msg {
            self.final_status = Some(status);
        }
    }

    fn note_event(&mut self, event: &TelemetryEvent) {
        if matches!(
            event,
            TelemetryEvent::Landed { .. } | TelemetryEvent::MissionTimeout { .. }
        ) {
            self.terminal_seen = true;
        }
    }

    /// Route any frames already received without blocking.
    fn drain_ready(&mut self) {
        loop {
            match self.rx.try_recv() {
                Ok(DownFrame::Event(ev)) => {
                    self.note_event(&ev);
                    self.pending.push_back(ev);
                }
                Ok(DownFrame::Control(msg)) => self.absorb_control(msg),
                Err(mpsc::TryRecvError::Empty) => return,
                Err(mpsc::TryRecvError::Disconnected) => {
                    self.disconnected = true;
                    return;
                }
            }
        }
    }

    fn infer_final_status(&self) -> FinalStatus {
        if let Some(status) = &self.final_status {
            return status.clone();
        }
        if self.terminal_seen {
            FinalStatus::Aborted(AbortReason::Commanded)
        } else {
            FinalStatus::Aborted(AbortReason::LinkLost)
        }
    }
}

impl MissionHandle for WireMission {
    fn next_event(&mut self) -> Option<TelemetryEvent> {
        if let Some(ev) = self.pending.pop_front() {
            return Some(ev);
        }
        if self.stopped.is_some() || self.disconnected {
            return None;
        }
        loop {
            match self.rx.recv() {
                Ok(DownFrame::Event(ev)) => {
                    self.note_event(&ev);
                    return Some(ev);
                }
                Ok(DownFrame::Control(msg)) => self.absorb_control(msg),
                Err(_) => {
                    self.disconnected = true;
                    return None;
                }
            }
        }
    }

    fn upload_params(&mut self, fix: &ParamSet) -> Result<UploadAck, LinkError> {
        if !self.is_active() {
            return Err(LinkError::StaleHandle);
        }
        write_frame(&mut self.writer, &Command::UploadParams { params: fix.clone() })?;
        let deadline = std::time::Instant::now() + self.ack_timeout;
        loop {
            let now = std::time::Instant::now();
            let remaining = deadline.saturating_duration_since(now);
            match self.rx.recv_timeout(remaining) {
                Ok(DownFrame::Event(ev)) => {
                    self.note_event(&ev);
                    self.pending.push_back(ev);
                }
                Ok(DownFrame::Control(ControlMsg::UploadAck { effective_t })) => {
                    return Ok(UploadAck { effective_t });
                }
                Ok(DownFrame::Control(ControlMsg::Error { kind, detail, violations })) => {
                    return Err(refusal_to_error(&kind, detail, violations));
                }
                Ok(DownFrame::Control(msg)) => {
                    self.absorb_control(msg);
                    if self.final_status.is_some() {
                        return Err(LinkError::StaleHandle);
                    }
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(LinkError::Protocol("upload acknowledgment timed out".into()));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.disconnected = true;
                    return Err(LinkError::StaleHandle);
                }
            }
        }
    }

    fn is_active(&mut self) -> bool {
        self.drain_ready();
        self.stopped.is_none()
            && self.final_status.is_none()
            && !self.terminal_seen
            && !self.disconnected
    }

    fn stop(&mut self) -> FinalStatus {
        if let Some(status) = &self.stopped {
            return status.clone();
        }
        // The vehicle may already be gone; a failed write is fine.
        let _ = write_frame(&mut self.writer, &Command::StopMission);
        let deadline = std::time::Instant::now() + self.ack_timeout;
        while self.final_status.is_none() {
            let remaining = deadline.saturating_duration_since(std::time::Instant::now());
            if remaining.is_zero() {
                break;
            }
            match self.rx.recv_timeout(remaining) {
                Ok(DownFrame::Event(ev)) => self.note_event(&ev),
                Ok(DownFrame::Control(msg)) => self.absorb_control(msg),
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => {
                    self.disconnected = true;
                    break;
                }
            }
        }
        let status = self.infer_final_status();
        self.stopped = Some(status.clone());
        status
    }
}

/// Pacing for [`serve`]: how fast virtual time plays out against the wall
/// clock. `time_scale` of 20 plays a 60-second mission in 3 seconds;
/// non-positive disables pacing entirely.
#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    pub time_scale: f64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { time_scale: 20.0 }
    }
}

/// Run the vehicle side of one wire session: wait for `start_mission`, pump
/// telemetry events to the peer while applying `upload_params` commands, and
/// finish with a `final_status` frame.
pub fn serve<R, W>(
    link: &mut dyn VehicleLink,
    reader: R,
    mut writer: W,
    options: ServeOptions,
) -> Result<(), LinkError>
where
    R: Read + Send + 'static,
    W: Write,
{
    let mut reader = BufReader::new(reader);
    let mut line = String::new();

    // First command must be start_mission.
    let mut handle = loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(()); // peer went away before starting
        }
        if line.trim().is_empty() {
            continue;
        }
        let cmd: Command = match serde_json::from_str(line.trim_end()) {
            Ok(cmd) => cmd,
            Err(e) => {
                write_frame(
                    &mut writer,
                    &ControlMsg::Error {
                        kind: "protocol".into(),
                        detail: e.to_string(),
                        violations: vec![],
                    },
                )?;
                return Ok(());
            }
        };
        match cmd {
            Command::StartMission { params, plan } => match link.start_mission(&params, &plan) {
                Ok(handle) => {
                    write_frame(&mut writer, &ControlMsg::Started)?;
                    break handle;
                }
                Err(e) => {
                    write_frame(&mut writer, &link_error_frame(e))?;
                    return Ok(());
                }
            },
            Command::StopMission => return Ok(()),
            Command::UploadParams { .. } => {
                write_frame(
                    &mut writer,
                    &ControlMsg::Error {
                        kind: "protocol".into(),
                        detail: "no mission in progress".into(),
                        violations: vec![],
                    },
                )?;
            }
        }
    };

    // Commands arrive asynchronously while we pump events.
    let (cmd_tx, cmd_rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut line = String::new();
        loop {
            line.clear();
            match reader.read_line(&mut line) {
                Ok(0) | Err(_) => return,
                Ok(_) => {}
            }
            let trimmed = line.trim_end();
            if trimmed.is_empty() {
                continue;
            }
            match serde_json::from_str::<Command>(trimmed) {
                Ok(cmd) => {
                    if cmd_tx.send(cmd).is_err() {
                        return;
                    }
                }
                Err(e) => log::warn!("ignoring malformed command frame: {e}"),
            }
        }
    });

    let mut last_paced_t: Option<Scalar> = None;
    let mut peer_stopped = false;
    loop {
        match cmd_rx.try_recv() {
            Ok(Command::UploadParams { params }) => match handle.upload_params(&params) {
                Ok(ack) => {
                    write_frame(&mut writer, &ControlMsg::UploadAck { effective_t: ack.effective_t })?
                }
                Err(e) => write_frame(&mut writer, &link_error_frame(e))?,
            },
            Ok(Command::StopMission) => {
                peer_stopped = true;
                break;
            }
            Ok(Command::StartMission { .. }) => {
                write_frame(
                    &mut writer,
                    &ControlMsg::Error {
                        kind: "protocol".into(),
                        detail: "mission already in progress".into(),
                        violations: vec![],
                    },
                )?;
            }
            Err(mpsc::TryRecvError::Empty) => {}
            Err(mpsc::TryRecvError::Disconnected) => break,
        }

        match handle.next_event() {
            Some(event) => {
                if options.time_scale > 0.0 {
                    if let Some(prev) = last_paced_t {
                        let dt = (event.t() - prev).max(0.0) / options.time_scale;
                        if dt > 0.0 {
                            std::thread::sleep(Duration::from_secs_f64(dt));
                        }
                    }
                    last_paced_t = Some(event.t());
                }
                write_frame(&mut writer, &DownFrame::Event(event))?;
            }
            None => break,
        }
    }

    let status = handle.stop();
    write_frame(&mut writer, &ControlMsg::FinalStatus { status })?;
    if !peer_stopped {
        // Give the peer a moment to send stop_mission; EOF is also fine.
        let _ = cmd_rx.recv_timeout(Duration::from_millis(200));
    }
    Ok(())
}

fn link_error_frame(e: LinkError) -> ControlMsg {
    match e {
        LinkError::Validation(v) => ControlMsg::Error {
            kind: "validation".into(),
            detail: v.to_string(),
            violations: v.violations,
        },
        LinkError::Plan(p) => ControlMsg::Error {
            kind: "plan".into(),
            detail: p.to_string(),
            violations: vec![],
        },
        LinkError::StaleHandle => ControlMsg::Error {
            kind: "stale".into(),
            detail: "mission already ended".into(),
            violations: vec![],
        },
        other => ControlMsg::Error {
            kind: "link".into(),
            detail: other.to_string(),
            violations: vec![],
        },
    }
}
