//! One client's speller, optional replay, and clock.
//!
//! Everything here is synchronous and driven only by the messages and the
//! ticks it is given, so a scripted client on an injected clock sees the
//! same transcript on every run.

use std::sync::Arc;

use anyhow::Result;
use warpbci_core::lexicon::Lexicon;
use warpbci_core::online::{ArtifactEvent, OnlineEngine};
use warpbci_core::speller::{LayoutKind, SpellerOutput, SpellerState};
use warpbci_core::EegTrial;

use crate::fixtures::FixtureRegistry;
use crate::protocol::{decode_client, ClientMsg, ServerMsg};

/// Largest single injected tick; keeps one message from stalling a session.
pub const MAX_TICK_MS: u64 = 3_600_000;

/// A fixture being streamed through an online engine in session time.
struct Replay {
    fixture: String,
    trial: EegTrial,
    engine: OnlineEngine,
    next: usize,
    /// Session clock when the replay started.
    started_ms: u64,
    emitted: Vec<ArtifactEvent>,
}

impl Replay {
    /// Feeds every sample due by `elapsed_ms` of replay time; once the
    /// recording is exhausted the engine is finished too.
    fn feed_until(&mut self, elapsed_ms: u64) -> Result<(Vec<ArtifactEvent>, bool)> {
        let rate = self.trial.sample_rate();
        let due = ((elapsed_ms as f64 * rate / 1000.0).floor() as usize).min(self.trial.len());
        let mut events = Vec::new();
        while self.next < due {
            events.extend(self.engine.feed(&self.trial.frame(self.next))?);
            self.next += 1;
        }
        let done = self.next == self.trial.len();
        if done {
            events.extend(self.engine.finish()?);
        }
        self.emitted.extend(events.iter().cloned());
        Ok((events, done))
    }
}

pub struct Session {
    speller: SpellerState,
    fixtures: Arc<FixtureRegistry>,
    injected_clock: bool,
    replay: Option<Replay>,
}

impl Session {
    pub fn new(lexicon: Arc<Lexicon>, fixtures: Arc<FixtureRegistry>, dwell_ms: u64, injected_clock: bool) -> Result<Self> {
        let speller = SpellerState::with_dwell(LayoutKind::T9, lexicon, dwell_ms)?;
        Ok(Session { speller, fixtures, injected_clock, replay: None })
    }

    pub fn speller(&self) -> &SpellerState {
        &self.speller
    }

    pub fn replaying(&self) -> bool {
        self.replay.is_some()
    }

    /// Sent once when a client connects.
    pub fn greeting(&self) -> Vec<ServerMsg> {
        vec![self.snapshot()]
    }

    fn snapshot(&self) -> ServerMsg {
        ServerMsg::Snapshot { snapshot: self.speller.snapshot() }
    }

    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMsg> {
        match decode_client(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![ServerMsg::error(e)],
        }
    }

    pub fn handle(&mut self, msg: ClientMsg) -> Vec<ServerMsg> {
        match msg {
            ClientMsg::InjectEvent { event } => relay(self.speller.on_event(&event)),
            ClientMsg::StartReplay { fixture } => match self.start_replay(&fixture) {
                Ok(()) => Vec::new(),
                Err(e) => vec![ServerMsg::error(format!("{e:#}"))],
            },
            ClientMsg::SetLayout { layout } => {
                self.speller.reset(Some(layout));
                vec![self.snapshot()]
            }
            ClientMsg::Reset => {
                self.replay = None;
                self.speller.reset(None);
                vec![self.snapshot()]
            }
            ClientMsg::Tick { .. } if !self.injected_clock => {
                vec![ServerMsg::error("Tick is only accepted when the server runs on an injected clock")]
            }
            ClientMsg::Tick { ms } if ms > MAX_TICK_MS => {
                vec![ServerMsg::error(format!("tick of {ms} ms exceeds the {MAX_TICK_MS} ms limit"))]
            }
            ClientMsg::Tick { ms } => self.advance(ms),
        }
    }

    fn start_replay(&mut self, id: &str) -> Result<()> {
        if let Some(r) = &self.replay {
            anyhow::bail!("replay of {:?} is still running", r.fixture);
        }
        let f = self.fixtures.load(id)?;
        let engine = OnlineEngine::new(f.config, f.mode, f.bank.as_ref())?;
        self.replay = Some(Replay {
            fixture: f.id,
            trial: f.trial,
            engine,
            next: 0,
            started_ms: self.speller.snapshot().clock_ms,
            emitted: Vec::new(),
        });
        Ok(())
    }

    /// Moves session time forward by `ms`. Replay events land on the
    /// speller at their own stream time, between partial dwell ticks.
    pub fn advance(&mut self, ms: u64) -> Vec<ServerMsg> {
        let start = self.speller.snapshot().clock_ms;
        let target = start + ms;
        let mut out = Vec::new();
        if let Some(mut replay) = self.replay.take() {
            match replay.feed_until(target - replay.started_ms) {
                Ok((events, done)) => {
                    let mut now = start;
                    for ev in events {
                        let at = (replay.started_ms + ev.t_ms).clamp(now, target);
                        out.extend(relay(self.speller.tick(at - now)));
                        now = at;
                        out.extend(relay(self.speller.on_event(&ev)));
                    }
                    out.extend(relay(self.speller.tick(target - now)));
                    if done {
                        out.push(ServerMsg::ReplayEnded { fixture: replay.fixture, events: replay.emitted });
                    } else {
                        self.replay = Some(replay);
                    }
                    return out;
                }
                Err(e) => out.push(ServerMsg::error(format!("replay of {:?} failed: {e:#}", replay.fixture))),
            }
        }
        out.extend(relay(self.speller.tick(ms)));
        out
    }
}

/// Speller outputs the client sees: snapshots and spoken phrases.
fn relay(outputs: Vec<SpellerOutput>) -> Vec<ServerMsg> {
    outputs
        .into_iter()
        .filter_map(|o| match o {
            SpellerOutput::StateChanged { snapshot } => Some(ServerMsg::Snapshot { snapshot }),
            SpellerOutput::SpeakPhrase { words } => Some(ServerMsg::Spoken { words }),
            _ => None,
        })
        .collect()
}
