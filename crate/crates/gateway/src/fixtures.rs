//! Named signal recordings a session can replay through the online engine.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use warpbci_core::online::{EngineMode, StreamConfig, TemplateBank};
use warpbci_core::signal::{load_trials, TrialFormat};
use warpbci_core::synth::{blink_demo_stream, gen_templates, gesture_demo_stream, GenSpec};
use warpbci_core::EegTrial;

pub const BLINK_DEMO: &str = "blink-demo";
pub const GESTURE_DEMO: &str = "gesture-demo";

/// A recording plus the engine settings it is replayed with.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub id: String,
    pub trial: EegTrial,
    pub config: StreamConfig,
    pub mode: EngineMode,
    pub bank: Option<TemplateBank>,
}

impl Fixture {
    /// One channel replays as a blink counter; more channels replay as
    /// blink-and-jaw with generated templates at the recording's rate.
    pub fn from_trial(id: &str, trial: EegTrial) -> Result<Self> {
        let rate = trial.sample_rate();
        let (config, mode, bank) = if trial.channels() == 1 {
            (StreamConfig::single_electrode(), EngineMode::BlinkOnly, None)
        } else {
            let bank = gen_templates(&GenSpec { sample_rate: rate, ..GenSpec::default() })?;
            (StreamConfig::four_electrode(), EngineMode::BlinkAndJaw, Some(bank))
        };
        Ok(Fixture { id: id.to_string(), trial, config: StreamConfig { sample_rate: rate, ..config }, mode, bank })
    }
}

/// Built-in demo streams, optionally extended by `<dir>/<id>.csv` or
/// `<dir>/<id>.jsonl` (first trial of the file).
#[derive(Debug, Clone, Default)]
pub struct FixtureRegistry {
    dir: Option<PathBuf>,
    seed: u64,
}

impl FixtureRegistry {
    pub fn new(dir: Option<PathBuf>, seed: u64) -> Self {
        FixtureRegistry { dir, seed }
    }

    pub fn load(&self, id: &str) -> Result<Fixture> {
        match id {
            BLINK_DEMO => Fixture::from_trial(id, blink_demo_stream(self.seed)?),
            GESTURE_DEMO => Fixture::from_trial(id, gesture_demo_stream(self.seed)?),
            _ => self.load_file(id),
        }
    }

    fn load_file(&self, id: &str) -> Result<Fixture> {
        let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        let Some(dir) = self.dir.as_deref().filter(|_| valid) else {
            bail!("unknown fixture {id:?}");
        };
        let path = ["csv", "jsonl"]
            .iter()
            .map(|ext| dir.join(format!("{id}.{ext}")))
            .find(|p| p.is_file())
            .with_context(|| format!("unknown fixture {id:?}"))?;
        let trial = first_trial(&path)?;
        Fixture::from_trial(id, trial)
    }
}

fn first_trial(path: &Path) -> Result<EegTrial> {
    load_trials(path, TrialFormat::from_path(path))
        .with_context(|| format!("reading {}", path.display()))?
        .into_iter()
        .next()
        .with_context(|| format!("{} holds no trial", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use warpbci_core::signal::save_trials;

    #[test]
    fn builtins_pick_their_engine() {
        let reg = FixtureRegistry::new(None, 7);
        let blink = reg.load(BLINK_DEMO).unwrap();
        assert_eq!((blink.mode, blink.config.sample_rate), (EngineMode::BlinkOnly, 512.0));
        let gesture = reg.load(GESTURE_DEMO).unwrap();
        assert_eq!(gesture.mode, EngineMode::BlinkAndJaw);
        assert!(gesture.bank.is_some());
    }

    #[test]
    fn directory_fixtures_and_bad_ids() {
        let dir = tempfile::tempdir().unwrap();
        let trial = EegTrial::new(100.0, vec![vec![0.0; 50]]).unwrap();
        save_trials(dir.path().join("mine.csv"), std::slice::from_ref(&trial), TrialFormat::Csv).unwrap();
        let reg = FixtureRegistry::new(Some(dir.path().to_path_buf()), 7);
        assert_eq!(reg.load("mine").unwrap().trial, trial);
        for id in ["missing", "../mine", "", "a/b"] {
            assert!(reg.load(id).is_err(), "{id}");
        }
        assert!(FixtureRegistry::default().load("mine").is_err());
    }
}
