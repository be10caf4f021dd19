//! Runs every session of an experiment, optionally on several threads,
//! and writes one transcript per session plus a manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tabletop_core::hash::StateHash;
use tabletop_core::policy::Policy;
use tabletop_core::session::{
    run_session, ExperimentConfig, SessionError, SessionSeeds, Transcript, SCHEMA_VERSION, SOFTWARE,
};

use crate::transcript_file::{read_transcript, write_transcript, TranscriptFileError};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Config(String),
    #[error("session {index}: {error}")]
    Session { index: usize, error: SessionError },
    #[error("{path}: {error}")]
    Io { path: PathBuf, error: io::Error },
    #[error("{path}: {error}")]
    Transcript { path: PathBuf, error: TranscriptFileError },
    #[error("{path}: malformed manifest: {error}")]
    Manifest { path: PathBuf, error: serde_json::Error },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub index: usize,
    pub seed: StateHash,
    pub file: String,
    pub complete: bool,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub software: String,
    pub experiment: String,
    pub policy: String,
    pub config: ExperimentConfig,
    pub sessions: Vec<SessionEntry>,
}

pub fn session_file_name(index: usize) -> String {
    format!("session-{index:03}.jsonl")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |error| ExperimentError::Io {
        path: path.to_path_buf(),
        error,
    }
}

/// Runs sessions `0..config.sessions`. `factory` builds a fresh policy for
/// each session index. Output is identical for any `jobs` value: every
/// session draws only from its own seeded streams.
pub fn run_sessions<F>(config: &ExperimentConfig, factory: F, jobs: usize) -> Result<Vec<Transcript>, ExperimentError>
where
    F: Fn(usize) -> Box<dyn Policy> + Sync,
{
    config.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
    let n = config.sessions;
    let jobs = jobs.clamp(1, n);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Transcript, SessionError>>>> = Mutex::new((0..n).map(|_| None).collect());

    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let mut policy = factory(i);
                let r = run_session(config, i, policy.as_mut());
                results.lock().expect("results poisoned")[i] = Some(r);
            });
        }
    });

    results
        .into_inner()
        .expect("results poisoned")
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.expect("every session ran")
                .map_err(|error| ExperimentError::Session { index, error })
        })
        .collect()
}

pub fn manifest_for(config: &ExperimentConfig, policy: &str, transcripts: &[Transcript]) -> Manifest {
    Manifest {
        schema_version: SCHEMA_VERSION.to_string(),
        software: SOFTWARE.to_string(),
        experiment: config.name.clone(),
        policy: policy.to_string(),
        config: config.clone(),
        sessions: transcripts
            .iter()
            .map(|t| SessionEntry {
                index: t.header.session_index,
                seed: StateHash(SessionSeeds::derive(config.master_seed, t.header.session_index).session),
                file: session_file_name(t.header.session_index),
                complete: t.footer.complete,
                steps: t.footer.steps,
                error: t.footer.error.clone(),
            })
            .collect(),
    }
}

pub fn write_experiment(out: &Path, manifest: &Manifest, transcripts: &[Transcript]) -> Result<(), ExperimentError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    for t in transcripts {
        let path = out.join(session_file_name(t.header.session_index));
        write_transcript(&path, t).map_err(io_err(&path))?;
    }
    let path = out.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

/// Runs the experiment and writes it to `out`.
pub fn run_experiment<F>(
    config: &ExperimentConfig,
    policy_name: &str,
    factory: F,
    jobs: usize,
    out: &Path,
) -> Result<(Manifest, Vec<Transcript>), ExperimentError>
where
    F: Fn(usize) -> Box<dyn Policy> + Sync,
{
    let transcripts = run_sessions(config, factory, jobs)?;
    let manifest = manifest_for(config, policy_name, &transcripts);
    write_experiment(out, &manifest, &transcripts)?;
    Ok((manifest, transcripts))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, ExperimentError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|error| ExperimentError::Manifest { path, error })
}

/// Loads a run directory: the manifest and its transcripts in index order.
pub fn load_experiment(dir: &Path) -> Result<(Manifest, Vec<Transcript>), ExperimentError> {
    let manifest = read_manifest(dir)?;
    let mut transcripts = Vec::with_capacity(manifest.sessions.len());
    for entry in &manifest.sessions {
        let path = dir.join(&entry.file);
        let t = read_transcript(&path).map_err(|error| ExperimentError::Transcript { path, error })?;
        transcripts.push(t);
    }
    Ok((manifest, transcripts))
}
