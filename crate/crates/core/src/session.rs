//! Sessions and experiments: configuration presets, seeding, the step loop,
//! and transcript verification by re-simulation.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::describe::{action_phrase, build_menu, build_user_prompt, HistoryEntry, MenuError, MenuSize, PromptTemplate};
use crate::hash::{mix64, StateHash};
use crate::policy::{Decision, DecisionSource, Policy, ReplayPolicy, StepContext};
use crate::select::{replay_query, QueryPath, Role};
use crate::world::{init_scene, Action, Effect, Position, PositionSet, SceneConfig, WorldError, WorldState};

pub const SCHEMA_VERSION: &str = "1";
pub const SOFTWARE: &str = concat!("tabletop-core ", env!("CARGO_PKG_VERSION"));

pub const PRESET_NAMES: [&str; 7] = ["exp1", "exp2", "exp3", "exp4", "exp5", "tower-cubes", "tower-sphere"];

fn default_steps() -> usize {
    10
}

fn default_sessions() -> usize {
    40
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub n_cubes: u32,
    pub n_spheres: u32,
    pub positions: PositionSet,
    pub template: PromptTemplate,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_sessions")]
    pub sessions: usize,
    #[serde(default)]
    pub menu_size: MenuSize,
    #[serde(default)]
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    UnknownPreset(String),
    NoSteps,
    NoSessions,
    NoPositions,
    ZeroMenuSize,
    Scene(WorldError),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownPreset(name) => {
                write!(f, "unknown preset {name:?} (expected one of {})", PRESET_NAMES.join(", "))
            }
            ConfigError::NoSteps => f.write_str("steps must be at least 1"),
            ConfigError::NoSessions => f.write_str("sessions must be at least 1"),
            ConfigError::NoPositions => f.write_str("at least one position must be allowed"),
            ConfigError::ZeroMenuSize => f.write_str("menu size must be at least 1"),
            ConfigError::Scene(e) => write!(f, "invalid scene: {e}"),
        }
    }
}

impl ExperimentConfig {
    pub fn new(name: &str, n_cubes: u32, n_spheres: u32, positions: &[Position], template: PromptTemplate) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            n_cubes,
            n_spheres,
            positions: positions.iter().copied().collect(),
            template,
            steps: default_steps(),
            sessions: default_sessions(),
            menu_size: MenuSize::default(),
            master_seed: 0,
        }
    }

    pub fn scene(&self) -> SceneConfig {
        SceneConfig {
            n_cubes: self.n_cubes,
            n_spheres: self.n_spheres,
        }
    }

    pub fn object_count(&self) -> usize {
        self.scene().object_count()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.steps == 0 {
            return Err(ConfigError::NoSteps);
        }
        if self.sessions == 0 {
            return Err(ConfigError::NoSessions);
        }
        if self.positions.is_empty() {
            return Err(ConfigError::NoPositions);
        }
        if self.menu_size == MenuSize::Limited(0) {
            return Err(ConfigError::ZeroMenuSize);
        }
        // init_scene carries the object-count rules
        let mut probe = ChaCha8Rng::seed_from_u64(0);
        init_scene(&self.scene(), &mut probe).map_err(ConfigError::Scene)?;
        Ok(())
    }
}

/// Named experiment setups.
pub fn preset(name: &str) -> Result<ExperimentConfig, ConfigError> {
    use Position::{Front, Next, Top};
    use PromptTemplate::{Interesting, Novel, TowerTask};
    let cfg = match name {
        "exp1" => ExperimentConfig::new(name, 4, 0, &[Top, Next], Interesting),
        "exp2" => ExperimentConfig::new(name, 5, 0, &[Top, Next], Interesting),
        "exp3" => ExperimentConfig::new(name, 5, 0, &[Top, Next, Front], Interesting),
        "exp4" => ExperimentConfig::new(name, 5, 0, &[Top, Next], Novel),
        "exp5" => ExperimentConfig::new(name, 4, 1, &[Top, Next, Front], Interesting),
        "tower-cubes" => ExperimentConfig::new(name, 5, 0, &[Top, Next, Front], TowerTask),
        "tower-sphere" => ExperimentConfig::new(name, 4, 1, &[Top, Next, Front], TowerTask),
        _ => return Err(ConfigError::UnknownPreset(name.to_string())),
    };
    Ok(cfg)
}

/// Per-session seeds. Each component draws from its own stream so that,
/// say, a policy consuming more randomness never shifts the menus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionSeeds {
    pub session: u64,
    pub scene: u64,
    pub menu: u64,
    pub policy: u64,
}

impl SessionSeeds {
    pub fn derive(master_seed: u64, session_index: usize) -> Self {
        let session = mix64(master_seed, session_index as u64);
        SessionSeeds {
            session,
            scene: mix64(session, 1),
            menu: mix64(session, 2),
            policy: mix64(session, 3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MenuEntry {
    pub action: Action,
    pub phrase: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based.
    pub step: usize,
    /// Hash of the state the menu was offered in.
    pub state_hash: StateHash,
    pub menu: Vec<MenuEntry>,
    pub decision: Decision,
    pub effect: Effect,
    /// Maximum tower height after the action.
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub schema_version: String,
    pub software: String,
    pub policy: String,
    pub config: ExperimentConfig,
    pub session_index: usize,
    /// Rendered in hex so JSON readers without 64-bit integers keep it intact.
    pub session_seed: StateHash,
    pub initial_state: WorldState,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptFooter {
    pub steps: usize,
    pub final_state_hash: StateHash,
    pub final_height: usize,
    pub peak_height: usize,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub steps: Vec<StepRecord>,
    pub footer: TranscriptFooter,
}

impl Transcript {
    pub fn initial_height(&self) -> usize {
        self.header.initial_state.max_tower_height()
    }

    /// Height before any action, then after each recorded step.
    pub fn heights(&self) -> Vec<usize> {
        core::iter::once(self.initial_height())
            .chain(self.steps.iter().map(|s| s.height))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionError {
    Config(ConfigError),
    World { step: usize, error: WorldError },
    Menu { step: usize, error: MenuError },
    /// A policy returned an index or action that is not on the menu.
    OffMenu { step: usize },
}

impl fmt::Display for SessionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionError::Config(e) => e.fmt(f),
            SessionError::World { step, error } => write!(f, "step {step}: {error}"),
            SessionError::Menu { step, error } => write!(f, "step {step}: {error}"),
            SessionError::OffMenu { step } => write!(f, "step {step}: policy chose an action that was not offered"),
        }
    }
}

impl From<ConfigError> for SessionError {
    fn from(e: ConfigError) -> Self {
        SessionError::Config(e)
    }
}

/// Runs one session. Policy failures (for example a dead model endpoint)
/// end the session early; the partial transcript is returned with
/// `footer.complete == false`.
pub fn run_session(
    config: &ExperimentConfig,
    session_index: usize,
    policy: &mut dyn Policy,
) -> Result<Transcript, SessionError> {
    config.validate()?;
    let seeds = SessionSeeds::derive(config.master_seed, session_index);
    let mut scene_rng = ChaCha8Rng::seed_from_u64(seeds.scene);
    let mut menu_rng = ChaCha8Rng::seed_from_u64(seeds.menu);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seeds.policy);

    let initial = init_scene(&config.scene(), &mut scene_rng).map_err(ConfigError::Scene)?;
    let mut state = initial.clone();
    let mut history: Vec<HistoryEntry> = Vec::with_capacity(config.steps);
    let mut steps = Vec::with_capacity(config.steps);
    let mut error = None;

    for step in 1..=config.steps {
        let menu = build_menu(&state, config.positions, config.menu_size, &mut menu_rng)
            .map_err(|error| SessionError::Menu { step, error })?;
        let ctx = StepContext {
            step,
            state: &state,
            history: &history,
            menu: &menu,
        };
        let decision = match policy.select(&ctx, &mut policy_rng) {
            Ok(d) => d,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        };
        if menu.get(decision.menu_index) != Some(decision.action) {
            return Err(SessionError::OffMenu { step });
        }
        let (next, effect) = state
            .apply_action(decision.action)
            .map_err(|error| SessionError::World { step, error })?;
        history.push(HistoryEntry::new(&state, decision.action));
        steps.push(StepRecord {
            step,
            state_hash: state.canonical_hash(),
            menu: menu
                .entries()
                .iter()
                .map(|a| MenuEntry {
                    action: *a,
                    phrase: action_phrase(&state, a),
                })
                .collect(),
            decision,
            effect,
            height: next.max_tower_height(),
        });
        state = next;
    }

    let peak_height = steps
        .iter()
        .map(|s| s.height)
        .chain(core::iter::once(initial.max_tower_height()))
        .max()
        .unwrap_or(0);
    Ok(Transcript {
        header: TranscriptHeader {
            schema_version: SCHEMA_VERSION.to_string(),
            software: SOFTWARE.to_string(),
            policy: policy.name().to_string(),
            config: config.clone(),
            session_index,
            session_seed: StateHash(seeds.session),
            initial_state: initial,
        },
        footer: TranscriptFooter {
            steps: steps.len(),
            final_state_hash: state.canonical_hash(),
            final_height: state.max_tower_height(),
            peak_height,
            complete: error.is_none(),
            error,
        },
        steps,
    })
}

/// Re-runs a session with its own recorded decisions.
pub fn replay_session(transcript: &Transcript) -> Result<Transcript, SessionError> {
    let mut policy = ReplayPolicy::new(transcript.header.policy.clone(), transcript.steps.clone());
    let mut replayed = run_session(&transcript.header.config, transcript.header.session_index, &mut policy)?;
    if !transcript.footer.complete {
        // the replay stops where the recording did, with its own error text
        replayed.footer.error = transcript.footer.error.clone();
    }
    Ok(replayed)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntegrityFailure {
    SchemaVersion(String),
    Config(ConfigError),
    InitialState,
    StepNumber { found: usize },
    StateHash { recorded: StateHash, actual: StateHash },
    Menu,
    Phrase,
    DecisionOffMenu,
    DecisionSource,
    Prompt,
    QueryReplay(String),
    IllegalAction(WorldError),
    Effect,
    Height { recorded: usize, actual: usize },
    Footer(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegrityError {
    /// 1-based step, or `None` for header/footer problems.
    pub step: Option<usize>,
    pub failure: IntegrityFailure,
}

impl fmt::Display for IntegrityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(step) = self.step {
            write!(f, "step {step}: ")?;
        }
        match &self.failure {
            IntegrityFailure::SchemaVersion(v) => {
                write!(f, "unsupported schema version {v:?} (expected {SCHEMA_VERSION:?})")
            }
            IntegrityFailure::Config(e) => write!(f, "invalid config: {e}"),
            IntegrityFailure::InitialState => f.write_str("initial state does not match the session seed"),
            IntegrityFailure::StepNumber { found } => write!(f, "unexpected step number {found}"),
            IntegrityFailure::StateHash { recorded, actual } => {
                write!(f, "state hash {recorded} recorded, {actual} re-simulated")
            }
            IntegrityFailure::Menu => f.write_str("menu does not match the seeded menu stream"),
            IntegrityFailure::Phrase => f.write_str("menu phrase does not match its action"),
            IntegrityFailure::DecisionOffMenu => f.write_str("decision is not the menu entry it names"),
            IntegrityFailure::DecisionSource => f.write_str("decision source disagrees with its query log"),
            IntegrityFailure::Prompt => f.write_str("recorded prompt differs from the re-rendered prompt"),
            IntegrityFailure::QueryReplay(e) => write!(f, "query log does not replay: {e}"),
            IntegrityFailure::IllegalAction(e) => write!(f, "action cannot be applied: {e}"),
            IntegrityFailure::Effect => f.write_str("recorded effect differs from re-simulation"),
            IntegrityFailure::Height { recorded, actual } => {
                write!(f, "height {recorded} recorded, {actual} re-simulated")
            }
            IntegrityFailure::Footer(what) => write!(f, "footer mismatch: {what}"),
        }
    }
}

/// What a successful verification re-derived.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifiedSession {
    pub heights: Vec<usize>,
    pub final_state: WorldState,
}

fn check_query(
    config: &ExperimentConfig,
    record: &StepRecord,
    state: &WorldState,
    history: &[HistoryEntry],
    menu: &crate::describe::ActionMenu,
) -> Result<(), IntegrityFailure> {
    let Some(log) = &record.decision.query else {
        return match record.decision.source {
            DecisionSource::LlmDirect | DecisionSource::LlmReask | DecisionSource::LlmFallback => {
                Err(IntegrityFailure::DecisionSource)
            }
            _ => Ok(()),
        };
    };
    let first = log.exchanges.first().ok_or(IntegrityFailure::Prompt)?;
    let expected_system = config.template.system_prompt();
    let expected_user = build_user_prompt(state, history, menu);
    match first.request.as_slice() {
        [s, u, ..] if s.role == Role::System && s.content == expected_system && u.role == Role::User && u.content == expected_user => {}
        _ => return Err(IntegrityFailure::Prompt),
    }
    let (selection, relog) = replay_query(log, menu.len()).map_err(|e| IntegrityFailure::QueryReplay(e.to_string()))?;
    if &relog != log {
        return Err(IntegrityFailure::QueryReplay(String::from("re-parsed log differs")));
    }
    let consistent = match (relog.path, record.decision.source, selection) {
        (QueryPath::Direct, DecisionSource::LlmDirect, Some(sel)) | (QueryPath::Reask, DecisionSource::LlmReask, Some(sel)) => {
            sel.index == record.decision.menu_index
        }
        (QueryPath::Fallback, DecisionSource::LlmFallback, None) => true,
        // a replayed replay keeps the original source
        _ => false,
    };
    if consistent {
        Ok(())
    } else {
        Err(IntegrityFailure::DecisionSource)
    }
}

/// Re-simulates a transcript from its seed and checks every recorded
/// field: initial scene, menus, phrases, decisions, prompts and query logs,
/// effects, heights, the state-hash chain and the footer totals.
pub fn verify_transcript(t: &Transcript) -> Result<VerifiedSession, IntegrityError> {
    let at = |step: Option<usize>| move |failure| IntegrityError { step, failure };
    let header = &t.header;
    if header.schema_version != SCHEMA_VERSION {
        return Err(at(None)(IntegrityFailure::SchemaVersion(header.schema_version.clone())));
    }
    let config = &header.config;
    config.validate().map_err(|e| at(None)(IntegrityFailure::Config(e)))?;

    let seeds = SessionSeeds::derive(config.master_seed, header.session_index);
    if header.session_seed != StateHash(seeds.session) {
        return Err(at(None)(IntegrityFailure::InitialState));
    }
    let mut scene_rng = ChaCha8Rng::seed_from_u64(seeds.scene);
    let mut menu_rng = ChaCha8Rng::seed_from_u64(seeds.menu);
    let initial = init_scene(&config.scene(), &mut scene_rng).map_err(|e| at(None)(IntegrityFailure::Config(ConfigError::Scene(e))))?;
    if initial != header.initial_state {
        return Err(at(None)(IntegrityFailure::InitialState));
    }

    let mut state = initial;
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut heights = Vec::with_capacity(t.steps.len() + 1);
    heights.push(state.max_tower_height());

    if t.steps.len() > config.steps {
        return Err(at(None)(IntegrityFailure::Footer("more steps than configured")));
    }
    for (i, record) in t.steps.iter().enumerate() {
        let step = i + 1;
        let fail = at(Some(step));
        if record.step != step {
            return Err(fail(IntegrityFailure::StepNumber { found: record.step }));
        }
        let actual = state.canonical_hash();
        if record.state_hash != actual {
            return Err(fail(IntegrityFailure::StateHash {
                recorded: record.state_hash,
                actual,
            }));
        }
        let menu = build_menu(&state, config.positions, config.menu_size, &mut menu_rng).map_err(|_| fail(IntegrityFailure::Menu))?;
        if !record.menu.iter().map(|e| e.action).eq(menu.entries().iter().copied()) {
            return Err(fail(IntegrityFailure::Menu));
        }
        if record.menu.iter().any(|e| e.phrase != action_phrase(&state, &e.action)) {
            return Err(fail(IntegrityFailure::Phrase));
        }
        if menu.get(record.decision.menu_index) != Some(record.decision.action) {
            return Err(fail(IntegrityFailure::DecisionOffMenu));
        }
        check_query(config, record, &state, &history, &menu).map_err(&fail)?;

        let (next, effect) = state.apply_action(record.decision.action).map_err(|e| fail(IntegrityFailure::IllegalAction(e)))?;
        if effect != record.effect {
            return Err(fail(IntegrityFailure::Effect));
        }
        let h = next.max_tower_height();
        if h != record.height {
            return Err(fail(IntegrityFailure::Height {
                recorded: record.height,
                actual: h,
            }));
        }
        history.push(HistoryEntry::new(&state, record.decision.action));
        heights.push(h);
        state = next;
    }

    let footer = &t.footer;
    let foot = at(None);
    if footer.steps != t.steps.len() {
        return Err(foot(IntegrityFailure::Footer("step count")));
    }
    if footer.final_state_hash != state.canonical_hash() {
        return Err(foot(IntegrityFailure::Footer("final state hash")));
    }
    if footer.final_height != state.max_tower_height() {
        return Err(foot(IntegrityFailure::Footer("final height")));
    }
    if Some(&footer.peak_height) != heights.iter().max() {
        return Err(foot(IntegrityFailure::Footer("peak height")));
    }
    let finished = t.steps.len() == config.steps && footer.error.is_none();
    if footer.complete != finished {
        return Err(foot(IntegrityFailure::Footer("completion flag")));
    }
    Ok(VerifiedSession {
        heights,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{GreedyTowerPolicy, PolicyError, RandomPolicy};
    use rand::RngCore;

    #[test]
    fn presets_match_experiments() {
        let exp3 = preset("exp3").unwrap();
        assert_eq!((exp3.n_cubes, exp3.n_spheres, exp3.positions.len()), (5, 0, 3));
        assert_eq!((exp3.steps, exp3.sessions), (10, 40));
        assert_eq!(preset("exp4").unwrap().template, PromptTemplate::Novel);
        let exp5 = preset("exp5").unwrap();
        assert_eq!((exp5.n_cubes, exp5.n_spheres), (4, 1));
        let exp1 = preset("exp1").unwrap();
        assert_eq!(exp1.positions, [Position::Top, Position::Next].into_iter().collect());
        let tower = preset("tower-sphere").unwrap();
        assert_eq!(tower.template, PromptTemplate::TowerTask);
        assert_eq!((tower.n_cubes, tower.n_spheres, tower.positions.len()), (4, 1, 3));
        assert!(matches!(preset("bogus"), Err(ConfigError::UnknownPreset(_))));
        for name in PRESET_NAMES {
            preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn validation() {
        let mut c = preset("exp1").unwrap();
        c.steps = 0;
        assert_eq!(c.validate(), Err(ConfigError::NoSteps));
        let mut c = preset("exp1").unwrap();
        c.n_cubes = 1;
        assert!(matches!(c.validate(), Err(ConfigError::Scene(WorldError::TooFewObjects(1)))));
        let mut c = preset("exp1").unwrap();
        c.positions = PositionSet::empty();
        assert_eq!(c.validate(), Err(ConfigError::NoPositions));
    }

    #[test]
    fn greedy_exp1_trajectory() {
        let mut c = preset("exp1").unwrap();
        c.menu_size = MenuSize::Full;
        let t = run_session(&c, 0, &mut GreedyTowerPolicy).unwrap();
        assert_eq!(t.heights(), [1, 2, 3, 4, 4, 4, 4, 4, 4, 4, 4]);
        assert!(t.footer.complete);
        verify_transcript(&t).unwrap();
    }

    #[test]
    fn random_sessions_are_deterministic() {
        let c = preset("exp1").unwrap();
        let a = run_session(&c, 3, &mut RandomPolicy).unwrap();
        let b = run_session(&c, 3, &mut RandomPolicy).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 10);
        let other = run_session(&c, 4, &mut RandomPolicy).unwrap();
        assert_ne!(a.header.initial_state, other.header.initial_state);
    }

    #[test]
    fn replay_reproduces_transcript() {
        let c = preset("exp5").unwrap();
        for i in 0..5 {
            let t = run_session(&c, i, &mut RandomPolicy).unwrap();
            assert_eq!(replay_session(&t).unwrap(), t);
            let v = verify_transcript(&t).unwrap();
            assert_eq!(v.heights, t.heights());
        }
    }

    #[test]
    fn tampering_is_detected() {
        let c = preset("exp2").unwrap();
        let t = run_session(&c, 0, &mut RandomPolicy).unwrap();

        let mut bad = t.clone();
        bad.steps[4].height += 1;
        let err = verify_transcript(&bad).unwrap_err();
        assert_eq!(err.step, Some(5));
        assert!(matches!(err.failure, IntegrityFailure::Height { .. }));

        let mut bad = t.clone();
        bad.header.schema_version = String::from("0");
        assert!(matches!(verify_transcript(&bad).unwrap_err().failure, IntegrityFailure::SchemaVersion(_)));

        let mut bad = t.clone();
        bad.steps[2].menu[0].phrase.push('!');
        assert_eq!(verify_transcript(&bad).unwrap_err().failure, IntegrityFailure::Phrase);

        let mut bad = t.clone();
        let idx = bad.steps[7].decision.menu_index % bad.steps[7].menu.len() + 1;
        bad.steps[7].decision.menu_index = idx;
        assert_eq!(verify_transcript(&bad).unwrap_err().failure, IntegrityFailure::DecisionOffMenu);

        let mut bad = t;
        bad.steps.pop();
        assert!(verify_transcript(&bad).is_err());
    }

    struct FailAt(usize);

    impl Policy for FailAt {
        fn name(&self) -> &str {
            "failing"
        }

        fn select(&mut self, ctx: &StepContext<'_>, rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
            if ctx.step == self.0 {
                return Err(PolicyError::Backend(crate::select::BackendError {
                    kind: crate::select::BackendErrorKind::Transport,
                    message: String::from("connection refused"),
                }));
            }
            RandomPolicy.select(ctx, rng)
        }
    }

    #[test]
    fn policy_failure_leaves_partial_transcript() {
        let c = preset("exp1").unwrap();
        let t = run_session(&c, 0, &mut FailAt(4)).unwrap();
        assert_eq!(t.steps.len(), 3);
        assert!(!t.footer.complete);
        assert!(t.footer.error.as_deref().unwrap().contains("connection refused"));
        verify_transcript(&t).unwrap();
        assert_eq!(replay_session(&t).unwrap(), t);
    }

    #[test]
    fn seeds_are_isolated_per_session() {
        let a = SessionSeeds::derive(7, 0);
        let b = SessionSeeds::derive(7, 1);
        assert_ne!(a, b);
        assert_eq!(a, SessionSeeds::derive(7, 0));
        assert!(a.scene != a.menu && a.menu != a.policy);
    }
}
