//! Action selection over an offered menu.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::describe::{build_user_prompt, ActionMenu, HistoryEntry, PromptTemplate};
use crate::hash::StateHash;
use crate::select::{query_selection, BackendError, ChatBackend, QueryLog, QueryPath};
use crate::session::StepRecord;
use crate::world::{Action, ObjectKind, Position, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Policy,
    LlmDirect,
    LlmReask,
    LlmFallback,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    /// 1-based index into the offered menu.
    pub menu_index: usize,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub source: DecisionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<QueryLog>,
}

impl Decision {
    pub fn from_menu(menu: &ActionMenu, menu_index: usize, source: DecisionSource) -> Self {
        Decision {
            menu_index,
            action: menu.get(menu_index).expect("menu index in range"),
            rationale: None,
            source,
            query: None,
        }
    }
}

/// Inputs visible to a policy at one step.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    /// 1-based step number within the session.
    pub step: usize,
    pub state: &'a WorldState,
    pub history: &'a [HistoryEntry],
    pub menu: &'a ActionMenu,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyError {
    ReplayDiverged { step: usize, expected: StateHash, found: StateHash },
    ReplayMenuMismatch { step: usize },
    ReplayExhausted { step: usize },
    Backend(BackendError),
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::ReplayDiverged { step, expected, found } => {
                write!(f, "replay diverged at step {step}: recorded state {expected}, current {found}")
            }
            PolicyError::ReplayMenuMismatch { step } => {
                write!(f, "replay diverged at step {step}: menu differs from the recording")
            }
            PolicyError::ReplayExhausted { step } => write!(f, "no recorded decision for step {step}"),
            PolicyError::Backend(e) => e.fmt(f),
        }
    }
}

impl From<BackendError> for PolicyError {
    fn from(e: BackendError) -> Self {
        PolicyError::Backend(e)
    }
}

pub trait Policy {
    /// Short label stored in transcripts ("random", "greedy", ...).
    fn name(&self) -> &str;

    fn select(&mut self, ctx: &StepContext<'_>, rng: &mut dyn RngCore) -> Result<Decision, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn select(&mut self, ctx: &StepContext<'_>, rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        (**self).select(ctx, rng)
    }
}

/// Uniform over menu entries.
#[derive(Debug, Default, Clone, Copy)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn select(&mut self, ctx: &StepContext<'_>, rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        let index = rng.gen_range(1..=ctx.menu.len());
        Ok(Decision::from_menu(ctx.menu, index, DecisionSource::Policy))
    }
}

/// Scripted tower builder used as a test oracle.
///
/// Grows the tallest cube-topped column by putting a cube from elsewhere on
/// its top object; once every cube is in that column a sphere may go on
/// top. Falls back to the first `Top` entry, then entry 1.
#[derive(Debug, Default, Clone, Copy)]
pub struct GreedyTowerPolicy;

impl GreedyTowerPolicy {
    fn choose(state: &WorldState, menu: &ActionMenu) -> usize {
        let is_cube = |id| matches!(state.object(id), Some(o) if o.kind == ObjectKind::Cube);

        // BTreeMap iteration is cell-ordered, so `max_by_key` ties go to the
        // last cell; reverse to prefer the smallest cell.
        let tallest = state
            .columns()
            .filter(|(_, col)| col.last().is_some_and(|&top| is_cube(top)))
            .rev()
            .max_by_key(|(_, col)| col.len())
            .map(|(_, col)| col);

        if let Some(tower) = tallest {
            let top = *tower.last().expect("columns are non-empty");
            let cubes_stacked = state
                .registry()
                .iter()
                .filter(|o| o.kind == ObjectKind::Cube)
                .all(|o| tower.contains(&o.id));
            let qualifies = |a: &Action| {
                a.position == Position::Top
                    && a.target == top
                    && !tower.contains(&a.source)
                    && (is_cube(a.source) || cubes_stacked)
            };
            if let Some(i) = menu.entries().iter().position(qualifies) {
                return i + 1;
            }
        }
        menu.entries()
            .iter()
            .position(|a| a.position == Position::Top)
            .map_or(1, |i| i + 1)
    }
}

impl Policy for GreedyTowerPolicy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn select(&mut self, ctx: &StepContext<'_>, _rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        let index = Self::choose(ctx.state, ctx.menu);
        Ok(Decision::from_menu(ctx.menu, index, DecisionSource::Policy))
    }
}

/// Asks a chat model to choose; unparseable replies end in a uniform
/// random pick drawn from the policy's rng stream.
pub struct LlmPolicy<B> {
    backend: B,
    template: PromptTemplate,
}

impl<B: ChatBackend> LlmPolicy<B> {
    pub fn new(backend: B, template: PromptTemplate) -> Self {
        LlmPolicy { backend, template }
    }
}

impl<B: ChatBackend> Policy for LlmPolicy<B> {
    fn name(&self) -> &str {
        "llm"
    }

    fn select(&mut self, ctx: &StepContext<'_>, rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        let system = self.template.system_prompt();
        let user = build_user_prompt(ctx.state, ctx.history, ctx.menu);
        let (selection, log) = query_selection(&self.backend, &system, &user, ctx.menu.len())?;
        let (index, rationale, source) = match (selection, log.path) {
            (Some(sel), QueryPath::Direct) => (sel.index, sel.reasoning, DecisionSource::LlmDirect),
            (Some(sel), _) => (sel.index, sel.reasoning, DecisionSource::LlmReask),
            (None, _) => (rng.gen_range(1..=ctx.menu.len()), None, DecisionSource::LlmFallback),
        };
        let mut decision = Decision::from_menu(ctx.menu, index, source);
        decision.rationale = rationale;
        decision.query = Some(log);
        Ok(decision)
    }
}

/// Returns recorded decisions, checking that the state and menu seen at
/// each step match the recording.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    label: String,
    steps: Vec<StepRecord>,
}

impl ReplayPolicy {
    pub fn new(label: impl Into<String>, steps: Vec<StepRecord>) -> Self {
        ReplayPolicy { label: label.into(), steps }
    }
}

impl Policy for ReplayPolicy {
    fn name(&self) -> &str {
        &self.label
    }

    fn select(&mut self, ctx: &StepContext<'_>, _rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        let record = self
            .steps
            .iter()
            .find(|r| r.step == ctx.step)
            .ok_or(PolicyError::ReplayExhausted { step: ctx.step })?;
        let found = ctx.state.canonical_hash();
        if record.state_hash != found {
            return Err(PolicyError::ReplayDiverged {
                step: ctx.step,
                expected: record.state_hash,
                found,
            });
        }
        if !record.menu.iter().map(|e| e.action).eq(ctx.menu.entries().iter().copied()) {
            return Err(PolicyError::ReplayMenuMismatch { step: ctx.step });
        }
        Ok(record.decision.clone())
    }
}
