//! Prompt reconstruction for `print-prompt`: from a hand-written scene
//! file or from a step of a recorded transcript.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tabletop_core::describe::{build_user_prompt, ActionMenu, HistoryEntry, MenuError, PromptTemplate};
use tabletop_core::session::Transcript;
use tabletop_core::world::{Action, WorldError, WorldState};

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scene file: {0}")]
    Scene(#[from] serde_json::Error),
    #[error("invalid menu: {0}")]
    Menu(MenuError),
    #[error("action {action:?} is illegal: {error}")]
    Illegal { action: Action, error: WorldError },
    #[error("step {step} out of range (transcript has steps 0..={last})")]
    StepOutOfRange { step: usize, last: usize },
}

/// A scene, the actions that led to it and the menu to offer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub template: PromptTemplate,
    pub state: WorldState,
    #[serde(default)]
    pub history: Vec<Action>,
    pub menu: Vec<Action>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptPair {
    pub system: String,
    pub user: String,
}

impl PromptPair {
    /// Both prompts, each preceded by its role tag.
    pub fn render(&self) -> String {
        format!("[System]\n{}\n\n[User]\n{}\n", self.system, self.user)
    }
}

fn check_menu(state: &WorldState, actions: &[Action]) -> Result<ActionMenu, PromptError> {
    for &action in actions {
        state
            .apply_action(action)
            .map_err(|error| PromptError::Illegal { action, error })?;
    }
    ActionMenu::new(actions.to_vec()).map_err(PromptError::Menu)
}

impl SceneSpec {
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn prompts(&self) -> Result<PromptPair, PromptError> {
        let menu = check_menu(&self.state, &self.menu)?;
        // only labels are read, so the current state names past actions too
        let history: Vec<_> = self.history.iter().map(|&a| HistoryEntry::new(&self.state, a)).collect();
        Ok(PromptPair {
            system: self.template.system_prompt(),
            user: build_user_prompt(&self.state, &history, &menu),
        })
    }
}

/// Prompts offered before the action at 0-based `step`.
pub fn transcript_prompts(t: &Transcript, step: usize) -> Result<PromptPair, PromptError> {
    let Some(record) = t.steps.get(step) else {
        return Err(PromptError::StepOutOfRange {
            step,
            last: t.steps.len().saturating_sub(1),
        });
    };
    let mut state = t.header.initial_state.clone();
    let mut history = Vec::with_capacity(step);
    for r in &t.steps[..step] {
        let action = r.decision.action;
        history.push(HistoryEntry::new(&state, action));
        state = state
            .apply_action(action)
            .map_err(|error| PromptError::Illegal { action, error })?
            .0;
    }
    let actions: Vec<_> = record.menu.iter().map(|e| e.action).collect();
    let menu = check_menu(&state, &actions)?;
    Ok(PromptPair {
        system: t.header.config.template.system_prompt(),
        user: build_user_prompt(&state, &history, &menu),
    })
}
