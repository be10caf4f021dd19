//! Natural-language rendering of scenes, actions and prompts.
//!
//! The output is byte-exact and a pure function of its inputs; transcripts
//! and golden tests depend on it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::world::{Action, ObjectId, ObjectInstance, Position, PositionSet, Relation, RelationKind, WorldState};

const SYSTEM_PREAMBLE: &str = "There are some objects on the table.";
const OUTPUT_FORMAT: &str = "Your output should be in the following format:\n\n<reasoning> some sentences </reasoning>\n\nSelected action is : <number of the selected action>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTemplate {
    Interesting,
    Novel,
    #[serde(rename = "tower")]
    TowerTask,
}

impl PromptTemplate {
    pub fn system_prompt(self) -> String {
        match self {
            PromptTemplate::Interesting | PromptTemplate::Novel => {
                let outcome = if self == PromptTemplate::Interesting {
                    "an interesting"
                } else {
                    "a novel"
                };
                format!(
                    "{SYSTEM_PREAMBLE} Which manipulation alternative on them yields {outcome} outcome? Choose one and explain.\n\n{OUTPUT_FORMAT}"
                )
            }
            PromptTemplate::TowerTask => format!(
                "{SYSTEM_PREAMBLE} For building the highest possible tower with the objects given below, select the most appropriate manipulation action. Choose one and explain.\n{OUTPUT_FORMAT}"
            ),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PromptTemplate::Interesting => "interesting",
            PromptTemplate::Novel => "novel",
            PromptTemplate::TowerTask => "tower",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "interesting" => Some(PromptTemplate::Interesting),
            "novel" => Some(PromptTemplate::Novel),
            "tower" | "tower_task" => Some(PromptTemplate::TowerTask),
            _ => None,
        }
    }
}

/// "the orange cube"
pub fn definite_label(obj: &ObjectInstance) -> String {
    format!("the {} {}", obj.color.name(), obj.kind.noun())
}

/// "an orange cube" / "a light green cube"
pub fn indefinite_label(obj: &ObjectInstance) -> String {
    let color = obj.color.name();
    let article = match color.as_bytes().first() {
        Some(b'a' | b'e' | b'i' | b'o' | b'u') => "an",
        _ => "a",
    };
    format!("{article} {color} {}", obj.kind.noun())
}

fn label_of(state: &WorldState, id: ObjectId) -> String {
    match state.object(id) {
        Some(obj) => definite_label(obj),
        None => format!("the unknown object {}", id.0),
    }
}

/// Joins with commas and a final ", and"; two items take a bare "and".
fn list_phrase(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => {
            let mut out = String::new();
            for item in init {
                out.push_str(item);
                out.push_str(", ");
            }
            out.push_str("and ");
            out.push_str(last);
            out
        }
    }
}

pub fn scene_sentence(state: &WorldState) -> String {
    let labels: Vec<String> = state.registry().iter().map(indefinite_label).collect();
    format!("There is {} in the current scene.", list_phrase(&labels))
}

pub fn relation_sentence(state: &WorldState, rel: &Relation) -> String {
    let verb = match rel.kind {
        RelationKind::StackedOn => "is stacked on",
        RelationKind::NextTo => "is next to",
        RelationKind::InFrontOf => "is in front of",
    };
    format!(
        "{} {verb} {}.",
        label_of(state, rel.subject),
        label_of(state, rel.object)
    )
}

pub fn action_phrase(state: &WorldState, action: &Action) -> String {
    let place = match action.position {
        Position::Top => "on top of",
        Position::Next => "next to",
        Position::Front => "in front of",
    };
    format!(
        "Put {} {place} {}",
        label_of(state, action.source),
        label_of(state, action.target)
    )
}

/// A previously executed action with the text it was shown as.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub action: Action,
    pub phrase: String,
}

impl HistoryEntry {
    pub fn new(state: &WorldState, action: Action) -> Self {
        HistoryEntry {
            action,
            phrase: action_phrase(state, &action),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MenuError {
    Empty,
    Duplicate(Action),
}

impl fmt::Display for MenuError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MenuError::Empty => f.write_str("action menu is empty"),
            MenuError::Duplicate(a) => write!(
                f,
                "action ({}, {}, {}) offered twice",
                a.source.0,
                a.target.0,
                a.position.code()
            ),
        }
    }
}

/// The numbered choices offered at one step. Rendered 1-indexed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMenu {
    entries: Vec<Action>,
}

impl ActionMenu {
    pub fn new(entries: Vec<Action>) -> Result<Self, MenuError> {
        if entries.is_empty() {
            return Err(MenuError::Empty);
        }
        for (i, a) in entries.iter().enumerate() {
            if entries[..i].contains(a) {
                return Err(MenuError::Duplicate(*a));
            }
        }
        Ok(ActionMenu { entries })
    }

    pub fn entries(&self) -> &[Action] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry for a 1-based menu index.
    pub fn get(&self, index: usize) -> Option<Action> {
        index.checked_sub(1).and_then(|i| self.entries.get(i)).copied()
    }
}

/// How many legal actions to offer per step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "MenuSizeRepr", try_from = "MenuSizeRepr")]
pub enum MenuSize {
    Limited(usize),
    /// Every legal action, in canonical order, without sampling.
    Full,
}

impl Default for MenuSize {
    fn default() -> Self {
        MenuSize::Limited(10)
    }
}

impl fmt::Display for MenuSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MenuSize::Limited(n) => write!(f, "{n}"),
            MenuSize::Full => f.write_str("full"),
        }
    }
}

impl core::str::FromStr for MenuSize {
    type Err = InvalidMenuSize;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "full" {
            return Ok(MenuSize::Full);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(MenuSize::Limited(n)),
            _ => Err(InvalidMenuSize),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidMenuSize;

impl fmt::Display for InvalidMenuSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("menu size must be a positive integer or \"full\"")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MenuSizeRepr {
    Count(usize),
    Keyword(String),
}

impl From<MenuSize> for MenuSizeRepr {
    fn from(m: MenuSize) -> Self {
        match m {
            MenuSize::Limited(n) => MenuSizeRepr::Count(n),
            MenuSize::Full => MenuSizeRepr::Keyword(String::from("full")),
        }
    }
}

impl TryFrom<MenuSizeRepr> for MenuSize {
    type Error = InvalidMenuSize;

    fn try_from(r: MenuSizeRepr) -> Result<Self, Self::Error> {
        match r {
            MenuSizeRepr::Count(0) => Err(InvalidMenuSize),
            MenuSizeRepr::Count(n) => Ok(MenuSize::Limited(n)),
            MenuSizeRepr::Keyword(k) => k.parse(),
        }
    }
}

/// Uniform sample without replacement of `min(k, |legal|)` legal actions,
/// in the order drawn. `Full` returns every legal action unshuffled and
/// does not touch `rng`.
pub fn build_menu<R: Rng + ?Sized>(
    state: &WorldState,
    positions: PositionSet,
    size: MenuSize,
    rng: &mut R,
) -> Result<ActionMenu, MenuError> {
    let mut legal = state.legal_actions(positions);
    match size {
        MenuSize::Full => ActionMenu::new(legal),
        MenuSize::Limited(k) => {
            let k = k.min(legal.len());
            let (chosen, _) = legal.partial_shuffle(rng, k);
            ActionMenu::new(chosen.to_vec())
        }
    }
}

/// Scene, relations, history and numbered menu, separated by blank lines.
pub fn build_user_prompt(state: &WorldState, history: &[HistoryEntry], menu: &ActionMenu) -> String {
    let mut blocks: Vec<String> = Vec::with_capacity(4);
    blocks.push(scene_sentence(state));

    let relations: Vec<String> = state
        .relations()
        .iter()
        .map(|r| relation_sentence(state, r))
        .collect();
    if !relations.is_empty() {
        blocks.push(relations.join("\n"));
    }

    if !history.is_empty() {
        let mut block = String::from("Previously executed actions:");
        for h in history {
            block.push('\n');
            block.push_str(&h.phrase);
        }
        blocks.push(block);
    }

    let mut block = String::from("Possible actions:");
    for (i, action) in menu.entries().iter().enumerate() {
        let _ = write!(block, "\n{} ) {}", i + 1, action_phrase(state, action));
    }
    blocks.push(block);

    blocks.join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Cell, Color, ObjectKind};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obj(id: u32, kind: ObjectKind, color: Color) -> ObjectInstance {
        ObjectInstance {
            id: ObjectId(id),
            kind,
            color,
        }
    }

    fn scene(n: u32) -> WorldState {
        let reg = (0..n)
            .map(|i| obj(i, ObjectKind::Cube, Color::PALETTE[i as usize]))
            .collect();
        WorldState::from_parts(reg, (0..n).map(|i| (Cell::new(3 * i as i32, 0), vec![ObjectId(i)]))).unwrap()
    }

    #[test]
    fn labels() {
        assert_eq!(indefinite_label(&obj(0, ObjectKind::Cube, Color::Orange)), "an orange cube");
        assert_eq!(definite_label(&obj(3, ObjectKind::Sphere, Color::Brown)), "the brown sphere");
        assert_eq!(
            indefinite_label(&obj(4, ObjectKind::Cube, Color::LightGreen)),
            "a light green cube"
        );
    }

    /// Independent grammar oracle: Oxford-comma list for n >= 3.
    fn grammar_oracle(labels: &[&str]) -> String {
        let n = labels.len();
        let mut s = String::from("There is ");
        for (i, l) in labels.iter().enumerate() {
            if i > 0 {
                if n == 2 {
                    s.push_str(" and ");
                } else {
                    s.push_str(", ");
                    if i == n - 1 {
                        s.push_str("and ");
                    }
                }
            }
            s.push_str(l);
        }
        s.push_str(" in the current scene.");
        s
    }

    #[test]
    fn scene_sentence_list_grammar() {
        assert_eq!(
            scene_sentence(&scene(2)),
            "There is an orange cube and a green cube in the current scene."
        );
        let all = ["an orange cube", "a green cube", "a purple cube", "a brown cube", "a light green cube"];
        for n in 2..=5 {
            assert_eq!(scene_sentence(&scene(n as u32)), grammar_oracle(&all[..n]));
        }
        assert_eq!(list_phrase(&[String::from("a red cube")]), "a red cube");
    }

    #[test]
    fn system_prompts() {
        let interesting = PromptTemplate::Interesting.system_prompt();
        let novel = PromptTemplate::Novel.system_prompt();
        assert!(interesting.contains("yields an interesting outcome"));
        assert_eq!(novel, interesting.replace("an interesting", "a novel"));
        assert!(PromptTemplate::TowerTask
            .system_prompt()
            .contains("building the highest possible tower"));
        assert_eq!(
            interesting,
            "There are some objects on the table. Which manipulation alternative on them yields an interesting outcome? Choose one and explain.\n\nYour output should be in the following format:\n\n<reasoning> some sentences </reasoning>\n\nSelected action is : <number of the selected action>"
        );
        assert_eq!(
            PromptTemplate::TowerTask.system_prompt(),
            "There are some objects on the table. For building the highest possible tower with the objects given below, select the most appropriate manipulation action. Choose one and explain.\nYour output should be in the following format:\n\n<reasoning> some sentences </reasoning>\n\nSelected action is : <number of the selected action>"
        );
    }

    #[test]
    fn prompt_without_history_or_relations() {
        let s = scene(2);
        let menu = ActionMenu::new(vec![Action::new(0, 1, Position::Top)]).unwrap();
        assert_eq!(
            build_user_prompt(&s, &[], &menu),
            "There is an orange cube and a green cube in the current scene.\n\nPossible actions:\n1 ) Put the orange cube on top of the green cube"
        );
    }

    #[test]
    fn menu_sampling() {
        let s = scene(5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let menu = build_menu(&s, PositionSet::all(), MenuSize::Limited(10), &mut rng).unwrap();
        assert_eq!(menu.len(), 10);
        let legal = s.legal_actions(PositionSet::all());
        assert!(menu.entries().iter().all(|a| legal.contains(a)));

        let again = build_menu(&s, PositionSet::all(), MenuSize::Limited(10), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(menu, again);

        let four = scene(4);
        let two: PositionSet = [Position::Top, Position::Next].into_iter().collect();
        let menu = build_menu(&four, two, MenuSize::Limited(100), &mut rng).unwrap();
        assert_eq!(menu.len(), 24);
        let mut sorted = menu.entries().to_vec();
        sorted.sort();
        assert_eq!(sorted, four.legal_actions(two));

        let full = build_menu(&four, two, MenuSize::Full, &mut rng).unwrap();
        assert_eq!(full.entries(), four.legal_actions(two).as_slice());
    }

    #[test]
    fn menu_rejects_duplicates_and_empty() {
        let a = Action::new(0, 1, Position::Top);
        assert_eq!(ActionMenu::new(vec![]), Err(MenuError::Empty));
        assert_eq!(ActionMenu::new(vec![a, a]), Err(MenuError::Duplicate(a)));
        let m = ActionMenu::new(vec![a]).unwrap();
        assert_eq!(m.get(1), Some(a));
        assert_eq!(m.get(0), None);
        assert_eq!(m.get(2), None);
    }

    #[test]
    fn menu_size_parsing() {
        assert_eq!("full".parse::<MenuSize>(), Ok(MenuSize::Full));
        assert_eq!("7".parse::<MenuSize>(), Ok(MenuSize::Limited(7)));
        assert!("0".parse::<MenuSize>().is_err());
        assert_eq!(serde_json::to_string(&MenuSize::Full).unwrap(), "\"full\"");
        assert_eq!(serde_json::from_str::<MenuSize>("10").unwrap(), MenuSize::Limited(10));
    }
}
