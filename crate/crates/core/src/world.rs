//! Symbolic tabletop: a grid of cells, each holding a column of objects.
//!
//! Objects are picked from anywhere in a column and placed on top of, next
//! to (+y) or in front of (+x) a target object. Columns close gaps under
//! gravity, and nothing may rest on a sphere: an object placed on a sphere
//! falls to the nearest free cell on the table.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hash::{Fnv64, StateHash};

/// Side length of the square region objects are scattered over at init.
pub const INIT_REGION: i32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl ObjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Cube,
    Sphere,
}

impl ObjectKind {
    pub fn noun(self) -> &'static str {
        match self {
            ObjectKind::Cube => "cube",
            ObjectKind::Sphere => "sphere",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    #[serde(rename = "orange")]
    Orange,
    #[serde(rename = "green")]
    Green,
    #[serde(rename = "purple")]
    Purple,
    #[serde(rename = "brown")]
    Brown,
    #[serde(rename = "light green")]
    LightGreen,
    #[serde(rename = "blue")]
    Blue,
    #[serde(rename = "black")]
    Black,
    #[serde(rename = "red")]
    Red,
    #[serde(rename = "yellow")]
    Yellow,
    #[serde(rename = "pink")]
    Pink,
}

impl Color {
    /// Colors handed out in object-id order.
    pub const PALETTE: [Color; 10] = [
        Color::Orange,
        Color::Green,
        Color::Purple,
        Color::Brown,
        Color::LightGreen,
        Color::Blue,
        Color::Black,
        Color::Red,
        Color::Yellow,
        Color::Pink,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Orange => "orange",
            Color::Green => "green",
            Color::Purple => "purple",
            Color::Brown => "brown",
            Color::LightGreen => "light green",
            Color::Blue => "blue",
            Color::Black => "black",
            Color::Red => "red",
            Color::Yellow => "yellow",
            Color::Pink => "pink",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub kind: ObjectKind,
    pub color: Color,
}

/// Table cell. One step along `x` is "in front", one step along `y` is "next to".
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl From<(i32, i32)> for Cell {
    fn from((x, y): (i32, i32)) -> Self {
        Cell::new(x, y)
    }
}

impl From<Cell> for (i32, i32) {
    fn from(c: Cell) -> Self {
        (c.x, c.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Relative placement. The integer codes are part of the action tuple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Position {
    Top = 0,
    Next = 1,
    Front = 2,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::Top, Position::Next, Position::Front];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Position::Top),
            1 => Some(Position::Next),
            2 => Some(Position::Front),
            _ => None,
        }
    }
}

impl From<Position> for u8 {
    fn from(p: Position) -> u8 {
        p.code()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvalidPositionCode(pub u8);

impl fmt::Display for InvalidPositionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid position code {}", self.0)
    }
}

impl TryFrom<u8> for Position {
    type Error = InvalidPositionCode;

    fn try_from(code: u8) -> Result<Self, Self::Error> {
        Position::from_code(code).ok_or(InvalidPositionCode(code))
    }
}

/// A set of allowed placements, iterated in code order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "Vec<Position>", from = "Vec<Position>")]
pub struct PositionSet(u8);

impl PositionSet {
    pub const fn empty() -> Self {
        PositionSet(0)
    }

    pub fn all() -> Self {
        Position::ALL.iter().copied().collect()
    }

    pub fn insert(&mut self, p: Position) {
        self.0 |= 1 << p.code();
    }

    pub fn contains(self, p: Position) -> bool {
        self.0 & (1 << p.code()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Position> {
        Position::ALL.into_iter().filter(move |p| self.contains(*p))
    }
}

impl FromIterator<Position> for PositionSet {
    fn from_iter<I: IntoIterator<Item = Position>>(iter: I) -> Self {
        let mut set = PositionSet::empty();
        for p in iter {
            set.insert(p);
        }
        set
    }
}

impl From<Vec<Position>> for PositionSet {
    fn from(v: Vec<Position>) -> Self {
        v.into_iter().collect()
    }
}

impl From<PositionSet> for Vec<Position> {
    fn from(s: PositionSet) -> Self {
        s.iter().collect()
    }
}

/// The `(source, target, position)` pick-and-place tuple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub source: ObjectId,
    pub target: ObjectId,
    pub position: Position,
}

impl Action {
    pub fn new(source: u32, target: u32, position: Position) -> Self {
        Action {
            source: ObjectId(source),
            target: ObjectId(target),
            position,
        }
    }
}

/// Where the picked object came to rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Effect {
    Stacked { on: ObjectId },
    PlacedOnTable { cell: Cell },
    DroppedFromSphere { sphere: ObjectId, cell: Cell },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    StackedOn = 0,
    NextTo = 1,
    InFrontOf = 2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub subject: ObjectId,
    pub kind: RelationKind,
    pub object: ObjectId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_cubes: u32,
    pub n_spheres: u32,
}

impl SceneConfig {
    pub fn object_count(&self) -> usize {
        (self.n_cubes + self.n_spheres) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorldError {
    TooFewObjects(usize),
    TooManyObjects { requested: usize, capacity: usize },
    UnknownObject(ObjectId),
    SelfTarget(ObjectId),
    /// Registry ids are not `0..n` in order.
    NonDenseIds,
    DuplicateColor(Color),
    /// Object missing from every column, or present more than once.
    Conservation(ObjectId),
    EmptyColumn(Cell),
    DuplicateCell(Cell),
}

impl fmt::Display for WorldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorldError::TooFewObjects(n) => write!(f, "scene needs at least 2 objects, got {n}"),
            WorldError::TooManyObjects {
                requested,
                capacity,
            } => write!(f, "{requested} objects requested, at most {capacity} supported"),
            WorldError::UnknownObject(id) => write!(f, "unknown object {id}"),
            WorldError::SelfTarget(id) => write!(f, "object {id} cannot target itself"),
            WorldError::NonDenseIds => f.write_str("object ids must be 0..n in registry order"),
            WorldError::DuplicateColor(c) => write!(f, "color {} used twice", c.name()),
            WorldError::Conservation(id) => {
                write!(f, "object {id} must appear in exactly one column exactly once")
            }
            WorldError::EmptyColumn(c) => write!(f, "column at {c} is empty"),
            WorldError::DuplicateCell(c) => write!(f, "cell {c} listed twice"),
        }
    }
}

/// The whole symbolic scene. Columns are listed bottom to top.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "WorldRepr", into = "WorldRepr")]
pub struct WorldState {
    registry: Vec<ObjectInstance>,
    columns: BTreeMap<Cell, Vec<ObjectId>>,
}

#[derive(Serialize, Deserialize)]
struct ColumnRepr {
    cell: Cell,
    objects: Vec<ObjectId>,
}

#[derive(Serialize, Deserialize)]
struct WorldRepr {
    objects: Vec<ObjectInstance>,
    columns: Vec<ColumnRepr>,
}

impl From<WorldState> for WorldRepr {
    fn from(w: WorldState) -> Self {
        WorldRepr {
            objects: w.registry,
            columns: w
                .columns
                .into_iter()
                .map(|(cell, objects)| ColumnRepr { cell, objects })
                .collect(),
        }
    }
}

impl TryFrom<WorldRepr> for WorldState {
    type Error = WorldError;

    fn try_from(r: WorldRepr) -> Result<Self, Self::Error> {
        WorldState::from_parts(r.objects, r.columns.into_iter().map(|c| (c.cell, c.objects)))
    }
}

impl WorldState {
    /// Builds a state from explicit columns. The result is not settled; call
    /// [`WorldState::settle`] when the columns may hold objects above spheres.
    pub fn from_parts<I>(registry: Vec<ObjectInstance>, columns: I) -> Result<Self, WorldError>
    where
        I: IntoIterator<Item = (Cell, Vec<ObjectId>)>,
    {
        for (i, obj) in registry.iter().enumerate() {
            if obj.id.index() != i {
                return Err(WorldError::NonDenseIds);
            }
            if registry[..i].iter().any(|o| o.color == obj.color) {
                return Err(WorldError::DuplicateColor(obj.color));
            }
        }
        let mut seen = vec![false; registry.len()];
        let mut map = BTreeMap::new();
        for (cell, column) in columns {
            if column.is_empty() {
                return Err(WorldError::EmptyColumn(cell));
            }
            for &id in &column {
                match seen.get_mut(id.index()) {
                    None => return Err(WorldError::UnknownObject(id)),
                    Some(true) => return Err(WorldError::Conservation(id)),
                    Some(s) => *s = true,
                }
            }
            if map.insert(cell, column).is_some() {
                return Err(WorldError::DuplicateCell(cell));
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(WorldError::Conservation(ObjectId(missing as u32)));
        }
        Ok(WorldState {
            registry,
            columns: map,
        })
    }

    pub fn registry(&self) -> &[ObjectInstance] {
        &self.registry
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectInstance> {
        self.registry.get(id.index())
    }

    pub fn object_count(&self) -> usize {
        self.registry.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.registry.iter().map(|o| o.id)
    }

    pub fn columns(&self) -> impl DoubleEndedIterator<Item = (Cell, &[ObjectId])> {
        self.columns.iter().map(|(c, col)| (*c, col.as_slice()))
    }

    pub fn column(&self, cell: Cell) -> Option<&[ObjectId]> {
        self.columns.get(&cell).map(Vec::as_slice)
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.columns.contains_key(&cell)
    }

    fn is_sphere(&self, id: ObjectId) -> bool {
        matches!(self.object(id), Some(o) if o.kind == ObjectKind::Sphere)
    }

    /// Cell and level (0 = on the table) of an object.
    pub fn locate(&self, id: ObjectId) -> Option<(Cell, usize)> {
        self.columns.iter().find_map(|(cell, col)| {
            col.iter().position(|&o| o == id).map(|level| (*cell, level))
        })
    }

    pub fn max_tower_height(&self) -> usize {
        self.columns.values().map(Vec::len).max().unwrap_or(0)
    }

    /// True when no object rests directly on a sphere.
    pub fn is_stable(&self) -> bool {
        self.columns.values().all(|col| {
            col.iter()
                .take(col.len().saturating_sub(1))
                .all(|&id| !self.is_sphere(id))
        })
    }

    /// All `(source, target, position)` tuples with `source != target`,
    /// ordered ascending.
    pub fn legal_actions(&self, positions: PositionSet) -> Vec<Action> {
        let mut out = Vec::with_capacity(self.object_count() * self.object_count() * positions.len());
        for source in self.ids() {
            for target in self.ids().filter(|&t| t != source) {
                for position in positions.iter() {
                    out.push(Action {
                        source,
                        target,
                        position,
                    });
                }
            }
        }
        out
    }

    /// Free cell closest to `origin` by Manhattan distance, ties broken by
    /// smaller `x` then smaller `y`.
    pub fn nearest_free_cell(&self, origin: Cell) -> Cell {
        for d in 0i32.. {
            for dx in -d..=d {
                let r = d - dx.abs();
                let candidates = [origin.offset(dx, -r), origin.offset(dx, r)];
                let count = if r == 0 { 1 } else { 2 };
                if let Some(c) = candidates[..count].iter().find(|c| !self.is_occupied(**c)) {
                    return *c;
                }
            }
        }
        unreachable!("the table is unbounded")
    }

    /// Fixed point of the drop rule: anything resting on a sphere moves to
    /// the nearest free cell, lowest first, until no column has an object
    /// above a sphere.
    pub fn settle(&self) -> WorldState {
        let mut next = self.clone();
        next.settle_in_place();
        next
    }

    fn settle_in_place(&mut self) {
        loop {
            let unstable = self.columns.iter().find_map(|(cell, col)| {
                col.iter()
                    .position(|&id| self.is_sphere(id))
                    .filter(|&level| level + 1 < col.len())
                    .map(|level| (*cell, level + 1))
            });
            let Some((cell, level)) = unstable else { break };
            let dropped = self
                .columns
                .get_mut(&cell)
                .expect("column located above")
                .remove(level);
            let landing = self.nearest_free_cell(cell);
            self.columns.insert(landing, vec![dropped]);
        }
    }

    fn take(&mut self, id: ObjectId) -> Result<(), WorldError> {
        let (cell, level) = self.locate(id).ok_or(WorldError::UnknownObject(id))?;
        let col = self.columns.get_mut(&cell).expect("located column");
        col.remove(level);
        if col.is_empty() {
            self.columns.remove(&cell);
        }
        Ok(())
    }

    /// Executes one pick-and-place. Pure: `self` is untouched.
    pub fn apply_action(&self, action: Action) -> Result<(WorldState, Effect), WorldError> {
        let Action {
            source,
            target,
            position,
        } = action;
        if self.object(source).is_none() {
            return Err(WorldError::UnknownObject(source));
        }
        if self.object(target).is_none() {
            return Err(WorldError::UnknownObject(target));
        }
        if source == target {
            return Err(WorldError::SelfTarget(source));
        }

        let mut next = self.clone();
        next.take(source)?;
        next.settle_in_place();

        let (target_cell, _) = next.locate(target).ok_or(WorldError::UnknownObject(target))?;
        let dest = match position {
            Position::Top => target_cell,
            Position::Next => target_cell.offset(0, 1),
            Position::Front => target_cell.offset(1, 0),
        };
        let beneath = next.columns.get(&dest).and_then(|c| c.last().copied());
        next.columns.entry(dest).or_default().push(source);
        next.settle_in_place();

        let (rest_cell, rest_level) = next.locate(source).expect("source conserved");
        let effect = if rest_level > 0 {
            Effect::Stacked {
                on: next.columns[&rest_cell][rest_level - 1],
            }
        } else {
            match beneath {
                Some(b) if next.is_sphere(b) => Effect::DroppedFromSphere {
                    sphere: b,
                    cell: rest_cell,
                },
                _ => Effect::PlacedOnTable { cell: rest_cell },
            }
        };
        Ok((next, effect))
    }

    /// Pairwise spatial relations, sorted by (subject, kind, object).
    pub fn relations(&self) -> Vec<Relation> {
        let mut out = Vec::new();
        for (cell, col) in &self.columns {
            for (level, &subject) in col.iter().enumerate() {
                if level > 0 {
                    out.push(Relation {
                        subject,
                        kind: RelationKind::StackedOn,
                        object: col[level - 1],
                    });
                }
                let neighbours = [
                    (RelationKind::NextTo, cell.offset(0, -1)),
                    (RelationKind::InFrontOf, cell.offset(-1, 0)),
                ];
                for (kind, other) in neighbours {
                    if let Some(&object) = self.columns.get(&other).and_then(|c| c.get(level)) {
                        out.push(Relation {
                            subject,
                            kind,
                            object,
                        });
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Stable hash over the sorted `(cell, column)` pairs.
    pub fn canonical_hash(&self) -> StateHash {
        let mut h = Fnv64::new();
        for (cell, col) in &self.columns {
            h.write(&cell.x.to_le_bytes());
            h.write(&cell.y.to_le_bytes());
            h.write(&(col.len() as u32).to_le_bytes());
            for id in col {
                h.write(&id.0.to_le_bytes());
            }
        }
        StateHash(h.finish())
    }
}

/// Scatters `n_cubes` cubes then `n_spheres` spheres over distinct cells of
/// the initial region, one object per cell.
pub fn init_scene<R: Rng + ?Sized>(
    config: &SceneConfig,
    rng: &mut R,
) -> Result<WorldState, WorldError> {
    let n = config.object_count();
    let region = (INIT_REGION * INIT_REGION) as usize;
    if n < 2 {
        return Err(WorldError::TooFewObjects(n));
    }
    if n > region {
        return Err(WorldError::TooManyObjects {
            requested: n,
            capacity: region,
        });
    }
    if n > Color::PALETTE.len() {
        return Err(WorldError::TooManyObjects {
            requested: n,
            capacity: Color::PALETTE.len(),
        });
    }
    let registry = (0..n)
        .map(|i| ObjectInstance {
            id: ObjectId(i as u32),
            kind: if i < config.n_cubes as usize {
                ObjectKind::Cube
            } else {
                ObjectKind::Sphere
            },
            color: Color::PALETTE[i],
        })
        .collect();
    let cells = index::sample(rng, region, n);
    let columns = cells.iter().enumerate().map(|(i, flat)| {
        let flat = flat as i32;
        (
            Cell::new(flat / INIT_REGION, flat % INIT_REGION),
            vec![ObjectId(i as u32)],
        )
    });
    WorldState::from_parts(registry, columns)
}
