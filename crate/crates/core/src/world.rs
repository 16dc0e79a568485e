//! The 11×9×11 block world and its deterministic transition function.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use builder_autodiff::Tensor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SIZE_X: usize = 11;
pub const SIZE_Y: usize = 9;
pub const SIZE_Z: usize = 11;
pub const NUM_CELLS: usize = SIZE_X * SIZE_Y * SIZE_Z;
pub const NUM_COLORS: usize = 6;
/// Actions kept for the recency channel.
pub const HISTORY_LEN: usize = 5;
/// Per-color inventory; exceeding it is reported, never enforced.
pub const BLOCKS_PER_COLOR: usize = 120;
/// Channels of the raw grid encoding: empty + six colors + recency.
pub const WORLD_CHANNELS: usize = 8;
pub const LAST_ACTION_DIM: usize = 11;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("({x}, {y}, {z}) is outside the 11x9x11 build region")]
    OutOfRegion { x: i64, y: i64, z: i64 },
    #[error("cannot place at {0}: cell is occupied")]
    Occupied(Coord),
    #[error("cannot remove at {0}: cell is empty")]
    EmptyCell(Coord),
    #[error("cannot place at {0}: no supporting block or ground below any face")]
    NoSupport(Coord),
    #[error("unknown color {0:?}")]
    UnknownColor(String),
    #[error("malformed action record: {0}")]
    BadAction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Orange,
    Yellow,
    Green,
    Blue,
    Purple,
}

impl Color {
    pub const ALL: [Color; NUM_COLORS] = [
        Color::Red,
        Color::Orange,
        Color::Yellow,
        Color::Green,
        Color::Blue,
        Color::Purple,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Orange => "orange",
            Color::Yellow => "yellow",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Purple => "purple",
        }
    }

    pub fn parse(name: &str) -> Result<Self, WorldError> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| WorldError::UnknownColor(name.to_string()))
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A cell of the build region; `y` is vertical with `y = 0` on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    x: u8,
    y: u8,
    z: u8,
}

impl Coord {
    pub fn new(x: i64, y: i64, z: i64) -> Result<Self, WorldError> {
        if (0..SIZE_X as i64).contains(&x) && (0..SIZE_Y as i64).contains(&y) && (0..SIZE_Z as i64).contains(&z) {
            Ok(Self {
                x: x as u8,
                y: y as u8,
                z: z as u8,
            })
        } else {
            Err(WorldError::OutOfRegion { x, y, z })
        }
    }

    pub fn from_index(index: usize) -> Self {
        assert!(index < NUM_CELLS, "cell index {index} out of range");
        Self {
            x: (index / (SIZE_Y * SIZE_Z)) as u8,
            y: ((index / SIZE_Z) % SIZE_Y) as u8,
            z: (index % SIZE_Z) as u8,
        }
    }

    /// Flat index `x·99 + y·11 + z`.
    pub fn index(self) -> usize {
        self.x as usize * SIZE_Y * SIZE_Z + self.y as usize * SIZE_Z + self.z as usize
    }

    pub fn x(self) -> usize {
        self.x as usize
    }

    pub fn y(self) -> usize {
        self.y as usize
    }

    pub fn z(self) -> usize {
        self.z as usize
    }

    /// In-region face neighbors.
    pub fn neighbors(self) -> impl Iterator<Item = Coord> {
        let (x, y, z) = (self.x as i64, self.y as i64, self.z as i64);
        [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
            .into_iter()
            .filter_map(move |(dx, dy, dz)| Coord::new(x + dx, y + dy, z + dz).ok())
    }

    pub fn all() -> impl Iterator<Item = Coord> {
        (0..NUM_CELLS).map(Coord::from_index)
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BuildAction {
    Place { at: Coord, color: Color },
    Remove { at: Coord },
    Stop,
}

impl BuildAction {
    pub fn location(&self) -> Option<Coord> {
        match self {
            BuildAction::Place { at, .. } | BuildAction::Remove { at } => Some(*at),
            BuildAction::Stop => None,
        }
    }

    pub fn color(&self) -> Option<Color> {
        match self {
            BuildAction::Place { color, .. } => Some(*color),
            _ => None,
        }
    }

    pub fn kind(&self) -> ActionKind {
        match self {
            BuildAction::Place { .. } => ActionKind::Placement,
            BuildAction::Remove { .. } => ActionKind::Removal,
            BuildAction::Stop => ActionKind::Stop,
        }
    }
}

impl fmt::Display for BuildAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildAction::Place { at, color } => write!(f, "place {color} at {at}"),
            BuildAction::Remove { at } => write!(f, "remove at {at}"),
            BuildAction::Stop => f.write_str("stop"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Placement,
    Removal,
    Stop,
}

/// Wire form of a [`BuildAction`]: `{"kind", "x", "y", "z", "color"?}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
}

impl From<&BuildAction> for ActionRecord {
    fn from(a: &BuildAction) -> Self {
        let loc = a.location();
        Self {
            kind: a.kind(),
            x: loc.map(|c| c.x() as i64),
            y: loc.map(|c| c.y() as i64),
            z: loc.map(|c| c.z() as i64),
            color: a.color(),
        }
    }
}

impl TryFrom<&ActionRecord> for BuildAction {
    type Error = WorldError;

    fn try_from(r: &ActionRecord) -> Result<Self, WorldError> {
        let loc = || match (r.x, r.y, r.z) {
            (Some(x), Some(y), Some(z)) => Coord::new(x, y, z),
            _ => Err(WorldError::BadAction(format!("{:?} needs x, y and z", r.kind))),
        };
        match r.kind {
            ActionKind::Placement => {
                let color = r
                    .color
                    .ok_or_else(|| WorldError::BadAction("placement needs a color".into()))?;
                Ok(BuildAction::Place { at: loc()?, color })
            }
            ActionKind::Removal => {
                if r.color.is_some() {
                    return Err(WorldError::BadAction("removal carries no color".into()));
                }
                Ok(BuildAction::Remove { at: loc()? })
            }
            ActionKind::Stop => {
                if r.x.is_some() || r.y.is_some() || r.z.is_some() || r.color.is_some() {
                    return Err(WorldError::BadAction("stop carries no payload".into()));
                }
                Ok(BuildAction::Stop)
            }
        }
    }
}

impl Serialize for BuildAction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ActionRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for BuildAction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = ActionRecord::deserialize(d)?;
        BuildAction::try_from(&r).map_err(serde::de::Error::custom)
    }
}

/// Next-move label of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionTypeLabel {
    Execution,
    Ask,
    Others,
}

impl ActionTypeLabel {
    pub const ALL: [ActionTypeLabel; 3] = [ActionTypeLabel::Execution, ActionTypeLabel::Ask, ActionTypeLabel::Others];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionTypeLabel::Execution => "execution",
            ActionTypeLabel::Ask => "ask",
            ActionTypeLabel::Others => "others",
        }
    }
}

/// Net effect of an action sequence on one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "change", content = "color")]
pub enum CellChange {
    Removed,
    Added(Color),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub x: i64,
    pub y: i64,
    pub z: i64,
    pub color: Color,
}

/// JSON snapshot `{"blocks": [{"x", "y", "z", "color"}]}` in internal coordinates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub blocks: Vec<BlockRecord>,
}

/// Grid contents plus the most recent [`HISTORY_LEN`] build actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    cells: Vec<Option<Color>>,
    history: VecDeque<BuildAction>,
}

impl Default for WorldState {
    fn default() -> Self {
        Self::empty()
    }
}

impl WorldState {
    pub fn empty() -> Self {
        Self {
            cells: vec![None; NUM_CELLS],
            history: VecDeque::with_capacity(HISTORY_LEN),
        }
    }

    /// World with the given blocks and no history; no support check is made.
    pub fn from_blocks(blocks: impl IntoIterator<Item = (Coord, Color)>) -> Self {
        let mut w = Self::empty();
        for (c, color) in blocks {
            w.cells[c.index()] = Some(color);
        }
        w
    }

    pub fn get(&self, c: Coord) -> Option<Color> {
        self.cells[c.index()]
    }

    pub fn is_occupied(&self, c: Coord) -> bool {
        self.cells[c.index()].is_some()
    }

    pub fn cells(&self) -> &[Option<Color>] {
        &self.cells
    }

    /// Oldest first.
    pub fn history(&self) -> impl Iterator<Item = &BuildAction> {
        self.history.iter()
    }

    pub fn last_action(&self) -> Option<&BuildAction> {
        self.history.back()
    }

    pub fn with_history(mut self, actions: impl IntoIterator<Item = BuildAction>) -> Self {
        for a in actions {
            self.push_history(a);
        }
        self
    }

    fn push_history(&mut self, a: BuildAction) {
        if matches!(a, BuildAction::Stop) {
            return;
        }
        if self.history.len() == HISTORY_LEN {
            self.history.pop_front();
        }
        self.history.push_back(a);
    }

    pub fn occupied(&self) -> impl Iterator<Item = (Coord, Color)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|color| (Coord::from_index(i), color)))
    }

    pub fn block_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    fn supported(&self, c: Coord) -> bool {
        c.y() == 0 || c.neighbors().any(|n| self.is_occupied(n))
    }

    pub fn check(&self, a: &BuildAction) -> Result<(), WorldError> {
        match *a {
            BuildAction::Place { at, .. } => {
                if self.is_occupied(at) {
                    Err(WorldError::Occupied(at))
                } else if !self.supported(at) {
                    Err(WorldError::NoSupport(at))
                } else {
                    Ok(())
                }
            }
            BuildAction::Remove { at } => {
                if self.is_occupied(at) {
                    Ok(())
                } else {
                    Err(WorldError::EmptyCell(at))
                }
            }
            BuildAction::Stop => Ok(()),
        }
    }

    /// The transition function: a new world with `a` applied.
    pub fn apply(&self, a: &BuildAction) -> Result<WorldState, WorldError> {
        self.check(a)?;
        let mut next = self.clone();
        match *a {
            BuildAction::Place { at, color } => {
                next.cells[at.index()] = Some(color);
                let used = next.cells.iter().filter(|c| **c == Some(color)).count();
                if used > BLOCKS_PER_COLOR {
                    tracing::warn!(%color, used, "inventory budget exceeded");
                }
            }
            BuildAction::Remove { at } => next.cells[at.index()] = None,
            BuildAction::Stop => return Ok(next),
        }
        next.push_history(*a);
        Ok(next)
    }

    /// Applies actions in order, stopping at the first illegal one.
    pub fn apply_all<'a>(&self, actions: impl IntoIterator<Item = &'a BuildAction>) -> Result<WorldState, WorldError> {
        let mut w = self.clone();
        for a in actions {
            w = w.apply(a)?;
        }
        Ok(w)
    }

    /// Colors over their inventory budget.
    pub fn inventory_overflow(&self) -> Vec<(Color, usize)> {
        Color::ALL
            .into_iter()
            .map(|c| (c, self.cells.iter().filter(|x| **x == Some(c)).count()))
            .filter(|&(_, n)| n > BLOCKS_PER_COLOR)
            .collect()
    }

    /// Empty cells on the ground or face-adjacent to a block, by flat index.
    pub fn feasible_placements(&self) -> Vec<Coord> {
        Coord::all()
            .filter(|&c| !self.is_occupied(c) && self.supported(c))
            .collect()
    }

    /// Every occupied cell; removals may leave floating blocks.
    pub fn feasible_removals(&self) -> Vec<Coord> {
        self.occupied().map(|(c, _)| c).collect()
    }

    /// Cells legal for the next build action (placements ∪ removals).
    pub fn feasibility_mask(&self) -> Vec<bool> {
        Coord::all()
            .map(|c| self.is_occupied(c) || self.supported(c))
            .collect()
    }

    /// `[8 × 11 × 9 × 11]`: one-hot empty/color channels and a recency channel
    /// holding weight 5 for the newest history action down to 1 for the fifth.
    pub fn encode(&self) -> Tensor {
        let mut data = vec![0.0; WORLD_CHANNELS * NUM_CELLS];
        for (i, cell) in self.cells.iter().enumerate() {
            let channel = cell.map_or(0, |c| c.code() + 1);
            data[channel * NUM_CELLS + i] = 1.0;
        }
        let n = self.history.len();
        for (k, a) in self.history.iter().enumerate() {
            let weight = (HISTORY_LEN - (n - 1 - k)) as f64;
            if let Some(at) = a.location() {
                data[7 * NUM_CELLS + at.index()] = weight;
            }
        }
        Tensor::new(vec![WORLD_CHANNELS, SIZE_X, SIZE_Y, SIZE_Z], data).expect("world shape")
    }

    /// `[11]`: placement/removal one-hot, color one-hot, normalized location.
    pub fn encode_last_action(&self) -> Tensor {
        let mut v = vec![0.0; LAST_ACTION_DIM];
        match self.history.back() {
            Some(BuildAction::Place { at, color }) => {
                v[0] = 1.0;
                v[2 + color.code()] = 1.0;
                write_location(&mut v, *at);
            }
            Some(BuildAction::Remove { at }) => {
                v[1] = 1.0;
                write_location(&mut v, *at);
            }
            Some(BuildAction::Stop) | None => {}
        }
        Tensor::new(vec![LAST_ACTION_DIM], v).expect("last action shape")
    }

    pub fn snapshot(&self) -> WorldSnapshot {
        WorldSnapshot {
            blocks: self
                .occupied()
                .map(|(c, color)| BlockRecord {
                    x: c.x() as i64,
                    y: c.y() as i64,
                    z: c.z() as i64,
                    color,
                })
                .collect(),
        }
    }

    pub fn from_snapshot(s: &WorldSnapshot) -> Result<Self, WorldError> {
        let blocks = s
            .blocks
            .iter()
            .map(|b| Coord::new(b.x, b.y, b.z).map(|c| (c, b.color)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_blocks(blocks))
    }
}

fn write_location(v: &mut [f64], at: Coord) {
    v[8] = at.x() as f64 / (SIZE_X - 1) as f64;
    v[9] = at.y() as f64 / (SIZE_Y - 1) as f64;
    v[10] = at.z() as f64 / (SIZE_Z - 1) as f64;
}

/// Minimal per-cell difference from `a` to `b`. A recolored cell yields both
/// a removal and an addition.
pub fn net_diff(a: &WorldState, b: &WorldState) -> BTreeSet<(Coord, CellChange)> {
    let mut out = BTreeSet::new();
    for c in Coord::all() {
        match (a.get(c), b.get(c)) {
            (None, Some(color)) => {
                out.insert((c, CellChange::Added(color)));
            }
            (Some(_), None) => {
                out.insert((c, CellChange::Removed));
            }
            (Some(x), Some(y)) if x != y => {
                out.insert((c, CellChange::Removed));
                out.insert((c, CellChange::Added(y)));
            }
            _ => {}
        }
    }
    out
}
