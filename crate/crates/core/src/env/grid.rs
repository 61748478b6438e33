//! Multi-room gridworld with an action-dependent noisy TV.
//!
//! Rooms sit on a two-column grid and share single-door walls. Doors form a
//! random spanning tree over the rooms and start closed. The agent sees a
//! `V x V x 3` egocentric window (object type, colour, door state) with
//! line-of-sight occlusion. With the TV enabled, the `done` action fills the
//! top half of the next observation with random integers.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{RngStream, Stream};

pub const CHANNELS: usize = 3;
/// Largest value any observation channel can take.
pub const MAX_OBS_VALUE: u8 = 10;

const TYPE_UNSEEN: u8 = 0;
const TYPE_EMPTY: u8 = 1;
const TYPE_WALL: u8 = 2;
const TYPE_DOOR: u8 = 4;
const TYPE_GOAL: u8 = 8;
const COLOUR_GREEN: u8 = 1;
const COLOUR_GREY: u8 = 5;
const DOOR_COLOURS: [u8; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rooms: usize,
    pub view: usize,
    pub noisy_tv: bool,
    pub max_steps: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            rooms: 4,
            view: 7,
            noisy_tv: false,
            max_steps: 400,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rooms != 4 && self.rooms != 6 {
            return Err(Error::InvalidArgument(format!("rooms must be 4 or 6, got {}", self.rooms)));
        }
        if self.view < 3 || self.view % 2 == 0 {
            return Err(Error::InvalidArgument(format!("view must be odd and >= 3, got {}", self.view)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn obs_len(&self) -> usize {
        self.view * self.view * CHANNELS
    }

    /// Rows of the view overwritten by the TV: `0..ceil(V/2)`.
    pub fn tv_rows(&self) -> usize {
        self.view.div_ceil(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    East,
    South,
    West,
    North,
}

impl Heading {
    const ALL: [Heading; 4] = [Heading::East, Heading::South, Heading::West, Heading::North];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Self::ALL[i % 4]
    }

    pub fn left(self) -> Heading {
        Self::from_index(self.index() + 3)
    }

    pub fn right(self) -> Heading {
        Self::from_index(self.index() + 1)
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
            Heading::North => (0, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
    Forward,
    Pickup,
    Drop,
    Toggle,
    Done,
}

impl Action {
    pub const COUNT: usize = 7;
    pub const ALL: [Action; 7] = [
        Action::Left,
        Action::Right,
        Action::Forward,
        Action::Pickup,
        Action::Drop,
        Action::Toggle,
        Action::Done,
    ];

    pub fn from_index(i: usize) -> Result<Action> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("action index {i} out of range")))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Floor,
    Goal,
    /// Index into the door list; open/closed lives in the agent state.
    Door(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Door {
    x: usize,
    y: usize,
    colour: u8,
    rooms: (usize, usize),
}

/// Full hidden state packed into a word: position, heading, carried object
/// and door bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<u8>,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSnapshot {
    pub width: usize,
    pub height: usize,
    /// One string per row: `#` wall, `.` floor, `G` goal, `D` closed door, `O` open door.
    pub cells: Vec<String>,
    pub doors: Vec<(usize, usize)>,
    pub agent: (usize, usize),
    pub heading: Heading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pose {
    x: usize,
    y: usize,
    heading: Heading,
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    config: GridConfig,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    room_of: Vec<Option<usize>>,
    doors: Vec<Door>,
    start: Pose,
    goal: (usize, usize),
    pose: Pose,
    carried: Option<u8>,
    open: u64,
    steps: u32,
    tv_rng: RngStream,
}

impl GridWorld {
    /// Layout from `seed`; TV noise from stream `Env(0)`.
    pub fn new(config: GridConfig, seed: u64) -> Result<Self> {
        Self::for_actor(config, seed, 0)
    }

    /// Same layout as [`GridWorld::new`] with TV noise drawn from `Env(actor)`.
    pub fn for_actor(config: GridConfig, seed: u64, actor: u32) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(seed, Stream::Layout);
        let rows = config.rooms / 2;
        let col_w: Vec<usize> = (0..2).map(|_| rng.random_range(3..=5)).collect();
        let row_h: Vec<usize> = (0..rows).map(|_| rng.random_range(3..=5)).collect();
        let xs = boundaries(&col_w);
        let ys = boundaries(&row_h);
        let width = xs[2] + 1;
        let height = ys[rows] + 1;

        let mut cells = vec![Cell::Wall; width * height];
        let mut room_of = vec![None; width * height];
        let room_id = |c: usize, r: usize| r * 2 + c;
        for r in 0..rows {
            for c in 0..2 {
                for y in ys[r] + 1..ys[r + 1] {
                    for x in xs[c] + 1..xs[c + 1] {
                        cells[y * width + x] = Cell::Floor;
                        room_of[y * width + x] = Some(room_id(c, r));
                    }
                }
            }
        }

        let mut edges = Vec::new();
        for r in 0..rows {
            edges.push((room_id(0, r), room_id(1, r)));
            if r + 1 < rows {
                edges.push((room_id(0, r), room_id(0, r + 1)));
                edges.push((room_id(1, r), room_id(1, r + 1)));
            }
        }
        edges.shuffle(&mut rng);
        let mut parent: Vec<usize> = (0..config.rooms).collect();
        let mut doors = Vec::new();
        for (a, b) in edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                continue;
            }
            parent[ra] = rb;
            let (ca, rwa) = (a % 2, a / 2);
            let (x, y) = if b == room_id(1, rwa) && ca == 0 {
                (xs[1], rng.random_range(ys[rwa] + 1..ys[rwa + 1]))
            } else {
                (rng.random_range(xs[ca] + 1..xs[ca + 1]), ys[rwa + 1])
            };
            let colour = DOOR_COLOURS[rng.random_range(0..DOOR_COLOURS.len())];
            cells[y * width + x] = Cell::Door(doors.len());
            doors.push(Door {
                x,
                y,
                colour,
                rooms: (a, b),
            });
        }

        let start_room = rng.random_range(0..config.rooms);
        let (sx, sy) = random_cell_in(&mut rng, &xs, &ys, start_room);
        let heading = Heading::from_index(rng.random_range(0..4));
        let goal_room = farthest_room(config.rooms, &doors, start_room);
        let goal = random_cell_in(&mut rng, &xs, &ys, goal_room);
        cells[goal.1 * width + goal.0] = Cell::Goal;

        let start = Pose { x: sx, y: sy, heading };
        Ok(Self {
            config,
            width,
            height,
            cells,
            room_of,
            doors,
            start,
            goal,
            pose: start,
            carried: None,
            open: 0,
            steps: 0,
            tv_rng: RngStream::new(seed, Stream::Env(actor)),
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    pub fn room_at(&self, x: usize, y: usize) -> Option<usize> {
        self.room_of[y * self.width + x]
    }

    pub fn door_count(&self) -> usize {
        self.doors.len()
    }

    /// Rooms joined by door `i`.
    pub fn door_rooms(&self, i: usize) -> (usize, usize) {
        self.doors[i].rooms
    }

    pub fn door_open(&self, i: usize) -> bool {
        self.open >> i & 1 == 1
    }

    pub fn position(&self) -> (usize, usize) {
        (self.pose.x, self.pose.y)
    }

    pub fn heading(&self) -> Heading {
        self.pose.heading
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// Restores the start pose, closes every door and returns the first observation.
    pub fn reset(&mut self) -> Vec<u8> {
        self.pose = self.start;
        self.carried = None;
        self.open = 0;
        self.steps = 0;
        self.observation()
    }

    pub fn step(&mut self, action: Action) -> StepOutcome {
        self.steps += 1;
        let mut reward = 0.0;
        let mut terminal = false;
        match action {
            Action::Left => self.pose.heading = self.pose.heading.left(),
            Action::Right => self.pose.heading = self.pose.heading.right(),
            Action::Forward => {
                if let Some((x, y)) = self.front() {
                    let passable = match self.cell(x, y) {
                        Cell::Wall => false,
                        Cell::Floor | Cell::Goal => true,
                        Cell::Door(i) => self.door_open(i),
                    };
                    if passable {
                        self.pose.x = x;
                        self.pose.y = y;
                    }
                    if (x, y) == self.goal {
                        reward = 1.0 - 0.9 * f64::from(self.steps) / f64::from(self.config.max_steps);
                        terminal = true;
                    }
                }
            }
            Action::Toggle => {
                if let Some((x, y)) = self.front() {
                    if let Cell::Door(i) = self.cell(x, y) {
                        self.open ^= 1 << i;
                    }
                }
            }
            Action::Pickup | Action::Drop | Action::Done => {}
        }
        if self.steps >= self.config.max_steps {
            terminal = true;
        }
        let mut observation = self.observation();
        if action == Action::Done && self.config.noisy_tv {
            let n = self.config.tv_rows() * self.config.view * CHANNELS;
            for v in &mut observation[..n] {
                *v = self.tv_rng.random_range(0..=MAX_OBS_VALUE);
            }
        }
        StepOutcome {
            observation,
            reward,
            terminal,
        }
    }

    pub fn step_index(&mut self, action: usize) -> Result<StepOutcome> {
        Ok(self.step(Action::from_index(action)?))
    }

    pub fn state_key(&self) -> StateKey {
        let carried = self.carried.map_or(0, |c| u64::from(c) + 1);
        StateKey(
            self.pose.x as u64
                | (self.pose.y as u64) << 8
                | (self.pose.heading.index() as u64) << 16
                | carried << 18
                | self.open << 22,
        )
    }

    fn front(&self) -> Option<(usize, usize)> {
        let (dx, dy) = self.pose.heading.delta();
        let x = self.pose.x as i64 + dx;
        let y = self.pose.y as i64 + dy;
        self.in_bounds(x, y).then(|| (x as usize, y as usize))
    }

    fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    fn encode(&self, x: i64, y: i64) -> ([u8; 3], bool) {
        if !self.in_bounds(x, y) {
            return ([TYPE_WALL, COLOUR_GREY, 0], false);
        }
        match self.cell(x as usize, y as usize) {
            Cell::Wall => ([TYPE_WALL, COLOUR_GREY, 0], false),
            Cell::Floor => ([TYPE_EMPTY, 0, 0], true),
            Cell::Goal => ([TYPE_GOAL, COLOUR_GREEN, 0], true),
            Cell::Door(i) => {
                let open = self.door_open(i);
                ([TYPE_DOOR, self.doors[i].colour, u8::from(!open)], open)
            }
        }
    }

    /// Egocentric view, row-major `[row][col][channel]`. Row 0 is farthest
    /// ahead; the agent sits at the bottom row, centre column.
    pub fn observation(&self) -> Vec<u8> {
        let v = self.config.view;
        let half = (v / 2) as i64;
        let (fx, fy) = self.pose.heading.delta();
        let (rx, ry) = self.pose.heading.right().delta();
        let mut codes = vec![[0u8; 3]; v * v];
        let mut see = vec![false; v * v];
        for r in 0..v {
            let fwd = (v - 1 - r) as i64;
            for c in 0..v {
                let lat = c as i64 - half;
                let x = self.pose.x as i64 + fwd * fx + lat * rx;
                let y = self.pose.y as i64 + fwd * fy + lat * ry;
                let (code, through) = self.encode(x, y);
                codes[r * v + c] = code;
                see[r * v + c] = through;
            }
        }
        // The agent's own cell never blocks.
        see[(v - 1) * v + v / 2] = true;
        let mask = visibility(v, &see);
        let mut obs = vec![TYPE_UNSEEN; v * v * CHANNELS];
        for (k, code) in codes.iter().enumerate() {
            if mask[k] {
                obs[k * CHANNELS..(k + 1) * CHANNELS].copy_from_slice(code);
            }
        }
        obs
    }

    pub fn snapshot(&self) -> LayoutSnapshot {
        let cells = (0..self.height)
            .map(|y| {
                (0..self.width)
                    .map(|x| match self.cell(x, y) {
                        Cell::Wall => '#',
                        Cell::Floor => '.',
                        Cell::Goal => 'G',
                        Cell::Door(i) if self.door_open(i) => 'O',
                        Cell::Door(_) => 'D',
                    })
                    .collect()
            })
            .collect();
        LayoutSnapshot {
            width: self.width,
            height: self.height,
            cells,
            doors: self.doors.iter().map(|d| (d.x, d.y)).collect(),
            agent: (self.pose.x, self.pose.y),
            heading: self.pose.heading,
        }
    }
}

fn boundaries(sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0];
    for s in sizes {
        out.push(out.last().unwrap() + s + 1);
    }
    out
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn random_cell_in(rng: &mut RngStream, xs: &[usize], ys: &[usize], room: usize) -> (usize, usize) {
    let (c, r) = (room % 2, room / 2);
    (
        rng.random_range(xs[c] + 1..xs[c + 1]),
        rng.random_range(ys[r] + 1..ys[r + 1]),
    )
}

fn farthest_room(rooms: usize, doors: &[Door], start: usize) -> usize {
    let mut dist = vec![usize::MAX; rooms];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(a) = queue.pop_front() {
        for d in doors {
            let b = match d.rooms {
                (p, q) if p == a => q,
                (p, q) if q == a => p,
                _ => continue,
            };
            if dist[b] == usize::MAX {
                dist[b] = dist[a] + 1;
                queue.push_back(b);
            }
        }
    }
    let best = *dist.iter().max().unwrap();
    dist.iter().position(|&d| d == best).unwrap()
}

/// Line-of-sight propagation from the agent cell at the bottom centre,
/// sweeping rows from the agent outward.
fn visibility(v: usize, see: &[bool]) -> Vec<bool> {
    let idx = |r: usize, c: usize| r * v + c;
    let mut mask = vec![false; v * v];
    mask[idx(v - 1, v / 2)] = true;
    for r in (0..v).rev() {
        for c in 0..v - 1 {
            if !mask[idx(r, c)] || !see[idx(r, c)] {
                continue;
            }
            mask[idx(r, c + 1)] = true;
            if r > 0 {
                mask[idx(r - 1, c + 1)] = true;
                mask[idx(r - 1, c)] = true;
            }
        }
        for c in (1..v).rev() {
            if !mask[idx(r, c)] || !see[idx(r, c)] {
                continue;
            }
            mask[idx(r, c - 1)] = true;
            if r > 0 {
                mask[idx(r - 1, c - 1)] = true;
                mask[idx(r - 1, c)] = true;
            }
        }
    }
    mask
}
