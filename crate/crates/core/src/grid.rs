//! Discrete 3D grid at every resolution level, camera poses, the viewing
//! frustum and occlusion-aware visibility.
//!
//! Geometry conventions:
//!
//! * The camera sits at the center of the robot's cell and looks along one of
//!   the six axis directions. The up vector is `+z` for horizontal directions
//!   and `+x` when looking along `±z`.
//! * A cell is inside the frustum when its center is: the depth along the view
//!   axis lies in the half-open interval `[near, far)` and both lateral offsets
//!   are within `depth * tan(fov / 2)` (scaled by the aspect ratio
//!   horizontally).
//! * Occlusion treats every cell as a point. In-frustum centers are projected
//!   onto an `r x r` image raster with `r = 2 * far`; the nearest occupied cell
//!   in a pixel is visible and everything behind it in the same pixel is
//!   occluded.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

const EPS: f64 = 1e-9;

/// A ground-level cell of the `m x m x m` search region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 3]", into = "[i32; 3]")]
pub struct GridCell {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl GridCell {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn in_bounds(&self, m: u32) -> bool {
        let m = m as i32;
        (0..m).contains(&self.x) && (0..m).contains(&self.y) && (0..m).contains(&self.z)
    }

    pub fn offset(&self, d: [i32; 3]) -> Self {
        Self::new(self.x + d[0], self.y + d[1], self.z + d[2])
    }

    pub fn manhattan(&self, other: &GridCell) -> u32 {
        (self.x - other.x).unsigned_abs()
            + (self.y - other.y).unsigned_abs()
            + (self.z - other.z).unsigned_abs()
    }

    pub fn as_array(&self) -> [i32; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[i32; 3]> for GridCell {
    fn from(a: [i32; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<GridCell> for [i32; 3] {
    fn from(c: GridCell) -> Self {
        c.as_array()
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

/// A cell of the level-`l` grid. It covers `(2^l)^3` ground cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellAtLevel {
    pub level: u8,
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl CellAtLevel {
    pub const fn new(level: u8, x: i32, y: i32, z: i32) -> Self {
        Self { level, x, y, z }
    }

    pub fn ground(cell: GridCell) -> Self {
        Self::new(0, cell.x, cell.y, cell.z)
    }

    /// Side length in ground cells.
    pub fn span(&self) -> i32 {
        1 << self.level
    }

    pub fn in_bounds(&self, m: u32) -> bool {
        let side = (m >> self.level) as i32;
        side > 0
            && (0..side).contains(&self.x)
            && (0..side).contains(&self.y)
            && (0..side).contains(&self.z)
    }

    /// The ground cell with the smallest coordinates covered by this cell.
    pub fn min_corner(&self) -> GridCell {
        let s = self.span();
        GridCell::new(self.x * s, self.y * s, self.z * s)
    }

    /// Ground cell a macro move heads for: the lower-middle cell along each
    /// axis (the cell itself at level 0).
    pub fn center_ground_cell(&self) -> GridCell {
        let half = if self.level == 0 { 0 } else { (self.span() / 2) - 1 };
        self.min_corner().offset([half, half, half])
    }

    /// Continuous center in ground-cell coordinates, where ground cell `g`
    /// has its center at `g + 0.5`.
    pub fn center_point(&self) -> [f64; 3] {
        let s = self.span() as f64;
        [
            (self.x as f64 + 0.5) * s,
            (self.y as f64 + 0.5) * s,
            (self.z as f64 + 0.5) * s,
        ]
    }

    pub fn contains(&self, g: &GridCell) -> bool {
        level_ancestor(*g, self.level) == *self
    }

    pub fn parent(&self) -> Self {
        Self::new(self.level + 1, self.x >> 1, self.y >> 1, self.z >> 1)
    }

    pub fn children(&self) -> [CellAtLevel; 8] {
        debug_assert!(self.level > 0);
        std::array::from_fn(|k| {
            let k = k as i32;
            CellAtLevel::new(
                self.level - 1,
                self.x * 2 + (k & 1),
                self.y * 2 + ((k >> 1) & 1),
                self.z * 2 + ((k >> 2) & 1),
            )
        })
    }
}

impl fmt::Display for CellAtLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}({},{},{})", self.level, self.x, self.y, self.z)
    }
}

/// Integer-divides each coordinate by `2^level`.
pub fn level_ancestor(cell: GridCell, level: u8) -> CellAtLevel {
    CellAtLevel::new(level, cell.x >> level, cell.y >> level, cell.z >> level)
}

/// All ground cells covered by `cell`, in x-fastest order.
pub fn ground_cells_of(cell: CellAtLevel) -> Vec<GridCell> {
    let s = cell.span();
    let base = cell.min_corner();
    let mut out = Vec::with_capacity((s * s * s) as usize);
    for dz in 0..s {
        for dy in 0..s {
            for dx in 0..s {
                out.push(base.offset([dx, dy, dz]));
            }
        }
    }
    out
}

/// One of the six axis-aligned view or motion directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::PosX,
        Direction::NegX,
        Direction::PosY,
        Direction::NegY,
        Direction::PosZ,
        Direction::NegZ,
    ];

    pub fn vector(self) -> [i32; 3] {
        match self {
            Direction::PosX => [1, 0, 0],
            Direction::NegX => [-1, 0, 0],
            Direction::PosY => [0, 1, 0],
            Direction::NegY => [0, -1, 0],
            Direction::PosZ => [0, 0, 1],
            Direction::NegZ => [0, 0, -1],
        }
    }

    pub fn up(self) -> [i32; 3] {
        match self {
            Direction::PosZ | Direction::NegZ => [1, 0, 0],
            _ => [0, 0, 1],
        }
    }

    /// `vector x up`.
    pub fn right(self) -> [i32; 3] {
        let a = self.vector();
        let b = self.up();
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::PosX => "+x",
            Direction::NegX => "-x",
            Direction::PosY => "+y",
            Direction::NegY => "-y",
            Direction::PosZ => "+z",
            Direction::NegZ => "-z",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: GridCell,
    pub direction: Direction,
}

impl CameraPose {
    pub fn new(position: GridCell, direction: Direction) -> Self {
        Self { position, direction }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrustumParams {
    pub fov_angle_deg: f64,
    pub aspect: f64,
    pub near: f64,
    pub far: f64,
}

impl FrustumParams {
    pub fn with_range(far: f64) -> Self {
        Self {
            fov_angle_deg: 45.0,
            aspect: 1.0,
            near: 1.0,
            far,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.near > 0.0
            && self.near < self.far
            && self.fov_angle_deg > 0.0
            && self.fov_angle_deg < 180.0
            && self.aspect > 0.0
            && self.far.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidFrustum(*self))
        }
    }

    fn tan_half_v(&self) -> f64 {
        (self.fov_angle_deg.to_radians() / 2.0).tan()
    }

    fn tan_half_h(&self) -> f64 {
        self.tan_half_v() * self.aspect
    }

    /// Raster resolution used for occlusion.
    pub fn raster_size(&self) -> u32 {
        ((2.0 * self.far).ceil() as u32).max(1)
    }

    /// Projects a point given relative to the camera's cell center. `None` when
    /// the point is outside the frustum.
    pub fn project(&self, direction: Direction, offset: [f64; 3]) -> Option<Projection> {
        let dot = |v: [i32; 3]| v[0] as f64 * offset[0] + v[1] as f64 * offset[1] + v[2] as f64 * offset[2];
        let depth = dot(direction.vector());
        if depth < self.near - EPS || depth >= self.far - EPS {
            return None;
        }
        let u = dot(direction.right()) / depth;
        let v = dot(direction.up()) / depth;
        let (th, tv) = (self.tan_half_h(), self.tan_half_v());
        if u.abs() > th + EPS || v.abs() > tv + EPS {
            return None;
        }
        let r = self.raster_size();
        let quantize = |n: f64| -> u32 {
            let p = ((n.clamp(-1.0, 1.0) + 1.0) / 2.0 * r as f64).floor() as i64;
            p.clamp(0, r as i64 - 1) as u32
        };
        Some(Projection {
            depth,
            pixel: quantize(u / th) * r + quantize(v / tv),
        })
    }

    pub fn project_cell(&self, pose: &CameraPose, cell: &GridCell) -> Option<Projection> {
        let p = pose.position;
        self.project(
            pose.direction,
            [
                (cell.x - p.x) as f64,
                (cell.y - p.y) as f64,
                (cell.z - p.z) as f64,
            ],
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub depth: f64,
    pub pixel: u32,
}

/// Tests a cell center against the six frustum planes.
pub fn frustum_contains(pose: &CameraPose, params: &FrustumParams, cell: &GridCell) -> bool {
    params.project_cell(pose, cell).is_some()
}

#[derive(Clone, Copy, Debug)]
struct FrustumEntry {
    offset: [i32; 3],
    depth: f64,
    pixel: u32,
}

/// Dense index from a camera-relative offset to its entry, over the bounding
/// box of the in-frustum offsets.
#[derive(Clone, Debug)]
struct OffsetTable {
    lo: [i32; 3],
    hi: [i32; 3],
    slots: Vec<u32>,
}

impl OffsetTable {
    const EMPTY: u32 = u32::MAX;

    fn new(entries: &[FrustumEntry]) -> Self {
        let mut lo = [i32::MAX; 3];
        let mut hi = [i32::MIN; 3];
        for e in entries {
            for i in 0..3 {
                lo[i] = lo[i].min(e.offset[i]);
                hi[i] = hi[i].max(e.offset[i]);
            }
        }
        if entries.is_empty() {
            return Self {
                lo: [0; 3],
                hi: [-1; 3],
                slots: Vec::new(),
            };
        }
        let mut table = Self {
            lo,
            hi,
            slots: Vec::new(),
        };
        let size: usize = (0..3).map(|i| (hi[i] - lo[i] + 1) as usize).product();
        table.slots = vec![Self::EMPTY; size];
        for (k, e) in entries.iter().enumerate() {
            let slot = table.slot(e.offset).expect("offset inside its own bounding box");
            table.slots[slot] = k as u32;
        }
        table
    }

    fn slot(&self, o: [i32; 3]) -> Option<usize> {
        if (0..3).any(|i| o[i] < self.lo[i] || o[i] > self.hi[i]) {
            return None;
        }
        let dim = |i: usize| (self.hi[i] - self.lo[i] + 1) as usize;
        let idx = |i: usize| (o[i] - self.lo[i]) as usize;
        Some(idx(0) + dim(0) * (idx(1) + dim(1) * idx(2)))
    }
}

/// Frustum parameters together with the precomputed in-frustum offsets for
/// each direction, sorted by depth.
#[derive(Clone, Debug)]
pub struct Frustum {
    params: FrustumParams,
    entries: [Vec<FrustumEntry>; 6],
    tables: [OffsetTable; 6],
}

impl Frustum {
    pub fn new(params: FrustumParams) -> Result<Self> {
        params.validate()?;
        let reach = (params.far * params.tan_half_v().max(params.tan_half_h())).ceil() as i32 + 1;
        let depth_max = params.far.ceil() as i32;
        let entries = Direction::ALL.map(|dir| {
            let (f, r, u) = (dir.vector(), dir.right(), dir.up());
            let mut list = Vec::new();
            for depth in 0..=depth_max {
                for a in -reach..=reach {
                    for b in -reach..=reach {
                        let offset = [
                            f[0] * depth + r[0] * a + u[0] * b,
                            f[1] * depth + r[1] * a + u[1] * b,
                            f[2] * depth + r[2] * a + u[2] * b,
                        ];
                        let off_f = offset.map(|c| c as f64);
                        if let Some(p) = params.project(dir, off_f) {
                            list.push(FrustumEntry {
                                offset,
                                depth: p.depth,
                                pixel: p.pixel,
                            });
                        }
                    }
                }
            }
            list.sort_by(|x, y| x.depth.total_cmp(&y.depth).then(x.offset.cmp(&y.offset)));
            list
        });
        let tables = Direction::ALL.map(|d| OffsetTable::new(&entries[d.index()]));
        Ok(Self {
            params,
            entries,
            tables,
        })
    }

    pub fn params(&self) -> &FrustumParams {
        &self.params
    }

    /// In-bounds cells inside the frustum at `pose`, nearest first.
    pub fn cells<'a>(&'a self, pose: &'a CameraPose, m: u32) -> impl Iterator<Item = GridCell> + 'a {
        self.entries[pose.direction.index()]
            .iter()
            .map(move |e| pose.position.offset(e.offset))
            .filter(move |c| c.in_bounds(m))
    }

    fn entry(&self, pose: &CameraPose, cell: &GridCell) -> Option<&FrustumEntry> {
        let p = pose.position;
        let d = pose.direction.index();
        let slot = self.tables[d].slot([cell.x - p.x, cell.y - p.y, cell.z - p.z])?;
        match self.tables[d].slots[slot] {
            OffsetTable::EMPTY => None,
            k => Some(&self.entries[d][k as usize]),
        }
    }

    pub fn contains(&self, pose: &CameraPose, cell: &GridCell) -> bool {
        self.entry(pose, cell).is_some()
    }

    /// False only when no cell of the cube with corner `min` and side `span`
    /// can be inside the frustum at `pose`.
    pub fn may_see_block(&self, pose: &CameraPose, min: GridCell, span: i32) -> bool {
        let t = &self.tables[pose.direction.index()];
        let p = pose.position.as_array();
        let c = min.as_array();
        (0..3).all(|i| c[i] - p[i] <= t.hi[i] && c[i] + span - 1 - p[i] >= t.lo[i])
    }

    /// Point visibility of `cell`: inside the frustum and no occupied cell in
    /// the same raster pixel lies strictly nearer. Agrees with
    /// [`compute_visibility`] for every in-bounds cell.
    pub fn is_visible<I>(&self, pose: &CameraPose, cell: &GridCell, occluders: I) -> bool
    where
        I: IntoIterator<Item = GridCell>,
    {
        let Some(target) = self.entry(pose, cell) else {
            return false;
        };
        !occluders.into_iter().any(|o| {
            o != *cell
                && self
                    .entry(pose, &o)
                    .is_some_and(|p| p.pixel == target.pixel && p.depth < target.depth)
        })
    }

    /// Number of in-bounds frustum cells at `pose`.
    pub fn coverage_at(&self, pose: &CameraPose, m: u32) -> usize {
        self.cells(pose, m).count()
    }
}

/// What occupies a cell of the ground-truth world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Occupant {
    Object(ObjectId),
    Obstacle,
}

/// Target object identifier, `1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u16);

impl ObjectId {
    /// Zero-based position in per-object vectors.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        ObjectId(i as u16 + 1)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VisibilityResult {
    pub visible_free: BTreeSet<GridCell>,
    pub visible_object: BTreeMap<GridCell, Occupant>,
    pub occluded: BTreeSet<GridCell>,
}

impl VisibilityResult {
    pub fn len(&self) -> usize {
        self.visible_free.len() + self.visible_object.len() + self.occluded.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_visible(&self, cell: &GridCell) -> bool {
        self.visible_free.contains(cell) || self.visible_object.contains_key(cell)
    }
}

/// Classifies every in-bounds frustum cell as visible-free, visible-occupied or
/// occluded.
pub fn compute_visibility(
    pose: &CameraPose,
    frustum: &Frustum,
    m: u32,
    occupied: &HashMap<GridCell, Occupant>,
) -> VisibilityResult {
    let mut out = VisibilityResult::default();
    let mut blocked: HashMap<u32, ()> = HashMap::new();
    for e in &frustum.entries[pose.direction.index()] {
        let cell = pose.position.offset(e.offset);
        if !cell.in_bounds(m) {
            continue;
        }
        if blocked.contains_key(&e.pixel) {
            out.occluded.insert(cell);
        } else if let Some(occ) = occupied.get(&cell) {
            out.visible_object.insert(cell, *occ);
            blocked.insert(e.pixel, ());
        } else {
            out.visible_free.insert(cell);
        }
    }
    out
}

/// Largest fraction of the `m^3` grid covered by a single frustum, over all
/// camera poses.
pub fn max_coverage_fraction(m: u32, params: &FrustumParams, exec: Execution) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidGridSize(m));
    }
    let frustum = Frustum::new(*params)?;
    let layers: Vec<Vec<Layer>> = Direction::ALL
        .iter()
        .map(|d| Layer::decompose(&frustum.entries[d.index()], *d))
        .collect();
    let positions: Vec<GridCell> = (0..m as i32)
        .flat_map(|z| (0..m as i32).flat_map(move |y| (0..m as i32).map(move |x| GridCell::new(x, y, z))))
        .collect();
    let best = par::map(exec, &positions, |p| {
        Direction::ALL
            .iter()
            .map(|d| Layer::count(&layers[d.index()], *d, p, m))
            .max()
            .unwrap_or(0)
    })
    .into_iter()
    .max()
    .unwrap_or(0);
    Ok(best as f64 / (m as f64).powi(3))
}

/// One depth slice of the frustum: a rectangle of lateral offsets along the
/// direction's right and up axes.
struct Layer {
    depth: i32,
    right: (i32, i32),
    up: (i32, i32),
}

impl Layer {
    fn decompose(entries: &[FrustumEntry], dir: Direction) -> Vec<Layer> {
        let dot = |a: [i32; 3], b: [i32; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let mut by_depth: BTreeMap<i32, Layer> = BTreeMap::new();
        for e in entries {
            let depth = dot(e.offset, dir.vector());
            let (a, b) = (dot(e.offset, dir.right()), dot(e.offset, dir.up()));
            let layer = by_depth.entry(depth).or_insert(Layer {
                depth,
                right: (a, a),
                up: (b, b),
            });
            layer.right = (layer.right.0.min(a), layer.right.1.max(a));
            layer.up = (layer.up.0.min(b), layer.up.1.max(b));
        }
        by_depth.into_values().collect()
    }

    fn count(layers: &[Layer], dir: Direction, p: &GridCell, m: u32) -> usize {
        let p = p.as_array();
        // Number of integers t in [lo, hi] with p[axis] + sign * t inside [0, m).
        let span = |axis: [i32; 3], (lo, hi): (i32, i32)| -> usize {
            let i = axis.iter().position(|c| *c != 0).unwrap_or(0);
            let s = axis[i];
            let (a, b) = (p[i] + s * lo, p[i] + s * hi);
            let (a, b) = (a.min(b).max(0), a.max(b).min(m as i32 - 1));
            if b >= a {
                (b - a + 1) as usize
            } else {
                0
            }
        };
        layers
            .iter()
            .map(|l| {
                span(dir.vector(), (l.depth, l.depth)) * span(dir.right(), l.right) * span(dir.up(), l.up)
            })
            .sum()
    }
}
