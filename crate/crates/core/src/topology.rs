//! Grid geometry: junctions, corner indexing, signal stages, and the one-way
//! vehicle link graph.
//!
//! Corners of a junction are indexed 0..4 anticlockwise starting from the
//! upper-right quadrant.  The horizontal stage releases the two crosswalks
//! joining corners (0,1) and (2,3); the vertical stage releases (0,3) and
//! (1,2).  Exactly one stage is active per junction per interval.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

pub const NUM_CORNERS: usize = 4;

pub type JunctionId = usize;
pub type LinkId = usize;

/// Signal stage of a junction.  `Horizontal` orders before `Vertical`, which
/// fixes the lexicographic order used for deterministic tie-breaking in every
/// solver.
#[derive(
    Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Stage {
    Horizontal,
    Vertical,
}

impl Stage {
    pub const ALL: [Stage; 2] = [Stage::Horizontal, Stage::Vertical];

    pub fn opposite(self) -> Stage {
        match self {
            Stage::Horizontal => Stage::Vertical,
            Stage::Vertical => Stage::Horizontal,
        }
    }

    /// Dense index: horizontal 0, vertical 1.
    pub fn index(self) -> usize {
        match self {
            Stage::Horizontal => 0,
            Stage::Vertical => 1,
        }
    }

    pub fn from_index(i: usize) -> Stage {
        if i == 0 {
            Stage::Horizontal
        } else {
            Stage::Vertical
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Stage::Horizontal => "h",
            Stage::Vertical => "v",
        }
    }

    pub fn parse(s: &str) -> Result<Stage> {
        match s.trim().to_ascii_lowercase().as_str() {
            "h" | "horizontal" => Ok(Stage::Horizontal),
            "v" | "vertical" => Ok(Stage::Vertical),
            other => Err(Error::Parse(format!("unknown stage {other:?}"))),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

/// Corner reached from `corner` along the crosswalk released by `stage`.
/// Both maps are involutions and each corner has exactly one partner per
/// stage, so the eight directed streams of a junction partition into the four
/// horizontal and the four vertical ones.
pub fn partner(corner: usize, stage: Stage) -> usize {
    debug_assert!(corner < NUM_CORNERS);
    match stage {
        Stage::Horizontal => corner ^ 1, // 0<->1, 2<->3
        Stage::Vertical => 3 - corner,   // 0<->3, 1<->2
    }
}

/// Directed pedestrian streams released by a stage, as (from, to) corner
/// pairs in a fixed order.
pub fn stage_streams(stage: Stage) -> [(usize, usize); 4] {
    match stage {
        Stage::Horizontal => [(0, 1), (1, 0), (2, 3), (3, 2)],
        Stage::Vertical => [(0, 3), (1, 2), (2, 1), (3, 0)],
    }
}

/// Dimensions and time discretisation of a grid instance.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Junction rows (vertical extent).
    pub rows: usize,
    /// Junction columns (horizontal extent).
    pub cols: usize,
    /// Signal interval length in seconds.
    pub delta: f64,
    /// Number of signal intervals in the horizon.
    pub steps: usize,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, delta: f64, steps: usize) -> Result<GridSpec> {
        let spec = GridSpec {
            rows,
            cols,
            delta,
            steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidGrid(format!(
                "{}x{} grid has no junctions",
                self.rows, self.cols
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "interval length {} must be positive",
                self.delta
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidGrid("horizon has zero intervals".into()));
        }
        Ok(())
    }

    pub fn n_junctions(&self) -> usize {
        self.rows * self.cols
    }

    pub fn horizon_seconds(&self) -> f64 {
        self.steps as f64 * self.delta
    }

    pub fn junction_id(&self, row: usize, col: usize) -> JunctionId {
        row * self.cols + col
    }
}

/// Role of a vehicle link in the grid.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    /// Fed from outside the network.
    Boundary,
    /// Connects two junctions.
    Interior,
    /// Drains out of the network, never gated.
    Exit,
}

/// One-way vehicle link.  Horizontal links carry west-to-east flow, vertical
/// links north-to-south, so the link graph of any grid is acyclic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub orientation: Stage,
    pub kind: LinkKind,
    /// Junction whose outflow feeds this link, if any.
    pub from_junction: Option<JunctionId>,
    /// Junction this link feeds, `None` for exit links.
    pub to_junction: Option<JunctionId>,
}

/// Vehicle link graph of a grid.  Each junction has one incoming and one
/// outgoing link per orientation; the outgoing link of the last junction in a
/// row or column is a dedicated exit link.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VehTopology {
    pub links: Vec<Link>,
    /// Incoming horizontal link per junction.
    pub in_h: Vec<LinkId>,
    /// Incoming vertical link per junction.
    pub in_v: Vec<LinkId>,
    /// Outgoing horizontal link per junction.
    pub out_h: Vec<LinkId>,
    /// Outgoing vertical link per junction.
    pub out_v: Vec<LinkId>,
    /// Links in an order where every link's successor comes first, so flows
    /// can be resolved in one pass from the exits backwards.
    pub resolution_order: Vec<LinkId>,
}

impl VehTopology {
    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn incoming(&self, junction: JunctionId, orientation: Stage) -> LinkId {
        match orientation {
            Stage::Horizontal => self.in_h[junction],
            Stage::Vertical => self.in_v[junction],
        }
    }

    pub fn outgoing(&self, junction: JunctionId, orientation: Stage) -> LinkId {
        match orientation {
            Stage::Horizontal => self.out_h[junction],
            Stage::Vertical => self.out_v[junction],
        }
    }

    /// Successor link that receives the flow leaving `link`, if any.
    pub fn successor(&self, link: LinkId) -> Option<LinkId> {
        self.links[link]
            .to_junction
            .map(|j| self.outgoing(j, self.links[link].orientation))
    }

    pub fn boundary_links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.links
            .iter()
            .filter(|l| l.kind == LinkKind::Boundary)
            .map(|l| l.id)
    }

    pub fn exit_links(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.links
            .iter()
            .filter(|l| l.kind == LinkKind::Exit)
            .map(|l| l.id)
    }
}

/// A grid instance: junction layout plus the derived vehicle link graph.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridNetwork {
    pub spec: GridSpec,
    pub veh: VehTopology,
}

impl GridNetwork {
    pub fn n_junctions(&self) -> usize {
        self.spec.n_junctions()
    }
}

/// Build the link graph for a grid.  Link ids are assigned row-major over
/// horizontal links first (`cols + 1` per row, west to east), then over
/// vertical links (`rows + 1` per column, north to south); this ordering is
/// part of the scenario file contract.
pub fn build_grid(spec: GridSpec) -> Result<GridNetwork> {
    spec.validate()?;
    let (rows, cols) = (spec.rows, spec.cols);
    let n_junctions = spec.n_junctions();

    let mut links = Vec::new();
    let mut in_h = vec![0; n_junctions];
    let mut in_v = vec![0; n_junctions];
    let mut out_h = vec![0; n_junctions];
    let mut out_v = vec![0; n_junctions];

    // Horizontal links: position c in 0..=cols within row r; link c feeds
    // junction (r, c) and is fed by junction (r, c-1).
    for r in 0..rows {
        for c in 0..=cols {
            let id = links.len();
            let kind = if c == 0 {
                LinkKind::Boundary
            } else if c == cols {
                LinkKind::Exit
            } else {
                LinkKind::Interior
            };
            let from_junction = (c > 0).then(|| spec.junction_id(r, c - 1));
            let to_junction = (c < cols).then(|| spec.junction_id(r, c));
            links.push(Link {
                id,
                orientation: Stage::Horizontal,
                kind,
                from_junction,
                to_junction,
            });
            if let Some(j) = to_junction {
                in_h[j] = id;
            }
            if let Some(j) = from_junction {
                out_h[j] = id;
            }
        }
    }

    // Vertical links: position r in 0..=rows within column c.
    for c in 0..cols {
        for r in 0..=rows {
            let id = links.len();
            let kind = if r == 0 {
                LinkKind::Boundary
            } else if r == rows {
                LinkKind::Exit
            } else {
                LinkKind::Interior
            };
            let from_junction = (r > 0).then(|| spec.junction_id(r - 1, c));
            let to_junction = (r < rows).then(|| spec.junction_id(r, c));
            links.push(Link {
                id,
                orientation: Stage::Vertical,
                kind,
                from_junction,
                to_junction,
            });
            if let Some(j) = to_junction {
                in_v[j] = id;
            }
            if let Some(j) = from_junction {
                out_v[j] = id;
            }
        }
    }

    let mut topo = VehTopology {
        links,
        in_h,
        in_v,
        out_h,
        out_v,
        resolution_order: Vec::new(),
    };
    topo.resolution_order = resolution_order(&topo)?;
    Ok(GridNetwork { spec, veh: topo })
}

/// Kahn topological sort of the successor graph, reversed so sinks come
/// first.  Fails if the link graph has a cycle, which would make single-pass
/// flow resolution unsound.
fn resolution_order(topo: &VehTopology) -> Result<Vec<LinkId>> {
    let n = topo.n_links();
    let mut indegree = vec![0usize; n];
    for l in 0..n {
        if let Some(s) = topo.successor(l) {
            indegree[s] += 1;
        }
    }
    let mut queue: Vec<LinkId> = (0..n).filter(|&l| indegree[l] == 0).collect();
    queue.sort_unstable(); // deterministic order
    let mut order = Vec::with_capacity(n);
    let mut head = 0;
    while head < queue.len() {
        let l = queue[head];
        head += 1;
        order.push(l);
        if let Some(s) = topo.successor(l) {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                queue.push(s);
            }
        }
    }
    if order.len() != n {
        return Err(Error::InvalidGrid("vehicle link graph has a cycle".into()));
    }
    order.reverse();
    Ok(order)
}

/// How the pedestrian and vehicle signal layers are tied together.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingPairing {
    /// Pedestrians cross parallel to the released vehicle direction.
    Parallel,
    /// Pedestrians cross the stopped vehicle direction.
    Crossed,
}

/// Whether every interval must run exactly one joint stage or may run none.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CouplingMode {
    Exclusive,
    Relaxed,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCoupling {
    pub pairing: CouplingPairing,
    pub mode: CouplingMode,
}

impl Default for StageCoupling {
    fn default() -> Self {
        StageCoupling {
            pairing: CouplingPairing::Parallel,
            mode: CouplingMode::Exclusive,
        }
    }
}

impl StageCoupling {
    /// Vehicle stage released together with pedestrian stage `ped`.
    pub fn veh_stage_for(&self, ped: Stage) -> Stage {
        match self.pairing {
            CouplingPairing::Parallel => ped,
            CouplingPairing::Crossed => ped.opposite(),
        }
    }
}
