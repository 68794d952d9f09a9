//! Link-level network tomography: random planar DAGs on `[−1, 1]²` and the
//! flow-splitting design matrices mapping internal-node losses to leaves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use robust::{orient2d, Coord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{standardize_columns, CoefficientVector, DesignMatrix, ResponseVector};

pub type Point = [f64; 2];

/// Nodes are indexed by their ordering number: node 0 is nearest the origin.
/// Edges always point from a lower to a higher index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub positions: Vec<Point>,
    pub edges: Vec<(usize, usize)>,
    pub leaf_set: Vec<usize>,
    pub internal_set: Vec<usize>,
}

impl NetworkTopology {
    /// Builds a topology from positions already in ordering-index order.
    pub fn new(positions: Vec<Point>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = positions.len();
        for &(a, b) in &edges {
            if a >= b || b >= n {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) must satisfy a < b < {n}")));
            }
        }
        let mut has_out = vec![false; n];
        for &(a, _) in &edges {
            has_out[a] = true;
        }
        let leaf_set = (0..n).filter(|&k| !has_out[k]).collect();
        let internal_set = (0..n).filter(|&k| has_out[k]).collect();
        Ok(Self { positions, edges, leaf_set, internal_set })
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.n_nodes()];
        for &(a, b) in &self.edges {
            ch[a].push(b);
        }
        ch
    }

    /// Pairwise check that no two edges cross.
    pub fn is_planar(&self) -> bool {
        let seg = |e: &(usize, usize)| (self.positions[e.0], self.positions[e.1]);
        for (i, a) in self.edges.iter().enumerate() {
            for b in &self.edges[i + 1..] {
                let (p1, p2) = seg(a);
                let (p3, p4) = seg(b);
                if segments_cross(p1, p2, p3, p4) {
                    return false;
                }
            }
        }
        true
    }
}

fn coord(p: Point) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

fn orient(a: Point, b: Point, c: Point) -> i8 {
    let o = orient2d(coord(a), coord(b), coord(c));
    if o > 0.0 {
        1
    } else if o < 0.0 {
        -1
    } else {
        0
    }
}

/// Whether `q`, collinear with `a`–`b`, lies strictly between them.
fn strictly_inside(a: Point, b: Point, q: Point) -> bool {
    let inside = |lo: f64, hi: f64, v: f64| (lo.min(hi) < v && v < lo.max(hi)) || (lo == hi && v == lo);
    q != a && q != b && inside(a[0], b[0], q[0]) && inside(a[1], b[1], q[1])
}

/// True iff the segments share a point other than a common endpoint.
///
/// Proper crossings, T-junctions (an endpoint strictly inside the other
/// segment) and collinear overlaps of positive length all count; segments
/// meeting only at a shared endpoint do not. Orientation signs are exact.
pub fn segments_cross(p1: Point, p2: Point, p3: Point, p4: Point) -> bool {
    let o1 = orient(p1, p2, p3);
    let o2 = orient(p1, p2, p4);
    let o3 = orient(p3, p4, p1);
    let o4 = orient(p3, p4, p2);

    if o1 == 0 && o2 == 0 {
        // Collinear: positive-length overlap of the projections on the dominant axis.
        let axis = if p1[0] != p2[0] || p3[0] != p4[0] { 0 } else { 1 };
        let (a_lo, a_hi) = (p1[axis].min(p2[axis]), p1[axis].max(p2[axis]));
        let (b_lo, b_hi) = (p3[axis].min(p4[axis]), p3[axis].max(p4[axis]));
        return a_lo.max(b_lo) < a_hi.min(b_hi);
    }
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    (o1 == 0 && strictly_inside(p1, p2, p3))
        || (o2 == 0 && strictly_inside(p1, p2, p4))
        || (o3 == 0 && strictly_inside(p3, p4, p1))
        || (o4 == 0 && strictly_inside(p3, p4, p2))
}

fn sq_dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Random planar DAG; see [`generate_network_with`].
pub fn generate_network(n_nodes: usize, k: usize, nu_del: f64, seed: u64) -> Result<NetworkTopology> {
    generate_network_with(n_nodes, k, nu_del, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Nodes uniform on `[−1, 1]²`, numbered by distance from the origin. Each
/// node `k` proposes edges to its `K` nearest higher-numbered nodes in order of
/// increasing distance; a proposal is dropped with probability `nu_del` (drawn
/// first) or if it crosses an accepted edge. Ties go to the lower index.
pub fn generate_network_with<R: Rng + ?Sized>(n_nodes: usize, k: usize, nu_del: f64, rng: &mut R) -> Result<NetworkTopology> {
    if n_nodes < 2 || k == 0 {
        return Err(Error::InvalidArgument(format!("need n_nodes >= 2 and K >= 1 (got {n_nodes}, {k})")));
    }
    if !(0.0..=1.0).contains(&nu_del) {
        return Err(Error::InvalidArgument(format!("deletion probability must be in [0, 1], got {nu_del}")));
    }
    let raw: Vec<Point> = (0..n_nodes).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let mut order: Vec<usize> = (0..n_nodes).collect();
    let origin = [0.0, 0.0];
    order.sort_by(|&a, &b| sq_dist(raw[a], origin).total_cmp(&sq_dist(raw[b], origin)).then(a.cmp(&b)));
    let positions: Vec<Point> = order.iter().map(|&i| raw[i]).collect();

    let mut edges: Vec<(usize, usize)> = Vec::new();
    for node in 0..n_nodes - 1 {
        let mut cand: Vec<usize> = (node + 1..n_nodes).collect();
        cand.sort_by(|&a, &b| {
            sq_dist(positions[node], positions[a])
                .total_cmp(&sq_dist(positions[node], positions[b]))
                .then(a.cmp(&b))
        });
        cand.truncate(k);
        for target in cand {
            if rng.gen::<f64>() < nu_del {
                continue;
            }
            let (a, b) = (positions[node], positions[target]);
            let blocked = edges
                .iter()
                .any(|&(u, v)| segments_cross(a, b, positions[u], positions[v]));
            if !blocked {
                edges.push((node, target));
            }
        }
    }
    NetworkTopology::new(positions, edges)
}

/// Flow design with the map from columns back to nodes.
#[derive(Debug, Clone)]
pub struct FlowDesign {
    pub x: DesignMatrix,
    /// Internal node behind each column.
    pub column_nodes: Vec<usize>,
    /// Leaf node behind each row.
    pub row_nodes: Vec<usize>,
    /// Internal nodes whose column was all zero and was dropped.
    pub dropped: Vec<usize>,
}

/// `X_ij` is the share of a unit flow injected at internal node `j` that is
/// absorbed by leaf `i` when each node splits its flow equally over its
/// outgoing edges.
pub fn flow_design_matrix(topology: &NetworkTopology) -> Result<FlowDesign> {
    if topology.internal_set.is_empty() {
        return Err(Error::Degenerate("topology has no internal nodes".into()));
    }
    if topology.leaf_set.is_empty() {
        return Err(Error::Degenerate("topology has no leaves".into()));
    }
    let n = topology.n_nodes();
    let children = topology.children();
    let mut leaf_row = vec![usize::MAX; n];
    for (r, &leaf) in topology.leaf_set.iter().enumerate() {
        leaf_row[leaf] = r;
    }

    let mut columns = Vec::new();
    let mut column_nodes = Vec::new();
    let mut dropped = Vec::new();
    let mut flow = vec![0.0; n];
    for &j in &topology.internal_set {
        flow.iter_mut().for_each(|f| *f = 0.0);
        flow[j] = 1.0;
        let mut col = vec![0.0; topology.leaf_set.len()];
        for u in j..n {
            if flow[u] == 0.0 {
                continue;
            }
            if children[u].is_empty() {
                col[leaf_row[u]] += flow[u];
            } else {
                let share = flow[u] / children[u].len() as f64;
                for &c in &children[u] {
                    flow[c] += share;
                }
            }
        }
        if col.iter().all(|&v| v == 0.0) {
            dropped.push(j);
        } else {
            columns.push(col);
            column_nodes.push(j);
        }
    }
    if columns.is_empty() {
        return Err(Error::Degenerate("every internal column is zero".into()));
    }
    let rows = topology.leaf_set.len();
    let p = columns.len();
    let mut values = vec![0.0; rows * p];
    for (c, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            // Shares can overshoot 1 by an ulp after repeated splitting.
            values[r * p + c] = v.min(1.0);
        }
    }
    Ok(FlowDesign {
        x: DesignMatrix::from_row_major(rows, p, values)?,
        column_nodes,
        row_nodes: topology.leaf_set.clone(),
        dropped,
    })
}

#[derive(Debug, Clone)]
pub struct TomographyInstance {
    pub topology: NetworkTopology,
    pub design: FlowDesign,
    /// Loss rates over the design columns.
    pub beta_star: CoefficientVector,
    pub sigma: f64,
}

impl TomographyInstance {
    pub fn new(topology: NetworkTopology, beta_star: Vec<f64>, sigma: f64) -> Result<Self> {
        let design = flow_design_matrix(&topology)?;
        if beta_star.len() != design.x.p() {
            return Err(Error::Dimension(format!(
                "beta_star has {} entries, design has {} columns",
                beta_star.len(),
                design.x.p()
            )));
        }
        if beta_star.iter().any(|&b| !(b >= 0.0)) {
            return Err(Error::InvalidArgument("loss rates must be nonnegative".into()));
        }
        if !(sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { topology, design, beta_star: CoefficientVector::new(beta_star), sigma })
    }

    pub fn x(&self) -> &DesignMatrix {
        &self.design.x
    }

    /// Noiseless response `Xβ*`.
    pub fn signal(&self) -> Vec<f64> {
        self.design.x.mul_vec(self.beta_star.values())
    }

    /// Design rescaled to columns of squared norm `n`, for condition checks.
    pub fn standardized_design(&self) -> Result<DesignMatrix> {
        standardize_columns(&self.design.x)
    }
}

/// `Y = Xβ* + ε`, `ε ~ N(0, σ²I)`, deterministic per seed.
pub fn simulate_observations(inst: &TomographyInstance, seed: u64) -> ResponseVector {
    simulate_observations_with(inst, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn simulate_observations_with<R: Rng + ?Sized>(inst: &TomographyInstance, rng: &mut R) -> ResponseVector {
    let mut y = inst.signal();
    if inst.sigma > 0.0 {
        for v in y.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *v += inst.sigma * e;
        }
    }
    ResponseVector::new(y).expect("finite")
}

/// Three internal nodes over three leaves. Node 0 feeds nodes 1, 2 and every
/// leaf; nodes 1 and 2 each feed two leaves.
pub fn toy_topology() -> NetworkTopology {
    let positions = vec![[0.0, 0.1], [-0.25, -0.25], [0.3, -0.27], [-0.6, -0.5], [0.65, -0.5], [0.0, -0.9]];
    let edges = vec![(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 3), (1, 5), (2, 4), (2, 5)];
    NetworkTopology::new(positions, edges).expect("valid fixture")
}

/// The toy network with losses `(10, 10, 0)` and no noise.
pub fn toy_instance() -> TomographyInstance {
    TomographyInstance::new(toy_topology(), vec![10.0, 10.0, 0.0], 0.0).expect("valid fixture")
}
