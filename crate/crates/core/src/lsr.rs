//! Latent space roadmap construction and planning.
//!
//! Building runs in three phases: a reference graph over every tuple endpoint
//! with one edge per action pair; ε-clustering of its vertices into valid
//! regions; and a roadmap with one node per region and an edge wherever a
//! reference edge crosses two regions. Neighbourhoods use the strict
//! inequality `‖w − w′‖ < ε` throughout.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::action::ActionSpec;
use crate::error::{Error, Result};
use crate::latent::LatentPoint;
use crate::metric::Metric;
use crate::tuple::TransitionTuple;

/// Default cap on the number of shortest paths returned per query.
pub const DEFAULT_PATH_CAP: usize = 100;

/// Every tuple endpoint as its own vertex, plus one directed edge per action
/// tuple. Vertex `2k` is `z1` of tuple `k` and vertex `2k + 1` its `z2`.
#[derive(Clone, Debug)]
pub struct ReferenceGraph {
    pub vertices: Vec<LatentPoint>,
    pub edges: Vec<(usize, usize)>,
    /// Action specifics of each edge, when the tuple carried them.
    pub edge_actions: Vec<Option<ActionSpec>>,
}

impl ReferenceGraph {
    pub fn build(tuples: &[TransitionTuple]) -> Result<Self> {
        let dim = tuples.first().map(|t| t.z1.dim());
        let mut vertices = Vec::with_capacity(2 * tuples.len());
        let mut edges = Vec::new();
        let mut edge_actions = Vec::new();
        for t in tuples {
            for z in [&t.z1, &t.z2] {
                if Some(z.dim()) != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim.unwrap_or(0),
                        actual: z.dim(),
                    });
                }
            }
            let v1 = vertices.len();
            vertices.push(t.z1.clone());
            vertices.push(t.z2.clone());
            if let Some(u) = t.action {
                edges.push((v1, v1 + 1));
                edge_actions.push(Some(u));
            }
        }
        Ok(Self {
            vertices,
            edges,
            edge_actions,
        })
    }
}

/// A set of vertices closed under strict ε-adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidRegion {
    /// Sorted vertex indices.
    pub members: Vec<usize>,
    pub epsilon: f64,
    pub metric: Metric,
}

/// Partitions `vertices` into the connected components of the graph joining
/// every pair closer than `epsilon`. Regions are ordered by their smallest
/// member, so the result does not depend on any selection order.
pub fn cluster_epsilon<P: AsRef<[f64]> + Sync>(vertices: &[P], epsilon: f64, metric: Metric) -> Result<Vec<ValidRegion>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let n = vertices.len();
    let mut region_of = vec![usize::MAX; n];
    let mut regions = Vec::new();
    let mut unassigned: Vec<usize> = (0..n).collect();
    let mut frontier = VecDeque::new();
    for seed in 0..n {
        if region_of[seed] != usize::MAX {
            continue;
        }
        let id = regions.len();
        region_of[seed] = id;
        frontier.push_back(seed);
        let mut members = vec![seed];
        unassigned.retain(|&v| v != seed);
        // grow the region until no unassigned vertex lies within ε of it
        while let Some(w) = frontier.pop_front() {
            let base = vertices[w].as_ref();
            let mut keep = Vec::with_capacity(unassigned.len());
            for &v in &unassigned {
                if metric.within(base, vertices[v].as_ref(), epsilon) {
                    region_of[v] = id;
                    members.push(v);
                    frontier.push_back(v);
                } else {
                    keep.push(v);
                }
            }
            unassigned = keep;
        }
        members.sort_unstable();
        regions.push(ValidRegion {
            members,
            epsilon,
            metric,
        });
    }
    Ok(regions)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadmapNode {
    pub id: usize,
    pub representative: LatentPoint,
    pub member_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadmapEdge {
    pub src: usize,
    pub dst: usize,
    /// Every action witnessed between the two regions, in data order.
    pub action_examples: Vec<ActionSpec>,
}

/// The roadmap: one node per surviving valid region and directed edges
/// induced by action pairs between regions.
#[derive(Clone, Debug, PartialEq)]
pub struct Roadmap {
    pub epsilon: f64,
    pub metric: Metric,
    pub min_samples: usize,
    pub latent_dim: usize,
    pub nodes: Vec<RoadmapNode>,
    pub edges: Vec<RoadmapEdge>,
    adjacency: Vec<Vec<usize>>,
    reverse: Vec<Vec<usize>>,
}

/// Representative of a region: the member mean when it lies within ε of some
/// member, otherwise the member closest to the mean (smallest index on ties).
pub fn region_representative(vertices: &[LatentPoint], members: &[usize], epsilon: f64, metric: Metric) -> Result<LatentPoint> {
    let mean = LatentPoint::mean(members.iter().map(|&i| vertices[i].as_slice()))?;
    if members.iter().any(|&i| metric.within(&mean, &vertices[i], epsilon)) {
        return Ok(mean);
    }
    let best = members
        .iter()
        .copied()
        .min_by(|&a, &b| {
            metric
                .eval(&mean, &vertices[a])
                .total_cmp(&metric.eval(&mean, &vertices[b]))
                .then(a.cmp(&b))
        })
        .expect("regions are non-empty");
    Ok(vertices[best].clone())
}

impl Roadmap {
    /// Builds the roadmap from latent tuples and drops regions with fewer than
    /// `min_samples` members together with their edges.
    pub fn build(tuples: &[TransitionTuple], epsilon: f64, metric: Metric, min_samples: usize) -> Result<Self> {
        if min_samples == 0 {
            return Err(Error::InvalidParameter("min_samples must be at least 1".into()));
        }
        if tuples.is_empty() {
            return Err(Error::Empty("no tuples to build a roadmap from"));
        }
        let graph = ReferenceGraph::build(tuples)?;
        let regions = cluster_epsilon(&graph.vertices, epsilon, metric)?;
        let mut region_of = vec![0usize; graph.vertices.len()];
        for (r, region) in regions.iter().enumerate() {
            for &m in &region.members {
                region_of[m] = r;
            }
        }

        let mut node_of_region = vec![None; regions.len()];
        let mut nodes = Vec::new();
        for (r, region) in regions.iter().enumerate() {
            if region.members.len() < min_samples {
                continue;
            }
            let id = nodes.len();
            node_of_region[r] = Some(id);
            nodes.push(RoadmapNode {
                id,
                representative: region_representative(&graph.vertices, &region.members, epsilon, metric)?,
                member_count: region.members.len(),
            });
        }
        if nodes.is_empty() {
            return Err(Error::EmptyRoadmap);
        }

        let mut collected: BTreeMap<(usize, usize), Vec<ActionSpec>> = BTreeMap::new();
        for (&(v1, v2), action) in graph.edges.iter().zip(&graph.edge_actions) {
            let (Some(i), Some(j)) = (node_of_region[region_of[v1]], node_of_region[region_of[v2]]) else {
                continue;
            };
            if i == j {
                continue;
            }
            let entry = collected.entry((i, j)).or_default();
            if let Some(u) = action {
                entry.push(*u);
            }
        }
        let edges = collected
            .into_iter()
            .map(|((src, dst), action_examples)| RoadmapEdge {
                src,
                dst,
                action_examples,
            })
            .collect();
        Self::from_parts(epsilon, metric, min_samples, graph.vertices[0].dim(), nodes, edges)
    }

    /// Assembles a roadmap from stored nodes and edges, checking ids.
    pub fn from_parts(
        epsilon: f64,
        metric: Metric,
        min_samples: usize,
        latent_dim: usize,
        nodes: Vec<RoadmapNode>,
        edges: Vec<RoadmapEdge>,
    ) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::InvalidRecord(format!("node {i} carries id {}", n.id)));
            }
            if n.representative.dim() != latent_dim {
                return Err(Error::DimensionMismatch {
                    expected: latent_dim,
                    actual: n.representative.dim(),
                });
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut reverse = vec![Vec::new(); nodes.len()];
        for e in &edges {
            if e.src >= nodes.len() || e.dst >= nodes.len() || e.src == e.dst {
                return Err(Error::InvalidRecord(format!("bad edge {} -> {}", e.src, e.dst)));
            }
            adjacency[e.src].push(e.dst);
            reverse[e.dst].push(e.src);
        }
        for list in adjacency.iter_mut().chain(reverse.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            epsilon,
            metric,
            min_samples,
            latent_dim,
            nodes,
            edges,
            adjacency,
            reverse,
        })
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Node whose representative is closest to `z`; ties go to the smaller id.
    pub fn nearest_node(&self, z: &[f64]) -> Result<usize> {
        if z.len() != self.latent_dim {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim,
                actual: z.len(),
            });
        }
        let mut best = (0, f64::INFINITY);
        for n in &self.nodes {
            let d = self.metric.eval(&n.representative, z);
            if d < best.1 {
                best = (n.id, d);
            }
        }
        Ok(best.0)
    }

    fn hop_distances(&self, from: usize, graph: &[Vec<usize>]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        let mut queue = VecDeque::from([from]);
        dist[from] = 0;
        while let Some(u) = queue.pop_front() {
            for &v in &graph[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// All minimum-hop directed paths from `start` to `goal`, in lexicographic
    /// node-id order, truncated to the first `cap`. Unreachable goals give an
    /// empty list.
    pub fn all_shortest_paths(&self, start: usize, goal: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
        let n = self.nodes.len();
        if start >= n || goal >= n {
            return Err(Error::InvalidParameter(format!(
                "node ids ({start}, {goal}) out of range 0..{n}"
            )));
        }
        if cap == 0 {
            return Ok(Vec::new());
        }
        if start == goal {
            return Ok(vec![vec![start]]);
        }
        let to_goal = self.hop_distances(goal, &self.reverse);
        if to_goal[start] == usize::MAX {
            return Ok(Vec::new());
        }
        let mut paths = Vec::new();
        let mut path = vec![start];
        self.extend_paths(goal, &to_goal, cap, &mut path, &mut paths);
        Ok(paths)
    }

    fn extend_paths(&self, goal: usize, to_goal: &[usize], cap: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let here = *path.last().unwrap();
        if here == goal {
            out.push(path.clone());
            return;
        }
        for &next in &self.adjacency[here] {
            if out.len() >= cap {
                return;
            }
            // stay on a shortest path: each hop must bring the goal one step closer
            if to_goal[next] != usize::MAX && to_goal[next] + 1 == to_goal[here] {
                path.push(next);
                self.extend_paths(goal, to_goal, cap, path, out);
                path.pop();
            }
        }
    }

    /// Latent plans between two latent states: node paths mapped to their
    /// representatives.
    pub fn plan(&self, z_start: &[f64], z_goal: &[f64], cap: usize) -> Result<Vec<LatentPlan>> {
        let start = self.nearest_node(z_start)?;
        let goal = self.nearest_node(z_goal)?;
        Ok(self
            .all_shortest_paths(start, goal, cap)?
            .into_iter()
            .map(|nodes| LatentPlan {
                states: nodes.iter().map(|&i| self.nodes[i].representative.clone()).collect(),
                nodes,
            })
            .collect())
    }
}

/// A sequence of region representatives along one roadmap path.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPlan {
    pub nodes: Vec<usize>,
    pub states: Vec<LatentPoint>,
}

/// `n` equally spaced points on the segment from `z_start` to `z_goal`,
/// endpoints included.
pub fn linear_interpolation_plan(z_start: &[f64], z_goal: &[f64], n: usize) -> Result<Vec<LatentPoint>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("interpolation needs n >= 2, got {n}")));
    }
    if z_start.len() != z_goal.len() {
        return Err(Error::DimensionMismatch {
            expected: z_start.len(),
            actual: z_goal.len(),
        });
    }
    (0..n)
        .map(|k| {
            let t = k as f64 / (n - 1) as f64;
            let coords = z_start
                .iter()
                .zip(z_goal)
                .map(|(a, b)| if k == n - 1 { *b } else { a + t * (b - a) })
                .collect();
            LatentPoint::new(coords)
        })
        .collect()
}
