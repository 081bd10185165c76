//! Conforming triangulations refined by newest-vertex bisection.
//!
//! Every mesh is a set of leaves of a binary refinement forest shared by all meshes
//! derived from the same macro triangulation. Because the forest is shared, two meshes
//! are compatible exactly when they point to the same [`Forest`], and the finest common
//! coarsening (`meet`) and coarsest common refinement (`join`) are tree intersection and
//! tree union.
//!
//! Cells are stored as `[peak, e1, e2]` with positive orientation; the refinement edge
//! is `(e1, e2)`, opposite the newest vertex `peak`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use thiserror::Error;

pub type VertexId = u32;
pub type CellId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]")]
    DegenerateDomain { x0: f64, x1: f64, y0: f64, y1: f64 },
    #[error("subdivisions must be at least 1 in each direction, got ({0}, {1})")]
    BadSubdivisions(usize, usize),
    #[error("cell index {index} out of range for mesh with {cells} cells")]
    InvalidCell { index: usize, cells: usize },
    #[error("meshes do not share a refinement forest")]
    Incompatible,
    #[error("mesh is not a refinement of the requested coarser mesh")]
    NotARefinement,
    #[error("invalid refinement path: {0}")]
    InvalidPath(String),
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

#[derive(Debug, Clone)]
struct CellNode {
    verts: [VertexId; 3],
    parent: Option<CellId>,
    children: Option<[CellId; 2]>,
    generation: u32,
    root: u32,
}

#[derive(Debug, Default)]
struct ForestData {
    coords: Vec<[f64; 2]>,
    cells: Vec<CellNode>,
    midpoints: HashMap<(VertexId, VertexId), VertexId>,
}

impl ForestData {
    fn midpoint(&mut self, a: VertexId, b: VertexId) -> VertexId {
        let key = if a < b { (a, b) } else { (b, a) };
        if let Some(&m) = self.midpoints.get(&key) {
            return m;
        }
        let pa = self.coords[key.0 as usize];
        let pb = self.coords[key.1 as usize];
        let id = self.coords.len() as VertexId;
        self.coords
            .push([(pa[0] + pb[0]) * 0.5, (pa[1] + pb[1]) * 0.5]);
        self.midpoints.insert(key, id);
        id
    }

    fn children(&mut self, cell: CellId) -> [CellId; 2] {
        if let Some(ch) = self.cells[cell as usize].children {
            return ch;
        }
        let node = self.cells[cell as usize].clone();
        let [peak, e1, e2] = node.verts;
        let m = self.midpoint(e1, e2);
        let first = self.cells.len() as CellId;
        for verts in [[m, peak, e1], [m, e2, peak]] {
            self.cells.push(CellNode {
                verts,
                parent: Some(cell),
                children: None,
                generation: node.generation + 1,
                root: node.root,
            });
        }
        let ch = [first, first + 1];
        self.cells[cell as usize].children = Some(ch);
        ch
    }
}

/// Shared refinement forest over a macro triangulation of a rectangle.
#[derive(Debug)]
pub struct Forest {
    data: RwLock<ForestData>,
    next_mesh_id: AtomicU64,
    domain: Rect,
    subdivisions: (usize, usize),
    macro_min_angle: f64,
    n_macro: usize,
}

impl Forest {
    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn subdivisions(&self) -> (usize, usize) {
        self.subdivisions
    }

    /// Minimum interior angle (radians) over the macro triangulation.
    pub fn macro_min_angle(&self) -> f64 {
        self.macro_min_angle
    }

    fn fresh_id(&self) -> u64 {
        self.next_mesh_id.fetch_add(1, Ordering::Relaxed)
    }
}

/// An edge of a mesh, with local vertex indices (sorted) and adjacent cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub verts: [usize; 2],
    pub cells: [usize; 2],
    pub boundary: bool,
}

/// A conforming triangulation: a set of leaves of a [`Forest`].
#[derive(Debug, Clone)]
pub struct TriMesh {
    forest: Arc<Forest>,
    mesh_id: u64,
    leaves: Vec<CellId>,
    vertex_ids: Vec<VertexId>,
    coords: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    generations: Vec<u32>,
    edges: Vec<Edge>,
    cell_edges: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
}

impl TriMesh {
    /// Structured triangulation of `domain` with `nx * ny` rectangles, each split along
    /// the diagonal from its lower-left to its upper-right corner.
    pub fn build_macro(domain: Rect, nx: usize, ny: usize) -> Result<Self, MeshError> {
        if !(domain.width() > 0.0 && domain.height() > 0.0)
            || !domain.width().is_finite()
            || !domain.height().is_finite()
        {
            return Err(MeshError::DegenerateDomain {
                x0: domain.x0,
                x1: domain.x1,
                y0: domain.y0,
                y1: domain.y1,
            });
        }
        if nx == 0 || ny == 0 {
            return Err(MeshError::BadSubdivisions(nx, ny));
        }
        let mut data = ForestData::default();
        for j in 0..=ny {
            for i in 0..=nx {
                let x = if i == nx {
                    domain.x1
                } else {
                    domain.x0 + domain.width() * i as f64 / nx as f64
                };
                let y = if j == ny {
                    domain.y1
                } else {
                    domain.y0 + domain.height() * j as f64 / ny as f64
                };
                data.coords.push([x, y]);
            }
        }
        let vid = |i: usize, j: usize| (j * (nx + 1) + i) as VertexId;
        let mut min_angle = f64::INFINITY;
        for j in 0..ny {
            for i in 0..nx {
                let (p00, p10, p11, p01) =
                    (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                for tri in [[p00, p10, p11], [p00, p11, p01]] {
                    let verts = orient_refinement_edge(&data.coords, tri);
                    min_angle = min_angle.min(min_angle_of(&corner_coords(&data.coords, verts)));
                    let root = data.cells.len() as u32;
                    data.cells.push(CellNode {
                        verts,
                        parent: None,
                        children: None,
                        generation: 0,
                        root,
                    });
                }
            }
        }
        let n_macro = data.cells.len();
        let forest = Arc::new(Forest {
            data: RwLock::new(data),
            next_mesh_id: AtomicU64::new(0),
            domain,
            subdivisions: (nx, ny),
            macro_min_angle: min_angle,
            n_macro,
        });
        let leaves = (0..n_macro as CellId).collect();
        Ok(Self::from_leaves(forest, leaves))
    }

    /// Unit square with `n x n` subdivisions, grid spacing `1/n`.
    pub fn unit_square(n: usize) -> Self {
        Self::build_macro(Rect::UNIT, n, n).expect("unit square is a valid domain")
    }

    fn from_leaves(forest: Arc<Forest>, leaves: Vec<CellId>) -> Self {
        let id = forest.fresh_id();
        Self::from_leaves_with_id(forest, leaves, id)
    }

    fn from_leaves_with_id(forest: Arc<Forest>, mut leaves: Vec<CellId>, mesh_id: u64) -> Self {
        leaves.sort_unstable();
        leaves.dedup();
        let data = forest.data.read().expect("forest lock poisoned");
        let mut vertex_ids: Vec<VertexId> = leaves
            .iter()
            .flat_map(|&c| data.cells[c as usize].verts)
            .collect();
        vertex_ids.sort_unstable();
        vertex_ids.dedup();
        let local: HashMap<VertexId, usize> = vertex_ids
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        let coords: Vec<[f64; 2]> = vertex_ids
            .iter()
            .map(|&v| data.coords[v as usize])
            .collect();
        let cells: Vec<[usize; 3]> = leaves
            .iter()
            .map(|&c| data.cells[c as usize].verts.map(|v| local[&v]))
            .collect();
        let generations = leaves
            .iter()
            .map(|&c| data.cells[c as usize].generation)
            .collect();
        drop(data);

        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::with_capacity(cells.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(cells.len() * 2);
        let mut cell_edges = Vec::with_capacity(cells.len());
        for (ci, tri) in cells.iter().enumerate() {
            let mut ce = [0usize; 3];
            for (k, slot) in ce.iter_mut().enumerate() {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let key = if a < b { [a, b] } else { [b, a] };
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        verts: key,
                        cells: [ci, ci],
                        boundary: true,
                    });
                    edges.len() - 1
                });
                if edges[e].cells[0] != ci {
                    edges[e].cells[1] = ci;
                    edges[e].boundary = false;
                }
                *slot = e;
            }
            cell_edges.push(ce);
        }
        let mut boundary_vertex = vec![false; coords.len()];
        for e in edges.iter().filter(|e| e.boundary) {
            boundary_vertex[e.verts[0]] = true;
            boundary_vertex[e.verts[1]] = true;
        }
        Self {
            forest,
            mesh_id,
            leaves,
            vertex_ids,
            coords,
            cells,
            generations,
            edges,
            cell_edges,
            boundary_vertex,
        }
    }

    pub fn forest(&self) -> &Arc<Forest> {
        &self.forest
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Forest-global vertex ids, sorted; local vertex `i` is `vertex_ids()[i]`.
    pub fn vertex_ids(&self) -> &[VertexId] {
        &self.vertex_ids
    }

    /// Local vertex index of a forest vertex, if it belongs to this mesh.
    pub fn local_vertex(&self, id: VertexId) -> Option<usize> {
        self.vertex_ids.binary_search(&id).ok()
    }

    /// Cells as local vertex triples `[peak, e1, e2]` (refinement edge `e1-e2`).
    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    /// Forest cell ids of the leaves, sorted; local cell `i` is `leaves()[i]`.
    pub fn leaves(&self) -> &[CellId] {
        &self.leaves
    }

    pub fn generations(&self) -> &[u32] {
        &self.generations
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// For each cell, the edge opposite each of its three vertices.
    pub fn cell_edges(&self) -> &[[usize; 3]] {
        &self.cell_edges
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn cell_coords(&self, c: usize) -> [[f64; 2]; 3] {
        self.cells[c].map(|v| self.coords[v])
    }

    /// Positive cell area.
    pub fn cell_area(&self, c: usize) -> f64 {
        signed_area(&self.cell_coords(c))
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].verts;
        dist(self.coords[a], self.coords[b])
    }

    /// Per-cell diameters (longest edge) and their maximum.
    pub fn mesh_size(&self) -> (Vec<f64>, f64) {
        let h: Vec<f64> = (0..self.n_cells())
            .map(|c| diameter(&self.cell_coords(c)))
            .collect();
        let max = h.iter().copied().fold(0.0, f64::max);
        (h, max)
    }

    pub fn min_angle(&self) -> f64 {
        (0..self.n_cells())
            .map(|c| min_angle_of(&self.cell_coords(c)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether `self` and `other` belong to the same refinement forest.
    pub fn is_compatible(&self, other: &TriMesh) -> bool {
        Arc::ptr_eq(&self.forest, &other.forest)
    }

    fn check_compatible(&self, other: &TriMesh) -> Result<(), MeshError> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(MeshError::Incompatible)
        }
    }

    /// Same leaves (identical triangulation).
    pub fn same_cells(&self, other: &TriMesh) -> bool {
        self.is_compatible(other) && self.leaves == other.leaves
    }

    /// Bisects every marked cell (local indices) and closes the result to a conforming mesh.
    pub fn bisect(&self, marked: &[usize]) -> Result<TriMesh, MeshError> {
        if let Some(&bad) = marked.iter().find(|&&c| c >= self.n_cells()) {
            return Err(MeshError::InvalidCell {
                index: bad,
                cells: self.n_cells(),
            });
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let mut leaves: BTreeSet<CellId> = self.leaves.iter().copied().collect();
        let mut pending: Vec<CellId> = marked.iter().map(|&c| self.leaves[c]).collect();
        let mut data = self.forest.data.write().expect("forest lock poisoned");
        while !pending.is_empty() {
            for c in pending.drain(..) {
                if leaves.remove(&c) {
                    let [a, b] = data.children(c);
                    leaves.insert(a);
                    leaves.insert(b);
                }
            }
            // Closure: any leaf with a vertex of the current mesh on one of its edges.
            let present: HashSet<VertexId> = leaves
                .iter()
                .flat_map(|&c| data.cells[c as usize].verts)
                .collect();
            for &c in &leaves {
                let v = data.cells[c as usize].verts;
                let hanging = (0..3).any(|k| {
                    let (a, b) = (v[(k + 1) % 3], v[(k + 2) % 3]);
                    let key = if a < b { (a, b) } else { (b, a) };
                    data.midpoints
                        .get(&key)
                        .is_some_and(|m| present.contains(m))
                });
                if hanging {
                    pending.push(c);
                }
            }
        }
        drop(data);
        Ok(TriMesh::from_leaves(
            self.forest.clone(),
            leaves.into_iter().collect(),
        ))
    }

    /// Bisects all cells `rounds` times. Two rounds halve the mesh size.
    pub fn refine_uniform(&self, rounds: usize) -> TriMesh {
        let mut mesh = self.clone();
        for _ in 0..rounds {
            let all: Vec<usize> = (0..mesh.n_cells()).collect();
            mesh = mesh.bisect(&all).expect("all cell indices are valid");
        }
        mesh
    }

    fn tree_nodes(&self, data: &ForestData) -> HashSet<CellId> {
        let mut set = HashSet::with_capacity(self.leaves.len() * 2);
        for &leaf in &self.leaves {
            let mut c = Some(leaf);
            while let Some(id) = c {
                if !set.insert(id) {
                    break;
                }
                c = data.cells[id as usize].parent;
            }
        }
        set
    }

    fn leaves_of(nodes: &HashSet<CellId>, data: &ForestData) -> Vec<CellId> {
        nodes
            .iter()
            .copied()
            .filter(|&c| match data.cells[c as usize].children {
                Some([a, b]) => !(nodes.contains(&a) && nodes.contains(&b)),
                None => true,
            })
            .collect()
    }

    /// Finest common coarsening: the leaves of the intersection of both refinement trees.
    pub fn meet(&self, other: &TriMesh) -> Result<TriMesh, MeshError> {
        self.check_compatible(other)?;
        if self.leaves == other.leaves {
            return Ok(self.clone());
        }
        let data = self.forest.data.read().expect("forest lock poisoned");
        let a = self.tree_nodes(&data);
        let b = other.tree_nodes(&data);
        let common: HashSet<CellId> = a.intersection(&b).copied().collect();
        let leaves = Self::leaves_of(&common, &data);
        drop(data);
        Ok(self.reuse_or_new(other, leaves))
    }

    /// Coarsest common refinement: the leaves of the union of both refinement trees.
    pub fn join(&self, other: &TriMesh) -> Result<TriMesh, MeshError> {
        self.check_compatible(other)?;
        if self.leaves == other.leaves {
            return Ok(self.clone());
        }
        let data = self.forest.data.read().expect("forest lock poisoned");
        let mut nodes = self.tree_nodes(&data);
        nodes.extend(other.tree_nodes(&data));
        let leaves = Self::leaves_of(&nodes, &data);
        drop(data);
        Ok(self.reuse_or_new(other, leaves))
    }

    fn reuse_or_new(&self, other: &TriMesh, mut leaves: Vec<CellId>) -> TriMesh {
        leaves.sort_unstable();
        if leaves == self.leaves {
            self.clone()
        } else if leaves == other.leaves {
            other.clone()
        } else {
            TriMesh::from_leaves(self.forest.clone(), leaves)
        }
    }

    /// Coarsest common refinement of several compatible meshes.
    pub fn join_all<'a>(
        meshes: impl IntoIterator<Item = &'a TriMesh>,
    ) -> Result<TriMesh, MeshError> {
        let mut iter = meshes.into_iter();
        let first = iter
            .next()
            .expect("join_all needs at least one mesh")
            .clone();
        iter.try_fold(first, |acc, m| acc.join(m))
    }

    /// Whether every cell of `self` lies inside a cell of `coarser` (tree containment).
    pub fn is_refinement_of(&self, coarser: &TriMesh) -> bool {
        if !self.is_compatible(coarser) {
            return false;
        }
        let data = self.forest.data.read().expect("forest lock poisoned");
        let mine = self.tree_nodes(&data);
        coarser.leaves.iter().all(|c| mine.contains(c))
    }

    /// For every cell of `self`, the local index of the cell of `coarser` containing it.
    pub fn ancestor_map(&self, coarser: &TriMesh) -> Result<Vec<usize>, MeshError> {
        self.check_compatible(coarser)?;
        if self.leaves == coarser.leaves {
            return Ok((0..self.n_cells()).collect());
        }
        let index: HashMap<CellId, usize> = coarser
            .leaves
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i))
            .collect();
        let data = self.forest.data.read().expect("forest lock poisoned");
        self.leaves
            .iter()
            .map(|&leaf| {
                let mut c = Some(leaf);
                while let Some(id) = c {
                    if let Some(&i) = index.get(&id) {
                        return Ok(i);
                    }
                    c = data.cells[id as usize].parent;
                }
                Err(MeshError::NotARefinement)
            })
            .collect()
    }

    /// Interior edges keyed by sorted forest vertex ids.
    pub fn interior_edge_keys(&self) -> BTreeSet<(VertexId, VertexId)> {
        self.edges
            .iter()
            .filter(|e| !e.boundary)
            .map(|e| (self.vertex_ids[e.verts[0]], self.vertex_ids[e.verts[1]]))
            .collect()
    }

    /// Encodes each leaf as its macro root and the child-index path from that root.
    pub fn leaf_paths(&self) -> Vec<(u32, Vec<u8>)> {
        let data = self.forest.data.read().expect("forest lock poisoned");
        self.leaves
            .iter()
            .map(|&leaf| {
                let mut path = Vec::new();
                let mut c = leaf;
                while let Some(p) = data.cells[c as usize].parent {
                    let ch = data.cells[p as usize]
                        .children
                        .expect("parent has children");
                    path.push(if ch[0] == c { 0 } else { 1 });
                    c = p;
                }
                path.reverse();
                (data.cells[leaf as usize].root, path)
            })
            .collect()
    }

    /// Rebuilds a mesh in this mesh's forest from leaf paths (inverse of [`TriMesh::leaf_paths`]).
    pub fn from_leaf_paths(&self, paths: &[(u32, Vec<u8>)]) -> Result<TriMesh, MeshError> {
        let mut data = self.forest.data.write().expect("forest lock poisoned");
        let mut leaves = Vec::with_capacity(paths.len());
        for (root, path) in paths {
            if *root as usize >= self.forest.n_macro {
                return Err(MeshError::InvalidPath(format!(
                    "macro cell {root} out of range"
                )));
            }
            let mut c = *root;
            for &bit in path {
                if bit > 1 {
                    return Err(MeshError::InvalidPath(format!("child index {bit}")));
                }
                c = data.children(c)[bit as usize];
            }
            leaves.push(c);
        }
        drop(data);
        let mesh = TriMesh::from_leaves(self.forest.clone(), leaves);
        let area: f64 = (0..mesh.n_cells()).map(|c| mesh.cell_area(c)).sum();
        let expected = self.forest.domain.area();
        if mesh.n_cells() != paths.len() || (area - expected).abs() > 1e-9 * expected {
            return Err(MeshError::InvalidPath(
                "leaf paths do not tile the domain".to_string(),
            ));
        }
        if !mesh.is_conforming() {
            return Err(MeshError::InvalidPath(
                "leaf paths give a non-conforming mesh".into(),
            ));
        }
        Ok(mesh)
    }

    /// No hanging vertices: interior edges have two cells and no mesh vertex lies on an edge.
    pub fn is_conforming(&self) -> bool {
        let data = self.forest.data.read().expect("forest lock poisoned");
        let present: HashSet<VertexId> = self.vertex_ids.iter().copied().collect();
        for e in &self.edges {
            let key = (self.vertex_ids[e.verts[0]], self.vertex_ids[e.verts[1]]);
            if data
                .midpoints
                .get(&key)
                .is_some_and(|m| present.contains(m))
            {
                return false;
            }
        }
        drop(data);
        let domain = self.forest.domain;
        let on_boundary = |p: [f64; 2]| {
            let tol = 1e-12 * domain.diameter();
            (p[0] - domain.x0).abs() < tol
                || (p[0] - domain.x1).abs() < tol
                || (p[1] - domain.y0).abs() < tol
                || (p[1] - domain.y1).abs() < tol
        };
        self.edges.iter().filter(|e| e.boundary).all(|e| {
            let mid = midpoint(self.coords[e.verts[0]], self.coords[e.verts[1]]);
            on_boundary(mid)
        })
    }
}

/// Interior skeletons of two compatible meshes, expressed on their common refinement.
///
/// Each set holds edges of the common refinement keyed by sorted forest vertex ids; an
/// edge belongs to the skeleton of a mesh when it lies on one of that mesh's interior
/// edges.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSets {
    pub current: BTreeSet<(VertexId, VertexId)>,
    pub previous: BTreeSet<(VertexId, VertexId)>,
    pub intersection: BTreeSet<(VertexId, VertexId)>,
    pub union: BTreeSet<(VertexId, VertexId)>,
}

pub fn skeleton_sets(cur: &TriMesh, prev: &TriMesh) -> Result<SkeletonSets, MeshError> {
    let fine = cur.join(prev)?;
    let on_skeleton = |mesh: &TriMesh| -> Result<BTreeSet<(VertexId, VertexId)>, MeshError> {
        let anc = fine.ancestor_map(mesh)?;
        let mut set = BTreeSet::new();
        for e in fine.edges().iter().filter(|e| !e.boundary) {
            let (c0, c1) = (anc[e.cells[0]], anc[e.cells[1]]);
            if c0 != c1 {
                set.insert((fine.vertex_ids[e.verts[0]], fine.vertex_ids[e.verts[1]]));
            }
        }
        Ok(set)
    };
    let current = on_skeleton(cur)?;
    let previous = on_skeleton(prev)?;
    let intersection = current.intersection(&previous).copied().collect();
    let union = current.union(&previous).copied().collect();
    Ok(SkeletonSets {
        current,
        previous,
        intersection,
        union,
    })
}

/// Dörfler (bulk) marking: the smallest set of cells, taken in decreasing indicator order,
/// whose indicators sum to at least `theta` times the total.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Vec<usize> {
    let total: f64 = indicators.iter().sum();
    if total <= 0.0 || theta <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for c in order {
        if acc >= theta * total {
            break;
        }
        acc += indicators[c];
        marked.push(c);
    }
    marked
}

fn orient_refinement_edge(coords: &[[f64; 2]], tri: [VertexId; 3]) -> [VertexId; 3] {
    // Longest edge as refinement edge; ties broken by the smallest opposite vertex id.
    let p = tri.map(|v| coords[v as usize]);
    let mut best = 0;
    let mut best_len = -1.0;
    for k in 0..3 {
        let len = dist(p[(k + 1) % 3], p[(k + 2) % 3]);
        let better = len > best_len * (1.0 + 1e-12)
            || ((len - best_len).abs() <= 1e-12 * best_len && tri[k] < tri[best]);
        if better {
            best = k;
            best_len = len;
        }
    }
    [tri[best], tri[(best + 1) % 3], tri[(best + 2) % 3]]
}

fn corner_coords(coords: &[[f64; 2]], v: [VertexId; 3]) -> [[f64; 2]; 3] {
    v.map(|i| coords[i as usize])
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5]
}

pub(crate) fn signed_area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

pub(crate) fn diameter(p: &[[f64; 2]; 3]) -> f64 {
    dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]))
}

fn min_angle_of(p: &[[f64; 2]; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let a = p[k];
            let b = p[(k + 1) % 3];
            let c = p[(k + 2) % 3];
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
            cos.clamp(-1.0, 1.0).acos()
        })
        .fold(f64::INFINITY, f64::min)
}
