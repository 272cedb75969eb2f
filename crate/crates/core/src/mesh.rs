//! Tetrahedral meshes, the anisotropic unit-cube generator and the face table.
//!
//! Local face `i` of a tetrahedron is the face opposite its vertex `i`. Every
//! face of the mesh is stored once in a [`FaceTable`], sorted
//! lexicographically by its (sorted) vertex indices, together with a fixed
//! unit normal `n_F`. The normal points out of the lower-indexed incident
//! tetrahedron; on the boundary this is the outward normal of the domain.

use std::sync::OnceLock;

use thiserror::Error;

use crate::{Point3, Vector3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("M must be a positive even integer, got {0}")]
    InvalidM(usize),
    #[error("N must be a positive integer, got {0}")]
    InvalidN(usize),
    #[error("tet {tet} references vertex {vertex}, but the mesh has {count} vertices")]
    VertexOutOfRange { tet: usize, vertex: usize, count: usize },
    #[error("tet {0} repeats a vertex")]
    RepeatedVertex(usize),
    #[error("face {face:?} is shared by {count} tetrahedra")]
    NonManifoldFace { face: [usize; 3], count: usize },
    #[error("mesh has no tetrahedra")]
    Empty,
}

/// Vertex indices of the face opposite local vertex `i`, in increasing local order.
pub const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// The six edges of a tetrahedron as local vertex pairs.
pub const LOCAL_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// A tetrahedron as four indices into the vertex array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tet {
    pub v: [usize; 4],
}

impl Tet {
    pub fn new(v: [usize; 4]) -> Self {
        Self { v }
    }
}

#[derive(Debug)]
pub struct Mesh {
    vertices: Vec<Point3>,
    tets: Vec<Tet>,
    faces: OnceLock<FaceTable>,
}

impl Clone for Mesh {
    fn clone(&self) -> Self {
        // The face table is rebuilt lazily; it only depends on vertices and tets.
        Self {
            vertices: self.vertices.clone(),
            tets: self.tets.clone(),
            faces: OnceLock::new(),
        }
    }
}

impl Mesh {
    /// Builds a mesh after checking that every tet references four distinct, existing vertices.
    ///
    /// Orientation and conformity are not checked here; see [`validate_conformity`].
    pub fn new(vertices: Vec<Point3>, tets: Vec<Tet>) -> Result<Self, MeshError> {
        let count = vertices.len();
        for (t, tet) in tets.iter().enumerate() {
            for &vertex in &tet.v {
                if vertex >= count {
                    return Err(MeshError::VertexOutOfRange { tet: t, vertex, count });
                }
            }
            for a in 0..4 {
                for b in a + 1..4 {
                    if tet.v[a] == tet.v[b] {
                        return Err(MeshError::RepeatedVertex(t));
                    }
                }
            }
        }
        Ok(Self {
            vertices,
            tets,
            faces: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn tets(&self) -> &[Tet] {
        &self.tets
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    /// Physical coordinates of the four vertices of tet `t`.
    pub fn tet_vertices(&self, t: usize) -> [Point3; 4] {
        self.tets[t].v.map(|i| self.vertices[i])
    }

    /// The face table, built on first use.
    ///
    /// # Panics
    ///
    /// Panics if the mesh has a face shared by more than two tetrahedra. Use
    /// [`build_face_table`] to get that condition as an error instead.
    pub fn faces(&self) -> &FaceTable {
        self.faces.get_or_init(|| {
            build_face_table(self).expect("mesh has a non-manifold face; call build_face_table to handle the error")
        })
    }

    pub fn num_faces(&self) -> usize {
        self.faces().len()
    }

    /// A copy whose face table has the orientation sign of local face `local`
    /// of tet `t` reversed. Only useful for testing the verification suite.
    #[doc(hidden)]
    pub fn with_face_sign_flip(&self, t: usize, local: usize) -> Self {
        let mut table = self.faces().clone();
        table.inject_sign_flip(t, local);
        let out = self.clone();
        out.faces.set(table).expect("fresh clone has no face table");
        out
    }

    /// Same mesh with the tetrahedra reordered: new tet `k` is old tet `order[k]`.
    pub fn permute_tets(&self, order: &[usize]) -> Self {
        let tets = order.iter().map(|&k| self.tets[k]).collect();
        Self {
            vertices: self.vertices.clone(),
            tets,
            faces: OnceLock::new(),
        }
    }

    /// Same mesh without tet `t`.
    pub fn without_tet(&self, t: usize) -> Self {
        let mut tets = self.tets.clone();
        tets.remove(t);
        Self {
            vertices: self.vertices.clone(),
            tets,
            faces: OnceLock::new(),
        }
    }

    /// Same mesh with the orientation of tet `t` reversed.
    pub fn with_flipped_tet(&self, t: usize) -> Self {
        let mut tets = self.tets.clone();
        tets[t].v.swap(0, 1);
        Self {
            vertices: self.vertices.clone(),
            tets,
            faces: OnceLock::new(),
        }
    }
}

/// Six times the signed volume of the tetrahedron `(a, b, c, d)`.
pub fn signed_volume6(p: &[Point3; 4]) -> f64 {
    (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0])))
}

/// Index of vertex `(i, j, k)` in the generated cube mesh.
fn grid_index(m: usize, i: usize, j: usize, k: usize) -> usize {
    i + (m + 1) * j + (m + 1) * (m + 1) * k
}

/// Generates the unit cube split into `M × M × N` boxes of size `(1/M, 1/M, 1/N)`.
///
/// Each box is cut into five tetrahedra: four corner tets and a central tet
/// whose edges are face diagonals of the box. The choice of diagonals
/// alternates with the parity of `i + j + k`, so neighbouring boxes induce the
/// same triangulation on their common face. The mesh has `(M+1)²(N+1)`
/// vertices, `5M²N` tetrahedra and `10M²N + 4MN + 2M²` faces.
pub fn generate_aniso_cube(m: usize, n: usize) -> Result<Mesh, MeshError> {
    if m == 0 || !m.is_multiple_of(2) {
        return Err(MeshError::InvalidM(m));
    }
    if n == 0 {
        return Err(MeshError::InvalidN(n));
    }
    let mut vertices = Vec::with_capacity((m + 1) * (m + 1) * (n + 1));
    for k in 0..=n {
        for j in 0..=m {
            for i in 0..=m {
                vertices.push(Point3::new(i as f64 / m as f64, j as f64 / m as f64, k as f64 / n as f64));
            }
        }
    }

    let mut tets = Vec::with_capacity(5 * m * m * n);
    for k in 0..n {
        for j in 0..m {
            for i in 0..m {
                // Box corners by local offset (a, b, c) ∈ {0,1}³, numbered a + 2b + 4c.
                let corner = |c: usize| grid_index(m, i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
                // Corners of even local parity form the central tet when the box parity is even.
                let even_box = (i + j + k) % 2 == 0;
                let (central, apexes) = if even_box {
                    ([0usize, 3, 5, 6], [1usize, 2, 4, 7])
                } else {
                    ([1, 2, 4, 7], [0, 3, 5, 6])
                };
                for &apex in &apexes {
                    // The three box neighbours of a corner differ from it in one bit.
                    let nbrs = [apex ^ 1, apex ^ 2, apex ^ 4];
                    tets.push(oriented(&vertices, [corner(apex), corner(nbrs[0]), corner(nbrs[1]), corner(nbrs[2])]));
                }
                tets.push(oriented(&vertices, central.map(corner)));
            }
        }
    }
    Mesh::new(vertices, tets)
}

fn oriented(vertices: &[Point3], mut v: [usize; 4]) -> Tet {
    let p = v.map(|i| vertices[i]);
    if signed_volume6(&p) < 0.0 {
        v.swap(2, 3);
    }
    Tet::new(v)
}

/// One triangular face of the mesh.
#[derive(Debug, Clone)]
pub struct Face {
    /// Sorted global vertex indices.
    pub vertices: [usize; 3],
    /// Incident tets in increasing order; `tets[1]` is `None` on the boundary.
    pub tets: [Option<usize>; 2],
    /// Local face index within each incident tet.
    pub local: [usize; 2],
    /// Unit normal, outward from `tets[0]`.
    pub normal: Vector3,
    pub area: f64,
    pub barycentre: Point3,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.tets[1].is_none()
    }

    pub fn first_tet(&self) -> usize {
        self.tets[0].expect("face without incident tet")
    }
}

/// All faces of a mesh with their incidence and orientation data.
#[derive(Debug, Clone)]
pub struct FaceTable {
    faces: Vec<Face>,
    /// Global face index of each local face of each tet.
    tet_faces: Vec<[usize; 4]>,
    /// `+1` where `n_F` is the outward normal of the tet, `-1` otherwise.
    tet_signs: Vec<[f64; 4]>,
}

impl FaceTable {
    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn get(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    /// Global face indices of the four local faces of tet `t`.
    pub fn tet_faces(&self, t: usize) -> [usize; 4] {
        self.tet_faces[t]
    }

    /// Orientation signs of the four local faces of tet `t` relative to `n_F`.
    pub fn tet_signs(&self, t: usize) -> [f64; 4] {
        self.tet_signs[t]
    }

    pub fn num_boundary(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary()).count()
    }

    pub fn num_interior(&self) -> usize {
        self.len() - self.num_boundary()
    }

    /// Reverses the orientation sign that tet `t` sees on its local face `local`.
    ///
    /// Breaks the normal-continuity convention on purpose; used to check that
    /// verification catches orientation errors.
    #[doc(hidden)]
    pub fn inject_sign_flip(&mut self, t: usize, local: usize) {
        self.tet_signs[t][local] = -self.tet_signs[t][local];
    }
}

/// Enumerates the faces of `mesh`.
///
/// Faces are ordered lexicographically by their sorted vertex indices, so the
/// table does not depend on the order of the tetrahedra.
pub fn build_face_table(mesh: &Mesh) -> Result<FaceTable, MeshError> {
    let mut entries: Vec<([usize; 3], usize, usize)> = Vec::with_capacity(4 * mesh.num_tets());
    for (t, tet) in mesh.tets().iter().enumerate() {
        for (local, lf) in LOCAL_FACES.iter().enumerate() {
            let mut key = lf.map(|a| tet.v[a]);
            key.sort_unstable();
            entries.push((key, t, local));
        }
    }
    entries.sort_unstable();

    let mut faces = Vec::with_capacity(entries.len() / 2 + 1);
    let mut tet_faces = vec![[usize::MAX; 4]; mesh.num_tets()];
    let mut tet_signs = vec![[0.0; 4]; mesh.num_tets()];
    let mut start = 0;
    while start < entries.len() {
        let key = entries[start].0;
        let mut end = start + 1;
        while end < entries.len() && entries[end].0 == key {
            end += 1;
        }
        let count = end - start;
        if count > 2 {
            return Err(MeshError::NonManifoldFace { face: key, count });
        }
        let group = &entries[start..end];
        let f = faces.len();
        let (t0, l0) = (group[0].1, group[0].2);
        let p = mesh.tet_vertices(t0);
        let outward = outward_area_vector(&p, l0);
        let area = outward.norm();
        let vs = key.map(|i| mesh.vertices()[i]);
        let barycentre = Point3::from((vs[0].coords + vs[1].coords + vs[2].coords) / 3.0);
        let mut tets = [Some(t0), None];
        let mut local = [l0, usize::MAX];
        tet_faces[t0][l0] = f;
        tet_signs[t0][l0] = 1.0;
        if let Some(&(_, t1, l1)) = group.get(1) {
            tets[1] = Some(t1);
            local[1] = l1;
            tet_faces[t1][l1] = f;
            tet_signs[t1][l1] = -1.0;
        }
        faces.push(Face {
            vertices: key,
            tets,
            local,
            normal: outward / area,
            area,
            barycentre,
        });
        start = end;
    }
    Ok(FaceTable {
        faces,
        tet_faces,
        tet_signs,
    })
}

/// Area-weighted normal of local face `i`, pointing away from vertex `i`.
pub fn outward_area_vector(p: &[Point3; 4], i: usize) -> Vector3 {
    let [a, b, c] = LOCAL_FACES[i].map(|k| p[k]);
    let mut n = (b - a).cross(&(c - a)) * 0.5;
    if n.dot(&(p[i] - a)) > 0.0 {
        n = -n;
    }
    n
}

/// Outcome of [`validate_conformity`].
#[derive(Debug, Clone)]
pub struct ConformityReport {
    pub volume_sum: f64,
    /// Volume of the bounding box of the vertices.
    pub domain_volume: f64,
    /// Number of faces with 1, 2 and more than 2 incident tets.
    pub incidence_histogram: [usize; 3],
    /// Faces with one incident tet that do not lie on the bounding box.
    pub dangling_faces: usize,
    /// Tets with non-positive signed volume.
    pub misoriented_tets: usize,
    /// Largest `|n_1 · n_2 + 1|` over interior faces.
    pub normal_mismatch: f64,
    pub passed: bool,
}

/// Checks coverage, absence of hanging faces and orientation of a mesh of a box domain.
pub fn validate_conformity(mesh: &Mesh) -> ConformityReport {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in mesh.vertices() {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    let domain_volume = if mesh.num_vertices() == 0 { 0.0 } else { (hi - lo).product() };
    let scale = (hi - lo).max().max(f64::MIN_POSITIVE);

    let mut volume_sum = 0.0;
    let mut misoriented_tets = 0;
    for t in 0..mesh.num_tets() {
        let v = signed_volume6(&mesh.tet_vertices(t)) / 6.0;
        if v <= 0.0 {
            misoriented_tets += 1;
        }
        volume_sum += v.abs();
    }

    let mut groups: Vec<([usize; 3], usize, usize)> = Vec::with_capacity(4 * mesh.num_tets());
    for (t, tet) in mesh.tets().iter().enumerate() {
        for (local, lf) in LOCAL_FACES.iter().enumerate() {
            let mut key = lf.map(|a| tet.v[a]);
            key.sort_unstable();
            groups.push((key, t, local));
        }
    }
    groups.sort_unstable();

    let on_box = |key: &[usize; 3]| {
        (0..3).any(|d| {
            [lo[d], hi[d]].iter().any(|&plane| {
                key.iter().all(|&v| (mesh.vertices()[v][d] - plane).abs() <= 1e-12 * scale)
            })
        })
    };

    let mut histogram = [0usize; 3];
    let mut dangling_faces = 0;
    let mut normal_mismatch: f64 = 0.0;
    let mut start = 0;
    while start < groups.len() {
        let mut end = start + 1;
        while end < groups.len() && groups[end].0 == groups[start].0 {
            end += 1;
        }
        match end - start {
            1 => {
                histogram[0] += 1;
                if !on_box(&groups[start].0) {
                    dangling_faces += 1;
                }
            }
            2 => {
                histogram[1] += 1;
                let n0 = outward_area_vector(&mesh.tet_vertices(groups[start].1), groups[start].2).normalize();
                let n1 = outward_area_vector(&mesh.tet_vertices(groups[start + 1].1), groups[start + 1].2).normalize();
                normal_mismatch = normal_mismatch.max((n0.dot(&n1) + 1.0).abs());
            }
            _ => histogram[2] += 1,
        }
        start = end;
    }

    let passed = mesh.num_tets() > 0
        && misoriented_tets == 0
        && histogram[2] == 0
        && dangling_faces == 0
        && (volume_sum - domain_volume).abs() <= 1e-12 * domain_volume.max(1.0)
        && normal_mismatch <= 1e-12;
    ConformityReport {
        volume_sum,
        domain_volume,
        incidence_histogram: histogram,
        dangling_faces,
        misoriented_tets,
        normal_mismatch,
        passed,
    }
}

/// Number of faces of the generated `(M, N)` cube mesh.
pub fn expected_face_count(m: usize, n: usize) -> usize {
    10 * m * m * n + 4 * m * n + 2 * m * m
}

/// Number of boundary faces of the generated `(M, N)` cube mesh.
pub fn expected_boundary_face_count(m: usize, n: usize) -> usize {
    2 * (2 * m * m + 4 * m * n)
}
