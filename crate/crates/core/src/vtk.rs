//! Legacy ASCII VTK output of triangle meshes and nodal fields.

use std::fmt::Write as _;

use crate::fem::FeFunction;
use crate::mesh::TriMesh;

const VTK_TRIANGLE: u8 = 5;

/// Unstructured grid with one `SCALARS` block per named nodal field.
pub fn mesh_to_vtk(mesh: &TriMesh, title: &str, fields: &[(&str, &[f64])]) -> String {
    let mut s = String::new();
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{title}");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for p in mesh.coords() {
        let _ = writeln!(s, "{:?} {:?} 0", p[0], p[1]);
    }
    let n = mesh.n_cells();
    let _ = writeln!(s, "CELLS {n} {}", 4 * n);
    for c in mesh.cells() {
        let _ = writeln!(s, "3 {} {} {}", c[0], c[1], c[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        let _ = writeln!(s, "{VTK_TRIANGLE}");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", mesh.n_vertices());
        for (name, values) in fields {
            assert_eq!(values.len(), mesh.n_vertices(), "one value per vertex");
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in *values {
                let _ = writeln!(s, "{v:?}");
            }
        }
    }
    s
}

/// A discrete function as the point field `u`.
pub fn function_to_vtk(u: &FeFunction, title: &str) -> String {
    let nodal = u.nodal_values();
    mesh_to_vtk(u.mesh(), title, &[("u", &nodal)])
}
