//! Legacy ASCII VTK output of a tetrahedral mesh.

use std::io::Write;

use crate::mesh::Mesh;
use crate::{Error, Result};

const VTK_TETRA: u8 = 10;

/// Writes `mesh` as an unstructured grid, optionally with named per-cell scalars.
pub fn write_vtk(mesh: &Mesh, cell_data: &[(&str, &[f64])], mut w: impl Write) -> Result<()> {
    for (name, values) in cell_data {
        if values.len() != mesh.num_tets() {
            return Err(Error::FieldMismatch(format!(
                "cell data '{name}' has {} values for {} tets",
                values.len(),
                mesh.num_tets()
            )));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid VTK array name '{name}'")));
        }
    }
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "anisofem mesh")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.num_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", p.x, p.y, p.z)?;
    }
    writeln!(w, "CELLS {} {}", mesh.num_tets(), 5 * mesh.num_tets())?;
    for t in mesh.tets() {
        writeln!(w, "4 {} {} {} {}", t.v[0], t.v[1], t.v[2], t.v[3])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.num_tets())?;
    for _ in mesh.tets() {
        writeln!(w, "{VTK_TETRA}")?;
    }
    if !cell_data.is_empty() {
        writeln!(w, "CELL_DATA {}", mesh.num_tets())?;
        for (name, values) in cell_data {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in *values {
                writeln!(w, "{v:.17e}")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_aniso_cube;

    #[test]
    fn structure_of_output() {
        let mesh = generate_aniso_cube(2, 1).unwrap();
        let h: Vec<f64> = (0..mesh.num_tets()).map(|t| t as f64).collect();
        let mut buf = Vec::new();
        write_vtk(&mesh, &[("H_T", &h)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[4], "POINTS 18 double");
        let cells = lines.iter().position(|l| l.starts_with("CELLS")).unwrap();
        assert_eq!(lines[cells], "CELLS 20 100");
        assert_eq!(cells, 5 + 18);
        assert!(lines.contains(&"CELL_TYPES 20"));
        assert!(lines.contains(&"SCALARS H_T double 1"));
        assert_eq!(lines.iter().filter(|l| **l == "10").count(), 20);
        assert_eq!(lines.len(), 5 + 18 + 1 + 20 + 1 + 20 + 3 + 20);
    }

    #[test]
    fn rejects_bad_cell_data() {
        let mesh = generate_aniso_cube(2, 1).unwrap();
        assert!(write_vtk(&mesh, &[("H_T", &[1.0])], Vec::new()).is_err());
        let h = vec![0.0; mesh.num_tets()];
        assert!(write_vtk(&mesh, &[("bad name", &h)], Vec::new()).is_err());
    }
}
