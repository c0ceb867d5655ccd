use crate::error::{Error, Result};
use crate::materials::CrossSectionSet;
use crate::mesh::SlabMesh;
use crate::quadrature::AngularQuadrature;

/// A validated slab eigenvalue problem: materials, mesh and angular quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub materials: Vec<CrossSectionSet>,
    pub mesh: SlabMesh,
    pub quadrature: AngularQuadrature,
}

impl Problem {
    pub fn new(materials: Vec<CrossSectionSet>, mesh: SlabMesh, quadrature: AngularQuadrature) -> Result<Self> {
        if materials.is_empty() {
            return Err(Error::InvalidMesh("no materials defined".into()));
        }
        for m in &materials {
            m.check()?;
        }
        let groups = materials[0].num_groups();
        if let Some(m) = materials.iter().find(|m| m.num_groups() != groups) {
            return Err(Error::InvalidMaterial {
                material: m.name.clone(),
                group: m.num_groups(),
                reason: format!("group count differs from the first material ({groups})"),
            });
        }
        if let Some(&id) = mesh.materials().iter().find(|&&id| id >= materials.len()) {
            return Err(Error::InvalidMesh(format!("unknown material id {id}")));
        }
        Ok(Self { materials, mesh, quadrature })
    }

    pub fn num_groups(&self) -> usize {
        self.materials[0].num_groups()
    }

    /// Cross sections of the material filling `cell`.
    pub fn xs(&self, cell: usize) -> &CrossSectionSet {
        &self.materials[self.mesh.material(cell)]
    }

    /// True if some cell of the mesh holds fissile material.
    pub fn is_fissile(&self) -> bool {
        self.mesh.materials().iter().any(|&id| self.materials[id].is_fissile())
    }
}
