//! Element families, DOF maps, assembly and finite-element functions.

mod family;
mod space;

pub use family::{
    apply_functional, eval_basis, Conformity, ElementPoly, Entity, Family, Functional, LocalBasis, LocalDof,
    ALL_FAMILIES, UNISOLVENCE_CONDITION_LIMIT,
};
pub use space::{
    assemble, assemble_full, build_dofmap, dof_locations, eval_fe, DofMap, FeFunction, FeSpace, SymmetricPair,
};
