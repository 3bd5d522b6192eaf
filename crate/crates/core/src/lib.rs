//! Structural identifiability and observability analysis of rational ODE
//! models, Lie symmetry detection, and exact reparameterization.

pub mod fispo;
pub mod linalg;
pub mod modelspec;
pub mod repar;
pub mod symcore;
pub mod symmetry;
pub mod validate;
