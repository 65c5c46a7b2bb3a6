//! Explicit concentrating test-function families and the exact identities
//! behind their energy expansions.

mod glued;
mod hybrid;
mod identities;
mod moser;

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

pub use glued::{
    bound_sandwich, build_glued_bubble, upper_bound, GluedBubble, GluedParams, SandwichReport, SandwichRow,
};
pub use identities::{
    harmonic_exact, harmonic_identities, harmonic_number, identity_report, sum_a, sum_b, IdentityRow,
};
pub use moser::{
    build_moser_sequence, default_t_eps, divergence_demo, divergence_demo_with, DivergenceRow, DivergenceTable, MoserParams,
    MoserSequence,
};

/// Sample points per axis per lattice cell for the outer quadrature.
fn default_sub(dim: usize) -> usize {
    if dim == 2 { 3 } else { 2 }
}

/// One row of a ladder table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyRow {
    pub epsilon: f64,
    pub j: f64,
    pub energy: f64,
    pub m: f64,
    pub interface_jump: f64,
    pub saturated_cells: usize,
}

pub fn write_family_csv<W: Write>(rows: &[FamilyRow], mut w: W) -> Result<()> {
    writeln!(w, "epsilon,J,energy,M,interface_jump,saturated_cells")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.epsilon, r.j, r.energy, r.m, r.interface_jump, r.saturated_cells
        )?;
    }
    Ok(())
}
