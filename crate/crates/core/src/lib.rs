//! Quantum-optics models of vacuum squeezing by polarization self-rotation
//! in a warm atomic vapor.
//!
//! * [`gaussian`]: single-mode Gaussian states, symplectic maps, loss.
//! * [`shear`]: phenomenological self-rotation medium.
//! * [`atom`]: multilevel atom, steady state and Langevin drift/diffusion.
//! * [`propagation`]: slice-by-slice field propagation through the cell.
//! * [`detection`]: balanced homodyne detection, tomography, loss inference.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod atom;
pub mod detection;
pub mod gaussian;
pub mod shear;
pub mod propagation;
