//! Discretized mixing measure on `[-1, 1]`: a point mass `pi` at `u = 0`
//! plus a Lebesgue density `psi` carried on a midpoint quadrature grid.
//! The atom is never a grid node.

use std::sync::Arc;

use crate::error::{PrError, Result};

/// Default number of quadrature nodes.
pub const DEFAULT_GRID_SIZE: usize = 200;

/// Midpoint rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn midpoint(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(PrError::InvalidConfig(format!("grid needs at least 2 nodes, got {k}")));
        }
        let kf = k as f64;
        let nodes = (1..=k).map(|j| -1.0 + (2.0 * j as f64 - 1.0) / kf).collect();
        let weights = vec![2.0 / kf; k];
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_k values[k] * q_k`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, q)| v * q).sum()
    }
}

/// nu-density `pi <0> + (1 - pi) psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingState {
    pub(crate) pi: f64,
    pub(crate) grid: Arc<Grid>,
    pub(crate) psi: Vec<f64>,
}

impl MixingState {
    /// Builds a state from raw parts, renormalizing `psi` over the grid.
    pub fn from_parts(pi: f64, grid: Arc<Grid>, psi: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(PrError::InvalidParameter(format!("atom mass must be in [0, 1], got {pi}")));
        }
        if psi.len() != grid.len() {
            return Err(PrError::LengthMismatch { expected: grid.len(), actual: psi.len() });
        }
        if psi.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(PrError::InvalidParameter("psi must be finite and nonnegative".into()));
        }
        let mass = grid.integrate(&psi);
        if mass <= 0.0 {
            return Err(PrError::InvalidParameter("psi has zero mass".into()));
        }
        let psi = psi.into_iter().map(|v| v / mass).collect();
        Ok(Self { pi, grid, psi })
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// `sum_k psi_k q_k`; one up to rounding.
    pub fn psi_mass(&self) -> f64 {
        self.grid.integrate(&self.psi)
    }

    /// Total mass of the nu-density, `pi + (1 - pi) sum psi q`.
    pub fn total_mass(&self) -> f64 {
        self.pi + (1.0 - self.pi) * self.psi_mass()
    }
}

/// Initial state `pi0 <0> + (1 - pi0) psi0` with `psi0(u) = 3/2 u^2`.
pub fn init_mixing_state(k: usize, pi0: f64) -> Result<MixingState> {
    let grid = Arc::new(Grid::midpoint(k)?);
    init_on_grid(grid, pi0)
}

pub fn init_on_grid(grid: Arc<Grid>, pi0: f64) -> Result<MixingState> {
    if !(pi0 > 0.0 && pi0 < 1.0) {
        return Err(PrError::InvalidParameter(format!("pi0 must be in (0, 1), got {pi0}")));
    }
    let psi = grid.nodes().iter().map(|u| 1.5 * u * u).collect();
    MixingState::from_parts(pi0, grid, psi)
}
