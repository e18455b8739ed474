//! Piecewise-constant conductivity and permeability per triangle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::{Mesh, RegionTag};

/// Conductivity (S/m) and permeability (H/m) of one material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub sigma: f64,
    pub mu: f64,
}

impl Material {
    pub const fn new(sigma: f64, mu: f64) -> Self {
        Self { sigma, mu }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialTable {
    pub vacuum: Material,
    pub tube: Material,
    /// One entry shared by every deposit component, or one entry per component.
    pub deposits: Vec<Material>,
}

/// Vacuum σ = 0, μ = 4.0e-7·π; tube σ = 0.97e3, μ = 4.04e-7·π; deposit σ = 1.75e3, μ = 4.04e-7·π.
pub fn default_table() -> MaterialTable {
    MaterialTable {
        vacuum: Material::new(0.0, 4.0e-7 * PI),
        tube: Material::new(0.97e3, 4.04e-7 * PI),
        deposits: vec![Material::new(1.75e3, 4.04e-7 * PI)],
    }
}

impl Default for MaterialTable {
    fn default() -> Self {
        default_table()
    }
}

impl MaterialTable {
    pub fn validate(&self) -> Result<()> {
        if self.deposits.is_empty() {
            return invalid("material table needs at least one deposit material");
        }
        if self.vacuum.sigma != 0.0 {
            return invalid("vacuum conductivity must be zero");
        }
        for m in std::iter::once(&self.vacuum)
            .chain(std::iter::once(&self.tube))
            .chain(&self.deposits)
        {
            if !(m.sigma >= 0.0) || !m.sigma.is_finite() || !(m.mu > 0.0) || !m.mu.is_finite() {
                return invalid(format!(
                    "materials need finite sigma >= 0 and mu > 0, got {m:?}"
                ));
            }
        }
        Ok(())
    }

    /// Copy of the table where deposits share the vacuum permeability.
    pub fn with_matched_mu(&self) -> Self {
        let mut t = self.clone();
        for d in &mut t.deposits {
            d.mu = self.vacuum.mu;
        }
        t
    }

    pub fn lookup(&self, tag: RegionTag) -> Result<Material> {
        match tag {
            RegionTag::Vacuum => Ok(self.vacuum),
            RegionTag::Tube => Ok(self.tube),
            RegionTag::Deposit(k) => match self.deposits.as_slice() {
                [single] => Ok(*single),
                many => many
                    .get(k as usize)
                    .copied()
                    .ok_or_else(|| Error::UnknownTag(tag.to_string())),
            },
        }
    }
}

/// Per-triangle coefficients of either the reference or the perturbed medium.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialField {
    sigma: Vec<f64>,
    mu: Vec<f64>,
    perturbed: bool,
}

impl MaterialField {
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn is_perturbed(&self) -> bool {
        self.perturbed
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Coefficients of triangle `t` as a [`Material`].
    pub fn at(&self, t: usize) -> Material {
        Material::new(self.sigma[t], self.mu[t])
    }

    /// Builds a field from raw per-triangle values.
    pub fn from_values(sigma: Vec<f64>, mu: Vec<f64>, perturbed: bool) -> Result<Self> {
        if sigma.len() != mu.len() {
            return invalid("sigma and mu lengths differ");
        }
        if sigma.iter().any(|s| !(s >= &0.0) || !s.is_finite())
            || mu.iter().any(|m| !(m > &0.0) || !m.is_finite())
        {
            return invalid("coefficients must be finite with sigma >= 0 and mu > 0");
        }
        Ok(Self {
            sigma,
            mu,
            perturbed,
        })
    }
}

/// Assigns coefficients by region tag. The reference medium treats deposits as vacuum.
pub fn coefficients(mesh: &Mesh, table: &MaterialTable, perturbed: bool) -> Result<MaterialField> {
    table.validate()?;
    let mut sigma = Vec::with_capacity(mesh.n_triangles());
    let mut mu = Vec::with_capacity(mesh.n_triangles());
    for &tag in mesh.tags() {
        let m = if tag.is_deposit() && !perturbed {
            table.vacuum
        } else {
            table.lookup(tag)?
        };
        sigma.push(m.sigma);
        mu.push(m.mu);
    }
    Ok(MaterialField {
        sigma,
        mu,
        perturbed,
    })
}
