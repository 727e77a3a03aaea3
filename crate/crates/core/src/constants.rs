use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants used throughout. `xi` is the dimensionless DP-energy
/// prefactor; 1/2 is the default, 1 reproduces the original convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    #[serde(rename = "G")]
    pub g: f64,
    pub hbar: f64,
    pub c: f64,
    pub xi: f64,
}

impl PhysicalConstants {
    pub const SI_G: f64 = 6.674_30e-11;
    pub const SI_HBAR: f64 = 1.054_571_817e-34;
    pub const SI_C: f64 = 299_792_458.0;

    pub fn si() -> Self {
        PhysicalConstants { g: Self::SI_G, hbar: Self::SI_HBAR, c: Self::SI_C, xi: 0.5 }
    }

    /// G = ħ = c = 1.
    pub fn dimensionless() -> Self {
        PhysicalConstants { g: 1.0, hbar: 1.0, c: 1.0, xi: 0.5 }
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("G", self.g), ("hbar", self.hbar), ("c", self.c), ("xi", self.xi)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConstants(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::si()
    }
}
