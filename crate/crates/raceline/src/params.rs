//! Vehicle parameter set and its on-disk format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vehicle parameter {}: {}", self.field, self.message)
    }
}

impl std::error::Error for ParamError {}

/// Box limits on the control inputs and numerical guards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlLimits {
    /// Upper bound on the total traction force (N).
    pub traction_max: f64,
    /// Lower bound on the total braking force (N, negative).
    pub braking_min: f64,
    /// Steer angle bound (rad).
    pub steer_max: f64,
    /// Longitudinal speed below which tire slip formulas are rejected (m/s).
    pub v_min: f64,
    /// Minimum track-parameter rate when dividing by `q1_dot` (1/s).
    pub q1dot_min: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        ControlLimits {
            traction_max: 3000.0,
            braking_min: -5000.0,
            steer_max: 0.5,
            v_min: 0.5,
            q1dot_min: 1e-6,
        }
    }
}

/// All physical vehicle data: inertia, geometry, aerodynamics, suspension
/// rates, powertrain. Values are SI throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Total vehicle mass (kg).
    pub m: f64,
    /// Sprung-body rotational inertia about its center of mass (kg m^2).
    pub i_xx: f64,
    pub i_yy: f64,
    pub i_zz: f64,
    /// Longitudinal distance from the center of mass to the front axle (m).
    pub a1: f64,
    /// Longitudinal distance from the center of mass to the rear axle (m).
    pub a2: f64,
    /// Front and rear track widths (m).
    pub t1: f64,
    pub t2: f64,
    /// Center-of-mass height above the vehicle invariant point (m).
    pub h: f64,
    /// No-roll-center heights of the front and rear suspensions (m).
    pub h_q1: f64,
    pub h_q2: f64,
    /// Frontal area (m^2).
    pub s: f64,
    /// Drag coefficient (positive).
    pub c_x: f64,
    /// Front and rear downforce coefficients; the total is their sum.
    pub c_z1: f64,
    pub c_z2: f64,
    /// Air density (kg/m^3).
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Spring rate of each front / rear corner (N/m).
    pub k_front: f64,
    pub k_rear: f64,
    /// Damper rate of each front / rear corner (N s/m).
    pub c_front: f64,
    pub c_rear: f64,
    /// Engine power limit (W).
    pub p_max: f64,
    /// Braking ratio: fraction of the total braking force on the front axle.
    #[serde(default = "default_k_b")]
    pub k_b: f64,
    /// Fraction of the total mass carried by the sprung body.
    #[serde(default = "default_sprung_fraction")]
    pub sprung_fraction: f64,
    #[serde(default)]
    pub limits: ControlLimits,
}

fn default_rho() -> f64 {
    1.225
}
fn default_k_b() -> f64 {
    0.6
}
fn default_sprung_fraction() -> f64 {
    0.85
}

impl VehicleParams {
    /// Formula-SAE-class sample car used by the bundled assets and tests.
    pub fn fsae_sample() -> Self {
        VehicleParams {
            m: 240.0,
            i_xx: 40.0,
            i_yy: 100.0,
            i_zz: 110.0,
            a1: 0.765,
            a2: 0.815,
            t1: 1.21,
            t2: 1.21,
            h: 0.435,
            h_q1: 0.335,
            h_q2: 0.335,
            s: 1.4,
            c_x: 0.84,
            c_z1: 0.536,
            c_z2: 0.804,
            rho: 1.225,
            k_front: 36_000.0,
            k_rear: 24_000.0,
            c_front: 3_280.0,
            c_rear: 2_200.0,
            p_max: 47_000.0,
            k_b: 0.6,
            sprung_fraction: 0.85,
            limits: ControlLimits::default(),
        }
    }

    pub fn wheelbase(&self) -> f64 {
        self.a1 + self.a2
    }

    /// Total downforce coefficient, computed rather than stored.
    pub fn c_z(&self) -> f64 {
        self.c_z1 + self.c_z2
    }

    pub fn sprung_mass(&self) -> f64 {
        self.sprung_fraction * self.m
    }

    pub fn unsprung_mass(&self) -> f64 {
        (1.0 - self.sprung_fraction) * self.m
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive: [(&'static str, f64); 13] = [
            ("m", self.m),
            ("a1", self.a1),
            ("a2", self.a2),
            ("t1", self.t1),
            ("t2", self.t2),
            ("h", self.h),
            ("s", self.s),
            ("c_x", self.c_x),
            ("rho", self.rho),
            ("p_max", self.p_max),
            ("i_xx", self.i_xx),
            ("i_yy", self.i_yy),
            ("i_zz", self.i_zz),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ParamError {
                    field,
                    message: format!("must be positive and finite, got {v}"),
                });
            }
        }
        let nonneg: [(&'static str, f64); 8] = [
            ("h_q1", self.h_q1),
            ("h_q2", self.h_q2),
            ("c_z1", self.c_z1),
            ("c_z2", self.c_z2),
            ("k_front", self.k_front),
            ("k_rear", self.k_rear),
            ("c_front", self.c_front),
            ("c_rear", self.c_rear),
        ];
        for (field, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ParamError {
                    field,
                    message: format!("must be non-negative and finite, got {v}"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.k_b) {
            return Err(ParamError {
                field: "k_b",
                message: format!("braking ratio must lie in [0, 1], got {}", self.k_b),
            });
        }
        if !(self.sprung_fraction > 0.0 && self.sprung_fraction <= 1.0) {
            return Err(ParamError {
                field: "sprung_fraction",
                message: format!("must lie in (0, 1], got {}", self.sprung_fraction),
            });
        }
        // principal moments of a physical body satisfy triangle inequalities
        let (a, b, c) = (self.i_xx, self.i_yy, self.i_zz);
        if a > b + c || b > a + c || c > a + b {
            return Err(ParamError {
                field: "i_xx",
                message: format!(
                    "principal moments ({a}, {b}, {c}) violate the triangle inequality"
                ),
            });
        }
        if self.limits.traction_max <= 0.0
            || self.limits.braking_min >= 0.0
            || self.limits.steer_max <= 0.0
            || self.limits.v_min <= 0.0
            || self.limits.q1dot_min <= 0.0
        {
            return Err(ParamError {
                field: "limits",
                message: "control limits have the wrong sign".to_string(),
            });
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ParamError> {
        let text = std::fs::read_to_string(path).map_err(|e| ParamError {
            field: "file",
            message: e.to_string(),
        })?;
        let params: VehicleParams = serde_json::from_str(&text).map_err(|e| ParamError {
            field: "file",
            message: e.to_string(),
        })?;
        params.validate()?;
        Ok(params)
    }
}
