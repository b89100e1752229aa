//! Road-tire reconciliation: Magic Formula lateral forces, slip angles, the
//! longitudinal force split, vertical loads with longitudinal and lateral
//! load transfers, and the in-plane consistency wrench.
//!
//! Together these produce the seven algebraic residuals that close the
//! forward dynamics: four implicit vertical-load equations (one per wheel)
//! and three equations tying the in-plane placeholder wrench to the tire
//! forces.
//!
//! Wheel indexing is `ij` with `i` the axle (1 front, 2 rear) and `j` the
//! side (1 left, 2 right); the left wheel sits at `+t_i/2` along the body-3
//! y axis. The longitudinal load transfer adds to the front axle and
//! subtracts from the rear so a nose-down structural pitch moment (braking)
//! loads the front, and the lateral transfer enters with `(-1)^j` so axle
//! sums are unaffected by it.

use std::fmt;
use std::path::Path;

use nalgebra::{Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::aba::SuspensionParams;
use crate::liegroup::{Twist, Wrench};
use crate::params::VehicleParams;
use crate::scalar::{lift, Real};

#[derive(Debug, Clone, PartialEq)]
pub enum TireError {
    /// |v_x| below the guard: slip formulas are singular.
    LowSpeed { v_x: f64, v_min: f64 },
    Validation {
        field: &'static str,
        message: String,
    },
    Io(String),
}

impl fmt::Display for TireError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TireError::LowSpeed { v_x, v_min } => write!(
                f,
                "longitudinal speed {v_x} m/s below the slip-angle guard {v_min} m/s"
            ),
            TireError::Validation { field, message } => {
                write!(f, "tire file {field}: {message}")
            }
            TireError::Io(e) => write!(f, "tire file i/o: {e}"),
        }
    }
}

impl std::error::Error for TireError {}

/// Load-dependent Magic Formula coefficients for one axle, in similarity
/// form:
///
/// * peak force `D_y(f_z) = (d1 + d2 f_z / f_z0) f_z`,
/// * shape factor `C_y` constant,
/// * cornering stiffness `K_y = k1 f_z0 sin(2 atan(f_z / (k2 f_z0)))` with
///   `B_y = K_y / (C_y D_y)` evaluated in a form that stays finite at zero
///   load,
/// * curvature factor `E_y` constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireCoefficients {
    /// Reference load (N).
    pub f_z0: f64,
    /// Peak friction coefficient at the reference load.
    pub d1: f64,
    /// Load sensitivity of the friction coefficient (usually negative).
    pub d2: f64,
    pub c_y: f64,
    pub e_y: f64,
    /// Cornering-stiffness scale.
    pub k1: f64,
    /// Load ratio at which the cornering stiffness peaks.
    pub k2: f64,
    /// Friction-ellipse semi-axes for the adherence constraint.
    pub mu_x: f64,
    pub mu_y: f64,
    /// Valid vertical-load range (N).
    pub load_range: [f64; 2],
}

impl TireCoefficients {
    /// Formula-SAE-class default set.
    pub fn fsae_default() -> Self {
        TireCoefficients {
            f_z0: 600.0,
            d1: 1.8,
            d2: -0.2,
            c_y: 1.5,
            e_y: -0.5,
            k1: 18.0,
            k2: 1.6,
            mu_x: 1.7,
            mu_y: 1.7,
            load_range: [0.0, 2500.0],
        }
    }

    pub fn validate(&self) -> Result<(), TireError> {
        if !(self.f_z0 > 0.0) {
            return Err(TireError::Validation {
                field: "f_z0",
                message: format!("reference load must be positive, got {}", self.f_z0),
            });
        }
        for (field, v) in [
            ("c_y", self.c_y),
            ("k1", self.k1),
            ("k2", self.k2),
            ("mu_x", self.mu_x),
            ("mu_y", self.mu_y),
        ] {
            if !(v > 0.0) {
                return Err(TireError::Validation {
                    field,
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        if self.load_range[1] <= self.load_range[0] || self.load_range[0] < 0.0 {
            return Err(TireError::Validation {
                field: "load_range",
                message: format!("invalid range {:?}", self.load_range),
            });
        }
        // the peak factor must stay positive across the whole load range
        for fz in [self.load_range[0], self.load_range[1]] {
            if self.d1 + self.d2 * fz / self.f_z0 <= 0.0 {
                return Err(TireError::Validation {
                    field: "d2",
                    message: format!("peak factor becomes non-positive at f_z = {fz}"),
                });
            }
        }
        Ok(())
    }

    /// Peak lateral force at the given load.
    pub fn peak_force(&self, f_z: f64) -> f64 {
        (self.d1 + self.d2 * f_z / self.f_z0) * f_z
    }
}

/// Front and rear tire coefficient sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TireModel {
    pub front: TireCoefficients,
    pub rear: TireCoefficients,
}

impl TireModel {
    pub fn fsae_default() -> Self {
        TireModel {
            front: TireCoefficients::fsae_default(),
            rear: TireCoefficients::fsae_default(),
        }
    }

    pub fn validate(&self) -> Result<(), TireError> {
        self.front.validate()?;
        self.rear.validate()
    }

    pub fn load(path: &Path) -> Result<Self, TireError> {
        let text = std::fs::read_to_string(path).map_err(|e| TireError::Io(e.to_string()))?;
        let model: TireModel = serde_json::from_str(&text).map_err(|e| TireError::Validation {
            field: "file",
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }
}

/// Control inputs: total traction force (>= 0), total braking force (<= 0),
/// and front steer angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput<T: Real> {
    pub f_xa: T,
    pub f_xb: T,
    pub delta: T,
}

impl<T: Real> ControlInput<T> {
    pub fn zero() -> Self {
        ControlInput {
            f_xa: T::zero(),
            f_xb: T::zero(),
            delta: T::zero(),
        }
    }

    pub fn new(f_xa: T, f_xb: T, delta: T) -> Self {
        ControlInput { f_xa, f_xb, delta }
    }

    pub fn from_vector(v: &Vector3<T>) -> Self {
        ControlInput {
            f_xa: v[0],
            f_xb: v[1],
            delta: v[2],
        }
    }

    pub fn to_vector(&self) -> Vector3<T> {
        Vector3::new(self.f_xa, self.f_xb, self.delta)
    }
}

/// The seven algebraic placeholders: four vertical wheel loads and the three
/// in-plane components of the external wrench on the axle body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraicVars<T: Real> {
    pub f11z: T,
    pub f12z: T,
    pub f21z: T,
    pub f22z: T,
    pub f3x: T,
    pub f3y: T,
    pub m3z: T,
}

pub type Vector7<T> = nalgebra::SVector<T, 7>;

impl<T: Real> AlgebraicVars<T> {
    pub fn zero() -> Self {
        Self::from_vector(&Vector7::zeros())
    }

    pub fn from_vector(v: &Vector7<T>) -> Self {
        AlgebraicVars {
            f11z: v[0],
            f12z: v[1],
            f21z: v[2],
            f22z: v[3],
            f3x: v[4],
            f3y: v[5],
            m3z: v[6],
        }
    }

    pub fn to_vector(&self) -> Vector7<T> {
        Vector7::from_row_slice(&[
            self.f11z, self.f12z, self.f21z, self.f22z, self.f3x, self.f3y, self.m3z,
        ])
    }

    pub fn vertical_loads(&self) -> Vector4<T> {
        Vector4::new(self.f11z, self.f12z, self.f21z, self.f22z)
    }
}

/// Kinematic slip angles, equal across each axle. Errors when the
/// longitudinal speed is below `v_min`; see [`slip_angles_clamped`] for the
/// guarded variant used inside residual evaluation.
pub fn slip_angles<T: Real>(
    v3: &Twist<T>,
    delta: T,
    a1: f64,
    a2: f64,
    v_min: f64,
) -> Result<(T, T), TireError> {
    let v_x = v3.linear[0];
    if v_x.re().abs() < v_min {
        return Err(TireError::LowSpeed {
            v_x: v_x.re(),
            v_min,
        });
    }
    Ok(slip_angles_clamped(v3, delta, a1, a2, v_min))
}

/// Slip angles with the divisor clamped to `v_min`, so standstill and
/// crawling states evaluate to well-defined (zero-slip at rest) values.
pub fn slip_angles_clamped<T: Real>(
    v3: &Twist<T>,
    delta: T,
    a1: f64,
    a2: f64,
    v_min: f64,
) -> (T, T) {
    let v_x = v3.linear[0];
    let den = if v_x.re() < v_min { lift(v_min) } else { v_x };
    let v_y = v3.linear[1];
    let w_z = v3.angular[2];
    let front = delta - (v_y + w_z * lift(a1)) / den;
    let rear = -(v_y - w_z * lift(a2)) / den;
    (front, rear)
}

/// Pacejka Magic Formula lateral force with load-dependent coefficients.
pub fn magic_formula_lateral<T: Real>(coef: &TireCoefficients, alpha: T, f_z: T) -> T {
    let mu = lift::<T>(coef.d1) + lift::<T>(coef.d2 / coef.f_z0) * f_z;
    let d_y = mu * f_z;
    // B_y = K_y / (C_y D_y) written so the 0/0 at zero load cancels:
    // K_y / f_z = 2 k1 / (k2 (1 + r^2)) with r = f_z / (k2 f_z0)
    let r = f_z * lift::<T>(1.0 / (coef.k2 * coef.f_z0));
    let b_y = lift::<T>(2.0 * coef.k1 / (coef.k2 * coef.c_y)) / ((T::one() + r * r) * mu);
    let ba = b_y * alpha;
    let e_y = lift::<T>(coef.e_y);
    let phi = ba - e_y * (ba - ba.atan());
    d_y * (lift::<T>(coef.c_y) * phi.atan()).sin()
}

/// Per-wheel longitudinal forces: the front pair shares the braking fraction
/// `k_b`, the rear pair shares the rest plus all traction (rear drive with an
/// open differential).
pub fn longitudinal_split<T: Real>(u: &ControlInput<T>, k_b: f64) -> (T, T) {
    let front = u.f_xb * lift::<T>(0.5 * k_b);
    let rear = u.f_xb * lift::<T>(0.5 * (1.0 - k_b)) + u.f_xa * lift::<T>(0.5);
    (front, rear)
}

/// Per-axle lateral forces in body-3 coordinates. `Y_1` folds the front
/// wheel-frame rotation by the steer angle; `Y_2` is the plain rear sum.
pub fn axle_lateral_forces<T: Real>(fy: &[T; 4], fx_front: T, delta: T) -> (T, T) {
    let y1 = (fy[0] + fy[1]) * delta.cos() + (fx_front + fx_front) * delta.sin();
    let y2 = fy[2] + fy[3];
    (y1, y2)
}

/// Intermediate vertical-load terms, exposed for tests and diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct VerticalLoadTerms<T: Real> {
    /// Static axle split of the structural vertical force, per wheel.
    pub f_z10: T,
    pub f_z20: T,
    /// Aerodynamic load per wheel.
    pub f_z1a: T,
    pub f_z2a: T,
    /// Longitudinal transfer (added to the front axle, subtracted rear).
    pub delta_f_z: T,
    /// Lateral transfers per axle (added to the right wheel).
    pub delta_f_z1: T,
    pub delta_f_z2: T,
    /// Predicted wheel loads in `[11, 12, 21, 22]` order.
    pub predicted: Vector4<T>,
}

/// Evaluate the vertical-load decomposition at a trial `z`.
pub fn vertical_load_terms<T: Real>(
    params: &VehicleParams,
    susp: &SuspensionParams,
    tires: &TireModel,
    v3: &Twist<T>,
    w3j: &Wrench<T>,
    z: &AlgebraicVars<T>,
    u: &ControlInput<T>,
) -> VerticalLoadTerms<T> {
    let l = params.wheelbase();
    let v_x = v3.linear[0];

    let (alpha_f, alpha_r) =
        slip_angles_clamped(v3, u.delta, params.a1, params.a2, params.limits.v_min);
    let (fx_front, _) = longitudinal_split(u, params.k_b);
    let fy = [
        magic_formula_lateral(&tires.front, alpha_f, z.f11z),
        magic_formula_lateral(&tires.front, alpha_f, z.f12z),
        magic_formula_lateral(&tires.rear, alpha_r, z.f21z),
        magic_formula_lateral(&tires.rear, alpha_r, z.f22z),
    ];
    let (y1, y2) = axle_lateral_forces(&fy, fx_front, u.delta);

    // total downforce magnitude and the aerodynamic pitch moment
    let q = lift::<T>(0.5 * params.rho * params.s) * v_x * v_x;
    let f_za = q * lift::<T>(params.c_z());
    let m_ya = -q * lift::<T>(params.c_z2 * params.a2 - params.c_z1 * params.a1);

    let f_z10 = (w3j.force[2] - f_za) * lift::<T>((l - params.a1) / (2.0 * l));
    let f_z20 = (w3j.force[2] - f_za) * lift::<T>((l - params.a2) / (2.0 * l));
    let f_z1a = q * lift::<T>(0.5 * params.c_z1);
    let f_z2a = q * lift::<T>(0.5 * params.c_z2);

    let delta_f_z = -(w3j.moment[1] - m_ya) * lift::<T>(1.0 / (2.0 * l));

    let bracket = -w3j.moment[0] - (y1 * lift::<T>(susp.h_q1) + y2 * lift::<T>(susp.h_q2));
    let k_phi = susp.k_phi();
    let delta_f_z1 = bracket * lift::<T>(susp.k_phi_front() / (k_phi * susp.t1))
        + y1 * lift::<T>(susp.h_q1 / susp.t1);
    let delta_f_z2 = bracket * lift::<T>(susp.k_phi_rear() / (k_phi * susp.t2))
        + y2 * lift::<T>(susp.h_q2 / susp.t2);

    let predicted = Vector4::new(
        f_z10 + f_z1a + delta_f_z - delta_f_z1,
        f_z10 + f_z1a + delta_f_z + delta_f_z1,
        f_z20 + f_z2a - delta_f_z - delta_f_z2,
        f_z20 + f_z2a - delta_f_z + delta_f_z2,
    );

    VerticalLoadTerms {
        f_z10,
        f_z20,
        f_z1a,
        f_z2a,
        delta_f_z,
        delta_f_z1,
        delta_f_z2,
        predicted,
    }
}

/// The four implicit vertical-load residuals `z_ij - predicted_ij`.
pub fn vertical_load_residuals<T: Real>(
    params: &VehicleParams,
    susp: &SuspensionParams,
    tires: &TireModel,
    v3: &Twist<T>,
    w3j: &Wrench<T>,
    z: &AlgebraicVars<T>,
    u: &ControlInput<T>,
) -> Vector4<T> {
    let terms = vertical_load_terms(params, susp, tires, v3, w3j, z, u);
    z.vertical_loads() - terms.predicted
}

/// The three in-plane consistency residuals: the placeholder wrench matches
/// the resultant of the tire forces.
pub fn inplane_wrench_residuals<T: Real>(
    params: &VehicleParams,
    tires: &TireModel,
    v3: &Twist<T>,
    z: &AlgebraicVars<T>,
    u: &ControlInput<T>,
) -> Vector3<T> {
    let (alpha_f, alpha_r) =
        slip_angles_clamped(v3, u.delta, params.a1, params.a2, params.limits.v_min);
    let (fx_front, fx_rear) = longitudinal_split(u, params.k_b);
    let fy = [
        magic_formula_lateral(&tires.front, alpha_f, z.f11z),
        magic_formula_lateral(&tires.front, alpha_f, z.f12z),
        magic_formula_lateral(&tires.rear, alpha_r, z.f21z),
        magic_formula_lateral(&tires.rear, alpha_r, z.f22z),
    ];
    let (y1, y2) = axle_lateral_forces(&fy, fx_front, u.delta);
    let x1 = (fx_front + fx_front) * u.delta.cos() - (fy[0] + fy[1]) * u.delta.sin();
    let x2 = fx_rear + fx_rear;
    Vector3::new(
        z.f3x - (x1 + x2),
        z.f3y - (y1 + y2),
        z.m3z - (y1 * lift::<T>(params.a1) - y2 * lift::<T>(params.a2)),
    )
}

/// Pack the in-plane placeholders into the external wrench on body 3.
pub fn assemble_w3e<T: Real>(z: &AlgebraicVars<T>) -> Wrench<T> {
    Wrench {
        force: Vector3::new(z.f3x, z.f3y, T::zero()),
        moment: Vector3::new(T::zero(), T::zero(), z.m3z),
    }
}

/// Friction-ellipse values per wheel, written without dividing by the load:
/// `(f_x / mu_x)^2 + (f_y / mu_y)^2 - f_z^2`, non-positive when the tire is
/// inside its adherence limit.
pub fn adherence_values<T: Real>(
    params: &VehicleParams,
    tires: &TireModel,
    v3: &Twist<T>,
    z: &AlgebraicVars<T>,
    u: &ControlInput<T>,
) -> Vector4<T> {
    let (alpha_f, alpha_r) =
        slip_angles_clamped(v3, u.delta, params.a1, params.a2, params.limits.v_min);
    let (fx_front, fx_rear) = longitudinal_split(u, params.k_b);
    let loads = [z.f11z, z.f12z, z.f21z, z.f22z];
    let mut out = Vector4::zeros();
    for (i, &f_z) in loads.iter().enumerate() {
        let (coef, alpha, fx) = if i < 2 {
            (&tires.front, alpha_f, fx_front)
        } else {
            (&tires.rear, alpha_r, fx_rear)
        };
        let fy = magic_formula_lateral(coef, alpha, f_z);
        let ex = fx * lift::<T>(1.0 / coef.mu_x);
        let ey = fy * lift::<T>(1.0 / coef.mu_y);
        out[i] = ex * ex + ey * ey - f_z * f_z;
    }
    out
}

/// Wheel positions in `{B3}`: front at `+a1`, left at `+t/2`.
pub fn wheel_positions(params: &VehicleParams) -> [Vector3<f64>; 4] {
    [
        Vector3::new(params.a1, params.t1 / 2.0, 0.0),
        Vector3::new(params.a1, -params.t1 / 2.0, 0.0),
        Vector3::new(-params.a2, params.t2 / 2.0, 0.0),
        Vector3::new(-params.a2, -params.t2 / 2.0, 0.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v3(v_x: f64, v_y: f64, w_z: f64) -> Twist<f64> {
        Twist::new(Vector3::new(v_x, v_y, 0.0), Vector3::new(0.0, 0.0, w_z))
    }

    #[test]
    fn slip_angles_zero_when_tracking_straight() {
        let (f, r) = slip_angles(&v3(20.0, 0.0, 0.0), 0.0, 0.765, 0.815, 0.5).unwrap();
        assert_relative_eq!(f, 0.0, epsilon = 1e-15);
        assert_relative_eq!(r, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn slip_angle_arithmetic() {
        let (f, _) = slip_angles(&v3(20.0, 0.4, 0.3), 0.05, 0.765, 0.815, 0.5).unwrap();
        assert_relative_eq!(f, 0.018525, epsilon = 1e-12);
    }

    #[test]
    fn pure_yaw_slip_sign_pattern() {
        let (f, r) = slip_angles(&v3(15.0, 0.0, 0.3), 0.0, 0.765, 0.815, 0.5).unwrap();
        assert!(f < 0.0 && r > 0.0);
    }

    #[test]
    fn low_speed_guard_trips() {
        assert!(matches!(
            slip_angles(&v3(0.3, 0.0, 0.0), 0.0, 0.765, 0.815, 0.5),
            Err(TireError::LowSpeed { .. })
        ));
    }

    #[test]
    fn magic_formula_zero_cases() {
        let c = TireCoefficients::fsae_default();
        assert_relative_eq!(magic_formula_lateral(&c, 0.0, 600.0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(magic_formula_lateral(&c, 0.1, 0.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn magic_formula_peak_equals_d_y() {
        let c = TireCoefficients::fsae_default();
        for &f_z in &[300.0, 600.0, 1200.0] {
            let d_y = c.peak_force(f_z);
            let mut peak: f64 = 0.0;
            for i in 0..200_000 {
                let alpha = i as f64 * 1e-5;
                peak = peak.max(magic_formula_lateral(&c, alpha, f_z).abs());
            }
            assert_relative_eq!(peak, d_y, epsilon = 1e-6 * d_y);
        }
    }

    #[test]
    fn longitudinal_split_examples() {
        let u = ControlInput::new(1000.0, 0.0, 0.0);
        let (f, r) = longitudinal_split(&u, 0.6);
        assert_relative_eq!(f, 0.0, epsilon = 1e-12);
        assert_relative_eq!(r, 500.0, epsilon = 1e-12);

        let u = ControlInput::new(0.0, -2000.0, 0.0);
        let (f, r) = longitudinal_split(&u, 0.6);
        assert_relative_eq!(f, -600.0, epsilon = 1e-12);
        assert_relative_eq!(r, -400.0, epsilon = 1e-12);
    }

    #[test]
    fn static_loads_satisfy_residuals() {
        // closed-form statics: structural vertical force splits by the lever
        // arms; everything else vanishes at standstill
        let params = VehicleParams::fsae_sample();
        let susp = SuspensionParams::from_vehicle(&params);
        let tires = TireModel::fsae_default();
        let w = 240.0 * 9.81;
        let l = params.wheelbase();
        let front = w * params.a2 / (2.0 * l);
        let rear = w * params.a1 / (2.0 * l);
        assert_relative_eq!(front, 607.2265822784811, epsilon = 1e-9);
        assert_relative_eq!(rear, 569.9734177215189, epsilon = 1e-9);

        let z = AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
            front, front, rear, rear, 0.0, 0.0, 0.0,
        ]));
        let w3j = Wrench::new(Vector3::new(0.0, 0.0, w), Vector3::zeros());
        let vr = vertical_load_residuals(
            &params,
            &susp,
            &tires,
            &Twist::zero(),
            &w3j,
            &z,
            &ControlInput::zero(),
        );
        assert_relative_eq!(vr, Vector4::zeros(), epsilon = 1e-9);
        let ir = inplane_wrench_residuals(
            &params,
            &tires,
            &Twist::zero(),
            &z,
            &ControlInput::zero(),
        );
        assert_relative_eq!(ir, Vector3::zeros(), epsilon = 1e-9);
    }

    #[test]
    fn load_conservation_at_any_point() {
        // the sum of predicted wheel loads equals the structural vertical
        // force: lateral transfers cancel pairwise, the longitudinal transfer
        // cancels across axles, and the aero terms recombine
        let params = VehicleParams::fsae_sample();
        let susp = SuspensionParams::from_vehicle(&params);
        let tires = TireModel::fsae_default();
        let v = v3(22.0, 0.6, 0.4);
        let w3j = Wrench::new(
            Vector3::new(0.0, 0.0, 3100.0),
            Vector3::new(180.0, -240.0, 0.0),
        );
        let z = AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
            640.0, 820.0, 540.0, 760.0, 400.0, 1800.0, 120.0,
        ]));
        let u = ControlInput::new(300.0, 0.0, 0.04);
        let t = vertical_load_terms(&params, &susp, &tires, &v, &w3j, &z, &u);
        let sum = t.predicted.iter().sum::<f64>();
        assert_relative_eq!(sum, 3100.0, epsilon = 1e-9);
    }

    #[test]
    fn lateral_transfer_cancels_in_axle_sums() {
        let params = VehicleParams::fsae_sample();
        let susp = SuspensionParams::from_vehicle(&params);
        let tires = TireModel::fsae_default();
        let v = v3(25.0, -0.4, -0.5);
        let w3j = Wrench::new(
            Vector3::new(0.0, 0.0, 2900.0),
            Vector3::new(-220.0, 130.0, 0.0),
        );
        let z = AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
            500.0, 700.0, 620.0, 580.0, -300.0, -1500.0, -60.0,
        ]));
        let u = ControlInput::new(0.0, -800.0, -0.06);
        let t = vertical_load_terms(&params, &susp, &tires, &v, &w3j, &z, &u);
        // axle sums depend only on the static, aero, and longitudinal parts
        let front_sum = t.predicted[0] + t.predicted[1];
        let rear_sum = t.predicted[2] + t.predicted[3];
        assert_relative_eq!(
            front_sum,
            2.0 * (t.f_z10 + t.f_z1a + t.delta_f_z),
            epsilon = 1e-10
        );
        assert_relative_eq!(
            rear_sum,
            2.0 * (t.f_z20 + t.f_z2a - t.delta_f_z),
            epsilon = 1e-10
        );
    }

    #[test]
    fn braking_loads_the_front_axle() {
        // a nose-down structural pitch moment (m_y < 0, as produced by
        // braking) must increase front loads and decrease rear loads
        let params = VehicleParams::fsae_sample();
        let susp = SuspensionParams::from_vehicle(&params);
        let tires = TireModel::fsae_default();
        let v = v3(20.0, 0.0, 0.0);
        let w = 240.0 * 9.81;
        let braking = Wrench::new(Vector3::new(0.0, 0.0, w), Vector3::new(0.0, -500.0, 0.0));
        let z = AlgebraicVars::zero();
        let u = ControlInput::new(0.0, -1500.0, 0.0);
        let t = vertical_load_terms(&params, &susp, &tires, &v, &braking, &z, &u);
        assert!(t.delta_f_z > 0.0, "braking must transfer load forward");
        let steady = Wrench::new(Vector3::new(0.0, 0.0, w), Vector3::zeros());
        let t0 = vertical_load_terms(&params, &susp, &tires, &v, &steady, &z, &u);
        assert!(t.predicted[0] > t0.predicted[0]);
        assert!(t.predicted[2] < t0.predicted[2]);
    }

    #[test]
    fn inplane_residuals_pure_traction() {
        let params = VehicleParams::fsae_sample();
        let tires = TireModel::fsae_default();
        let v = v3(20.0, 0.0, 0.0);
        let z = AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
            600.0, 600.0, 600.0, 600.0, 1000.0, 0.0, 0.0,
        ]));
        let u = ControlInput::new(1000.0, 0.0, 0.0);
        let r = inplane_wrench_residuals(&params, &tires, &v, &z, &u);
        assert_relative_eq!(r, Vector3::zeros(), epsilon = 1e-10);
    }

    #[test]
    fn inplane_matches_per_wheel_torque_transport() {
        // oracle: transport the four wheel wrenches (expressed in their own
        // steered contact frames) to {B3} and sum moments about the origin.
        // With zero steer this matches Y1 a1 - Y2 a2 exactly; with steer the
        // difference is exactly the differential-lateral-force couple
        // (t1/2) (f11y - f12y) sin(delta) that the axle-sum formula folds
        // away.
        let params = VehicleParams::fsae_sample();
        let tires = TireModel::fsae_default();
        let positions = wheel_positions(&params);

        for &(delta, vy, wz) in &[(0.0, 0.5, 0.3), (0.08, -0.4, 0.25)] {
            let v = v3(18.0, vy, wz);
            let z = AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
                520.0, 710.0, 480.0, 650.0, 0.0, 0.0, 0.0,
            ]));
            let u = ControlInput::new(400.0, -100.0, delta);
            let (alpha_f, alpha_r) = slip_angles_clamped(&v, delta, params.a1, params.a2, 0.5);
            let (fxf, fxr) = longitudinal_split(&u, params.k_b);
            let fy = [
                magic_formula_lateral(&tires.front, alpha_f, z.f11z),
                magic_formula_lateral(&tires.front, alpha_f, z.f12z),
                magic_formula_lateral(&tires.rear, alpha_r, z.f21z),
                magic_formula_lateral(&tires.rear, alpha_r, z.f22z),
            ];
            let mut m_z = 0.0;
            for i in 0..4 {
                let (fx, d) = if i < 2 { (fxf, delta) } else { (fxr, 0.0) };
                let force_wheel = Vector3::new(fx, fy[i], 0.0);
                let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), d);
                let force_b3 = rot * force_wheel;
                m_z += positions[i].cross(&force_b3)[2];
            }
            let (y1, y2) = axle_lateral_forces(&fy, fxf, delta);
            let formula = y1 * params.a1 - y2 * params.a2;
            let couple = params.t1 / 2.0 * (fy[0] - fy[1]) * delta.sin();
            assert_relative_eq!(m_z, formula + couple, epsilon = 1e-9);
            if delta == 0.0 {
                assert_relative_eq!(m_z, formula, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn w3e_packing() {
        let z = AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
            1.0, 2.0, 3.0, 4.0, 100.0, 50.0, 10.0,
        ]));
        let w = assemble_w3e(&z);
        assert_eq!(
            w.to_vector(),
            Vector6::from_row_slice(&[100.0, 50.0, 0.0, 0.0, 0.0, 10.0])
        );
        let wz = assemble_w3e(&AlgebraicVars::<f64>::zero());
        assert_eq!(wz.to_vector(), Vector6::zeros());
    }

    proptest! {
        #[test]
        fn magic_formula_is_odd(alpha in -0.5..0.5f64, f_z in 0.0..2000.0f64) {
            let c = TireCoefficients::fsae_default();
            let plus = magic_formula_lateral(&c, alpha, f_z);
            let minus = magic_formula_lateral(&c, -alpha, f_z);
            prop_assert!((plus + minus).abs() < 1e-12 * (1.0 + plus.abs()));
        }

        #[test]
        fn magic_formula_bounded_by_peak(alpha in -1.5..1.5f64, f_z in 0.0..2000.0f64) {
            let c = TireCoefficients::fsae_default();
            let fy = magic_formula_lateral(&c, alpha, f_z);
            prop_assert!(fy.abs() <= c.peak_force(f_z) * (1.0 + 1e-12));
        }

        #[test]
        fn split_sums_to_totals(f_xa in 0.0..3000.0f64, f_xb in -5000.0..0.0f64, k_b in 0.0..1.0f64) {
            let u = ControlInput::new(f_xa, f_xb, 0.0);
            let (f, r) = longitudinal_split(&u, k_b);
            prop_assert!((2.0 * f + 2.0 * r - (f_xa + f_xb)).abs() < 1e-9);
        }
    }
}
