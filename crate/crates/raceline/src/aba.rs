//! Articulated-body forward dynamics tailored to the vehicle chain:
//! articulated inertias and bias forces (backward sweep), joint
//! accelerations (forward sweep), suspension joint forces, the aerodynamic
//! wrench, and the structural wrench at the axle body.
//!
//! Gravity enters through a fictitious upward base acceleration
//! `Vdot_0 = [0, 0, a_g, 0, 0, 0]` with `V_0 = 0`, which the forward sweep
//! propagates through the chain; [`gravity_wrench`] provides the equivalent
//! explicit per-body wrench for cross-checks.

use std::fmt;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::chain::{ChainKinematics, ChainState, VehicleChain, NUM_JOINTS};
use crate::liegroup::{
    ad_apply, ad_star_apply, adjoint, coadjoint_wrench, hat, Pose, Twist, Wrench,
};
use crate::params::VehicleParams;
use crate::scalar::{lift, Real};

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq)]
pub enum AbaError {
    /// `X^T Mhat X` (or the track-joint equivalent) lost positivity.
    IllConditionedArticulation { joint: usize, value: f64 },
    /// The structural wrench acquired in-plane components beyond tolerance.
    WrenchPartition { fraction: f64 },
}

impl fmt::Display for AbaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbaError::IllConditionedArticulation { joint, value } => write!(
                f,
                "articulated inertia at joint {joint} is not positive definite \
                 along its axis (X^T Mhat X = {value:.3e})"
            ),
            AbaError::WrenchPartition { fraction } => write!(
                f,
                "structural wrench has in-plane components ({fraction:.3e} of its norm); \
                 the wrench partition is inconsistent"
            ),
        }
    }
}

impl std::error::Error for AbaError {}

/// Mass, center-of-mass offset, and rotational inertia about the center of
/// mass, expressed in the body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    pub com_offset: Vector3<f64>,
    pub rotational_inertia: Matrix3<f64>,
}

impl SpatialInertia {
    pub fn zero() -> Self {
        SpatialInertia {
            mass: 0.0,
            com_offset: Vector3::zeros(),
            rotational_inertia: Matrix3::zeros(),
        }
    }

    pub fn point_mass(mass: f64) -> Self {
        SpatialInertia {
            mass,
            com_offset: Vector3::zeros(),
            rotational_inertia: Matrix3::zeros(),
        }
    }

    /// 6x6 spatial inertia about the body-frame origin, linear-first:
    /// `[[m I, -m c_hat], [m c_hat, I_com - m c_hat c_hat]]`.
    pub fn matrix<T: Real>(&self) -> Matrix6<T> {
        let m = lift::<T>(self.mass);
        let c = self.com_offset.map(lift::<T>);
        let ch = hat(&c);
        let mut out = Matrix6::zeros();
        out.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(Matrix3::identity() * m));
        out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-ch * m));
        out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(ch * m));
        out.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(self.rotational_inertia.map(lift::<T>) - ch * ch * m));
        out
    }

    /// Body momentum `M V` without forming the 6x6 matrix.
    pub fn momentum<T: Real>(&self, v: &Twist<T>) -> Wrench<T> {
        let m = lift::<T>(self.mass);
        let c = self.com_offset.map(lift::<T>);
        let ic = self.rotational_inertia.map(lift::<T>);
        let ch = hat(&c);
        Wrench {
            force: v.linear * m - c.cross(&v.angular) * m,
            moment: c.cross(&v.linear) * m + (ic - ch * ch * m) * v.angular,
        }
    }

    /// Kinetic energy `V^T M V / 2`.
    pub fn kinetic_energy<T: Real>(&self, v: &Twist<T>) -> T {
        self.momentum(v).pair(v) * lift::<T>(0.5)
    }
}

/// Per-body inertias of the vehicle: only the axle body (3) and the sprung
/// body (6) are massive. The sprung center of mass sits `h` above the VIP.
pub fn vehicle_inertias(params: &VehicleParams) -> [SpatialInertia; NUM_JOINTS] {
    let mut inertias = [
        SpatialInertia::zero(),
        SpatialInertia::zero(),
        SpatialInertia::zero(),
        SpatialInertia::zero(),
        SpatialInertia::zero(),
        SpatialInertia::zero(),
    ];
    inertias[2] = SpatialInertia::point_mass(params.unsprung_mass());
    inertias[5] = SpatialInertia {
        mass: params.sprung_mass(),
        com_offset: Vector3::new(0.0, 0.0, params.h),
        rotational_inertia: Matrix3::from_diagonal(&Vector3::new(
            params.i_xx,
            params.i_yy,
            params.i_zz,
        )),
    };
    inertias
}

/// Per-corner suspension rates and the geometry needed to aggregate them.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspensionParams {
    /// Spring rates `[k11, k12, k21, k22]` (N/m): front pair then rear pair.
    pub spring: [f64; 4],
    /// Damper rates in the same order (N s/m).
    pub damper: [f64; 4],
    pub t1: f64,
    pub t2: f64,
    pub a1: f64,
    pub a2: f64,
    pub h_q1: f64,
    pub h_q2: f64,
}

impl SuspensionParams {
    pub fn from_vehicle(p: &VehicleParams) -> Self {
        SuspensionParams {
            spring: [p.k_front, p.k_front, p.k_rear, p.k_rear],
            damper: [p.c_front, p.c_front, p.c_rear, p.c_rear],
            t1: p.t1,
            t2: p.t2,
            a1: p.a1,
            a2: p.a2,
            h_q1: p.h_q1,
            h_q2: p.h_q2,
        }
    }

    fn aggregate(&self, rates: &[f64; 4]) -> (f64, f64, f64) {
        let front = rates[0] + rates[1];
        let rear = rates[2] + rates[3];
        let roll = front / 4.0 * self.t1 * self.t1 + rear / 4.0 * self.t2 * self.t2;
        let pitch = front * self.a1 * self.a1 + rear * self.a2 * self.a2;
        let vertical = front + rear;
        (roll, pitch, vertical)
    }

    /// Equivalent roll stiffness (N m/rad).
    pub fn k_phi(&self) -> f64 {
        self.aggregate(&self.spring).0
    }

    /// Equivalent pitch stiffness (N m/rad).
    pub fn k_theta(&self) -> f64 {
        self.aggregate(&self.spring).1
    }

    /// Equivalent vertical stiffness (N/m).
    pub fn k(&self) -> f64 {
        self.aggregate(&self.spring).2
    }

    pub fn c_phi(&self) -> f64 {
        self.aggregate(&self.damper).0
    }

    pub fn c_theta(&self) -> f64 {
        self.aggregate(&self.damper).1
    }

    pub fn c(&self) -> f64 {
        self.aggregate(&self.damper).2
    }

    /// Roll stiffness of the front axle alone.
    pub fn k_phi_front(&self) -> f64 {
        (self.spring[0] + self.spring[1]) / 4.0 * self.t1 * self.t1
    }

    /// Roll stiffness of the rear axle alone.
    pub fn k_phi_rear(&self) -> f64 {
        (self.spring[2] + self.spring[3]) / 4.0 * self.t2 * self.t2
    }
}

/// Spring and damper joint forces: zero on the three virtual track joints,
/// linear constitutive laws on bounce, pitch and roll.
pub fn suspension_generalized_forces<T: Real>(
    susp: &SuspensionParams,
    state: &ChainState<T>,
) -> Vector6<T> {
    let mut tau = Vector6::zeros();
    tau[3] = -lift::<T>(susp.k()) * state.q[3] - lift::<T>(susp.c()) * state.qdot[3];
    tau[4] = -lift::<T>(susp.k_theta()) * state.q[4] - lift::<T>(susp.c_theta()) * state.qdot[4];
    tau[5] = -lift::<T>(susp.k_phi()) * state.q[5] - lift::<T>(susp.c_phi()) * state.qdot[5];
    tau
}

/// Aerodynamic wrench on the sprung body, expressed in `{B3}`:
/// drag, downforce and pitch moment, quadratic in the longitudinal speed.
/// The drag term uses `v |v|` so it always opposes motion; downforce and
/// pitch moment are even in the speed.
pub fn aero_wrench<T: Real>(params: &VehicleParams, v3x: T) -> Wrench<T> {
    let half_rho_s = lift::<T>(-0.5 * params.rho * params.s);
    let q_odd = half_rho_s * v3x * v3x.abs();
    let q_even = half_rho_s * v3x * v3x;
    Wrench {
        force: Vector3::new(
            q_odd * lift(params.c_x),
            T::zero(),
            q_even * lift(params.c_z()),
        ),
        moment: Vector3::new(
            T::zero(),
            q_even * lift(params.c_z2 * params.a2 - params.c_z1 * params.a1),
            T::zero(),
        ),
    }
}

/// Transport the `{B3}` aerodynamic wrench to `{B6}`.
pub fn aero_wrench_body6<T: Real>(kin: &ChainKinematics<T>, w3: &Wrench<T>) -> Wrench<T> {
    let g_6_3 = kin.g_3_to_6().inverse();
    coadjoint_wrench(&g_6_3, w3)
}

/// Explicit gravity wrench on a body (about its frame origin), equivalent to
/// the fictitious base acceleration.
pub fn gravity_wrench<T: Real>(
    inertia: &SpatialInertia,
    g_0k: &Pose<T>,
    a_g: f64,
) -> Wrench<T> {
    let f_world = Vector3::new(T::zero(), T::zero(), lift::<T>(-inertia.mass * a_g));
    let f = g_0k.rotation.transpose() * f_world;
    Wrench {
        force: f,
        moment: inertia.com_offset.map(lift::<T>).cross(&f),
    }
}

/// External wrenches applied directly to the bodies: the in-plane tire
/// placeholder wrench on body 3 and the aerodynamic wrench on body 6.
#[derive(Debug, Clone)]
pub struct ExternalWrenches<T: Real> {
    pub wrenches: [Wrench<T>; NUM_JOINTS],
}

impl<T: Real> ExternalWrenches<T> {
    pub fn none() -> Self {
        ExternalWrenches {
            wrenches: [Wrench::zero(); NUM_JOINTS],
        }
    }
}

/// Articulated inertias and bias forces after the backward sweep.
#[derive(Debug, Clone)]
pub struct ArticulatedState<T: Real> {
    /// `Mhat_k` for every body.
    pub mhat: [Matrix6<T>; NUM_JOINTS],
    /// `bhat_k` for every body.
    pub bhat: [Vector6<T>; NUM_JOINTS],
    /// Projected inertia `Mbar_l` (defined for bodies 2..6).
    pub mbar: [Matrix6<T>; NUM_JOINTS],
    /// `X_l^T Mhat_l X_l` for joints 2..6, reused by the forward sweep.
    pub joint_inertia: [T; NUM_JOINTS],
}

/// Backward sweep: articulated body inertia and generalized bias force.
///
/// Bodies are processed in strictly decreasing order so the articulated
/// inertia accumulated from the sprung body keeps every joint projection
/// positive even though bodies 1, 2, 4, 5 are massless.
pub fn backward_pass<T: Real>(
    chain: &VehicleChain,
    kin: &ChainKinematics<T>,
    external: &ExternalWrenches<T>,
    tau: &Vector6<T>,
    inertias: &[SpatialInertia; NUM_JOINTS],
    state: &ChainState<T>,
) -> Result<ArticulatedState<T>, AbaError> {
    let mut mhat = [Matrix6::zeros(); NUM_JOINTS];
    let mut bhat = [Vector6::zeros(); NUM_JOINTS];
    let mut mbar = [Matrix6::zeros(); NUM_JOINTS];
    let mut joint_inertia = [T::zero(); NUM_JOINTS];

    for k in (0..NUM_JOINTS).rev() {
        let m_k = inertias[k].matrix::<T>();
        // bias: gyroscopic momentum rate minus directly applied wrench
        let b_k = ad_star_apply(
            &kin.velocities[k],
            &inertias[k].momentum(&kin.velocities[k]),
        )
        .to_vector()
            - external.wrenches[k].to_vector();

        if k == NUM_JOINTS - 1 {
            mhat[k] = m_k;
            bhat[k] = b_k;
            continue;
        }

        let l = k + 1;
        let x_l = chain.joint_twist::<T>(l).to_vector();
        let mx = mhat[l] * x_l;
        let d = x_l.dot(&mx);
        joint_inertia[l] = d;
        if d.re() <= 1e-12 {
            return Err(AbaError::IllConditionedArticulation {
                joint: l + 1,
                value: d.re(),
            });
        }
        mbar[l] = mhat[l] - (mx * mx.transpose()) / d;

        // A_{lk} maps twists from frame k to frame l
        let a_lk = adjoint(&kin.local_poses[l].inverse());
        mhat[k] = m_k + a_lk.transpose() * mbar[l] * a_lk;

        let v_k_in_l = a_lk * kin.velocities[k].to_vector();
        let xqd = chain.joint_twist::<T>(l).scale(state.qdot[l]);
        let coriolis = ad_apply(&xqd, &Twist::from_vector(&v_k_in_l)).to_vector();
        let inner = bhat[l] - mbar[l] * coriolis + mx * ((tau[l] - x_l.dot(&bhat[l])) / d);
        bhat[k] = b_k + a_lk.transpose() * inner;
    }

    Ok(ArticulatedState {
        mhat,
        bhat,
        mbar,
        joint_inertia,
    })
}

/// Result of the forward acceleration sweep.
#[derive(Debug, Clone)]
pub struct AccelPass<T: Real> {
    pub qddot: Vector6<T>,
    pub vdot: [Twist<T>; NUM_JOINTS],
}

/// Forward sweep: joint accelerations and body acceleration twists.
///
/// `base_accel` is the fictitious ground acceleration encoding gravity
/// (`[0, 0, a_g, 0, 0, 0]` with zero base velocity).
pub fn accel_pass<T: Real>(
    chain: &VehicleChain,
    kin: &ChainKinematics<T>,
    art: &ArticulatedState<T>,
    tau: &Vector6<T>,
    base_accel: &Twist<T>,
    state: &ChainState<T>,
) -> Result<AccelPass<T>, AbaError> {
    let mut qddot = Vector6::zeros();
    let mut vdot = [Twist::zero(); NUM_JOINTS];

    // track joint: q1 is not a screw coordinate, so the joint Jacobian J(q1)
    // and its derivative take the place of the axis twist
    let j = kin.track_jacobian;
    let jq = kin.track_jacobian_dq1;
    let a0_in_1 = adjoint(&kin.global_poses[0].inverse()) * base_accel.to_vector();
    let bias_accel = a0_in_1 + jq * (state.qdot[0] * state.qdot[0]);
    let den = j.dot(&(art.mhat[0] * j));
    if den.re() <= 1e-12 {
        return Err(AbaError::IllConditionedArticulation {
            joint: 1,
            value: den.re(),
        });
    }
    qddot[0] = -j.dot(&(art.mhat[0] * bias_accel + art.bhat[0])) / den;
    vdot[0] = Twist::from_vector(&(bias_accel + j * qddot[0]));

    for k in 1..NUM_JOINTS {
        let x = chain.joint_twist::<T>(k);
        let xv = x.to_vector();
        let a = adjoint(&kin.local_poses[k].inverse());
        let v_parent_in_k = Twist::from_vector(&(a * kin.velocities[k - 1].to_vector()));
        let vdot_parent_in_k = a * vdot[k - 1].to_vector();
        let coriolis = ad_apply(&x.scale(state.qdot[k]), &v_parent_in_k).to_vector();
        let d = art.joint_inertia[k];
        if d.re() <= 1e-12 {
            return Err(AbaError::IllConditionedArticulation {
                joint: k + 1,
                value: d.re(),
            });
        }
        qddot[k] = (tau[k]
            - xv.dot(&(art.mhat[k] * (vdot_parent_in_k - coriolis) + art.bhat[k])))
            / d;
        vdot[k] = Twist::from_vector(&(vdot_parent_in_k + xv * qddot[k] - coriolis));
    }

    Ok(AccelPass { qddot, vdot })
}

/// Structural wrench at the axle body: `W_3J = Mhat_3 Vdot_3 + bhat_3`.
///
/// On a flat track its in-plane components (f_x, f_y, m_z) vanish because
/// the three virtual track joints absorb exactly the out-of-plane directions;
/// banking and 3D curvature couple small in-plane components into it.
/// [`check_inplane_pattern`] measures the violation.
pub fn structural_wrench<T: Real>(art: &ArticulatedState<T>, vdot3: &Twist<T>) -> Wrench<T> {
    Wrench::from_vector(&(art.mhat[2] * vdot3.to_vector() + art.bhat[2]))
}

/// Relative magnitude of the in-plane components of a structural wrench;
/// errors above `tol_rel` signal a wrench-partition bug on flat tracks.
pub fn check_inplane_pattern<T: Real>(w: &Wrench<T>, tol_rel: f64) -> Result<f64, AbaError> {
    let total = w.to_vector().map(|x| x.re()).norm();
    let inplane = (w.force[0].re().powi(2) + w.force[1].re().powi(2) + w.moment[2].re().powi(2))
        .sqrt();
    let fraction = if total > 0.0 { inplane / total } else { 0.0 };
    if fraction > tol_rel {
        return Err(AbaError::WrenchPartition { fraction });
    }
    Ok(fraction)
}

/// The fictitious base acceleration encoding gravity.
pub fn gravity_base_accel<T: Real>() -> Twist<T> {
    Twist::new(
        Vector3::new(T::zero(), T::zero(), lift::<T>(GRAVITY)),
        Vector3::zeros(),
    )
}
