//! The six-joint vehicle chain and forward propagation of postures and
//! velocities.
//!
//! Joint layout, starting from the ground frame `{B0}`:
//!
//! 1. track joint `q1`: ground to the ribbon frame, handled through the
//!    track-joint map rather than a twist exponential;
//! 2. prismatic `q2` along `j1`: lateral displacement on the (possibly
//!    banked) road plane;
//! 3. revolute `q3` about `k2`: yaw relative to the track;
//! 4. prismatic `q4` along `k3`: suspension travel, positive away from the
//!    road;
//! 5. revolute `q5` about `j4`: pitch, positive nose-down;
//! 6. revolute `q6` about `i5`: roll, positive leaning left-side-up.
//!
//! All home poses are the identity: `{B4}..{B6}` share their origin with
//! `{B3}` (the vehicle invariant point at road level) and the sprung-mass
//! center of mass sits at height `h` inside the body-6 spatial inertia.

use std::fmt;

use nalgebra::{Vector3, Vector6};

use crate::liegroup::{adjoint_apply, exp_twist, Pose, Twist};
use crate::params::VehicleParams;
use crate::scalar::{lift, Real};
use crate::track::{TrackError, TrackSpline};

pub const NUM_JOINTS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Track,
    Prismatic,
    Revolute,
}

/// One joint of the chain: its kind, screw axis (unused for the track
/// joint), and home pose `g_{k-1,k}(0)`.
#[derive(Debug, Clone)]
pub struct JointModel {
    pub kind: JointKind,
    pub twist: Twist<f64>,
    pub home_pose: Pose<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainError {
    Track(TrackError),
    InvalidGeometry(String),
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainError::Track(e) => write!(f, "{e}"),
            ChainError::InvalidGeometry(m) => write!(f, "invalid chain geometry: {m}"),
        }
    }
}

impl std::error::Error for ChainError {}

impl From<TrackError> for ChainError {
    fn from(e: TrackError) -> Self {
        ChainError::Track(e)
    }
}

/// Joint coordinates and rates.
#[derive(Debug, Clone, Copy)]
pub struct ChainState<T: Real> {
    pub q: Vector6<T>,
    pub qdot: Vector6<T>,
}

/// Everything the dynamics passes need from the kinematics sweep.
#[derive(Debug, Clone)]
pub struct ChainKinematics<T: Real> {
    /// Relative poses `g_{k-1,k}(q_k)`.
    pub local_poses: [Pose<T>; NUM_JOINTS],
    /// Accumulated poses `g_{0,k}`.
    pub global_poses: [Pose<T>; NUM_JOINTS],
    /// Body twists `V_k^k`.
    pub velocities: [Twist<T>; NUM_JOINTS],
    /// Track joint Jacobian `J^1_{0,1}(q1)` (twist per unit `q1`).
    pub track_jacobian: Vector6<T>,
    /// Its derivative with respect to `q1`.
    pub track_jacobian_dq1: Vector6<T>,
    /// `|dp/dalpha|` at `q1`.
    pub tangent_norm: T,
}

/// The vehicle chain: joint models plus the track it is embedded in.
#[derive(Debug, Clone)]
pub struct VehicleChain {
    pub joints: [JointModel; NUM_JOINTS],
    pub track: TrackSpline,
}

/// Build the six-joint chain for the given vehicle on the given track.
pub fn build_vehicle_chain(
    params: &VehicleParams,
    track: TrackSpline,
) -> Result<VehicleChain, ChainError> {
    params
        .validate()
        .map_err(|e| ChainError::InvalidGeometry(e.to_string()))?;
    let zero = Vector3::zeros();
    let joints = [
        JointModel {
            kind: JointKind::Track,
            twist: Twist::new(zero, zero),
            home_pose: Pose::identity(),
        },
        JointModel {
            kind: JointKind::Prismatic,
            twist: Twist::new(Vector3::y(), zero),
            home_pose: Pose::identity(),
        },
        JointModel {
            kind: JointKind::Revolute,
            twist: Twist::new(zero, Vector3::z()),
            home_pose: Pose::identity(),
        },
        JointModel {
            kind: JointKind::Prismatic,
            twist: Twist::new(Vector3::z(), zero),
            home_pose: Pose::identity(),
        },
        JointModel {
            kind: JointKind::Revolute,
            twist: Twist::new(zero, Vector3::y()),
            home_pose: Pose::identity(),
        },
        JointModel {
            kind: JointKind::Revolute,
            twist: Twist::new(zero, Vector3::x()),
            home_pose: Pose::identity(),
        },
    ];
    Ok(VehicleChain { joints, track })
}

impl VehicleChain {
    /// Joint screw axis in the local frame, lifted to the working scalar.
    pub fn joint_twist<T: Real>(&self, k: usize) -> Twist<T> {
        let x = &self.joints[k].twist;
        Twist::new(x.linear.map(lift::<T>), x.angular.map(lift::<T>))
    }
}

/// Forward propagation of postures and velocities.
///
/// The track joint uses `g_01(q1)` and `V_1^1 = J(q1) q1_dot`; every other
/// joint uses the twist-exponential update and the velocity recursion
/// `V_k = Ad_{g_{k,k-1}} V_{k-1} + X_k qdot_k`.
pub fn forward_pass<T: Real>(
    chain: &VehicleChain,
    state: &ChainState<T>,
) -> Result<ChainKinematics<T>, ChainError> {
    let tj = chain.track.track_joint(state.q[0])?;
    let mut local_poses = [Pose::identity(); NUM_JOINTS];
    let mut global_poses = [Pose::identity(); NUM_JOINTS];
    let mut velocities = [Twist::zero(); NUM_JOINTS];

    local_poses[0] = tj.pose;
    global_poses[0] = tj.pose;
    velocities[0] = Twist::from_vector(&(tj.jacobian * state.qdot[0]));

    for k in 1..NUM_JOINTS {
        let x = chain.joint_twist::<T>(k);
        let home = &chain.joints[k].home_pose;
        let home = Pose::from_parts(
            home.rotation.map(lift::<T>),
            home.translation.map(lift::<T>),
        );
        let g = home.compose(&exp_twist(&x, state.q[k]));
        local_poses[k] = g;
        global_poses[k] = global_poses[k - 1].compose(&g);
        let parent_in_k = adjoint_apply(&g.inverse(), &velocities[k - 1]);
        velocities[k] = Twist::new(
            parent_in_k.linear + x.linear * state.qdot[k],
            parent_in_k.angular + x.angular * state.qdot[k],
        );
    }

    Ok(ChainKinematics {
        local_poses,
        global_poses,
        velocities,
        track_jacobian: tj.jacobian,
        track_jacobian_dq1: tj.jacobian_dq1,
        tangent_norm: tj.tangent_norm,
    })
}

impl<T: Real> ChainKinematics<T> {
    /// Pose of frame `{B6}` relative to `{B3}`.
    pub fn g_3_to_6(&self) -> Pose<T> {
        self.local_poses[3]
            .compose(&self.local_poses[4])
            .compose(&self.local_poses[5])
    }
}
