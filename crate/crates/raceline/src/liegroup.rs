//! SE(3)/se(3) calculus: exponentials, adjoints, wrench transforms.
//!
//! Conventions used across the whole crate:
//!
//! * Twists are stacked **linear-first**: `V = [v; omega]`. Wrenches pair with
//!   twists through `<W, V> = f.v + m.omega`, so they are stacked
//!   **force-first**: `W = [f; m]`.
//! * `g_ab` denotes the pose of frame `{b}` expressed in frame `{a}`, i.e.
//!   `x_a = g_ab x_b`. [`adjoint`] of `g_ab` maps twists read in `{b}` to
//!   twists read in `{a}`; [`coadjoint_wrench`] does the same for wrenches.
//! * `ad_V` is the small adjoint `[[omega_hat, v_hat], [0, omega_hat]]` in the
//!   linear-first ordering, and `ad*_V = -ad_V^T`.

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};

use crate::scalar::{lift, Real};

/// Rigid-body pose: rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

/// Rigid-body velocity (or per-parameter tangent), linear part first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist<T: Real> {
    pub linear: Vector3<T>,
    pub angular: Vector3<T>,
}

/// Force system on a rigid body, force first, moment about the frame origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench<T: Real> {
    pub force: Vector3<T>,
    pub moment: Vector3<T>,
}

/// Skew-symmetric (hat) matrix of a 3-vector.
pub fn hat<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v[2], v[1], v[2], z, -v[0], -v[1], v[0], z)
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_parts(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Group composition: `g_ac = g_ab * g_bc`.
    pub fn compose(&self, other: &Pose<T>) -> Pose<T> {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Group inverse: `g_ba` from `g_ab`.
    pub fn inverse(&self) -> Pose<T> {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Homogeneous 4x4 form.
    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Largest deviation from orthonormality and unit determinant.
    ///
    /// Returns `(|R^T R - I|_F, det R - 1)`.
    pub fn orthonormality_defect(&self) -> (T, T) {
        let d = self.rotation.transpose() * self.rotation - Matrix3::identity();
        (d.norm(), self.rotation.determinant() - T::one())
    }
}

impl<T: Real> Twist<T> {
    pub fn zero() -> Self {
        Twist {
            linear: Vector3::zeros(),
            angular: Vector3::zeros(),
        }
    }

    pub fn new(linear: Vector3<T>, angular: Vector3<T>) -> Self {
        Twist { linear, angular }
    }

    pub fn from_vector(v: &Vector6<T>) -> Self {
        Twist {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<T> {
        Vector6::new(
            self.linear[0],
            self.linear[1],
            self.linear[2],
            self.angular[0],
            self.angular[1],
            self.angular[2],
        )
    }

    /// 4x4 hat form `[[omega_hat, v], [0, 0]]`.
    pub fn to_hat(&self) -> Matrix4<T> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&self.angular));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.linear);
        m
    }

    pub fn scale(&self, s: T) -> Twist<T> {
        Twist {
            linear: self.linear * s,
            angular: self.angular * s,
        }
    }
}

impl<T: Real> Wrench<T> {
    pub fn zero() -> Self {
        Wrench {
            force: Vector3::zeros(),
            moment: Vector3::zeros(),
        }
    }

    pub fn new(force: Vector3<T>, moment: Vector3<T>) -> Self {
        Wrench { force, moment }
    }

    pub fn from_vector(v: &Vector6<T>) -> Self {
        Wrench {
            force: Vector3::new(v[0], v[1], v[2]),
            moment: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<T> {
        Vector6::new(
            self.force[0],
            self.force[1],
            self.force[2],
            self.moment[0],
            self.moment[1],
            self.moment[2],
        )
    }

    /// Power pairing `<W, V> = f.v + m.omega`.
    pub fn pair(&self, v: &Twist<T>) -> T {
        self.force.dot(&v.linear) + self.moment.dot(&v.angular)
    }
}

/// Exponential of a screw `X` scaled by the joint value `q`.
///
/// `X` may have any finite coordinates; revolute joints conventionally carry a
/// unit angular part and prismatic joints a zero angular part, so that `q` is
/// an angle or a displacement. A Taylor branch below `|omega| q < 1e-4`
/// avoids the cancellation in `(1 - cos)/theta^2` and `(theta - sin)/theta^3`
/// and keeps the function smooth for dual arithmetic.
pub fn exp_twist<T: Real>(x: &Twist<T>, q: T) -> Pose<T> {
    let u = x.angular * q; // rotation vector
    let t = x.linear * q;
    let theta_sq = u.dot(&u);

    // Rodrigues coefficients a = sin(theta)/theta, b = (1-cos)/theta^2,
    // c = (theta - sin)/theta^3, as smooth functions of theta^2.
    let (a, b, c) = if theta_sq.re() < 1e-8 {
        let half = lift::<T>(0.5);
        let a = T::one() - theta_sq * lift(1.0 / 6.0) + theta_sq * theta_sq * lift(1.0 / 120.0);
        let b = half - theta_sq * lift(1.0 / 24.0) + theta_sq * theta_sq * lift(1.0 / 720.0);
        let c = lift::<T>(1.0 / 6.0) - theta_sq * lift(1.0 / 120.0)
            + theta_sq * theta_sq * lift(1.0 / 5040.0);
        (a, b, c)
    } else {
        let theta = theta_sq.sqrt();
        let a = theta.sin() / theta;
        let b = (T::one() - theta.cos()) / theta_sq;
        let c = (theta - theta.sin()) / (theta_sq * theta);
        (a, b, c)
    };

    let uh = hat(&u);
    let uh2 = uh * uh;
    let rotation = Matrix3::identity() + uh * a + uh2 * b;
    // Left Jacobian of SO(3) applied to the translation part.
    let translation = (Matrix3::identity() + uh * b + uh2 * c) * t;
    Pose {
        rotation,
        translation,
    }
}

/// 6x6 adjoint of a pose: maps twists from the child frame to the parent.
pub fn adjoint<T: Real>(g: &Pose<T>) -> Matrix6<T> {
    let mut m = Matrix6::zeros();
    let ph_r = hat(&g.translation) * g.rotation;
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&g.rotation);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&ph_r);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&g.rotation);
    m
}

/// Apply the adjoint of `g_ab` to a twist read in `{b}`, producing the same
/// twist read in `{a}`.
pub fn adjoint_apply<T: Real>(g: &Pose<T>, v: &Twist<T>) -> Twist<T> {
    let ang = g.rotation * v.angular;
    Twist {
        linear: g.rotation * v.linear + g.translation.cross(&ang),
        angular: ang,
    }
}

/// Co-adjoint wrench transform: `W^a = Ad*_{g_ab} W^b` with
/// `Ad*_g = Ad_g^{-T}`, preserving the power pairing.
pub fn coadjoint_wrench<T: Real>(g: &Pose<T>, w: &Wrench<T>) -> Wrench<T> {
    let f = g.rotation * w.force;
    Wrench {
        force: f,
        moment: g.rotation * w.moment + g.translation.cross(&f),
    }
}

/// Small adjoint `ad_V` as a 6x6 matrix, linear-first ordering.
pub fn ad_small<T: Real>(v: &Twist<T>) -> Matrix6<T> {
    let mut m = Matrix6::zeros();
    let wh = hat(&v.angular);
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&wh);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&hat(&v.linear));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&wh);
    m
}

/// `ad_{V1} V2`, the Lie bracket of two twists.
pub fn ad_apply<T: Real>(v1: &Twist<T>, v2: &Twist<T>) -> Twist<T> {
    Twist {
        linear: v1.angular.cross(&v2.linear) + v1.linear.cross(&v2.angular),
        angular: v1.angular.cross(&v2.angular),
    }
}

/// `ad*_V W = -ad_V^T W`, the bias-force pairing used by the dynamics.
pub fn ad_star_apply<T: Real>(v: &Twist<T>, w: &Wrench<T>) -> Wrench<T> {
    // -ad_V^T = [[-omega_hat^T, 0], [-v_hat^T, -omega_hat^T]]
    //         = [[omega_hat, 0], [v_hat, omega_hat]] acting blockwise.
    Wrench {
        force: v.angular.cross(&w.force),
        moment: v.linear.cross(&w.force) + v.angular.cross(&w.moment),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn unit_z() -> Vector3<f64> {
        Vector3::z()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let x = Twist::new(Vector3::new(0.3, -0.1, 0.9), Vector3::new(0.2, 0.8, -0.5));
        let g = exp_twist(&x, 0.0);
        assert_relative_eq!(g.rotation, Matrix3::identity(), epsilon = 1e-15);
        assert_relative_eq!(g.translation, Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn exp_pure_prismatic() {
        let x = Twist::new(unit_z(), Vector3::zeros());
        let g = exp_twist(&x, 2.5);
        assert_relative_eq!(g.rotation, Matrix3::identity(), epsilon = 1e-15);
        assert_relative_eq!(g.translation, Vector3::new(0.0, 0.0, 2.5), epsilon = 1e-15);
    }

    #[test]
    fn exp_pure_revolute_quarter_turn() {
        // Rodrigues closed form: a quarter turn about z maps e_x to e_y.
        let x = Twist::new(Vector3::zeros(), unit_z());
        let g = exp_twist(&x, FRAC_PI_2);
        let ex = g.rotation * Vector3::x();
        assert_relative_eq!(ex, Vector3::y(), epsilon = 1e-14);
        assert_relative_eq!(g.translation, Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn exp_matches_series_near_zero_angle() {
        // Compare the Taylor branch with an explicit matrix-series evaluation.
        let x = Twist::new(Vector3::new(0.4, 0.2, -0.3), Vector3::new(0.6, -0.8, 0.0));
        let q = 1e-5;
        let g = exp_twist(&x, q);
        let xh = x.to_hat() * q;
        let mut series = Matrix4::identity();
        let mut term = Matrix4::identity();
        for k in 1..8 {
            term = term * xh / (k as f64);
            series += term;
        }
        assert_relative_eq!(g.to_homogeneous(), series, epsilon = 1e-18);
    }

    #[test]
    fn adjoint_of_identity() {
        let g = Pose::<f64>::identity();
        assert_relative_eq!(adjoint(&g), Matrix6::identity(), epsilon = 1e-15);
    }

    #[test]
    fn translation_acts_trivially_on_pure_linear_twist() {
        let g = Pose::from_translation(Vector3::new(1.0, -2.0, 0.5));
        let v = Twist::new(Vector3::new(0.3, 0.4, -0.2), Vector3::zeros());
        let out = adjoint_apply(&g, &v);
        assert_relative_eq!(out.linear, v.linear, epsilon = 1e-15);
        assert_relative_eq!(out.angular, Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn adjoint_matches_hat_form_conjugation() {
        // g V_hat g^{-1} is the frame-change of the 4x4 hat form.
        let x = Twist::new(Vector3::zeros(), unit_z());
        let mut g = exp_twist(&x, FRAC_PI_2);
        g.translation = Vector3::new(1.0, 0.0, 0.0);
        let v = Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0));
        let out = adjoint_apply(&g, &v);
        let conj = g.to_homogeneous() * v.to_hat() * g.inverse().to_homogeneous();
        let lin = Vector3::new(conj[(0, 3)], conj[(1, 3)], conj[(2, 3)]);
        let ang = Vector3::new(conj[(2, 1)], conj[(0, 2)], conj[(1, 0)]);
        assert_relative_eq!(out.linear, lin, epsilon = 1e-14);
        assert_relative_eq!(out.angular, ang, epsilon = 1e-14);
    }

    #[test]
    fn coadjoint_identity_and_pure_force_transport() {
        let w = Wrench::new(Vector3::new(10.0, -4.0, 2.0), Vector3::new(0.5, 0.0, -1.0));
        let out = coadjoint_wrench(&Pose::identity(), &w);
        assert_relative_eq!(out.to_vector(), w.to_vector(), epsilon = 1e-15);

        // Elementary statics: a pure force moved by a translation d picks up
        // the moment d x f.
        let d = Vector3::new(0.7, -0.3, 1.2);
        let f = Vector3::new(3.0, 5.0, -2.0);
        let out = coadjoint_wrench(
            &Pose::from_translation(d),
            &Wrench::new(f, Vector3::zeros()),
        );
        assert_relative_eq!(out.force, f, epsilon = 1e-15);
        assert_relative_eq!(out.moment, d.cross(&f), epsilon = 1e-15);
    }

    #[test]
    fn ad_small_of_zero_twist() {
        let m = ad_small(&Twist::<f64>::zero());
        assert_relative_eq!(m, Matrix6::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn ad_star_is_negative_transpose() {
        let v = Twist::new(Vector3::new(0.1, -0.7, 0.4), Vector3::new(0.9, 0.2, -0.3));
        let m = ad_small(&v);
        let w = Wrench::new(Vector3::new(2.0, -1.0, 0.5), Vector3::new(0.1, 3.0, -2.0));
        let out = ad_star_apply(&v, &w);
        let expect = -(m.transpose() * w.to_vector());
        assert_relative_eq!(out.to_vector(), expect, epsilon = 1e-14);
    }

    #[test]
    fn adjoint_derivative_along_screw_path() {
        // d/dt Ad_{g(t)} = Ad_g ad_V along g(t) = exp(X t), finite differences.
        let x = Twist::new(Vector3::new(0.3, 0.1, -0.2), Vector3::new(0.5, -0.4, 0.7));
        let t0 = 0.8;
        let h = 1e-6;
        let gp = exp_twist(&x, t0 + h);
        let gm = exp_twist(&x, t0 - h);
        let fd = (adjoint(&gp) - adjoint(&gm)) / (2.0 * h);
        let analytic = adjoint(&exp_twist(&x, t0)) * ad_small(&x);
        assert_relative_eq!(fd, analytic, epsilon = 1e-6);
    }

    fn arb_twist() -> impl Strategy<Value = Twist<f64>> {
        let c = -2.0..2.0f64;
        (c.clone(), c.clone(), c.clone(), c.clone(), c.clone(), c).prop_map(
            |(a, b, cc, d, e, f)| Twist::new(Vector3::new(a, b, cc), Vector3::new(d, e, f)),
        )
    }

    proptest! {
        #[test]
        fn exp_composition_property(x in arb_twist(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
            let lhs = exp_twist(&x, a).compose(&exp_twist(&x, b));
            let rhs = exp_twist(&x, a + b);
            prop_assert!((lhs.to_homogeneous() - rhs.to_homogeneous()).norm() < 1e-12);
        }

        #[test]
        fn exp_preserves_orthonormality(x in arb_twist(), q in -3.0..3.0f64) {
            let g = exp_twist(&x, q);
            let (ortho, det) = g.orthonormality_defect();
            prop_assert!(ortho < 1e-12);
            prop_assert!(det.abs() < 1e-12);
        }

        #[test]
        fn adjoint_chain_rule(x in arb_twist(), y in arb_twist(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
            let g1 = exp_twist(&x, a);
            let g2 = exp_twist(&y, b);
            let lhs = adjoint(&g1.compose(&g2));
            let rhs = adjoint(&g1) * adjoint(&g2);
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn adjoint_inverse_identity(x in arb_twist(), q in -2.0..2.0f64) {
            let g = exp_twist(&x, q);
            let lhs = adjoint(&g).try_inverse().unwrap();
            let rhs = adjoint(&g.inverse());
            prop_assert!((lhs - rhs).norm() < 1e-11);
        }

        #[test]
        fn pairing_invariance(x in arb_twist(), q in -2.0..2.0f64, v in arb_twist(), w in arb_twist()) {
            let g = exp_twist(&x, q);
            let wr = Wrench::new(w.linear * 100.0, w.angular * 100.0);
            let lhs = coadjoint_wrench(&g, &wr).pair(&adjoint_apply(&g, &v));
            let rhs = wr.pair(&v);
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn bracket_with_self_vanishes(v in arb_twist()) {
            let out = ad_apply(&v, &v);
            prop_assert!(out.to_vector().norm() < 1e-14);
        }
    }
}
