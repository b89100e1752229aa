//! The assembled vehicle DAE: six ODEs from the articulated-body sweeps plus
//! seven algebraic residuals, a nested-Newton algebraic solver, fixed-step
//! RK4 simulation in the time domain, and the spatial-domain vector field.

use std::fmt;

use nalgebra::{SVector, Vector3, Vector6};
use num_dual::Dual64;

use crate::aba::{
    accel_pass, aero_wrench, aero_wrench_body6, backward_pass, gravity_base_accel,
    structural_wrench, suspension_generalized_forces, vehicle_inertias, AbaError, SpatialInertia,
    SuspensionParams, GRAVITY,
};
use crate::chain::{build_vehicle_chain, forward_pass, ChainError, ChainKinematics, ChainState,
    VehicleChain, NUM_JOINTS};
use crate::liegroup::{Twist, Wrench};
use crate::params::VehicleParams;
use crate::roadtire::{
    assemble_w3e, inplane_wrench_residuals, magic_formula_lateral, slip_angles_clamped,
    vertical_load_residuals, AlgebraicVars, ControlInput, TireError, TireModel, Vector7,
};
use crate::scalar::{lift, Real};
use crate::track::{TrackError, TrackSpline};

pub type StateVec<T> = SVector<T, 12>;

#[derive(Debug, Clone, PartialEq)]
pub enum DynamicsError {
    Chain(ChainError),
    Aba(AbaError),
    Tire(TireError),
    /// Newton on the algebraic residuals failed to converge.
    AlgebraicSolve {
        residual_norm: f64,
        iterations: usize,
    },
    /// `q1_dot` fell below the guard in the spatial-domain division.
    StalledProgress { q1dot: f64 },
    /// Inner failure during simulation, with the time it occurred.
    AtTime { t: f64, source: Box<DynamicsError> },
}

impl fmt::Display for DynamicsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynamicsError::Chain(e) => write!(f, "{e}"),
            DynamicsError::Aba(e) => write!(f, "{e}"),
            DynamicsError::Tire(e) => write!(f, "{e}"),
            DynamicsError::AlgebraicSolve {
                residual_norm,
                iterations,
            } => write!(
                f,
                "algebraic solve did not converge: residual {residual_norm:.3e} after \
                 {iterations} iterations"
            ),
            DynamicsError::StalledProgress { q1dot } => {
                write!(f, "track-parameter rate {q1dot:.3e} below the progress guard")
            }
            DynamicsError::AtTime { t, source } => write!(f, "at t = {t:.6}: {source}"),
        }
    }
}

impl std::error::Error for DynamicsError {}

impl From<ChainError> for DynamicsError {
    fn from(e: ChainError) -> Self {
        DynamicsError::Chain(e)
    }
}
impl From<TrackError> for DynamicsError {
    fn from(e: TrackError) -> Self {
        DynamicsError::Chain(ChainError::Track(e))
    }
}
impl From<AbaError> for DynamicsError {
    fn from(e: AbaError) -> Self {
        DynamicsError::Aba(e)
    }
}
impl From<TireError> for DynamicsError {
    fn from(e: TireError) -> Self {
        DynamicsError::Tire(e)
    }
}

/// State vector `x = [q; qdot]` of the twelve-dimensional vehicle ODE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState<T: Real> {
    pub x: StateVec<T>,
}

impl<T: Real> VehicleState<T> {
    pub fn new(x: StateVec<T>) -> Self {
        VehicleState { x }
    }

    pub fn q(&self) -> Vector6<T> {
        self.x.fixed_rows::<6>(0).into_owned()
    }

    pub fn qdot(&self) -> Vector6<T> {
        self.x.fixed_rows::<6>(6).into_owned()
    }

    pub fn chain_state(&self) -> ChainState<T> {
        ChainState {
            q: self.q(),
            qdot: self.qdot(),
        }
    }
}

/// One full evaluation of the DAE right-hand side.
#[derive(Debug, Clone)]
pub struct DaeEval<T: Real> {
    /// `[qdot; qddot]`.
    pub ode_rhs: StateVec<T>,
    /// The seven algebraic residuals (four vertical loads, three in-plane).
    pub alg: Vector7<T>,
    pub qddot: Vector6<T>,
    pub kin: ChainKinematics<T>,
    pub w3j: Wrench<T>,
    /// Per-wheel lateral forces at the trial `z`, `[11, 12, 21, 22]`.
    pub wheel_fy: [T; 4],
}

/// The complete vehicle model: chain plus parameters plus tires.
#[derive(Debug, Clone)]
pub struct VehicleModel {
    pub chain: VehicleChain,
    pub params: VehicleParams,
    pub susp: SuspensionParams,
    pub tires: TireModel,
    pub inertias: [SpatialInertia; NUM_JOINTS],
}

impl VehicleModel {
    pub fn new(
        params: VehicleParams,
        track: TrackSpline,
        tires: TireModel,
    ) -> Result<Self, DynamicsError> {
        tires.validate()?;
        let susp = SuspensionParams::from_vehicle(&params);
        let inertias = vehicle_inertias(&params);
        let chain = build_vehicle_chain(&params, track)?;
        Ok(VehicleModel {
            chain,
            params,
            susp,
            tires,
            inertias,
        })
    }

    pub fn track(&self) -> &TrackSpline {
        &self.chain.track
    }

    /// Full DAE evaluation: the ODE right-hand side with `W_3E` assembled
    /// from the trial `z`, and the seven algebraic residuals at that `z`.
    pub fn dae_rhs<T: Real>(
        &self,
        x: &StateVec<T>,
        u: &ControlInput<T>,
        z: &AlgebraicVars<T>,
    ) -> Result<DaeEval<T>, DynamicsError> {
        let state = VehicleState::new(*x).chain_state();
        let kin = forward_pass(&self.chain, &state)?;
        let v3 = kin.velocities[2];

        let w3_aero = aero_wrench(&self.params, v3.linear[0]);
        let w6_aero = aero_wrench_body6(&kin, &w3_aero);
        let mut external = crate::aba::ExternalWrenches::none();
        external.wrenches[2] = assemble_w3e(z);
        external.wrenches[5] = w6_aero;

        let tau = suspension_generalized_forces(&self.susp, &state);
        let art = backward_pass(&self.chain, &kin, &external, &tau, &self.inertias, &state)?;
        let acc = accel_pass(&self.chain, &kin, &art, &tau, &gravity_base_accel(), &state)?;
        let w3j = structural_wrench(&art, &acc.vdot[2]);

        let vr = vertical_load_residuals(
            &self.params,
            &self.susp,
            &self.tires,
            &v3,
            &w3j,
            z,
            u,
        );
        let ir = inplane_wrench_residuals(&self.params, &self.tires, &v3, z, u);

        let mut alg = Vector7::zeros();
        for i in 0..4 {
            alg[i] = vr[i];
        }
        for i in 0..3 {
            alg[4 + i] = ir[i];
        }

        let mut ode_rhs = StateVec::zeros();
        for i in 0..6 {
            ode_rhs[i] = state.qdot[i];
            ode_rhs[6 + i] = acc.qddot[i];
        }

        let (alpha_f, alpha_r) = slip_angles_clamped(
            &v3,
            u.delta,
            self.params.a1,
            self.params.a2,
            self.params.limits.v_min,
        );
        let wheel_fy = [
            magic_formula_lateral(&self.tires.front, alpha_f, z.f11z),
            magic_formula_lateral(&self.tires.front, alpha_f, z.f12z),
            magic_formula_lateral(&self.tires.rear, alpha_r, z.f21z),
            magic_formula_lateral(&self.tires.rear, alpha_r, z.f22z),
        ];

        Ok(DaeEval {
            ode_rhs,
            alg,
            qddot: acc.qddot,
            kin,
            w3j,
            wheel_fy,
        })
    }

    /// Right-hand side of the conservative submodel: gravity and springs
    /// and dampers only, no tires, no aero, no `W_3E`. Used by energy checks.
    pub fn free_rhs(&self, x: &StateVec<f64>) -> Result<StateVec<f64>, DynamicsError> {
        let state = VehicleState::new(*x).chain_state();
        let kin = forward_pass(&self.chain, &state)?;
        let tau = suspension_generalized_forces(&self.susp, &state);
        let external = crate::aba::ExternalWrenches::none();
        let art = backward_pass(&self.chain, &kin, &external, &tau, &self.inertias, &state)?;
        let acc = accel_pass(&self.chain, &kin, &art, &tau, &gravity_base_accel(), &state)?;
        let mut out = StateVec::zeros();
        for i in 0..6 {
            out[i] = state.qdot[i];
            out[6 + i] = acc.qddot[i];
        }
        Ok(out)
    }

    /// Kinetic, gravitational, and spring energy at a state.
    pub fn energy(&self, x: &StateVec<f64>) -> Result<EnergyBreakdown, DynamicsError> {
        let state = VehicleState::new(*x).chain_state();
        let kin = forward_pass(&self.chain, &state)?;
        let mut kinetic = 0.0;
        for k in 0..NUM_JOINTS {
            kinetic += self.inertias[k].kinetic_energy(&kin.velocities[k]);
        }
        let mut gravitational = 0.0;
        for k in 0..NUM_JOINTS {
            let inertia = &self.inertias[k];
            if inertia.mass == 0.0 {
                continue;
            }
            let com_world = kin.global_poses[k].rotation * inertia.com_offset
                + kin.global_poses[k].translation;
            gravitational += inertia.mass * GRAVITY * com_world[2];
        }
        let q = state.q;
        let spring = 0.5
            * (self.susp.k() * q[3] * q[3]
                + self.susp.k_theta() * q[4] * q[4]
                + self.susp.k_phi() * q[5] * q[5]);
        Ok(EnergyBreakdown {
            kinetic,
            gravitational,
            spring,
        })
    }

    /// Spatial-domain vector field `x_{,q1} = F(x, u, z) / q1_dot`.
    pub fn spatial_rhs<T: Real>(
        &self,
        x: &StateVec<T>,
        u: &ControlInput<T>,
        z: &AlgebraicVars<T>,
    ) -> Result<SpatialEval<T>, DynamicsError> {
        let q1dot = x[6];
        if q1dot.re() <= self.params.limits.q1dot_min {
            return Err(DynamicsError::StalledProgress { q1dot: q1dot.re() });
        }
        let eval = self.dae_rhs(x, u, z)?;
        Ok(SpatialEval {
            dx_dq1: eval.ode_rhs / q1dot,
            alg: eval.alg,
            eval,
        })
    }

    /// Solve the seven algebraic residuals for `z` by damped Newton with an
    /// exact dual-number Jacobian. Converges when the residual infinity norm
    /// drops below `tol`.
    pub fn solve_algebraic(
        &self,
        x: &StateVec<f64>,
        u: &ControlInput<f64>,
        z_guess: &AlgebraicVars<f64>,
    ) -> Result<AlgebraicSolve, DynamicsError> {
        const TOL: f64 = 1e-9;
        const MAX_ITERS: usize = 50;

        let mut z = z_guess.to_vector();
        let mut residual = self.dae_rhs(x, u, &AlgebraicVars::from_vector(&z))?.alg;
        let mut norm = residual.amax();
        let mut max_cond = 0.0_f64;

        for iter in 0..MAX_ITERS {
            if norm < TOL {
                return Ok(AlgebraicSolve {
                    z: AlgebraicVars::from_vector(&z),
                    iterations: iter,
                    residual_norm: norm,
                    jacobian_condition: max_cond,
                });
            }
            // Jacobian d(alg)/dz by seeding one dual column at a time
            let xd: StateVec<Dual64> = x.map(Dual64::from);
            let ud = ControlInput::new(
                Dual64::from(u.f_xa),
                Dual64::from(u.f_xb),
                Dual64::from(u.delta),
            );
            let mut jac = nalgebra::SMatrix::<f64, 7, 7>::zeros();
            for col in 0..7 {
                let mut zd: Vector7<Dual64> = z.map(Dual64::from);
                zd[col].eps = 1.0;
                let out = self
                    .dae_rhs(&xd, &ud, &AlgebraicVars::from_vector(&zd))?
                    .alg;
                for row in 0..7 {
                    jac[(row, col)] = out[row].eps;
                }
            }
            let svd = jac.svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin <= 0.0 || !smin.is_finite() {
                return Err(DynamicsError::AlgebraicSolve {
                    residual_norm: norm,
                    iterations: iter,
                });
            }
            max_cond = max_cond.max(smax / smin);

            let lu = jac.lu();
            let step = match lu.solve(&residual) {
                Some(s) => s,
                None => {
                    return Err(DynamicsError::AlgebraicSolve {
                        residual_norm: norm,
                        iterations: iter,
                    })
                }
            };

            // damped update: halve until the residual decreases
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..10 {
                let trial = z - step * scale;
                let r = self.dae_rhs(x, u, &AlgebraicVars::from_vector(&trial))?.alg;
                let n = r.amax();
                if n < norm || n < TOL {
                    z = trial;
                    residual = r;
                    norm = n;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                return Err(DynamicsError::AlgebraicSolve {
                    residual_norm: norm,
                    iterations: iter + 1,
                });
            }
        }
        if norm < TOL {
            return Ok(AlgebraicSolve {
                z: AlgebraicVars::from_vector(&z),
                iterations: MAX_ITERS,
                residual_norm: norm,
                jacobian_condition: max_cond,
            });
        }
        Err(DynamicsError::AlgebraicSolve {
            residual_norm: norm,
            iterations: MAX_ITERS,
        })
    }

    /// Closed-form-seeded guess for `z`: static axle split plus downforce at
    /// the current speed, zero in-plane components.
    pub fn static_load_guess(&self, x: &StateVec<f64>) -> AlgebraicVars<f64> {
        let p = &self.params;
        let l = p.wheelbase();
        let sigma = self
            .track()
            .eval_curve(x[0], 1)
            .map(|e| e.ds_dalpha)
            .unwrap_or(1.0);
        let v = sigma * x[6];
        let weight = p.m * GRAVITY;
        let q = 0.5 * p.rho * p.s * v * v;
        let front = weight * p.a2 / (2.0 * l) + 0.5 * q * p.c_z1;
        let rear = weight * p.a1 / (2.0 * l) + 0.5 * q * p.c_z2;
        AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
            front, front, rear, rear, 0.0, 0.0, 0.0,
        ]))
    }

    /// Trim the suspension coordinates and algebraic variables so that
    /// `qddot[3..6] = 0` and all residuals vanish, at a given track position
    /// and speed (zero controls). Returns the full consistent state.
    pub fn solve_static(
        &self,
        alpha: f64,
        speed: f64,
    ) -> Result<(StateVec<f64>, AlgebraicVars<f64>), DynamicsError> {
        let sigma = self.track().eval_curve(alpha, 1)?.ds_dalpha;
        let mut x = StateVec::zeros();
        x[0] = alpha;
        x[6] = speed / sigma;
        // initial guess: spring sag under the sprung weight
        x[3] = -self.params.sprung_mass() * GRAVITY / self.susp.k();
        let mut y = SVector::<f64, 10>::zeros();
        y[0] = x[3];
        let zg = self.static_load_guess(&x);
        for i in 0..7 {
            y[3 + i] = zg.to_vector()[i];
        }
        let u = ControlInput::zero();

        let residual = |y: &SVector<f64, 10>| -> Result<SVector<f64, 10>, DynamicsError> {
            let mut xt = x;
            xt[3] = y[0];
            xt[4] = y[1];
            xt[5] = y[2];
            let z = AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
                y[3], y[4], y[5], y[6], y[7], y[8], y[9],
            ]));
            let eval = self.dae_rhs(&xt, &u, &z)?;
            let mut r = SVector::<f64, 10>::zeros();
            r[0] = eval.qddot[3];
            r[1] = eval.qddot[4];
            r[2] = eval.qddot[5];
            for i in 0..7 {
                r[3 + i] = eval.alg[i];
            }
            Ok(r)
        };
        let dual_residual = |y: &SVector<Dual64, 10>| -> Result<SVector<Dual64, 10>, DynamicsError> {
            let mut xt: StateVec<Dual64> = x.map(Dual64::from);
            xt[3] = y[0];
            xt[4] = y[1];
            xt[5] = y[2];
            let z = AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
                y[3], y[4], y[5], y[6], y[7], y[8], y[9],
            ]));
            let u = ControlInput::<Dual64>::zero();
            let eval = self.dae_rhs(&xt, &u, &z)?;
            let mut r = SVector::<Dual64, 10>::zeros();
            r[0] = eval.qddot[3];
            r[1] = eval.qddot[4];
            r[2] = eval.qddot[5];
            for i in 0..7 {
                r[3 + i] = eval.alg[i];
            }
            Ok(r)
        };

        let mut r = residual(&y)?;
        for iter in 0..60 {
            let norm = r.amax();
            if norm < 1e-10 {
                break;
            }
            if iter == 59 {
                return Err(DynamicsError::AlgebraicSolve {
                    residual_norm: norm,
                    iterations: iter,
                });
            }
            let mut jac = nalgebra::SMatrix::<f64, 10, 10>::zeros();
            for col in 0..10 {
                let mut yd: SVector<Dual64, 10> = y.map(Dual64::from);
                yd[col].eps = 1.0;
                let out = dual_residual(&yd)?;
                for row in 0..10 {
                    jac[(row, col)] = out[row].eps;
                }
            }
            let step = jac.lu().solve(&r).ok_or(DynamicsError::AlgebraicSolve {
                residual_norm: norm,
                iterations: iter,
            })?;
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let trial = y - step * scale;
                if let Ok(rt) = residual(&trial) {
                    if rt.amax() < norm {
                        y = trial;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
                scale *= 0.5;
            }
            if !accepted {
                return Err(DynamicsError::AlgebraicSolve {
                    residual_norm: norm,
                    iterations: iter + 1,
                });
            }
        }

        x[3] = y[0];
        x[4] = y[1];
        x[5] = y[2];
        let z = AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
            y[3], y[4], y[5], y[6], y[7], y[8], y[9],
        ]));
        Ok((x, z))
    }
}

/// Result of one algebraic solve.
#[derive(Debug, Clone)]
pub struct AlgebraicSolve {
    pub z: AlgebraicVars<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    /// Condition number of the last residual Jacobian.
    pub jacobian_condition: f64,
}

/// Spatial-domain evaluation.
#[derive(Debug, Clone)]
pub struct SpatialEval<T: Real> {
    pub dx_dq1: StateVec<T>,
    pub alg: Vector7<T>,
    pub eval: DaeEval<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub gravitational: f64,
    pub spring: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.kinetic + self.gravitational + self.spring
    }
}

/// Control input as a function of time (or of the track parameter for
/// spatial-domain runs): constant, or piecewise-linear samples.
#[derive(Debug, Clone)]
pub enum ControlSchedule {
    Constant(ControlInput<f64>),
    /// `(t, [f_xa, f_xb, delta])` samples, linearly interpolated and held
    /// constant beyond the ends.
    PiecewiseLinear(Vec<(f64, [f64; 3])>),
}

impl ControlSchedule {
    pub fn at(&self, t: f64) -> ControlInput<f64> {
        match self {
            ControlSchedule::Constant(u) => *u,
            ControlSchedule::PiecewiseLinear(samples) => {
                if samples.is_empty() {
                    return ControlInput::zero();
                }
                if t <= samples[0].0 {
                    let s = samples[0].1;
                    return ControlInput::new(s[0], s[1], s[2]);
                }
                let last = samples.len() - 1;
                if t >= samples[last].0 {
                    let s = samples[last].1;
                    return ControlInput::new(s[0], s[1], s[2]);
                }
                let i = samples.partition_point(|s| s.0 <= t) - 1;
                let (t0, a) = samples[i];
                let (t1, b) = samples[i + 1];
                let w = (t - t0) / (t1 - t0);
                ControlInput::new(
                    a[0] + w * (b[0] - a[0]),
                    a[1] + w * (b[1] - a[1]),
                    a[2] + w * (b[2] - a[2]),
                )
            }
        }
    }
}

/// One recorded sample of a simulated trajectory.
#[derive(Debug, Clone)]
pub struct TrajectorySample {
    /// Time (time-domain runs) or track parameter (spatial-domain runs).
    pub key: f64,
    pub x: StateVec<f64>,
    pub z: AlgebraicVars<f64>,
    pub u: ControlInput<f64>,
    pub wheel_fy: [f64; 4],
    pub energy: EnergyBreakdown,
}

/// A simulated trajectory with solver statistics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Largest Newton iteration count over all algebraic solves.
    pub max_newton_iterations: usize,
    /// Largest algebraic-Jacobian condition number observed.
    pub max_jacobian_condition: f64,
}

impl Trajectory {
    pub fn last_state(&self) -> StateVec<f64> {
        self.samples.last().expect("trajectory is never empty").x
    }

    /// Columnar CSV: key, 12 states, 7 algebraic variables, 3 controls,
    /// 4 lateral forces, energy channels.
    pub fn write_csv<W: std::io::Write>(
        &self,
        out: &mut W,
        key_name: &str,
    ) -> std::io::Result<()> {
        write!(out, "{key_name}")?;
        for i in 1..=6 {
            write!(out, ",q{i}")?;
        }
        for i in 1..=6 {
            write!(out, ",qd{i}")?;
        }
        write!(out, ",f11z,f12z,f21z,f22z,f3x,f3y,m3z")?;
        write!(out, ",f_xa,f_xb,delta")?;
        write!(out, ",f11y,f12y,f21y,f22y")?;
        writeln!(out, ",e_kin,e_grav,e_spring,e_total")?;
        for s in &self.samples {
            write!(out, "{:.9}", s.key)?;
            for i in 0..12 {
                write!(out, ",{:.9}", s.x[i])?;
            }
            let z = s.z.to_vector();
            for i in 0..7 {
                write!(out, ",{:.6}", z[i])?;
            }
            write!(out, ",{:.6},{:.6},{:.6}", s.u.f_xa, s.u.f_xb, s.u.delta)?;
            for f in s.wheel_fy {
                write!(out, ",{:.6}", f)?;
            }
            writeln!(
                out,
                ",{:.9},{:.9},{:.9},{:.9}",
                s.energy.kinetic,
                s.energy.gravitational,
                s.energy.spring,
                s.energy.total()
            )?;
        }
        Ok(())
    }
}

impl VehicleModel {
    /// Fixed-step RK4 time-domain simulation with `z` re-solved at every
    /// stage evaluation (nested index-1 reduction).
    pub fn simulate(
        &self,
        x0: &StateVec<f64>,
        controls: &ControlSchedule,
        t_span: (f64, f64),
        dt: f64,
    ) -> Result<Trajectory, DynamicsError> {
        let at = |t: f64, e: DynamicsError| DynamicsError::AtTime {
            t,
            source: Box::new(e),
        };

        let mut x = *x0;
        let mut t = t_span.0;
        let mut z = self
            .solve_algebraic(&x, &controls.at(t), &self.static_load_guess(&x))
            .map_err(|e| at(t, e))?;
        let mut max_iters = z.iterations;
        let mut max_cond = z.jacobian_condition;

        let mut samples = Vec::new();
        let record = |samples: &mut Vec<TrajectorySample>,
                      model: &Self,
                      t: f64,
                      x: &StateVec<f64>,
                      z: &AlgebraicVars<f64>,
                      u: &ControlInput<f64>|
         -> Result<(), DynamicsError> {
            let eval = model.dae_rhs(x, u, z)?;
            samples.push(TrajectorySample {
                key: t,
                x: *x,
                z: *z,
                u: *u,
                wheel_fy: eval.wheel_fy.map(|f| f.re()),
                energy: model.energy(x)?,
            });
            Ok(())
        };
        record(&mut samples, self, t, &x, &z.z, &controls.at(t)).map_err(|e| at(t, e))?;

        let n_steps = ((t_span.1 - t_span.0) / dt).round() as usize;
        for _ in 0..n_steps {
            // RK4 with an inner algebraic solve per stage
            let mut stage = |ts: f64, xs: &StateVec<f64>, zw: &AlgebraicVars<f64>|
             -> Result<(StateVec<f64>, AlgebraicVars<f64>), DynamicsError> {
                let u = controls.at(ts);
                let solved = self.solve_algebraic(xs, &u, zw)?;
                max_iters = max_iters.max(solved.iterations);
                max_cond = max_cond.max(solved.jacobian_condition);
                let eval = self.dae_rhs(xs, &u, &solved.z)?;
                Ok((eval.ode_rhs, solved.z))
            };

            let (k1, z1) = stage(t, &x, &z.z).map_err(|e| at(t, e))?;
            let (k2, z2) =
                stage(t + 0.5 * dt, &(x + k1 * (0.5 * dt)), &z1).map_err(|e| at(t, e))?;
            let (k3, z3) =
                stage(t + 0.5 * dt, &(x + k2 * (0.5 * dt)), &z2).map_err(|e| at(t, e))?;
            let (k4, z4) = stage(t + dt, &(x + k3 * dt), &z3).map_err(|e| at(t, e))?;

            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            t += dt;
            let solved = self
                .solve_algebraic(&x, &controls.at(t), &z4)
                .map_err(|e| at(t, e))?;
            max_iters = max_iters.max(solved.iterations);
            max_cond = max_cond.max(solved.jacobian_condition);
            z = solved;
            record(&mut samples, self, t, &x, &z.z, &controls.at(t)).map_err(|e| at(t, e))?;
        }

        Ok(Trajectory {
            samples,
            max_newton_iterations: max_iters,
            max_jacobian_condition: max_cond,
        })
    }

    /// Fixed-step RK4 integration of the spatial-domain field over the track
    /// parameter, with controls given as a function of `q1`.
    pub fn simulate_spatial(
        &self,
        x0: &StateVec<f64>,
        controls: &ControlSchedule,
        q1_span: (f64, f64),
        dq1: f64,
    ) -> Result<Trajectory, DynamicsError> {
        let at = |q1: f64, e: DynamicsError| DynamicsError::AtTime {
            t: q1,
            source: Box::new(e),
        };

        let mut x = *x0;
        let mut q1 = q1_span.0;
        let mut z = self
            .solve_algebraic(&x, &controls.at(q1), &self.static_load_guess(&x))
            .map_err(|e| at(q1, e))?;
        let mut max_iters = z.iterations;
        let mut max_cond = z.jacobian_condition;

        let mut samples = Vec::new();
        samples.push(TrajectorySample {
            key: q1,
            x,
            z: z.z,
            u: controls.at(q1),
            wheel_fy: self.dae_rhs(&x, &controls.at(q1), &z.z)?.wheel_fy,
            energy: self.energy(&x)?,
        });

        let n_steps = ((q1_span.1 - q1_span.0) / dq1).round() as usize;
        for _ in 0..n_steps {
            let mut stage = |q1s: f64, xs: &StateVec<f64>, zw: &AlgebraicVars<f64>|
             -> Result<(StateVec<f64>, AlgebraicVars<f64>), DynamicsError> {
                let u = controls.at(q1s);
                let solved = self.solve_algebraic(xs, &u, zw)?;
                max_iters = max_iters.max(solved.iterations);
                max_cond = max_cond.max(solved.jacobian_condition);
                let eval = self.spatial_rhs(xs, &u, &solved.z)?;
                Ok((eval.dx_dq1, solved.z))
            };

            let (k1, z1) = stage(q1, &x, &z.z).map_err(|e| at(q1, e))?;
            let (k2, z2) =
                stage(q1 + 0.5 * dq1, &(x + k1 * (0.5 * dq1)), &z1).map_err(|e| at(q1, e))?;
            let (k3, z3) =
                stage(q1 + 0.5 * dq1, &(x + k2 * (0.5 * dq1)), &z2).map_err(|e| at(q1, e))?;
            let (k4, z4) = stage(q1 + dq1, &(x + k3 * dq1), &z3).map_err(|e| at(q1, e))?;

            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dq1 / 6.0);
            q1 += dq1;
            let solved = self
                .solve_algebraic(&x, &controls.at(q1), &z4)
                .map_err(|e| at(q1, e))?;
            max_iters = max_iters.max(solved.iterations);
            max_cond = max_cond.max(solved.jacobian_condition);
            z = solved;
            samples.push(TrajectorySample {
                key: q1,
                x,
                z: z.z,
                u: controls.at(q1),
                wheel_fy: self.dae_rhs(&x, &controls.at(q1), &z.z)?.wheel_fy,
                energy: self.energy(&x)?,
            });
        }

        Ok(Trajectory {
            samples,
            max_newton_iterations: max_iters,
            max_jacobian_condition: max_cond,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::tests_support::{circle_track, line_track};
    use approx::assert_relative_eq;

    fn line_model() -> VehicleModel {
        VehicleModel::new(
            VehicleParams::fsae_sample(),
            line_track(),
            TireModel::fsae_default(),
        )
        .unwrap()
    }

    #[test]
    fn static_solve_matches_closed_form_loads() {
        let model = line_model();
        let (x, z) = model.solve_static(0.3, 0.0).unwrap();
        assert_relative_eq!(z.f11z, 607.2265822784811, epsilon = 1e-6);
        assert_relative_eq!(z.f12z, 607.2265822784811, epsilon = 1e-6);
        assert_relative_eq!(z.f21z, 569.9734177215189, epsilon = 1e-6);
        assert_relative_eq!(z.f22z, 569.9734177215189, epsilon = 1e-6);
        // spring sag carries the sprung weight
        assert_relative_eq!(
            x[3],
            -model.params.sprung_mass() * GRAVITY / model.susp.k(),
            epsilon = 1e-9
        );
        assert_relative_eq!(x[4], 0.0, epsilon = 1e-9);
        assert_relative_eq!(x[5], 0.0, epsilon = 1e-9);
        // the full acceleration vanishes at the trim point
        let eval = model
            .dae_rhs(&x, &ControlInput::zero(), &z)
            .unwrap();
        assert_relative_eq!(eval.qddot.amax(), 0.0, epsilon = 1e-7);
        // structural wrench carries total weight at standstill
        assert_relative_eq!(eval.w3j.force[2], 240.0 * GRAVITY, epsilon = 1e-6);
        // flat track: in-plane components vanish
        crate::aba::check_inplane_pattern(&eval.w3j, 1e-8).unwrap();
    }

    #[test]
    fn solve_algebraic_matches_static_solution() {
        let model = line_model();
        let (x, z_ref) = model.solve_static(0.3, 0.0).unwrap();
        let solved = model
            .solve_algebraic(&x, &ControlInput::zero(), &model.static_load_guess(&x))
            .unwrap();
        assert_relative_eq!(
            solved.z.to_vector(),
            z_ref.to_vector(),
            epsilon = 1e-6
        );
        assert!(solved.jacobian_condition < 1e8);
    }

    #[test]
    fn solve_algebraic_rejects_garbage() {
        let model = line_model();
        let mut x = StateVec::zeros();
        x[0] = 0.3;
        x[6] = 0.25; // 25 m/s on the line track
        let bad = AlgebraicVars::from_vector(&Vector7::from_row_slice(&[
            -5000.0, 4.0e6, -3000.0, 8.0e5, 1.0e7, -2.0e7, 4.0e6,
        ]));
        match model.solve_algebraic(&x, &ControlInput::zero(), &bad) {
            Ok(s) => {
                // if it recovers it must be a genuine solution
                assert!(s.residual_norm < 1e-9);
            }
            Err(DynamicsError::AlgebraicSolve { residual_norm, .. }) => {
                assert!(residual_norm.is_finite());
            }
            Err(other) => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn dae_rhs_consistency_and_sensitivity() {
        let model = line_model();
        let (x, z) = model.solve_static(0.2, 0.0).unwrap();
        let eval = model.dae_rhs(&x, &ControlInput::zero(), &z).unwrap();
        assert_relative_eq!(eval.alg.amax(), 0.0, epsilon = 1e-8);
        assert_relative_eq!(
            eval.ode_rhs.fixed_rows::<6>(6).into_owned(),
            eval.qddot,
            epsilon = 0.0
        );
        // perturbing one vertical load moves the matching residual
        let mut zp = z;
        zp.f11z += 100.0;
        let pert = model.dae_rhs(&x, &ControlInput::zero(), &zp).unwrap();
        assert!(pert.alg[0].abs() > 10.0);
    }

    #[test]
    fn settle_to_ride_height_and_oscillation_frequency() {
        // drop the car 5 mm above its static ride height with dampers on:
        // it settles at equilibrium; with light damping the bounce frequency
        // approaches sqrt(k / m_sprung) / 2 pi
        let model = line_model();
        let (x_eq, _) = model.solve_static(0.2, 0.0).unwrap();
        let mut x = x_eq;
        x[3] += 0.005;
        let traj = model
            .simulate(&x, &ControlSchedule::Constant(ControlInput::zero()), (0.0, 2.0), 1e-3)
            .unwrap();
        let xf = traj.last_state();
        assert_relative_eq!(xf[3], x_eq[3], epsilon = 1e-6);

        // light-damping variant for the frequency estimate: time between the
        // first two upward zero crossings of q4 - q4_eq
        let mut params = VehicleParams::fsae_sample();
        params.c_front = 30.0;
        params.c_rear = 20.0;
        let light = VehicleModel::new(params, line_track(), TireModel::fsae_default()).unwrap();
        let (x_eq, _) = light.solve_static(0.2, 0.0).unwrap();
        let mut x = x_eq;
        x[3] += 0.004;
        let traj = light
            .simulate(&x, &ControlSchedule::Constant(ControlInput::zero()), (0.0, 1.0), 1e-4)
            .unwrap();
        let mut crossings = Vec::new();
        for w in traj.samples.windows(2) {
            let a = w[0].x[3] - x_eq[3];
            let b = w[1].x[3] - x_eq[3];
            if a < 0.0 && b >= 0.0 {
                crossings.push(w[0].key);
            }
        }
        assert!(crossings.len() >= 2, "expected at least two oscillations");
        let period = crossings[1] - crossings[0];
        let f_measured = 1.0 / period;
        let f_expected =
            (light.susp.k() / light.params.sprung_mass()).sqrt() / (2.0 * std::f64::consts::PI);
        assert_relative_eq!(f_measured, f_expected, epsilon = 0.05 * f_expected);
    }

    #[test]
    fn drag_balance_speed_profile() {
        // constant traction on the straight: the longitudinal dynamics obey
        // m vdot = f_xa - (rho S C_x / 2) v^2 whose solution is a tanh
        // approach to the drag-balance speed
        let model = VehicleModel::new(
            VehicleParams::fsae_sample(),
            crate::track::tests_support::line_track_len(2000.0),
            TireModel::fsae_default(),
        )
        .unwrap();
        let (mut x, _) = model.solve_static(0.0, 15.0).unwrap();
        x[0] = 0.0;
        let f_xa = 500.0;
        let u = ControlInput::new(f_xa, 0.0, 0.0);
        let t_end = 6.0;
        let traj = model
            .simulate(&x, &ControlSchedule::Constant(u), (0.0, t_end), 1e-3)
            .unwrap();
        let c = 0.5 * 1.225 * 1.4 * 0.84;
        let v_t = (f_xa / c).sqrt();
        let m = 240.0;
        let v0 = 15.0;
        let v_analytic =
            v_t * ((v0 / v_t).atanh() + c * v_t / m * t_end).tanh();
        // speeds rise monotonically toward the limit
        let v_of = |s: &TrajectorySample| s.x[6] * 2000.0;
        for w in traj.samples.windows(2) {
            assert!(v_of(&w[1]) >= v_of(&w[0]) - 1e-9);
        }
        let v_end = v_of(traj.samples.last().unwrap());
        assert!(
            (v_end - v_analytic).abs() < 0.005 * v_analytic,
            "v_end = {v_end}, analytic = {v_analytic}"
        );
        assert!(traj.max_newton_iterations <= 10);
    }

    #[test]
    fn spatial_rhs_definition_and_guard() {
        let model = line_model();
        let (mut x, z) = model.solve_static(0.2, 12.0).unwrap();
        x[7] = 0.02;
        let u = ControlInput::new(200.0, 0.0, 0.01);
        let eval = model.dae_rhs(&x, &u, &z).unwrap();
        let spat = model.spatial_rhs(&x, &u, &z).unwrap();
        assert_relative_eq!(
            spat.dx_dq1 * x[6],
            eval.ode_rhs,
            epsilon = 1e-12 * eval.ode_rhs.norm()
        );

        let mut stalled = x;
        stalled[6] = 0.0;
        assert!(matches!(
            model.spatial_rhs(&stalled, &u, &z),
            Err(DynamicsError::StalledProgress { .. })
        ));
    }

    #[test]
    fn time_and_spatial_domains_agree() {
        // drive the same maneuver in both parametrizations and compare the
        // state at the same final track position
        let model = VehicleModel::new(
            VehicleParams::fsae_sample(),
            circle_track(40.0),
            TireModel::fsae_default(),
        )
        .unwrap();
        let (x0, _) = model.solve_static(0.0, 15.0).unwrap();
        let u = ControlInput::new(150.0, 0.0, 0.0);
        let schedule = ControlSchedule::Constant(u);

        let time_traj = model.simulate(&x0, &schedule, (0.0, 1.0), 1e-4).unwrap();
        let xf_time = time_traj.last_state();
        let q1_end = xf_time[0];

        let n = 5000;
        let dq1 = (q1_end - x0[0]) / n as f64;
        let spat_traj = model
            .simulate_spatial(&x0, &schedule, (x0[0], q1_end), dq1)
            .unwrap();
        let xf_spat = spat_traj.last_state();

        let err = (xf_time - xf_spat).amax();
        assert!(err < 1e-6, "cross-domain mismatch {err}");
    }

    #[test]
    fn energy_conservation_without_dissipation() {
        // no dampers, no tires, no aero: total energy is preserved by RK4
        // to well below the acceptance threshold
        let mut params = VehicleParams::fsae_sample();
        params.c_front = 0.0;
        params.c_rear = 0.0;
        let model = VehicleModel::new(params, circle_track(30.0), TireModel::fsae_default())
            .unwrap();
        let mut x = StateVec::zeros();
        x[0] = 0.1;
        x[3] = -0.02;
        x[4] = 0.03;
        x[5] = -0.02;
        x[6] = 0.05;
        x[7] = 0.3;
        x[8] = 0.2;
        x[9] = 0.1;
        x[10] = -0.2;
        x[11] = 0.3;

        let e0 = model.energy(&x).unwrap().total();
        let dt = 1e-4;
        let mut xs = x;
        let mut drift: f64 = 0.0;
        for _ in 0..10_000 {
            let k1 = model.free_rhs(&xs).unwrap();
            let k2 = model.free_rhs(&(xs + k1 * (0.5 * dt))).unwrap();
            let k3 = model.free_rhs(&(xs + k2 * (0.5 * dt))).unwrap();
            let k4 = model.free_rhs(&(xs + k3 * dt)).unwrap();
            xs += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            let e = model.energy(&xs).unwrap().total();
            drift = drift.max(((e - e0) / e0).abs());
        }
        assert!(drift <= 1e-6, "energy drift {drift}");
    }

    #[test]
    fn deterministic_trajectories() {
        let model = line_model();
        let (x, _) = model.solve_static(0.1, 10.0).unwrap();
        let u = ControlSchedule::Constant(ControlInput::new(300.0, 0.0, 0.0));
        let a = model.simulate(&x, &u, (0.0, 0.5), 1e-3).unwrap();
        let b = model.simulate(&x, &u, (0.0, 0.5), 1e-3).unwrap();
        for (sa, sb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(sa.x, sb.x);
            assert_eq!(sa.z.to_vector(), sb.z.to_vector());
        }
    }

    #[test]
    fn csv_roundtrip_shape() {
        let model = line_model();
        let (x, _) = model.solve_static(0.1, 0.0).unwrap();
        let traj = model
            .simulate(
                &x,
                &ControlSchedule::Constant(ControlInput::zero()),
                (0.0, 0.01),
                1e-3,
            )
            .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, "t").unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), traj.samples.len() + 1);
        assert_eq!(lines[0].split(',').count(), 1 + 12 + 7 + 3 + 4 + 4);
    }
}
