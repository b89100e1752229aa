//! Banked 3D track ribbon built on a NURBS centerline.
//!
//! The ribbon frame `{S}` at parameter `alpha` has columns `[t n m]`: `t` is
//! the unit tangent, and `n`, `m` are obtained by rotating the intermediate
//! horizontal-normal frame `{H} = [t v w]` about `t` through the banking
//! angle `nu(alpha)`. Here `v` is the normalized `k x t_proj` (pointing left
//! of travel on a flat track with z up) and `w = t x v` points away from the
//! road. Positive `nu` therefore raises the left road edge.
//!
//! The track joint of the vehicle chain is the map `q1 -> g_01(q1)` with
//! geometric Jacobian `J(q1) = [sigma e_x; axial(R^T dR/dalpha)]`, where
//! `sigma = |dp/dalpha|`. Both `J` and its `q1`-derivative are produced
//! analytically by propagating second-order derivative jets through the frame
//! construction, so dual-number sweeps differentiate the exact same formulas.

pub mod nurbs;

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::liegroup::{Pose, Twist};
use crate::scalar::{lift, Real};
pub use nurbs::NurbsCurve;

#[derive(Debug, Clone, PartialEq)]
pub enum TrackError {
    /// Input file violated a structural invariant; `index` points at the
    /// first offending entry where applicable.
    Validation {
        field: &'static str,
        index: Option<usize>,
        message: String,
    },
    /// Parameter outside the open track's domain.
    OutOfRange { alpha: f64 },
    /// Tangent parallel to the global vertical: the horizontal-normal frame
    /// is undefined.
    DegenerateFrame { alpha: f64 },
    Io(String),
    Parse(String),
}

impl fmt::Display for TrackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrackError::Validation {
                field,
                index,
                message,
            } => match index {
                Some(i) => write!(f, "track validation failed: {field}[{i}]: {message}"),
                None => write!(f, "track validation failed: {field}: {message}"),
            },
            TrackError::OutOfRange { alpha } => {
                write!(f, "track parameter {alpha} outside [0, 1]")
            }
            TrackError::DegenerateFrame { alpha } => write!(
                f,
                "degenerate track frame at alpha = {alpha}: tangent is vertical"
            ),
            TrackError::Io(e) => write!(f, "track file i/o: {e}"),
            TrackError::Parse(e) => write!(f, "track file parse: {e}"),
        }
    }
}

impl std::error::Error for TrackError {}

/// Banking angle profile `nu(alpha)`: sampled values with monotone cubic
/// (Fritsch-Carlson) interpolation, constant beyond the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct BankingProfile {
    alphas: Vec<f64>,
    values: Vec<f64>,
    tangents: Vec<f64>,
}

impl BankingProfile {
    pub fn constant(nu: f64) -> Self {
        BankingProfile {
            alphas: vec![0.0],
            values: vec![nu],
            tangents: vec![0.0],
        }
    }

    pub fn from_samples(samples: &[[f64; 2]]) -> Result<Self, TrackError> {
        if samples.is_empty() {
            return Ok(Self::constant(0.0));
        }
        let alphas: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        let values: Vec<f64> = samples.iter().map(|s| s[1]).collect();
        for i in 1..alphas.len() {
            if alphas[i] <= alphas[i - 1] {
                return Err(TrackError::Validation {
                    field: "banking",
                    index: Some(i),
                    message: format!(
                        "sample parameters must be strictly increasing, got {} after {}",
                        alphas[i],
                        alphas[i - 1]
                    ),
                });
            }
        }
        let tangents = monotone_tangents(&alphas, &values);
        Ok(BankingProfile {
            alphas,
            values,
            tangents,
        })
    }

    /// `nu` and its first two derivatives with respect to `alpha`.
    pub fn eval<T: Real>(&self, alpha: T) -> (T, T, T) {
        let n = self.alphas.len();
        let a = alpha.re();
        if n == 1 || a <= self.alphas[0] {
            return (lift(self.values[0]), T::zero(), T::zero());
        }
        if a >= self.alphas[n - 1] {
            return (lift(self.values[n - 1]), T::zero(), T::zero());
        }
        let i = match self
            .alphas
            .binary_search_by(|x| x.partial_cmp(&a).unwrap())
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let h = self.alphas[i + 1] - self.alphas[i];
        let t = (alpha - lift::<T>(self.alphas[i])) / lift::<T>(h);
        let (y0, y1) = (lift::<T>(self.values[i]), lift::<T>(self.values[i + 1]));
        let (m0, m1) = (
            lift::<T>(self.tangents[i] * h),
            lift::<T>(self.tangents[i + 1] * h),
        );
        let one = T::one();
        let two = lift::<T>(2.0);
        let three = lift::<T>(3.0);
        let six = lift::<T>(6.0);
        let t2 = t * t;
        let t3 = t2 * t;
        // cubic Hermite basis and its derivatives in t
        let v = (two * t3 - three * t2 + one) * y0
            + (t3 - two * t2 + t) * m0
            + (-two * t3 + three * t2) * y1
            + (t3 - t2) * m1;
        let d1 = (six * (t2 - t)) * y0
            + (three * t2 - lift::<T>(4.0) * t + one) * m0
            + (six * (t - t2)) * y1
            + (three * t2 - two * t) * m1;
        let d2 = (six * (two * t - one)) * y0
            + (six * t - lift::<T>(4.0)) * m0
            + (six * (one - two * t)) * y1
            + (six * t - two) * m1;
        let hh = lift::<T>(h);
        (v, d1 / hh, d2 / (hh * hh))
    }
}

/// Fritsch-Carlson monotone tangents for cubic Hermite interpolation.
fn monotone_tangents(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n == 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n - 1];
    for i in 0..n - 1 {
        d[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
    }
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        m[i] = if d[i - 1] * d[i] <= 0.0 {
            0.0
        } else {
            0.5 * (d[i - 1] + d[i])
        };
    }
    for i in 0..n - 1 {
        if d[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
        } else {
            let a = m[i] / d[i];
            let b = m[i + 1] / d[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                m[i] = tau * a * d[i];
                m[i + 1] = tau * b * d[i];
            }
        }
    }
    m
}

/// Track half-width: constant or a sampled profile (linear interpolation).
#[derive(Debug, Clone, PartialEq)]
pub enum HalfWidth {
    Constant(f64),
    Profile(Vec<[f64; 2]>),
}

impl HalfWidth {
    pub fn at(&self, alpha: f64) -> f64 {
        match self {
            HalfWidth::Constant(w) => *w,
            HalfWidth::Profile(samples) => {
                if alpha <= samples[0][0] {
                    return samples[0][1];
                }
                let last = samples.len() - 1;
                if alpha >= samples[last][0] {
                    return samples[last][1];
                }
                let i = samples.partition_point(|s| s[0] <= alpha) - 1;
                let (a0, w0) = (samples[i][0], samples[i][1]);
                let (a1, w1) = (samples[i + 1][0], samples[i + 1][1]);
                w0 + (w1 - w0) * (alpha - a0) / (a1 - a0)
            }
        }
    }
}

/// Scalar value with derivatives up to order 2 along the curve parameter.
#[derive(Clone, Copy)]
struct SJet<T: Real> {
    v: T,
    d1: T,
    d2: T,
}

/// 3-vector with derivatives up to order 2 along the curve parameter.
#[derive(Clone, Copy)]
struct VJet<T: Real> {
    v: Vector3<T>,
    d1: Vector3<T>,
    d2: Vector3<T>,
}

impl<T: Real> VJet<T> {
    fn cross(&self, o: &VJet<T>) -> VJet<T> {
        VJet {
            v: self.v.cross(&o.v),
            d1: self.d1.cross(&o.v) + self.v.cross(&o.d1),
            d2: self.d2.cross(&o.v) + self.d1.cross(&o.d1) * lift::<T>(2.0) + self.v.cross(&o.d2),
        }
    }

    fn dot(&self, o: &VJet<T>) -> SJet<T> {
        SJet {
            v: self.v.dot(&o.v),
            d1: self.d1.dot(&o.v) + self.v.dot(&o.d1),
            d2: self.d2.dot(&o.v) + lift::<T>(2.0) * self.d1.dot(&o.d1) + self.v.dot(&o.d2),
        }
    }

    fn scale(&self, s: &SJet<T>) -> VJet<T> {
        VJet {
            v: self.v * s.v,
            d1: self.d1 * s.v + self.v * s.d1,
            d2: self.d2 * s.v + self.d1 * s.d1 * lift::<T>(2.0) + self.v * s.d2,
        }
    }

    fn add(&self, o: &VJet<T>) -> VJet<T> {
        VJet {
            v: self.v + o.v,
            d1: self.d1 + o.d1,
            d2: self.d2 + o.d2,
        }
    }

    /// Unit vector jet and the norm jet; caller guarantees a nonzero value.
    fn normalize(&self) -> (VJet<T>, SJet<T>) {
        let norm = self.dot(self).sqrt();
        (self.scale(&norm.recip()), norm)
    }
}

impl<T: Real> SJet<T> {
    fn sqrt(&self) -> SJet<T> {
        let s = self.v.sqrt();
        let d1 = self.d1 / (lift::<T>(2.0) * s);
        let d2 = (self.d2 * lift::<T>(0.5) - d1 * d1) / s;
        SJet { v: s, d1, d2 }
    }

    fn recip(&self) -> SJet<T> {
        let inv = T::one() / self.v;
        let inv2 = inv * inv;
        SJet {
            v: inv,
            d1: -self.d1 * inv2,
            d2: (lift::<T>(2.0) * self.d1 * self.d1 * inv - self.d2) * inv2,
        }
    }

    fn sin_cos(&self) -> (SJet<T>, SJet<T>) {
        let (s, c) = (self.v.sin(), self.v.cos());
        (
            SJet {
                v: s,
                d1: self.d1 * c,
                d2: self.d2 * c - self.d1 * self.d1 * s,
            },
            SJet {
                v: c,
                d1: -self.d1 * s,
                d2: -self.d2 * s - self.d1 * self.d1 * c,
            },
        )
    }
}

/// Curve evaluation result: point and parameter derivatives, plus
/// `ds/dalpha`.
#[derive(Debug, Clone)]
pub struct CurveEval<T: Real> {
    /// `derivs[k]` is the k-th derivative of the centerline w.r.t. `alpha`.
    pub derivs: Vec<Vector3<T>>,
    /// `|dp/dalpha|`, the arc-length rate.
    pub ds_dalpha: T,
}

/// Ribbon frame at a parameter value.
#[derive(Debug, Clone)]
pub struct TrackFrame<T: Real> {
    /// `g_{G,S}`: rotation columns `[t n m]`, translation on the centerline.
    pub pose: Pose<T>,
    /// `|dp/dalpha|`.
    pub tangent_norm: T,
    /// Geometric twist per unit arc length, `[t^S; Omega^S] = [(1,0,0); Omega]`.
    pub geometric_twist: Twist<T>,
}

/// Track joint evaluation used by the vehicle chain: posture, the geometric
/// Jacobian `J(q1)` (twist per unit `q1`), and its `q1`-derivative.
#[derive(Debug, Clone)]
pub struct TrackJoint<T: Real> {
    pub pose: Pose<T>,
    pub jacobian: Vector6<T>,
    pub jacobian_dq1: Vector6<T>,
    pub tangent_norm: T,
}

/// A banked NURBS track with width information.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSpline {
    pub curve: NurbsCurve,
    pub banking: BankingProfile,
    pub half_width: HalfWidth,
    pub closed: bool,
}

impl TrackSpline {
    /// Validate and normalize the raw parts into a track. The knot vector is
    /// affinely rescaled to `[0, 1]`.
    pub fn new(
        mut curve: NurbsCurve,
        banking: BankingProfile,
        half_width: HalfWidth,
        closed: bool,
    ) -> Result<Self, TrackError> {
        let p = curve.degree;
        let ncp = curve.control_points.len();
        if p < 3 {
            return Err(TrackError::Validation {
                field: "degree",
                index: None,
                message: format!("track centerline must have degree >= 3 for C2, got {p}"),
            });
        }
        if curve.weights.len() != ncp {
            return Err(TrackError::Validation {
                field: "weights",
                index: None,
                message: format!(
                    "expected {} weights to match control points, got {}",
                    ncp,
                    curve.weights.len()
                ),
            });
        }
        if curve.knots.len() != ncp + p + 1 {
            return Err(TrackError::Validation {
                field: "knots",
                index: None,
                message: format!(
                    "expected {} knots (control points + degree + 1), got {}",
                    ncp + p + 1,
                    curve.knots.len()
                ),
            });
        }
        for (i, w) in curve.weights.iter().enumerate() {
            if !(*w > 0.0) {
                return Err(TrackError::Validation {
                    field: "weights",
                    index: Some(i),
                    message: format!("weight must be positive, got {w}"),
                });
            }
        }
        for i in 1..curve.knots.len() {
            if curve.knots[i] < curve.knots[i - 1] {
                return Err(TrackError::Validation {
                    field: "knots",
                    index: Some(i),
                    message: format!(
                        "knot vector must be non-decreasing, got {} after {}",
                        curve.knots[i],
                        curve.knots[i - 1]
                    ),
                });
            }
        }
        if !closed {
            for i in 0..p {
                if curve.knots[i + 1] != curve.knots[i] {
                    return Err(TrackError::Validation {
                        field: "knots",
                        index: Some(i + 1),
                        message: "open track requires clamped start (degree+1 equal knots)"
                            .to_string(),
                    });
                }
                let j = curve.knots.len() - 1 - i;
                if curve.knots[j - 1] != curve.knots[j] {
                    return Err(TrackError::Validation {
                        field: "knots",
                        index: Some(j - 1),
                        message: "open track requires clamped end (degree+1 equal knots)"
                            .to_string(),
                    });
                }
            }
        }
        // interior multiplicity must leave C2 continuity
        let (lo, hi) = curve.domain();
        let mut i = 0;
        while i < curve.knots.len() {
            let u = curve.knots[i];
            let mut mult = 1;
            while i + mult < curve.knots.len() && curve.knots[i + mult] == u {
                mult += 1;
            }
            if u > lo && u < hi && mult > p - 2 {
                return Err(TrackError::Validation {
                    field: "knots",
                    index: Some(i),
                    message: format!(
                        "interior knot multiplicity {mult} breaks C2 (max {})",
                        p - 2
                    ),
                });
            }
            i += mult;
        }
        if hi <= lo {
            return Err(TrackError::Validation {
                field: "knots",
                index: None,
                message: "empty parameter domain".to_string(),
            });
        }
        // rescale domain to [0, 1]
        for k in curve.knots.iter_mut() {
            *k = (*k - lo) / (hi - lo);
        }
        match &half_width {
            HalfWidth::Constant(w) if !(*w > 0.0) => {
                return Err(TrackError::Validation {
                    field: "half_width",
                    index: None,
                    message: format!("half width must be positive, got {w}"),
                });
            }
            HalfWidth::Profile(samples) => {
                if samples.is_empty() {
                    return Err(TrackError::Validation {
                        field: "half_width_profile",
                        index: None,
                        message: "profile must contain at least one sample".to_string(),
                    });
                }
                for (i, s) in samples.iter().enumerate() {
                    if !(s[1] > 0.0) {
                        return Err(TrackError::Validation {
                            field: "half_width_profile",
                            index: Some(i),
                            message: format!("half width must be positive, got {}", s[1]),
                        });
                    }
                    if i > 0 && s[0] <= samples[i - 1][0] {
                        return Err(TrackError::Validation {
                            field: "half_width_profile",
                            index: Some(i),
                            message: "profile parameters must be strictly increasing".to_string(),
                        });
                    }
                }
            }
            _ => {}
        }
        let track = TrackSpline {
            curve,
            banking,
            half_width,
            closed,
        };
        if closed {
            // geometric seam check: position and first two derivatives agree
            let d0 = track.curve.derivatives(0.0_f64, 2);
            let d1 = track.curve.derivatives(1.0_f64, 2);
            for k in 0..=2 {
                let scale = 1.0 + d0[k].norm().max(d1[k].norm());
                if (d0[k] - d1[k]).norm() > 1e-6 * scale {
                    return Err(TrackError::Validation {
                        field: "closed",
                        index: Some(k),
                        message: format!(
                            "closed track seam is not C2: derivative order {k} jumps by {:.3e}",
                            (d0[k] - d1[k]).norm()
                        ),
                    });
                }
            }
        }
        Ok(track)
    }

    pub fn load(path: &Path) -> Result<Self, TrackError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrackError::Io(e.to_string()))?;
        let file: TrackFile =
            serde_json::from_str(&text).map_err(|e| TrackError::Parse(e.to_string()))?;
        file.into_track()
    }

    /// Wrap (closed) or range-check (open) the parameter.
    fn domain_param<T: Real>(&self, alpha: T) -> Result<T, TrackError> {
        let a = alpha.re();
        if self.closed {
            let shift = a.floor();
            return Ok(alpha - lift::<T>(shift));
        }
        if !(-1e-12..=1.0 + 1e-12).contains(&a) {
            return Err(TrackError::OutOfRange { alpha: a });
        }
        Ok(alpha)
    }

    /// Centerline point and derivatives (order <= 3), plus `ds/dalpha`.
    pub fn eval_curve<T: Real>(&self, alpha: T, order: usize) -> Result<CurveEval<T>, TrackError> {
        let alpha = self.domain_param(alpha)?;
        let derivs = self.curve.derivatives(alpha, order.max(1));
        let ds = derivs[1].norm();
        Ok(CurveEval {
            derivs: derivs.into_iter().take(order + 1).collect(),
            ds_dalpha: ds,
        })
    }

    /// Ribbon frame `{S}` at `alpha`.
    pub fn track_frame<T: Real>(&self, alpha: T) -> Result<TrackFrame<T>, TrackError> {
        let joint = self.track_joint(alpha)?;
        let inv_sigma = T::one() / joint.tangent_norm;
        let omega = Vector3::new(
            joint.jacobian[3] * inv_sigma,
            joint.jacobian[4] * inv_sigma,
            joint.jacobian[5] * inv_sigma,
        );
        Ok(TrackFrame {
            pose: joint.pose,
            tangent_norm: joint.tangent_norm,
            geometric_twist: Twist::new(Vector3::new(T::one(), T::zero(), T::zero()), omega),
        })
    }

    /// Geometric twist per unit arc length and `|dp/dalpha|`.
    pub fn geometric_twist<T: Real>(&self, alpha: T) -> Result<(Twist<T>, T), TrackError> {
        let f = self.track_frame(alpha)?;
        Ok((f.geometric_twist, f.tangent_norm))
    }

    /// Banking angle at `alpha` (value only).
    pub fn banking_at(&self, alpha: f64) -> f64 {
        self.banking.eval::<f64>(alpha).0
    }

    pub fn half_width_at(&self, alpha: f64) -> f64 {
        self.half_width.at(alpha)
    }

    /// Full track-joint evaluation: `g_01(q1)`, `J(q1)` and `dJ/dq1`.
    ///
    /// The frame columns and their first two parameter derivatives are
    /// propagated as jets, so `J` (which needs first derivatives of the
    /// rotation) and `dJ/dq1` (second derivatives) come out of one pass.
    pub fn track_joint<T: Real>(&self, alpha: T) -> Result<TrackJoint<T>, TrackError> {
        let alpha = self.domain_param(alpha)?;
        let d = self.curve.derivatives(alpha, 3);

        // jet of the tangent vector dp/dalpha
        let a = VJet {
            v: d[1],
            d1: d[2],
            d2: d[3],
        };
        let (t, sigma) = a.normalize();

        // c = k x t_proj = (-t_y, t_x, 0), component shuffle of the t jet
        let shuffle = |u: &Vector3<T>| Vector3::new(-u[1], u[0], T::zero());
        let c = VJet {
            v: shuffle(&t.v),
            d1: shuffle(&t.d1),
            d2: shuffle(&t.d2),
        };
        let c_norm_sq = c.v.dot(&c.v).re();
        if c_norm_sq <= 1e-18 {
            return Err(TrackError::DegenerateFrame { alpha: alpha.re() });
        }
        let (v, _) = c.normalize();
        let w = t.cross(&v);

        let (nu_v, nu_d1, nu_d2) = self.banking.eval(alpha);
        let nu = SJet {
            v: nu_v,
            d1: nu_d1,
            d2: nu_d2,
        };
        let (sn, cn) = nu.sin_cos();
        // rotate {H} about t by nu: n = cos v + sin w, m = cos w - sin v
        let n = v.scale(&cn).add(&w.scale(&sn));
        let neg_sn = SJet {
            v: -sn.v,
            d1: -sn.d1,
            d2: -sn.d2,
        };
        let m = w.scale(&cn).add(&v.scale(&neg_sn));

        let rotation = Matrix3::from_columns(&[t.v, n.v, m.v]);
        let pose = Pose::from_parts(rotation, d[0]);

        // xi = axial(R^T dR/dalpha) and its alpha-derivative
        let xi = Vector3::new(m.v.dot(&n.d1), t.v.dot(&m.d1), n.v.dot(&t.d1));
        let xi_d = Vector3::new(
            m.d1.dot(&n.d1) + m.v.dot(&n.d2),
            t.d1.dot(&m.d1) + t.v.dot(&m.d2),
            n.d1.dot(&t.d1) + n.v.dot(&t.d2),
        );

        let z = T::zero();
        let jacobian = Vector6::new(sigma.v, z, z, xi[0], xi[1], xi[2]);
        let jacobian_dq1 = Vector6::new(sigma.d1, z, z, xi_d[0], xi_d[1], xi_d[2]);
        Ok(TrackJoint {
            pose,
            jacobian,
            jacobian_dq1,
            tangent_norm: sigma.v,
        })
    }
}

/// On-disk track description.
///
/// ```json
/// {
///   "degree": 3,
///   "knots": [0.0, ...],
///   "control_points": [[x, y, z], ...],
///   "weights": [1.0, ...],
///   "banking": [[alpha, nu], ...],
///   "half_width": 4.0,
///   "closed": true
/// }
/// ```
///
/// `banking` pairs are `(alpha, nu)` with `alpha` in the normalized `[0, 1]`
/// domain and `nu` in radians measured as a rotation of the ribbon frame
/// about the tangent: positive `nu` raises the left road edge (left = `+n`
/// at `nu = 0`, pointing left of the direction of travel on a flat track).
/// `half_width_profile` may replace `half_width` with `(alpha, width)` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackFile {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub control_points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub banking: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width_profile: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub closed: bool,
}

impl TrackFile {
    pub fn into_track(self) -> Result<TrackSpline, TrackError> {
        if self.control_points.len() != self.weights.len() {
            return Err(TrackError::Validation {
                field: "weights",
                index: None,
                message: format!(
                    "expected {} weights to match control points, got {}",
                    self.control_points.len(),
                    self.weights.len()
                ),
            });
        }
        if self.degree < 1 || self.degree >= self.control_points.len() {
            return Err(TrackError::Validation {
                field: "degree",
                index: None,
                message: format!(
                    "degree {} incompatible with {} control points",
                    self.degree,
                    self.control_points.len()
                ),
            });
        }
        if self.knots.len() != self.control_points.len() + self.degree + 1 {
            return Err(TrackError::Validation {
                field: "knots",
                index: None,
                message: format!(
                    "expected {} knots, got {}",
                    self.control_points.len() + self.degree + 1,
                    self.knots.len()
                ),
            });
        }
        let curve = NurbsCurve::new(
            self.control_points
                .iter()
                .map(|p| Vector3::new(p[0], p[1], p[2]))
                .collect(),
            self.weights,
            self.knots,
            self.degree,
        );
        let banking = BankingProfile::from_samples(&self.banking)?;
        let half_width = match (self.half_width, self.half_width_profile) {
            (Some(w), None) => HalfWidth::Constant(w),
            (None, Some(p)) => HalfWidth::Profile(p),
            (Some(_), Some(_)) => {
                return Err(TrackError::Validation {
                    field: "half_width",
                    index: None,
                    message: "give either half_width or half_width_profile, not both".to_string(),
                })
            }
            (None, None) => {
                return Err(TrackError::Validation {
                    field: "half_width",
                    index: None,
                    message: "missing half_width (or half_width_profile)".to_string(),
                })
            }
        };
        TrackSpline::new(curve, banking, half_width, self.closed)
    }
}

/// Synthetic tracks shared by tests across the crate.
#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use std::f64::consts::PI;

    /// Straight flat line track along x, length 100 m, degree 3 (a cubic
    /// Bezier with equally spaced control points, so the parametrization is
    /// exactly linear: p(alpha) = 100 alpha e_x).
    pub(crate) fn line_track() -> TrackSpline {
        line_track_len(100.0)
    }

    pub(crate) fn line_track_len(length: f64) -> TrackSpline {
        let cps = (0..4)
            .map(|i| Vector3::new(length * i as f64 / 3.0, 0.0, 0.0))
            .collect();
        let curve = NurbsCurve::new(
            cps,
            vec![1.0; 4],
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            3,
        );
        TrackSpline::new(
            curve,
            BankingProfile::constant(0.0),
            HalfWidth::Constant(4.0),
            false,
        )
        .unwrap()
    }

    /// Flat circular track of radius `r`: a periodic cubic B-spline through
    /// 64 points, with control points pushed out so the knot-value points
    /// land on the circle.
    pub(crate) fn circle_track(r: f64) -> TrackSpline {
        circle_track_banked(r, 0.0)
    }

    /// Same circle with constant banking.
    pub(crate) fn circle_track_banked(r: f64, nu: f64) -> TrackSpline {
        let n = 64usize;
        let p = 3usize;
        let k = 3.0 / (2.0 + (2.0 * PI / n as f64).cos());
        let mut cps: Vec<Vector3<f64>> = (0..n)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / n as f64;
                Vector3::new(k * r * th.cos(), k * r * th.sin(), 0.0)
            })
            .collect();
        for i in 0..p {
            let c = cps[i];
            cps.push(c);
        }
        let ncp = cps.len();
        let knots: Vec<f64> = (0..=(ncp + p)).map(|i| i as f64).collect();
        let curve = NurbsCurve::new(cps, vec![1.0; ncp], knots, p);
        TrackSpline::new(
            curve,
            BankingProfile::constant(nu),
            HalfWidth::Constant(4.0),
            true,
        )
        .unwrap()
    }

    /// Open rolling S-bend with elevation change, for 3D geometry tests.
    pub(crate) fn hill_track() -> TrackSpline {
        let pts = [
            [0.0, 0.0, 0.0],
            [30.0, 0.0, 0.5],
            [60.0, 8.0, 1.5],
            [90.0, 20.0, 3.0],
            [120.0, 20.0, 4.5],
            [150.0, 8.0, 5.0],
            [180.0, 0.0, 4.0],
            [210.0, -6.0, 2.5],
            [240.0, -6.0, 1.0],
            [270.0, 0.0, 0.0],
        ];
        let cps: Vec<Vector3<f64>> = pts.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
        let n = cps.len();
        let p = 3usize;
        let mut knots = vec![0.0; p + 1];
        for i in 1..(n - p) {
            knots.push(i as f64);
        }
        let last = (n - p) as f64;
        knots.extend(std::iter::repeat(last).take(p + 1));
        let curve = NurbsCurve::new(cps, vec![1.0; n], knots, p);
        TrackSpline::new(
            curve,
            BankingProfile::from_samples(&[[0.0, 0.0], [0.3, 0.06], [0.6, -0.05], [1.0, 0.0]])
                .unwrap(),
            HalfWidth::Constant(4.0),
            false,
        )
        .unwrap()
    }
}
