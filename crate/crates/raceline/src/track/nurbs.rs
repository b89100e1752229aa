//! Rational B-spline (NURBS) curves in 3D with derivatives of any order.

use nalgebra::Vector3;

use crate::scalar::{lift, Real};

/// A 3D NURBS curve. Control data is stored as `f64`; evaluation is generic
/// over the scalar so dual numbers differentiate straight through it.
#[derive(Debug, Clone, PartialEq)]
pub struct NurbsCurve {
    pub control_points: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
    pub knots: Vec<f64>,
    pub degree: usize,
}

impl NurbsCurve {
    /// Construct without validation beyond size checks; the track loader
    /// performs the full invariant validation with indexed diagnostics.
    pub fn new(
        control_points: Vec<Vector3<f64>>,
        weights: Vec<f64>,
        knots: Vec<f64>,
        degree: usize,
    ) -> Self {
        assert_eq!(control_points.len(), weights.len());
        assert_eq!(knots.len(), control_points.len() + degree + 1);
        assert!(degree >= 1 && degree < control_points.len());
        NurbsCurve {
            control_points,
            weights,
            knots,
            degree,
        }
    }

    /// Parameter domain `[knots[p], knots[n_cp]]`.
    pub fn domain(&self) -> (f64, f64) {
        (
            self.knots[self.degree],
            self.knots[self.control_points.len()],
        )
    }

    /// Knot span index for `u`, clamped so the end parameter evaluates in the
    /// last non-empty span.
    fn find_span(&self, u: f64) -> usize {
        let n = self.control_points.len();
        let p = self.degree;
        if u >= self.knots[n] {
            // last span with knots[span] < knots[span+1]
            let mut s = n - 1;
            while s > p && self.knots[s] == self.knots[s + 1] {
                s -= 1;
            }
            return s;
        }
        let mut low = p;
        let mut high = n;
        while low + 1 < high {
            let mid = (low + high) / 2;
            if u < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        low
    }

    /// Nonzero basis functions and derivatives at `u` up to `order`.
    ///
    /// Returns `(order+1)` rows of `p+1` values: row `k` holds the k-th
    /// derivatives of `N_{span-p..span, p}` at `u`.
    fn basis_derivatives<T: Real>(&self, span: usize, u: T, order: usize) -> Vec<Vec<T>> {
        let p = self.degree;
        let mut ndu = vec![vec![T::zero(); p + 1]; p + 1];
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];

        ndu[0][0] = T::one();
        for j in 1..=p {
            left[j] = u - lift::<T>(self.knots[span + 1 - j]);
            right[j] = lift::<T>(self.knots[span + j]) - u;
            let mut saved = T::zero();
            for r in 0..j {
                // lower triangle: knot differences
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                // upper triangle: basis values
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![T::zero(); p + 1]; order + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }

        let mut a = vec![vec![T::zero(); p + 1]; 2];
        for r in 0..=p {
            let mut s1 = 0;
            let mut s2 = 1;
            a[0][0] = T::one();
            for k in 1..=order.min(p) {
                let mut d = T::zero();
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize {
                    k - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    a[s2][j] =
                        (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                    d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }

        // multiply through by p!/(p-k)!
        let mut r = p as f64;
        for k in 1..=order.min(p) {
            for j in 0..=p {
                ders[k][j] *= lift::<T>(r);
            }
            r *= (p - k) as f64;
        }
        ders
    }

    /// Curve point and derivatives `d^k C / d u^k` for `k = 0..=order`.
    pub fn derivatives<T: Real>(&self, u: T, order: usize) -> Vec<Vector3<T>> {
        let p = self.degree;
        let span = self.find_span(u.re());
        let ders = self.basis_derivatives(span, u, order);

        // homogeneous derivatives A^{(k)} = sum N^{(k)} w P, w^{(k)} = sum N^{(k)} w
        let mut aw: Vec<Vector3<T>> = vec![Vector3::zeros(); order + 1];
        let mut ww: Vec<T> = vec![T::zero(); order + 1];
        for k in 0..=order.min(p) {
            for j in 0..=p {
                let i = span - p + j;
                let wi = lift::<T>(self.weights[i]);
                let pi = self.control_points[i].map(lift::<T>);
                aw[k] += pi * (ders[k][j] * wi);
                ww[k] += ders[k][j] * wi;
            }
        }

        // project the homogeneous derivatives onto the rational curve
        let mut c: Vec<Vector3<T>> = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut v = aw[k];
            for i in 1..=k {
                v -= c[k - i] * (lift::<T>(binom(k, i)) * ww[i]);
            }
            c.push(v / ww[0]);
        }
        c
    }

    /// Point on the curve.
    pub fn point<T: Real>(&self, u: T) -> Vector3<T> {
        self.derivatives(u, 0)[0]
    }
}

fn binom(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}
