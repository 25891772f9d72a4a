//! Reactive double-well bond potential.
//!
//! The bond energy is a polynomial in `x = r - r0`,
//! `V(x) = c2 x^2 + c3 x^3 + c4 x^4 + c5 x^5 + c6 x^6`,
//! continued linearly past its outer inflection point (beyond the barrier)
//! and past its inner inflection point (deep compression, when present), so
//! the potential stays C² and forces stay bounded.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calibration targets, all in atomic units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactiveTargets {
    /// V(r_ts) - V(r0), Hartree.
    pub barrier: f64,
    /// Local-minimum bond length, bohr.
    pub r0: f64,
    /// Barrier-top bond length, bohr.
    pub r_ts: f64,
    /// V''(r0), Hartree/bohr².
    pub curvature_min: f64,
    /// V''(r_ts), Hartree/bohr² (negative).
    pub curvature_ts: f64,
    /// Energy drop from the barrier top to the start of the linear outer
    /// branch, Hartree. Fixes the one remaining polynomial degree of freedom.
    pub outer_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactivePotential {
    pub r0: f64,
    pub r_ts: f64,
    /// c2 through c6.
    pub coefficients: [f64; 5],
    /// Linear continuation starts here (V'' = 0 beyond the barrier).
    pub r_outer: f64,
    /// Linear continuation for compression below this length, if the
    /// polynomial turns concave on the inner side.
    pub r_inner: Option<f64>,
}

fn poly(c: &[f64; 5], x: f64) -> (f64, f64, f64) {
    let [c2, c3, c4, c5, c6] = *c;
    let v = x * x * (c2 + x * (c3 + x * (c4 + x * (c5 + x * c6))));
    let dv = x * (2.0 * c2 + x * (3.0 * c3 + x * (4.0 * c4 + x * (5.0 * c5 + x * 6.0 * c6))));
    let d2v = 2.0 * c2 + x * (6.0 * c3 + x * (12.0 * c4 + x * (20.0 * c5 + x * 30.0 * c6)));
    (v, dv, d2v)
}

impl ReactivePotential {
    /// Raw polynomial value and first two derivatives, no continuation.
    pub fn polynomial(&self, r: f64) -> (f64, f64, f64) {
        poly(&self.coefficients, r - self.r0)
    }

    /// Energy, first and second derivative with respect to the bond length.
    pub fn evaluate(&self, r: f64) -> (f64, f64, f64) {
        if r > self.r_outer {
            let (v, dv, _) = self.polynomial(self.r_outer);
            return (v + dv * (r - self.r_outer), dv, 0.0);
        }
        if let Some(r_in) = self.r_inner {
            if r < r_in {
                let (v, dv, _) = self.polynomial(r_in);
                return (v + dv * (r - r_in), dv, 0.0);
            }
        }
        self.polynomial(r)
    }

    pub fn energy(&self, r: f64) -> f64 {
        self.evaluate(r).0
    }

    pub fn barrier(&self) -> f64 {
        self.energy(self.r_ts) - self.energy(self.r0)
    }

    pub fn curvature_ts(&self) -> f64 {
        self.evaluate(self.r_ts).2
    }

    pub fn curvature_min(&self) -> f64 {
        self.evaluate(self.r0).2
    }

    /// Residuals of the six calibration conditions against `targets`.
    pub fn residuals(&self, t: &ReactiveTargets) -> [f64; 6] {
        let (v0, dv0, d2v0) = self.polynomial(self.r0);
        let (vt, dvt, d2vt) = self.polynomial(self.r_ts);
        [
            v0,
            dv0,
            d2v0 - t.curvature_min,
            dvt,
            vt - t.barrier,
            d2vt - t.curvature_ts,
        ]
    }
}

/// Barrier frequency (a.u.) of a barrier with curvature `curvature` along a
/// coordinate with effective mass `mass`: M ω² = -V''.
pub fn barrier_frequency(curvature: f64, mass: f64) -> f64 {
    (-curvature / mass).sqrt()
}

/// Solve c3..c6 for a fixed third derivative `t` at the barrier top.
fn solve_coefficients(tg: &ReactiveTargets, third: f64) -> Option<[f64; 5]> {
    let d = tg.r_ts - tg.r0;
    let c2 = 0.5 * tg.curvature_min;
    let a = Matrix4::new(
        d.powi(3),
        d.powi(4),
        d.powi(5),
        d.powi(6),
        3.0 * d * d,
        4.0 * d.powi(3),
        5.0 * d.powi(4),
        6.0 * d.powi(5),
        6.0 * d,
        12.0 * d * d,
        20.0 * d.powi(3),
        30.0 * d.powi(4),
        6.0,
        24.0 * d,
        60.0 * d * d,
        120.0 * d.powi(3),
    );
    let b = Vector4::new(
        tg.barrier - c2 * d * d,
        -2.0 * c2 * d,
        tg.curvature_ts - 2.0 * c2,
        third,
    );
    let sol = a.lu().solve(&b)?;
    Some([c2, sol[0], sol[1], sol[2], sol[3]])
}

/// First zero of V'' beyond the barrier top, searched out to `d + 8d`.
fn outer_inflection(c: &[f64; 5], d: f64) -> Option<f64> {
    let n = 4000;
    let h = 8.0 * d / n as f64;
    let mut prev = d;
    for k in 1..=n {
        let x = d + h * k as f64;
        if poly(c, x).2 >= 0.0 {
            return Some(bisect(|x| poly(c, x).2, prev, x));
        }
        prev = x;
    }
    None
}

/// First zero of V'' on the compression side, searched down to `-3d`.
fn inner_inflection(c: &[f64; 5], d: f64) -> Option<f64> {
    let n = 3000;
    let h = 3.0 * d / n as f64;
    let mut prev = 0.0;
    for k in 1..=n {
        let x = -h * k as f64;
        if poly(c, x).2 <= 0.0 {
            return Some(bisect(|x| poly(c, x).2, prev, x));
        }
        prev = x;
    }
    None
}

/// Bisection for a sign change of `f` between `a` and `b`.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa0 = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if (f(m) > 0.0) == (fa0 > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Fit the reactive double-well polynomial to the requested barrier and
/// curvatures.
///
/// The six conditions V(r0)=0, V'(r0)=0, V''(r0), V(r_ts), V'(r_ts)=0 and
/// V''(r_ts) leave one degree of freedom (the third derivative at the
/// barrier top). It is chosen by bisection so that the outer inflection
/// point, where the linear continuation starts, lies `outer_drop` below the
/// barrier top.
pub fn calibrate_reactive_bond(tg: &ReactiveTargets) -> Result<ReactivePotential> {
    let fail = |message: &str, residuals: Vec<f64>| Error::Calibration {
        message: message.to_string(),
        residuals,
    };
    let finite = [
        tg.barrier,
        tg.r0,
        tg.r_ts,
        tg.curvature_min,
        tg.curvature_ts,
        tg.outer_drop,
    ]
    .iter()
    .all(|v| v.is_finite());
    if !finite {
        return Err(fail("non-finite target", vec![]));
    }
    if tg.barrier <= 0.0 {
        return Err(fail("barrier must be positive", vec![tg.barrier]));
    }
    if tg.r0 <= 0.0 || tg.r_ts <= tg.r0 {
        return Err(fail("need 0 < r0 < r_ts", vec![tg.r_ts - tg.r0]));
    }
    if tg.curvature_min <= 0.0 || tg.curvature_ts >= 0.0 {
        return Err(fail(
            "need curvature_min > 0 and curvature_ts < 0",
            vec![tg.curvature_min, tg.curvature_ts],
        ));
    }
    if tg.outer_drop <= 0.0 {
        return Err(fail("outer_drop must be positive", vec![tg.outer_drop]));
    }

    let d = tg.r_ts - tg.r0;
    let target = tg.barrier - tg.outer_drop;
    // drop mismatch at the outer inflection point, None when there is none
    let mismatch = |third: f64| -> Option<f64> {
        let c = solve_coefficients(tg, third)?;
        let x = outer_inflection(&c, d)?;
        Some(poly(&c, x).0 - target)
    };

    let span = 10.0 * tg.curvature_min / d;
    let steps = 4000;
    let mut bracket = None;
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=steps {
        let third = span - 2.0 * span * k as f64 / steps as f64;
        let m = mismatch(third);
        if let (Some((t0, m0)), Some(m1)) = (prev, m) {
            if m0 > 0.0 && m1 <= 0.0 {
                bracket = Some((t0, third));
                break;
            }
        }
        prev = m.map(|m| (third, m));
    }
    let (mut hi, mut lo) = bracket.ok_or_else(|| {
        fail(
            "no third derivative places the outer inflection at the requested drop",
            vec![tg.outer_drop],
        )
    })?;
    for _ in 0..200 {
        let mid = 0.5 * (hi + lo);
        if mid == hi || mid == lo {
            break;
        }
        match mismatch(mid) {
            Some(m) if m > 0.0 => hi = mid,
            Some(_) => lo = mid,
            None => lo = mid,
        }
    }
    let third = 0.5 * (hi + lo);
    let coefficients =
        solve_coefficients(tg, third).ok_or_else(|| fail("singular calibration system", vec![]))?;
    let x_out = outer_inflection(&coefficients, d)
        .ok_or_else(|| fail("outer inflection point lost", vec![]))?;
    let x_in = inner_inflection(&coefficients, d);

    let pot = ReactivePotential {
        r0: tg.r0,
        r_ts: tg.r_ts,
        coefficients,
        r_outer: tg.r0 + x_out,
        r_inner: x_in.map(|x| tg.r0 + x),
    };

    let res = pot.residuals(tg);
    let scale = tg.barrier.max(tg.curvature_min);
    if res.iter().any(|r| r.abs() > 1e-9 * scale.max(1.0)) {
        return Err(fail("constraint residuals too large", res.to_vec()));
    }
    let drop_err = pot.polynomial(pot.r_outer).0 - target;
    if drop_err.abs() > 1e-9 {
        return Err(fail("outer drop not converged", vec![drop_err]));
    }

    // one barrier between r0 and r_ts, concave beyond it up to the outer branch
    let n = 2000;
    for k in 1..n {
        let x = d * k as f64 / n as f64;
        if poly(&coefficients, x).1 <= 0.0 {
            return Err(fail(
                "extra stationary point between r0 and r_ts",
                res.to_vec(),
            ));
        }
        let y = d + (x_out - d) * k as f64 / n as f64;
        if poly(&coefficients, y).2 >= 0.0 {
            return Err(fail("barrier region is not concave", res.to_vec()));
        }
    }
    if let Some(x_in) = x_in {
        if x_in > -0.25 * d {
            return Err(fail("inner well too narrow", vec![x_in]));
        }
    }
    Ok(pot)
}
