use super::phase::{PhasePoint, Suspension};
use crate::boundary_geometry::{busemann, BoundaryPoint, HalfSpacePoint, Vect};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A unit tangent vector in Hopf coordinates: endpoints of its geodesic and the time
/// beta_forward(o, base) with o the point at height one above the origin.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct UnitTangent {
    pub forward: Vect,
    pub backward: BoundaryPoint,
    pub hopf: f64,
    pub base: HalfSpacePoint,
}

/// Time change from the suspension height to the Hopf time.
pub fn time_change(x: &Vect) -> f64 {
    (1.0 + x.norm2()).ln()
}

/// The point at Hopf time t on the geodesic from x_minus to x.
pub fn geodesic_point(x: &Vect, x_minus: &BoundaryPoint, t: f64) -> Result<HalfSpacePoint> {
    match x_minus {
        BoundaryPoint::Infinity => Ok(HalfSpacePoint::new(*x, (-t).exp() * (1.0 + x.norm2()))),
        BoundaryPoint::Finite(xm) => {
            let d = *xm - *x;
            let len = d.norm();
            if !(len > 0.0) {
                return Err(Error::Invalid("geodesic endpoints coincide".into()));
            }
            let rho = 0.5 * len;
            // horofunction weight at x: w(z) = h / (|z - x|^2 + h^2), w(o) = 1 / (1 + |x|^2)
            let w = t.exp() / (1.0 + x.norm2());
            let a = 2.0 * rho / (1.0 + 4.0 * rho * rho * w * w);
            Ok(HalfSpacePoint::new(*x + d.scale(a / len), 2.0 * a * rho * w))
        }
    }
}

pub fn factor_project(p: &PhasePoint) -> Result<UnitTangent> {
    let hopf = p.s + time_change(&p.x);
    Ok(UnitTangent { forward: p.x, backward: p.x_minus, hopf, base: geodesic_point(&p.x, &p.x_minus, hopf)? })
}

/// |Hopf(T_t p) - Hopf(p) - t - beta_{x_t}(o, g o)| where g is the group element carrying the
/// geodesic of p to that of T_t p. Zero exactly when the projection intertwines the semiflow
/// with the geodesic flow modulo the group.
pub fn semiconjugacy_residual(susp: &Suspension, p: &PhasePoint, t: f64) -> Result<f64> {
    let ev = susp.evolve_tracked(p, t)?;
    let before = factor_project(p)?;
    let after = factor_project(&ev.point)?;
    let o = HalfSpacePoint::origin(susp.system.dim);
    let go = ev.map.apply_half(&o);
    let cocycle = busemann(&BoundaryPoint::Finite(ev.point.x), &o, &go);
    Ok((after.hopf - before.hopf - t - cocycle).abs())
}
