//! Pointwise shallow-water physics: fluxes, the HLL Riemann solver,
//! hydrostatic face revision, friction and the local inertial face update.

use crate::error::{Error, Result};
use crate::real::Real;

/// Physical constants shared by all schemes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Consts<T> {
    pub g: T,
    /// Depth at or below which an element or face is treated as dry.
    pub h_dry: T,
}

impl<T: Real> Consts<T> {
    pub fn new(g: f64, h_dry: f64) -> Self {
        Consts { g: T::lit(g), h_dry: T::lit(h_dry) }
    }
}

impl<T: Real> Default for Consts<T> {
    fn default() -> Self {
        Self::new(9.80665, 1e-6)
    }
}

/// Velocity `q / h`, zero at or below the dry threshold.
#[inline]
pub fn velocity<T: Real>(h: T, q: T, c: &Consts<T>) -> T {
    if h > c.h_dry {
        q / h
    } else {
        T::zero()
    }
}

/// Normal flux of `(h, qn, qt)` through a face with normal `n`.
#[inline]
pub fn physical_flux<T: Real>(u: [T; 3], c: &Consts<T>) -> [T; 3] {
    let [h, qn, qt] = u;
    let vn = velocity(h, qn, c);
    let half = T::lit(0.5);
    if h > c.h_dry {
        [qn, qn * vn + half * c.g * h * h, qt * vn]
    } else {
        [T::zero(), half * c.g * h * h, T::zero()]
    }
}

/// HLL flux for states `(h, qn, qt)` rotated so the normal points to +x.
pub fn hll_flux<T: Real>(ul: [T; 3], ur: [T; 3], c: &Consts<T>) -> Result<[T; 3]> {
    if ul[0] < T::zero() || ur[0] < T::zero() {
        return Err(Error::Domain(format!("negative depth in Riemann problem: {} | {}", ul[0], ur[0])));
    }
    Ok(hll(ul, ur, c))
}

#[inline]
pub(crate) fn hll<T: Real>(ul: [T; 3], ur: [T; 3], c: &Consts<T>) -> [T; 3] {
    let (hl, hr) = (ul[0], ur[0]);
    let (wet_l, wet_r) = (hl > c.h_dry, hr > c.h_dry);
    if !wet_l && !wet_r {
        return [T::zero(); 3];
    }
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let ulv = velocity(hl, ul[1], c);
    let urv = velocity(hr, ur[1], c);
    let al = (c.g * hl).sqrt();
    let ar = (c.g * hr).sqrt();
    let (sl, sr) = if !wet_l {
        (urv - two * ar, urv + ar)
    } else if !wet_r {
        (ulv - al, ulv + two * al)
    } else {
        let a_star = half * (al + ar) + T::lit(0.25) * (ulv - urv);
        let u_star = half * (ulv + urv) + al - ar;
        let a_star = a_star.max(T::zero());
        ((ulv - al).min(u_star - a_star), (urv + ar).max(u_star + a_star))
    };
    let fl = physical_flux(ul, c);
    let fr = physical_flux(ur, c);
    if sl >= T::zero() {
        return fl;
    }
    if sr <= T::zero() {
        return fr;
    }
    let inv = T::one() / (sr - sl);
    let mut f = [T::zero(); 3];
    for k in 0..3 {
        f[k] = (sr * fl[k] - sl * fr[k] + sl * sr * (ur[k] - ul[k])) * inv;
    }
    f
}

/// Limits of one side at a face, in the face's normal frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceState<T> {
    pub h: T,
    pub qn: T,
    pub qt: T,
    pub z: T,
}

/// Face states after hydrostatic reconstruction on the common bed `z_star`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Revised<T> {
    pub left: [T; 3],
    pub right: [T; 3],
    pub z_star: T,
}

/// `z* = max(zL, zR)`, `h• = max(0, η − z*)`, velocities kept on wet sides.
#[inline]
pub fn revise_face_states<T: Real>(l: &FaceState<T>, r: &FaceState<T>, c: &Consts<T>) -> Revised<T> {
    let z_star = l.z.max(r.z);
    let side = |s: &FaceState<T>| {
        let h = (s.h + s.z - z_star).max(T::zero());
        if s.h > c.h_dry && h > c.h_dry {
            [h, h * (s.qn / s.h), h * (s.qt / s.h)]
        } else {
            [h, T::zero(), T::zero()]
        }
    };
    Revised { left: side(l), right: side(r), z_star }
}

/// Momentum correction that turns the revised flux into the flux seen by a
/// side whose own reference depth is `h_ref`.
#[inline]
pub fn pressure_correction<T: Real>(h_ref: T, h_star: T, c: &Consts<T>) -> T {
    T::lit(0.5) * c.g * (h_ref * h_ref - h_star * h_star)
}

/// Revised HLL flux plus per-side corrected fluxes `(left, right)` in the
/// normal frame. `href_*` are the depths each side balances against.
#[inline]
pub fn corrected_fluxes<T: Real>(
    l: &FaceState<T>,
    r: &FaceState<T>,
    href_l: T,
    href_r: T,
    c: &Consts<T>,
) -> ([T; 3], [T; 3]) {
    let rev = revise_face_states(l, r, c);
    let f = hll(rev.left, rev.right, c);
    let mut fl = f;
    let mut fr = f;
    fl[1] += pressure_correction(href_l, rev.left[0], c);
    fr[1] += pressure_correction(href_r, rev.right[0], c);
    (fl, fr)
}

/// Implicit Manning friction divisor `1 + Δt g n² |V| / h^{4/3}` (1 when dry).
#[inline]
pub fn friction_divisor<T: Real>(h: T, qx: T, qy: T, n: T, dt: T, c: &Consts<T>) -> T {
    if h <= c.h_dry || n == T::zero() {
        return T::one();
    }
    let speed = (qx * qx + qy * qy).sqrt() / h;
    T::one() + dt * c.g * n * n * speed / h.powf(T::lit(4.0 / 3.0))
}

/// Local inertial discharge across one face (positive from left to right).
#[allow(clippy::too_many_arguments)]
pub fn acc_face_discharge<T: Real>(
    eta_l: T,
    eta_r: T,
    z_l: T,
    z_r: T,
    q_prev: T,
    dx: T,
    n: T,
    dt: T,
    c: &Consts<T>,
) -> T {
    let hf = eta_l.max(eta_r) - z_l.max(z_r);
    if hf <= c.h_dry {
        return T::zero();
    }
    let num = q_prev - c.g * hf * dt * (eta_r - eta_l) / dx;
    let den = T::one() + c.g * dt * n * n * q_prev.abs() / hf.powf(T::lit(7.0 / 3.0));
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c() -> Consts<f64> {
        Consts::default()
    }

    #[test]
    fn dry_dry_is_zero() {
        assert_eq!(hll_flux([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], &c()).unwrap(), [0.0; 3]);
    }

    #[test]
    fn still_water_pressure() {
        let f = hll_flux([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], &c()).unwrap();
        assert!(f[0].abs() < 1e-15);
        assert!((f[1] - 4.903325).abs() < 1e-12);
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn supercritical_is_upwind() {
        let ul = [1.0, 10.0, 0.5];
        let f = hll_flux(ul, [0.8, 7.0, 0.0], &c()).unwrap();
        assert_eq!(f, physical_flux(ul, &c()));
    }

    #[test]
    fn negative_depth_is_rejected() {
        assert!(matches!(hll_flux([-1e-3, 0.0, 0.0], [1.0, 0.0, 0.0], &c()), Err(Error::Domain(_))));
    }

    #[test]
    fn lake_at_rest_over_step() {
        let c = c();
        let l = FaceState { h: 2.0, qn: 0.0, qt: 0.0, z: 1.0 };
        let r = FaceState { h: 1.5, qn: 0.0, qt: 0.0, z: 1.5 };
        let rev = revise_face_states(&l, &r, &c);
        assert_eq!(rev.left, rev.right);
        let (fl, fr) = corrected_fluxes(&l, &r, l.h, r.h, &c);
        // each side balances its own hydrostatic pressure
        assert!((fl[1] - 0.5 * c.g * 4.0).abs() < 1e-14);
        assert!((fr[1] - 0.5 * c.g * 2.25).abs() < 1e-14);
        assert_eq!(fl[0], 0.0);
    }

    #[test]
    fn dry_bank_above_surface() {
        let c = c();
        let l = FaceState { h: 0.5, qn: 0.0, qt: 0.0, z: 0.0 };
        let r = FaceState { h: 0.0, qn: 0.0, qt: 0.0, z: 1.0 };
        let rev = revise_face_states(&l, &r, &c);
        assert_eq!(rev.left[0], 0.0);
        let (fl, fr) = corrected_fluxes(&l, &r, l.h, r.h, &c);
        assert_eq!(fl[0], 0.0);
        assert_eq!(fr[0], 0.0);
        // the wet side feels the wall
        assert!((fl[1] - 0.5 * c.g * 0.25).abs() < 1e-15);
    }

    #[test]
    fn wet_flat_revision_is_identity() {
        let c = c();
        let l = FaceState { h: 1.2, qn: 0.3, qt: -0.1, z: 0.0 };
        let r = FaceState { h: 0.9, qn: 0.2, qt: 0.4, z: 0.0 };
        let rev = revise_face_states(&l, &r, &c);
        assert_eq!(rev.left, [1.2, 0.3, -0.1]);
        assert_eq!(rev.right, [0.9, 0.2, 0.4]);
    }

    #[test]
    fn acc_cases() {
        let c = c();
        // flat surface: friction-only decay
        let q = acc_face_discharge(1.0, 1.0, 0.0, 0.0, 0.5, 10.0, 0.03, 1.0, &c);
        assert!(q > 0.0 && q <= 0.5);
        let q = acc_face_discharge(1.0, 1.0, 0.0, 0.0, -0.5, 10.0, 0.03, 1.0, &c);
        assert!(q < 0.0 && q >= -0.5);
        // from rest, flow runs down the surface gradient
        assert!(acc_face_discharge(1.2, 1.0, 0.0, 0.0, 0.0, 10.0, 0.03, 1.0, &c) > 0.0);
        // dry face
        assert_eq!(acc_face_discharge(0.5, 0.4, 1.0, 0.0, 3.0, 10.0, 0.03, 1.0, &c), 0.0);
    }

    #[test]
    fn acc_fixed_point_is_manning_flow() {
        // uniform flow of depth h on slope s: eta_r - eta_l = -s dx
        let c = c();
        let (h, s, n, dx, dt) = (0.8f64, 1e-3f64, 0.03f64, 10.0, 2.0);
        let mut q = 0.0;
        for _ in 0..20000 {
            q = acc_face_discharge(h + s * dx, h, s * dx, 0.0, q, dx, n, dt, &c);
        }
        let manning = h.powf(5.0 / 3.0) * s.sqrt() / n;
        assert!((q - manning).abs() / manning < 0.01, "{q} vs {manning}");
    }

    #[test]
    fn friction_divisor_cases() {
        let c = c();
        assert_eq!(friction_divisor(0.0, 1.0, 1.0, 0.03, 1.0, &c), 1.0);
        assert_eq!(friction_divisor(1.0, 1.0, 1.0, 0.0, 1.0, &c), 1.0);
        let d = friction_divisor(1.0, 3.0, 4.0, 0.1, 0.5, &c);
        assert!((d - (1.0 + 0.5 * c.g * 0.01 * 5.0)).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn hll_consistency_and_mirror(h in 0.0f64..5.0, qn in -5.0f64..5.0, qt in -5.0f64..5.0,
                                      h2 in 0.0f64..5.0, qn2 in -5.0f64..5.0, qt2 in -5.0f64..5.0) {
            let c = c();
            let u = [h, qn, qt];
            let f = hll(u, u, &c);
            let p = physical_flux(u, &c);
            for k in 0..3 { prop_assert!((f[k] - p[k]).abs() <= 1e-12 * (1.0 + p[k].abs())); }
            // mirror symmetry: F(a, b) = -M F(Mb, Ma) with M negating the normal
            let v = [h2, qn2, qt2];
            let a = hll(u, v, &c);
            let b = hll([h2, -qn2, qt2], [h, -qn, qt], &c);
            prop_assert!((a[0] + b[0]).abs() <= 1e-10 * (1.0 + a[0].abs()));
            prop_assert!((a[1] - b[1]).abs() <= 1e-10 * (1.0 + a[1].abs()));
            prop_assert!((a[2] + b[2]).abs() <= 1e-10 * (1.0 + a[2].abs()));
        }
    }
}
