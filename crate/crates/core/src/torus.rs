//! Geometry of the flat torus `[0, 2π)³`.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::vector::{self, Vec3};

/// Side length of the periodic box.
pub const PERIOD: f64 = TAU;

/// Relative overlap below which two spheres are considered to interpenetrate.
/// Round-off at contact stays far below this.
pub const OVERLAP_TOL: f64 = 1e-6;

/// Normalised discriminant `1 - (miss distance / eps)²` under which a contact
/// is treated as grazing and ignored.
pub const GRAZING_TOL: f64 = 1e-12;

/// A point of the torus with every coordinate in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusVector([f64; 3]);

impl TorusVector {
    pub const ORIGIN: TorusVector = TorusVector([0.0; 3]);

    /// Reduces `p` modulo `2π` componentwise.
    pub fn wrap(p: Vec3) -> Result<Self> {
        if !vector::is_finite(p) {
            return Err(Error::NonFinite("torus position"));
        }
        Ok(Self::wrap_finite(p))
    }

    #[inline]
    pub(crate) fn wrap_finite(p: Vec3) -> Self {
        TorusVector([wrap_coord(p[0]), wrap_coord(p[1]), wrap_coord(p[2])])
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.0[1]
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.0[2]
    }

    #[inline]
    pub fn as_array(&self) -> Vec3 {
        self.0
    }

    /// Ballistic displacement by `velocity * dt`, wrapped back onto the torus.
    #[inline]
    pub fn advanced(&self, velocity: Vec3, dt: f64) -> TorusVector {
        Self::wrap_finite(vector::axpy(self.0, dt, velocity))
    }

    /// Euclidean distance on the torus.
    pub fn distance(&self, other: &TorusVector) -> f64 {
        vector::norm(minimal_image(self, other))
    }
}

#[inline]
fn wrap_coord(c: f64) -> f64 {
    // `%` is an exact remainder; only the negative branch can round up to 2π.
    let r = c % PERIOD;
    let r = if r < 0.0 { r + PERIOD } else { r };
    if r >= PERIOD {
        0.0
    } else {
        r
    }
}

/// Representative of `a - b` with every component in `[-π, π)`.
#[inline]
pub fn minimal_image(a: &TorusVector, b: &TorusVector) -> Vec3 {
    let mut d = vector::sub(a.0, b.0);
    for c in d.iter_mut() {
        if *c >= PI {
            *c -= PERIOD;
        } else if *c < -PI {
            *c += PERIOD;
        }
    }
    d
}

/// Earliest time `s >= 0` at which two spheres of diameter `eps`, with
/// minimal-image separation `x_rel` and relative velocity `v_rel`, come into
/// approaching contact.
///
/// All 27 periodic images of the separation are searched, so any contact
/// within one relative period `2π / |v_rel|` is found. Returns `None` when
/// there is none in that horizon.
pub fn collision_time(x_rel: Vec3, v_rel: Vec3, eps: f64) -> Result<Option<f64>> {
    if !(eps > 0.0 && eps < PI / 2.0) {
        return Err(Error::invalid(format!("diameter {eps} outside (0, π/2)")));
    }
    if !vector::is_finite(x_rel) || !vector::is_finite(v_rel) {
        return Err(Error::NonFinite("collision prediction"));
    }
    let dist2 = vector::norm2(x_rel);
    let min_dist = eps * (1.0 - OVERLAP_TOL);
    if dist2 < min_dist * min_dist {
        return Err(Error::Overlap {
            distance: dist2.sqrt(),
            eps,
        });
    }
    Ok(collision_time_unchecked(x_rel, v_rel, eps))
}

/// [`collision_time`] without argument validation; used on the engine's hot path.
pub(crate) fn collision_time_unchecked(x_rel: Vec3, v_rel: Vec3, eps: f64) -> Option<f64> {
    let a = vector::norm2(v_rel);
    if a == 0.0 {
        return None;
    }
    let horizon = PERIOD / a.sqrt();
    let eps2 = eps * eps;
    let grazing = GRAZING_TOL * a * eps2;
    let shifts = [-PERIOD, 0.0, PERIOD];

    let mut best: Option<f64> = None;
    for &sx in &shifts {
        let dx = x_rel[0] + sx;
        for &sy in &shifts {
            let dy = x_rel[1] + sy;
            for &sz in &shifts {
                let dz = x_rel[2] + sz;
                let b = dx * v_rel[0] + dy * v_rel[1] + dz * v_rel[2];
                if b >= 0.0 {
                    continue;
                }
                let c = dx * dx + dy * dy + dz * dz - eps2;
                let disc = b * b - a * c;
                if disc <= grazing {
                    continue;
                }
                let s = if c <= 0.0 {
                    0.0
                } else {
                    c / (-b + disc.sqrt())
                };
                if s <= horizon && best.is_none_or(|t| s < t) {
                    best = Some(s);
                }
            }
        }
    }
    best
}

/// Earliest approaching contact of the relative trajectory `x0 + v s` with any
/// periodic image, for `from <= s <= limit`. `x0` is any representative of
/// the separation at `s = 0` and `limit` must be finite.
///
/// A contact with the image centred at `2π m` requires every coordinate to be
/// within `eps` of `2π m_k`. The search walks the slabs of the slowest axis in
/// time order and, inside each, enumerates the slabs of the other two axes
/// that overlap it. Candidate contacts are solved from the time the
/// trajectory enters the box around `2π m`, a closed-form function of
/// `(x0, v, m)`, so the result does not depend on `from`.
pub(crate) fn first_contact(x0: Vec3, v: Vec3, eps: f64, from: f64, limit: f64) -> Option<f64> {
    let a = vector::norm2(v);
    if a == 0.0 || from > limit {
        return None;
    }
    debug_assert!(limit.is_finite());
    let speed = v.map(f64::abs);
    let (p, q, r) = if speed[0] <= speed[1] {
        if speed[1] <= speed[2] {
            (0, 1, 2)
        } else if speed[0] <= speed[2] {
            (0, 2, 1)
        } else {
            (2, 0, 1)
        }
    } else if speed[0] <= speed[2] {
        (1, 0, 2)
    } else if speed[1] <= speed[2] {
        (1, 2, 0)
    } else {
        (2, 1, 0)
    };
    let search = Search::new(x0, v, eps);
    let resolve = |lo: f64, hi: f64, mp: f64| -> Option<f64> {
        let mut best: Option<f64> = None;
        let (mq_lo, mq_hi) = search.slab_range(q, lo, hi);
        let mut mq = mq_lo;
        while mq <= mq_hi {
            let (eq, xq) = search.slab_times(q, mq);
            let (lo2, hi2) = (lo.max(eq), hi.min(xq));
            if lo2 <= hi2 {
                let (mr_lo, mr_hi) = search.slab_range(r, lo2, hi2);
                let mut mr = mr_lo;
                while mr <= mr_hi {
                    let mut m = [0.0; 3];
                    m[p] = mp;
                    m[q] = mq;
                    m[r] = mr;
                    if let Some(t) = search.contact(m) {
                        if t >= from && t <= limit && best.is_none_or(|b| t < b) {
                            best = Some(t);
                        }
                    }
                    mr += 1.0;
                }
            }
            mq += 1.0;
        }
        best
    };

    if v[p] == 0.0 {
        let mp = floor(x0[p] * INV_PERIOD + 0.5);
        if (x0[p] - PERIOD * mp).abs() >= eps {
            return None;
        }
        return resolve(from, limit, mp);
    }
    let sign = v[p].signum();
    let y = x0[p] + v[p] * from;
    let mut mp = if sign > 0.0 {
        ceil((y - eps) * INV_PERIOD)
    } else {
        floor((y + eps) * INV_PERIOD)
    };
    loop {
        let (ep, xp) = search.slab_times(p, mp);
        if ep > limit {
            return None;
        }
        let (lo, hi) = (ep.max(from), xp.min(limit));
        if lo <= hi {
            if let Some(t) = resolve(lo, hi, mp) {
                return Some(t);
            }
        }
        mp += sign;
    }
}

pub(crate) const INV_PERIOD: f64 = 1.0 / PERIOD;

/// `f64::floor` for finite `|x| < 2⁶³`, without a library call on targets
/// lacking a rounding instruction.
#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    let t = x as i64 as f64;
    if t > x {
        t - 1.0
    } else {
        t
    }
}

#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    let t = x as i64 as f64;
    if t < x {
        t + 1.0
    } else {
        t
    }
}

struct Search {
    x0: Vec3,
    v: Vec3,
    inv: Vec3,
    eps: f64,
    a: f64,
}

impl Search {
    fn new(x0: Vec3, v: Vec3, eps: f64) -> Self {
        Search {
            x0,
            v,
            inv: v.map(|c| if c == 0.0 { 0.0 } else { 1.0 / c }),
            eps,
            a: vector::norm2(v),
        }
    }

    /// Time interval during which coordinate `k` is within `eps` of `2π m`.
    #[inline]
    fn slab_times(&self, k: usize, m: f64) -> (f64, f64) {
        if self.v[k] == 0.0 {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let c = PERIOD * m - self.x0[k];
        let t1 = (c - self.eps) * self.inv[k];
        let t2 = (c + self.eps) * self.inv[k];
        if t1 <= t2 {
            (t1, t2)
        } else {
            (t2, t1)
        }
    }

    /// Inclusive range of slab indices along axis `k` visited during `[lo, hi]`.
    #[inline]
    fn slab_range(&self, k: usize, lo: f64, hi: f64) -> (f64, f64) {
        let (c1, c2) = (self.x0[k] + self.v[k] * lo, self.x0[k] + self.v[k] * hi);
        let (lo_c, hi_c) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        (
            ceil((lo_c - self.eps) * INV_PERIOD),
            floor((hi_c + self.eps) * INV_PERIOD),
        )
    }

    /// Approaching contact with the image centred at `2π m`, solved from the
    /// time the trajectory enters the box of half-width `eps` around it.
    #[inline]
    fn contact(&self, m: Vec3) -> Option<f64> {
        let d = [
            self.x0[0] - PERIOD * m[0],
            self.x0[1] - PERIOD * m[1],
            self.x0[2] - PERIOD * m[2],
        ];
        let mut base = 0.0f64;
        for k in 0..3 {
            if self.v[k] != 0.0 {
                base = base.max(self.slab_times(k, m[k]).0);
            }
        }
        let delta = vector::axpy(d, base, self.v);
        let b = vector::dot(delta, self.v);
        if b >= 0.0 {
            return None;
        }
        let eps2 = self.eps * self.eps;
        let c = vector::norm2(delta) - eps2;
        let disc = b * b - self.a * c;
        if disc <= GRAZING_TOL * self.a * eps2 {
            return None;
        }
        let s = if c <= 0.0 {
            0.0
        } else {
            c / (-b + disc.sqrt())
        };
        Some(base + s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wrap_examples() {
        assert_eq!(TorusVector::wrap([0.0; 3]).unwrap(), TorusVector::ORIGIN);

        let w = TorusVector::wrap([TAU + 1.0, -1.0, 0.0]).unwrap();
        assert_relative_eq!(w.x(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.y(), TAU - 1.0, epsilon = 1e-12);
        assert_eq!(w.z(), 0.0);

        let w = TorusVector::wrap([7.0; 3]).unwrap();
        for c in w.as_array() {
            assert_relative_eq!(c, 0.716_814_692_820_413_5, epsilon = 1e-12);
        }
    }

    #[test]
    fn wrap_rejects_non_finite() {
        assert!(TorusVector::wrap([f64::NAN, 0.0, 0.0]).is_err());
        assert!(TorusVector::wrap([0.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn wrap_tiny_negative_stays_in_range() {
        let w = TorusVector::wrap([-1e-18, -0.0, -TAU]).unwrap();
        for c in w.as_array() {
            assert!((0.0..TAU).contains(&c), "{c}");
        }
    }

    #[test]
    fn minimal_image_examples() {
        let a = TorusVector::wrap([0.1, 0.0, 0.0]).unwrap();
        let b = TorusVector::wrap([TAU - 0.1, 0.0, 0.0]).unwrap();
        let d = minimal_image(&a, &b);
        assert_relative_eq!(d[0], 0.2, epsilon = 1e-12);
        assert_eq!(&d[1..], &[0.0, 0.0]);

        assert_eq!(minimal_image(&a, &a), [0.0; 3]);

        // 3 < π: the direct difference is already the closest image.
        let a = TorusVector::wrap([3.0, 0.0, 0.0]).unwrap();
        let o = TorusVector::ORIGIN;
        assert_eq!(minimal_image(&a, &o), [3.0, 0.0, 0.0]);

        let a = TorusVector::wrap([4.0, 0.0, 0.0]).unwrap();
        let d = minimal_image(&a, &o);
        assert_relative_eq!(d[0], 4.0 - TAU, epsilon = 1e-12);
    }

    #[test]
    fn collision_time_examples() {
        let s = collision_time([1.0, 0.0, 0.0], [-2.0, 0.0, 0.0], 0.1).unwrap();
        assert_relative_eq!(s.unwrap(), 0.45, epsilon = 1e-14);

        let s = collision_time([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], 0.1).unwrap();
        assert_relative_eq!(s.unwrap(), TAU - 1.0 - 0.1, epsilon = 1e-12);

        let s = collision_time([1.0, 0.2, 0.0], [0.0, 1.0, 0.0], 0.1).unwrap();
        assert_eq!(s, None);
    }

    #[test]
    fn collision_time_rejects_overlap() {
        let err = collision_time([0.05, 0.0, 0.0], [-1.0, 0.0, 0.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::Overlap { .. }));
    }

    #[test]
    fn collision_time_receding_contact_is_a_miss() {
        // Just after a collision: at contact, moving apart.
        let s = collision_time([0.1, 0.0, 0.0], [1.0, 0.3, 0.0], 0.1).unwrap();
        assert!(s.is_none_or(|s| s > 1.0));
    }

    #[test]
    fn collision_time_grazing_is_a_miss() {
        let s = collision_time([1.0, 0.1, 0.0], [-1.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(s, None);
    }

    #[test]
    fn collision_time_zero_relative_velocity() {
        assert_eq!(
            collision_time([1.0, 0.0, 0.0], [0.0; 3], 0.1).unwrap(),
            None
        );
    }

    /// Contact times against every image whose centre lies in the bounding
    /// box of the segment, solved from `s = 0` without any cube bookkeeping.
    fn enumerated_contact(x0: Vec3, v: Vec3, eps: f64, from: f64, limit: f64) -> Option<f64> {
        let a = vector::norm2(v);
        let end = vector::axpy(x0, limit, v);
        let range = |k: usize| {
            let lo = x0[k].min(end[k]) - eps;
            let hi = x0[k].max(end[k]) + eps;
            ((lo / PERIOD).ceil() as i64)..=((hi / PERIOD).floor() as i64)
        };
        let mut best: Option<f64> = None;
        for mx in range(0) {
            for my in range(1) {
                for mz in range(2) {
                    let d = vector::sub(x0, [mx as f64, my as f64, mz as f64].map(|m| m * PERIOD));
                    let b = vector::dot(d, v);
                    let c = vector::norm2(d) - eps * eps;
                    let disc = b * b - a * c;
                    if b >= 0.0 || disc <= 0.0 {
                        continue;
                    }
                    let s = (-b - disc.sqrt()) / a;
                    if s >= from && s <= limit && best.is_none_or(|t| s < t) {
                        best = Some(s);
                    }
                }
            }
        }
        best
    }

    fn random_instance(rng: &mut impl rand::Rng) -> (Vec3, Vec3, f64) {
        let eps = rng.random_range(0.01..0.5);
        loop {
            let x = [0; 3].map(|_| rng.random_range(-PI..PI));
            if vector::norm(x) > eps {
                let v = [0; 3].map(|_| rng.random_range(-2.0..2.0));
                return (x, v, eps);
            }
        }
    }

    #[test]
    fn first_contact_matches_image_enumeration_over_long_flights() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut found = 0;
        for _ in 0..20_000 {
            let (x, v, eps) = random_instance(&mut rng);
            let limit = 12.0;
            let got = first_contact(x, v, eps, 0.0, limit);
            let want = enumerated_contact(x, v, eps, 0.0, limit);
            match (got, want) {
                (Some(g), Some(w)) => {
                    found += 1;
                    assert!(
                        (g - w).abs() <= 1e-9 * w.max(1.0),
                        "{x:?} {v:?} {eps}: {g} vs {w}"
                    );
                }
                (None, None) => {}
                _ => panic!("{x:?} {v:?} {eps}: {got:?} vs {want:?}"),
            }
        }
        assert!(found > 300, "only {found} contacts exercised");
    }

    #[test]
    fn first_contact_agrees_with_single_period_search() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20_000 {
            let (x, v, eps) = random_instance(&mut rng);
            let horizon = PERIOD / vector::norm(v);
            let walked = first_contact(x, v, eps, 0.0, horizon);
            let imaged = collision_time(x, v, eps).unwrap();
            match (walked, imaged) {
                (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-10 * b.max(1.0)),
                (None, None) => {}
                _ => panic!("{x:?} {v:?} {eps}: {walked:?} vs {imaged:?}"),
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn first_contact_ignores_where_the_search_starts(
            x in proptest::array::uniform3(-PI..PI),
            v in proptest::array::uniform3(-2.0f64..2.0),
            eps in 0.01f64..0.5,
            cut in 0.0f64..1.0,
            extra in 0.0f64..10.0,
        ) {
            proptest::prop_assume!(vector::norm(x) > eps);
            if let Some(t) = first_contact(x, v, eps, 0.0, 40.0) {
                let later = first_contact(x, v, eps, cut * t, t + extra);
                proptest::prop_assert_eq!(later, Some(t));
            }
        }
    }
}
