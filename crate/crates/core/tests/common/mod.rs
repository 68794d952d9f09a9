//! Exact-arithmetic geometry oracles shared by integration tests.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use signls::tomography::{NetworkTopology, Point};

type Q = BigRational;

fn q(v: f64) -> Q {
    Q::from_float(v).unwrap()
}

fn cross(a: &(Q, Q), b: &(Q, Q)) -> Q {
    &a.0 * &b.1 - &a.1 * &b.0
}

fn sub(a: &(Q, Q), b: &(Q, Q)) -> (Q, Q) {
    (&a.0 - &b.0, &a.1 - &b.1)
}

/// Exact parametric intersection: the segments cross iff they share a point
/// that is not an endpoint of both.
pub fn exact_cross(p1: Point, p2: Point, p3: Point, p4: Point) -> bool {
    let [a, b, c, d] = [p1, p2, p3, p4].map(|p| (q(p[0]), q(p[1])));
    let r = sub(&b, &a);
    let s = sub(&d, &c);
    let ca = sub(&c, &a);
    let denom = cross(&r, &s);
    let zero = Q::zero();
    let one = Q::from_integer(BigInt::from(1));
    if !denom.is_zero() {
        let t = cross(&ca, &s) / &denom;
        let u = cross(&ca, &r) / &denom;
        if t < zero || t > one || u < zero || u > one {
            return false;
        }
        let t_end = t.is_zero() || t == one;
        let u_end = u.is_zero() || u == one;
        return !(t_end && u_end);
    }
    if !cross(&ca, &r).is_zero() {
        return false;
    }
    let rr = &r.0 * &r.0 + &r.1 * &r.1;
    let proj = |p: &(Q, Q)| {
        let v = sub(p, &a);
        (&v.0 * &r.0 + &v.1 * &r.1) / &rr
    };
    let (t0, t1) = (proj(&c), proj(&d));
    let lo = if t0 < t1 { t0.clone() } else { t1.clone() }.max(zero);
    let hi = if t0 < t1 { t1 } else { t0 }.min(one);
    (hi - lo).is_positive()
}


/// Sign of `(b − a) × (c − a)`: a floating-point evaluation with a
/// forward error bound, falling back to rationals when inconclusive.
pub fn exact_orient(a: Point, b: Point, c: Point) -> i8 {
    let l = (b[0] - a[0]) * (c[1] - a[1]);
    let r = (b[1] - a[1]) * (c[0] - a[0]);
    let det = l - r;
    let bound = 3.3306690738754716e-16 * (l.abs() + r.abs());
    if det > bound {
        return 1;
    }
    if -det > bound {
        return -1;
    }
    let [a, b, c] = [a, b, c].map(|p| (q(p[0]), q(p[1])));
    let v = cross(&sub(&b, &a), &sub(&c, &a));
    if v.is_positive() {
        1
    } else if v.is_negative() {
        -1
    } else {
        0
    }
}

fn exact_dot_positive(o: Point, u: Point, v: Point) -> bool {
    let [o, u, v] = [o, u, v].map(|p| (q(p[0]), q(p[1])));
    let (du, dv) = (sub(&u, &o), sub(&v, &o));
    (&du.0 * &dv.0 + &du.1 * &dv.1).is_positive()
}

/// Crossing test with the same contract as `exact_cross`, fast on the
/// common cases: disjoint boxes, shared endpoints, general position.
pub fn filtered_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let disjoint = a[0].max(b[0]) < c[0].min(d[0])
        || c[0].max(d[0]) < a[0].min(b[0])
        || a[1].max(b[1]) < c[1].min(d[1])
        || c[1].max(d[1]) < a[1].min(b[1]);
    if disjoint {
        return false;
    }
    let shared = [(a, b, c, d), (a, b, d, c), (b, a, c, d), (b, a, d, c)]
        .into_iter()
        .find(|(s, _, t, _)| s == t);
    if let Some((o, u, _, v)) = shared {
        if u == v {
            return true;
        }
        return exact_orient(o, u, v) == 0 && exact_dot_positive(o, u, v);
    }
    let (o1, o2, o3, o4) = (exact_orient(a, b, c), exact_orient(a, b, d), exact_orient(c, d, a), exact_orient(c, d, b));
    if o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 {
        return o1 != o2 && o3 != o4;
    }
    exact_cross(a, b, c, d)
}

/// Pairwise planarity under exact arithmetic.
pub fn exactly_planar(t: &NetworkTopology) -> bool {
    let p = &t.positions;
    for (i, e) in t.edges.iter().enumerate() {
        for f in &t.edges[i + 1..] {
            if filtered_cross(p[e.0], p[e.1], p[f.0], p[f.1]) {
                return false;
            }
        }
    }
    true
}
