//! Shared 2D coverage predicates for the rasterizer and the voxelizer.

/// Edge function with exact antisymmetry: evaluating the edge b->a yields the
/// bit-exact negation of a->b, so shared edges are never counted twice.
#[inline]
pub(crate) fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let swap = (a[0], a[1]) > (b[0], b[1]);
    let (s, t) = if swap { (b, a) } else { (a, b) };
    let w = (t[0] - s[0]) * (p[1] - s[1]) - (t[1] - s[1]) * (p[0] - s[0]);
    if swap {
        -w
    } else {
        w
    }
}

/// Ownership of points lying exactly on an edge: exactly one of a->b, b->a
/// claims them.
#[inline]
pub(crate) fn owns(a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    dy > 0.0 || (dy == 0.0 && dx > 0.0)
}

/// Barycentric weights (unnormalized) of `p` in the counter-clockwise
/// triangle `t`, or `None` when `p` is not covered.
#[inline]
pub(crate) fn cover(t: &[[f64; 2]; 3], p: [f64; 2]) -> Option<[f64; 3]> {
    let w0 = edge(t[1], t[2], p);
    let w1 = edge(t[2], t[0], p);
    let w2 = edge(t[0], t[1], p);
    let inside = (w0 > 0.0 || (w0 == 0.0 && owns(t[1], t[2])))
        && (w1 > 0.0 || (w1 == 0.0 && owns(t[2], t[0])))
        && (w2 > 0.0 || (w2 == 0.0 && owns(t[0], t[1])));
    inside.then_some([w0, w1, w2])
}
