//! Procedural object meshes used in place of a CAD parts library. All
//! families are prisms or stacked prisms with a flat top, so they rest on
//! their base and stay top-down graspable. None has a rotational symmetry
//! smaller than 180 degrees about z.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normalize_object;
use crate::geom::mesh::{cuboid, extrude_polygon, TriMesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Block,
    LPrism,
    TPrism,
    DCylinder,
    Stacked,
    Notched,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 6] = [
        ShapeKind::Block,
        ShapeKind::LPrism,
        ShapeKind::TPrism,
        ShapeKind::DCylinder,
        ShapeKind::Stacked,
        ShapeKind::Notched,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Block => "block",
            ShapeKind::LPrism => "l_prism",
            ShapeKind::TPrism => "t_prism",
            ShapeKind::DCylinder => "d_cylinder",
            ShapeKind::Stacked => "stacked",
            ShapeKind::Notched => "notched",
        }
    }
}

/// Unnormalized mesh of the given family with random proportions.
pub fn make_shape(kind: ShapeKind, rng: &mut impl Rng) -> TriMesh {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let prism = |outline: &[[f64; 2]], h: f64| {
        extrude_polygon(outline, 0.0, h).expect("generated outlines are simple polygons")
    };
    match kind {
        ShapeKind::Block => {
            // sides differ by at least 15% so the 90 degree turn does not fit
            let a = u(0.030, 0.050);
            let b = a * u(0.45, 0.85);
            cuboid(Vector3::zeros(), Vector3::new(a, b, u(0.015, 0.04)))
        }
        ShapeKind::LPrism => {
            let (a, b) = (u(0.030, 0.050), u(0.025, 0.045));
            let t = a.min(b) * u(0.35, 0.55);
            prism(&[[0.0, 0.0], [a, 0.0], [a, t], [t, t], [t, b], [0.0, b]], u(0.015, 0.035))
        }
        ShapeKind::TPrism => {
            let w = u(0.035, 0.050);
            let t = w * u(0.25, 0.4);
            let stem = w * u(0.3, 0.45);
            let len = u(0.03, 0.05);
            let (l, r) = ((w - stem) / 2.0, (w + stem) / 2.0);
            prism(
                &[[0.0, 0.0], [w, 0.0], [w, t], [r, t], [r, len], [l, len], [l, t], [0.0, t]],
                u(0.015, 0.035),
            )
        }
        ShapeKind::DCylinder => {
            let r = u(0.015, 0.025);
            let cut = r * u(0.3, 0.6);
            let a0 = (cut / r).acos();
            let n = 40;
            let outline: Vec<[f64; 2]> = (0..=n)
                .map(|i| {
                    let a = a0 + (std::f64::consts::TAU - 2.0 * a0) * i as f64 / n as f64;
                    [r * a.cos(), r * a.sin()]
                })
                .collect();
            prism(&outline, u(0.015, 0.04))
        }
        ShapeKind::Stacked => {
            let (a, b) = (u(0.035, 0.050), u(0.025, 0.04));
            let h0 = u(0.01, 0.02);
            let lower = cuboid(Vector3::zeros(), Vector3::new(a, b, h0));
            let (ta, tb) = (a * u(0.35, 0.55), b * u(0.45, 0.7));
            let upper = cuboid(Vector3::new(a - ta, 0.0, h0), Vector3::new(ta, tb, u(0.01, 0.02)));
            TriMesh::merge(&[lower, upper])
        }
        ShapeKind::Notched => {
            let (a, b) = (u(0.035, 0.050), u(0.025, 0.04));
            let nw = a * u(0.2, 0.3);
            let nd = b * u(0.25, 0.45);
            let x0 = a * u(0.15, 0.3);
            prism(
                &[[0.0, 0.0], [a, 0.0], [a, b], [x0 + nw, b], [x0 + nw, b - nd], [x0, b - nd], [x0, b], [0.0, b]],
                u(0.015, 0.035),
            )
        }
    }
}

/// Random normalized object of a uniformly chosen family.
pub fn random_object(rng: &mut impl Rng) -> (ShapeKind, TriMesh) {
    let kind = ShapeKind::ALL[rng.random_range(0..ShapeKind::ALL.len())];
    let mesh = make_shape(kind, rng);
    (kind, normalize_object(&mesh).expect("generated shapes have extent"))
}
