//! Convex bodies: the targets `K = ∇Φ(ℝⁿ)` of the potentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// JSON descriptor of a body, e.g. `{"kind": "box", "halfwidths": [1, 1]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BodySpec {
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
    Box {
        halfwidths: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Disk {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<[f64; 2]>,
    },
    Simplex {
        n: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyKind {
    Polygon,
    Box,
    Disk,
    Simplex,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Polygon(Vec<[f64; 2]>),
    Box {
        halfwidths: Vec<f64>,
        center: Vec<f64>,
    },
    Disk {
        radius: f64,
        center: [f64; 2],
    },
    // the canonical simplex translated by `offset`
    Simplex {
        n: usize,
        offset: Vec<f64>,
    },
}

/// An immutable convex body. Construct with [`make_body`], then [`ConvexBody::recenter`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexBody {
    shape: Shape,
    barycenter: Vec<f64>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn polygon_area_centroid(v: &[[f64; 2]]) -> (f64, [f64; 2]) {
    // triangle fan from v[0]
    let mut area = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 1..v.len() - 1 {
        let a = cross(v[0], v[k], v[k + 1]) / 2.0;
        area += a;
        cx += a * (v[0][0] + v[k][0] + v[k + 1][0]) / 3.0;
        cy += a * (v[0][1] + v[k][1] + v[k + 1][1]) / 3.0;
    }
    (area, [cx / area, cy / area])
}

fn validate_polygon(v: &[[f64; 2]]) -> Result<()> {
    let m = v.len();
    if m < 3 {
        return Err(Error::validation("polygon needs at least 3 vertices"));
    }
    if v.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::validation("polygon vertex is not finite"));
    }
    let scale = v
        .iter()
        .map(|p| p[0].abs().max(p[1].abs()))
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut turning = 0.0;
    for i in 0..m {
        let a = v[i];
        let b = v[(i + 1) % m];
        let c = v[(i + 2) % m];
        if (b[0] - a[0]).hypot(b[1] - a[1]) <= 1e-12 * scale {
            return Err(Error::validation(format!(
                "repeated vertex at index {}",
                (i + 1) % m
            )));
        }
        let cr = cross(a, b, c);
        if cr.abs() <= 1e-12 * scale * scale {
            return Err(Error::validation(format!(
                "collinear vertices around index {}",
                (i + 1) % m
            )));
        }
        if cr < 0.0 {
            return Err(Error::validation(
                "vertices are not in strictly convex counterclockwise position",
            ));
        }
        let e1 = [b[0] - a[0], b[1] - a[1]];
        let e2 = [c[0] - b[0], c[1] - b[1]];
        turning += (e1[0] * e2[1] - e1[1] * e2[0]).atan2(e1[0] * e2[0] + e1[1] * e2[1]);
    }
    // a pentagram also turns left at every vertex, but winds twice
    if (turning - 2.0 * std::f64::consts::PI).abs() > 1e-6 {
        return Err(Error::validation("vertex list winds more than once"));
    }
    Ok(())
}

/// Build a body from its descriptor. The result is not recentered.
pub fn make_body(spec: &BodySpec) -> Result<ConvexBody> {
    let shape = match spec {
        BodySpec::Polygon { vertices } => {
            validate_polygon(vertices)?;
            Shape::Polygon(vertices.clone())
        }
        BodySpec::Box { halfwidths, center } => {
            if halfwidths.is_empty() || halfwidths.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                return Err(Error::validation("box halfwidths must be positive"));
            }
            let center = center
                .clone()
                .unwrap_or_else(|| vec![0.0; halfwidths.len()]);
            if center.len() != halfwidths.len() {
                return Err(Error::validation("box center has the wrong dimension"));
            }
            Shape::Box {
                halfwidths: halfwidths.clone(),
                center,
            }
        }
        BodySpec::Disk { radius, center } => {
            if !(*radius > 0.0 && radius.is_finite()) {
                return Err(Error::validation("disk radius must be positive"));
            }
            Shape::Disk {
                radius: *radius,
                center: center.unwrap_or([0.0, 0.0]),
            }
        }
        BodySpec::Simplex { n } => {
            if *n == 0 {
                return Err(Error::validation("simplex dimension must be at least 1"));
            }
            Shape::Simplex {
                n: *n,
                offset: vec![0.0; *n],
            }
        }
    };
    let mut body = ConvexBody {
        shape,
        barycenter: Vec::new(),
    };
    body.barycenter = body.compute_barycenter();
    Ok(body)
}

impl ConvexBody {
    pub fn kind(&self) -> BodyKind {
        match self.shape {
            Shape::Polygon(_) => BodyKind::Polygon,
            Shape::Box { .. } => BodyKind::Box,
            Shape::Disk { .. } => BodyKind::Disk,
            Shape::Simplex { .. } => BodyKind::Simplex,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Polygon(_) | Shape::Disk { .. } => 2,
            Shape::Box { halfwidths, .. } => halfwidths.len(),
            Shape::Simplex { n, .. } => *n,
        }
    }

    /// Descriptor that rebuilds this exact body.
    pub fn spec(&self) -> BodySpec {
        match &self.shape {
            Shape::Polygon(v) => BodySpec::Polygon {
                vertices: v.clone(),
            },
            Shape::Box { halfwidths, center } => BodySpec::Box {
                halfwidths: halfwidths.clone(),
                center: Some(center.clone()),
            },
            Shape::Disk { radius, center } => BodySpec::Disk {
                radius: *radius,
                center: Some(*center),
            },
            Shape::Simplex { n, offset } => {
                if offset.iter().any(|&o| o != 0.0) {
                    BodySpec::Polygon {
                        vertices: self.vertices2().expect("planar simplex"),
                    }
                } else {
                    BodySpec::Simplex { n: *n }
                }
            }
        }
    }

    /// Vertices of a polytope, `None` for the disk.
    pub fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        match &self.shape {
            Shape::Polygon(v) => Some(v.iter().map(|p| p.to_vec()).collect()),
            Shape::Box { halfwidths, center } => {
                let d = halfwidths.len();
                let mut out: Vec<Vec<f64>> = Vec::with_capacity(1 << d);
                for mask in 0..(1usize << d) {
                    out.push(
                        (0..d)
                            .map(|i| {
                                let s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                                center[i] + s * halfwidths[i]
                            })
                            .collect(),
                    );
                }
                if d == 2 {
                    // counterclockwise order
                    out = vec![
                        out[0].clone(),
                        out[1].clone(),
                        out[3].clone(),
                        out[2].clone(),
                    ];
                }
                Some(out)
            }
            Shape::Disk { .. } => None,
            Shape::Simplex { n, offset } => {
                let mut out = vec![offset.iter().map(|o| o - 1.0).collect::<Vec<_>>()];
                for i in 0..*n {
                    let mut v: Vec<f64> = offset.iter().map(|o| o - 1.0).collect();
                    v[i] += (*n + 1) as f64;
                    out.push(v);
                }
                Some(out)
            }
        }
    }

    /// Planar vertices in counterclockwise order, `None` for the disk or `n != 2`.
    pub fn vertices2(&self) -> Option<Vec<[f64; 2]>> {
        if self.dim() != 2 {
            return None;
        }
        Some(self.vertices()?.into_iter().map(|v| [v[0], v[1]]).collect())
    }

    /// Lebesgue measure of the body.
    pub fn area(&self) -> f64 {
        match &self.shape {
            Shape::Polygon(v) => polygon_area_centroid(v).0,
            Shape::Box { halfwidths, .. } => halfwidths.iter().map(|w| 2.0 * w).product(),
            Shape::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Simplex { n, .. } => {
                let n = *n;
                let side = (n + 1) as f64;
                side.powi(n as i32) / (1..=n).map(|k| k as f64).product::<f64>()
            }
        }
    }

    fn compute_barycenter(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Polygon(v) => polygon_area_centroid(v).1.to_vec(),
            Shape::Box { center, .. } => center.clone(),
            Shape::Disk { center, .. } => center.to_vec(),
            // the canonical simplex is centered; vertex average equals area centroid
            Shape::Simplex { offset, .. } => offset.clone(),
        }
    }

    pub fn barycenter(&self) -> &[f64] {
        &self.barycenter
    }

    /// Translate so that the area barycenter is the origin.
    pub fn recenter(&self) -> ConvexBody {
        let b = self.barycenter.clone();
        let shape = match &self.shape {
            Shape::Polygon(v) => {
                let mut moved: Vec<[f64; 2]> =
                    v.iter().map(|p| [p[0] - b[0], p[1] - b[1]]).collect();
                // one correction pass absorbs the rounding of the first subtraction
                let (_, c) = polygon_area_centroid(&moved);
                for p in &mut moved {
                    p[0] -= c[0];
                    p[1] -= c[1];
                }
                Shape::Polygon(moved)
            }
            Shape::Box { halfwidths, center } => Shape::Box {
                halfwidths: halfwidths.clone(),
                center: vec![0.0; center.len()],
            },
            Shape::Disk { radius, .. } => Shape::Disk {
                radius: *radius,
                center: [0.0, 0.0],
            },
            Shape::Simplex { n, offset } => Shape::Simplex {
                n: *n,
                offset: vec![0.0; offset.len()],
            },
        };
        let mut out = ConvexBody {
            shape,
            barycenter: Vec::new(),
        };
        out.barycenter = out.compute_barycenter();
        out
    }

    /// Support function `h_K(θ) = max_{x∈K} ⟨x, θ⟩`; positively homogeneous in `θ`.
    pub fn support(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(Error::validation("direction has the wrong dimension"));
        }
        let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::validation("support direction must be nonzero"));
        }
        Ok(match &self.shape {
            Shape::Disk { radius, center } => {
                center[0] * theta[0] + center[1] * theta[1] + radius * norm
            }
            Shape::Box { halfwidths, center } => theta
                .iter()
                .zip(halfwidths.iter().zip(center))
                .map(|(t, (w, c))| t * c + w * t.abs())
                .sum(),
            _ => self
                .vertices()
                .expect("polytope")
                .iter()
                .map(|v| v.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max),
        })
    }

    /// Smallest `R` with `K ⊆ B_R(0)`.
    pub fn outer_radius(&self) -> f64 {
        match &self.shape {
            Shape::Disk { radius, center } => radius + center[0].hypot(center[1]),
            _ => self
                .vertices()
                .expect("polytope")
                .iter()
                .map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        }
    }

    /// Whether `x` lies in the body dilated by `scale` about the origin.
    pub fn contains_scaled(&self, x: &[f64], scale: f64) -> bool {
        match &self.shape {
            Shape::Disk { radius, center } => {
                (x[0] - scale * center[0]).hypot(x[1] - scale * center[1]) <= scale * radius
            }
            Shape::Box { halfwidths, center } => x
                .iter()
                .zip(halfwidths.iter().zip(center))
                .all(|(xi, (w, c))| (xi - scale * c).abs() <= scale * w),
            _ => self
                .facets2()
                .expect("planar polytope")
                .iter()
                .all(|(nu, h)| nu[0] * x[0] + nu[1] * x[1] <= scale * h),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_scaled(x, 1.0)
    }

    /// Outward unit edge normals with support values, in edge order (edge `k`
    /// joins vertex `k` to vertex `k+1`). `None` for the disk.
    pub fn facets2(&self) -> Option<Vec<([f64; 2], f64)>> {
        let v = self.vertices2()?;
        let m = v.len();
        Some(
            (0..m)
                .map(|k| {
                    let a = v[k];
                    let b = v[(k + 1) % m];
                    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                    let len = dx.hypot(dy);
                    let nu = [dy / len, -dx / len];
                    (nu, nu[0] * a[0] + nu[1] * a[1])
                })
                .collect(),
        )
    }
}

/// Regular polygon with `m` vertices at radius `r`, first vertex at angle `phase`.
pub fn regular_polygon(m: usize, r: f64, phase: f64) -> BodySpec {
    let vertices = (0..m)
        .map(|k| {
            let a = phase + 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    BodySpec::Polygon { vertices }
}

/// Random convex polygon: sorted angles, radii in `[r_lo, r_hi]`, resampled until convex.
pub fn random_polygon<R: rand::Rng>(rng: &mut R, m: usize, r_lo: f64, r_hi: f64) -> BodySpec {
    loop {
        let mut angles: Vec<f64> = (0..m)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        angles.sort_by(f64::total_cmp);
        let vertices: Vec<[f64; 2]> = angles
            .iter()
            .map(|&a| {
                let r = rng.gen_range(r_lo..r_hi);
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        if validate_polygon(&vertices).is_ok() {
            // reject slivers, which make poorly conditioned test bodies
            let min_turn = (0..m)
                .map(|i| cross(vertices[i], vertices[(i + 1) % m], vertices[(i + 2) % m]))
                .fold(f64::INFINITY, f64::min);
            if min_turn > 0.05 {
                return BodySpec::Polygon { vertices };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn square() -> ConvexBody {
        make_body(&BodySpec::Box {
            halfwidths: vec![1.0, 1.0],
            center: None,
        })
        .unwrap()
    }

    #[test]
    fn square_basics() {
        let sq = square();
        assert_eq!(sq.barycenter(), &[0.0, 0.0]);
        assert_eq!(sq.support(&[1.0, 0.0]).unwrap(), 1.0);
        let d = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(sq.support(&[d, d]).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sq.outer_radius(), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(sq.recenter(), sq);
    }

    #[test]
    fn planar_simplex() {
        let s = make_body(&BodySpec::Simplex { n: 2 }).unwrap();
        assert_eq!(
            s.vertices2().unwrap(),
            vec![[-1.0, -1.0], [2.0, -1.0], [-1.0, 2.0]]
        );
        assert_eq!(s.barycenter(), &[0.0, 0.0]);
        assert_abs_diff_eq!(s.area(), 4.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.outer_radius(), 5f64.sqrt(), epsilon = 1e-15);
        let d = std::f64::consts::FRAC_1_SQRT_2;
        let oracle = [[-1.0, -1.0], [2.0, -1.0], [-1.0, 2.0]]
            .iter()
            .map(|v| d * v[0] + d * v[1])
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(s.support(&[d, d]).unwrap(), oracle, epsilon = 1e-15);
    }

    #[test]
    fn triangle_recenters_to_simplex() {
        let t = make_body(&BodySpec::Polygon {
            vertices: vec![[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]],
        })
        .unwrap();
        assert_abs_diff_eq!(t.barycenter()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.barycenter()[1], 1.0, epsilon = 1e-15);
        let r = t.recenter();
        let want = [[-1.0, -1.0], [2.0, -1.0], [-1.0, 2.0]];
        for (v, w) in r.vertices2().unwrap().iter().zip(want) {
            assert_abs_diff_eq!(v[0], w[0], epsilon = 1e-14);
            assert_abs_diff_eq!(v[1], w[1], epsilon = 1e-14);
        }
        assert_abs_diff_eq!(r.area(), t.area(), epsilon = 1e-14);
    }

    #[test]
    fn disk_recenter_and_radius() {
        let d = make_body(&BodySpec::Disk {
            radius: 1.0,
            center: Some([0.5, 0.0]),
        })
        .unwrap();
        let r = d.recenter();
        assert_eq!(r.barycenter(), &[0.0, 0.0]);
        assert_eq!(r.support(&[0.0, 1.0]).unwrap(), 1.0);
        let big = make_body(&BodySpec::Disk {
            radius: 3.0,
            center: None,
        })
        .unwrap();
        assert_eq!(big.outer_radius(), 3.0);
    }

    #[test]
    fn rejects_bad_polygons() {
        let collinear = BodySpec::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
        };
        assert!(matches!(make_body(&collinear), Err(Error::Validation(_))));
        let repeated = BodySpec::Polygon {
            vertices: vec![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        assert!(make_body(&repeated).is_err());
        let clockwise = BodySpec::Polygon {
            vertices: vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]],
        };
        assert!(make_body(&clockwise).is_err());
        let nonconvex = BodySpec::Polygon {
            vertices: vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.2], [2.0, 2.0], [0.0, 2.0]],
        };
        assert!(make_body(&nonconvex).is_err());
        let star = BodySpec::Polygon {
            vertices: (0..5)
                .map(|k| {
                    let a = std::f64::consts::TAU * (2 * k) as f64 / 5.0;
                    [a.cos(), a.sin()]
                })
                .collect(),
        };
        assert!(make_body(&star).is_err());
        assert!(square().support(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn descriptor_json_roundtrip() {
        let j = r#"{"kind":"polygon","vertices":[[0,0],[3,0],[0,3]]}"#;
        let spec: BodySpec = serde_json::from_str(j).unwrap();
        let b = make_body(&spec).unwrap();
        let again = make_body(&b.spec()).unwrap();
        assert_eq!(b, again);
        let s: BodySpec = serde_json::from_str(r#"{"kind":"simplex","n":2}"#).unwrap();
        assert_eq!(s, BodySpec::Simplex { n: 2 });
    }

    fn arb_body() -> impl Strategy<Value = ConvexBody> {
        prop_oneof![
            (0.2f64..3.0, 0.2f64..3.0).prop_map(|(a, b)| make_body(&BodySpec::Box {
                halfwidths: vec![a, b],
                center: Some(vec![0.3, -0.1])
            })
            .unwrap()),
            (0.2f64..3.0, -1.0f64..1.0).prop_map(|(r, c)| make_body(&BodySpec::Disk {
                radius: r,
                center: Some([c, 0.5 * c])
            })
            .unwrap()),
            (3usize..9, any::<u64>()).prop_map(|(m, seed)| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                make_body(&random_polygon(&mut rng, m, 0.7, 1.3)).unwrap()
            }),
        ]
    }

    proptest! {
        #[test]
        fn support_dominates_interior_points(body in arb_body(), seed in any::<u64>()) {
            let body = body.recenter();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let r = body.outer_radius();
            let mut pts = Vec::new();
            while pts.len() < 30 {
                let x = [rng.gen_range(-r..r), rng.gen_range(-r..r)];
                if body.contains(&x) { pts.push(x); }
            }
            for k in 0..24 {
                let a = k as f64 * std::f64::consts::TAU / 24.0;
                let th = [a.cos(), a.sin()];
                let h = body.support(&th).unwrap();
                for x in &pts {
                    prop_assert!(h >= x[0] * th[0] + x[1] * th[1] - 1e-12);
                }
            }
        }

        #[test]
        fn support_is_homogeneous(body in arb_body(), a in 0.0f64..6.3, t in 0.01f64..50.0) {
            let th = [a.cos(), a.sin()];
            let h1 = body.support(&th).unwrap();
            let ht = body.support(&[t * th[0], t * th[1]]).unwrap();
            prop_assert!((ht - t * h1).abs() <= 1e-12 * t.max(1.0) * h1.abs().max(1.0));
        }

        #[test]
        fn outer_radius_matches_angular_max(body in arb_body()) {
            let body = body.recenter();
            let m = (0..20000)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::TAU / 20000.0;
                    body.support(&[a.cos(), a.sin()]).unwrap()
                })
                .fold(0.0, f64::max);
            let r = body.outer_radius();
            prop_assert!(m <= r + 1e-12);
            prop_assert!(r - m < 1e-6 * r);
        }

        #[test]
        fn recenter_is_idempotent(body in arb_body()) {
            let once = body.recenter();
            let twice = once.recenter();
            prop_assert!(once.barycenter().iter().all(|c| c.abs() < 1e-12));
            prop_assert!((once.area() - body.area()).abs() < 1e-12 * body.area());
            match (once.vertices2(), twice.vertices2()) {
                (Some(a), Some(b)) => for (p, q) in a.iter().zip(&b) {
                    prop_assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
                },
                _ => prop_assert_eq!(once, twice),
            }
        }
    }
}
