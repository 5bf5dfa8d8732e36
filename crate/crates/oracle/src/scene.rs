use std::path::Path;

use omniview_core::{Error, Point3, Pose, PoseJson, Result, Vector3};
use serde::{Deserialize, Serialize};

pub const SCENE_SCHEMA: &str = "omniview-scene/1";

/// Hits closer than this along a ray are ignored (self-intersection guard).
const MIN_HIT_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    Solid([u8; 3]),
    Checker {
        color_a: [u8; 3],
        color_b: [u8; 3],
        cell_size_m: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Rectangle in the local xy-plane, normal along local z.
    Plane { half_extents: [f64; 2] },
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    /// `scene <- primitive`
    pub pose: Pose,
    pub texture: Texture,
}

/// Parametric scene; all poses are relative to `frame`, which must be the
/// reference frame of any rig rendered against it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frame: String,
    pub primitives: Vec<Primitive>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub primitive: usize,
    /// Hit point in the primitive's local frame.
    pub local: Point3,
}

impl Texture {
    fn color(&self, a: f64, b: f64) -> [u8; 3] {
        match *self {
            Texture::Solid(c) => c,
            Texture::Checker {
                color_a,
                color_b,
                cell_size_m,
            } => {
                let parity = (a / cell_size_m).floor() as i64 + (b / cell_size_m).floor() as i64;
                if parity.rem_euclid(2) == 0 {
                    color_a
                } else {
                    color_b
                }
            }
        }
    }

    /// Distance in texture coordinates to the nearest cell boundary.
    fn edge_distance(&self, a: f64, b: f64) -> f64 {
        match *self {
            Texture::Solid(_) => f64::INFINITY,
            Texture::Checker { cell_size_m, .. } => {
                let d = |x: f64| {
                    let r = x.rem_euclid(cell_size_m);
                    r.min(cell_size_m - r)
                };
                d(a).min(d(b))
            }
        }
    }
}

impl Primitive {
    /// Texture coordinates for a local surface point.
    fn tex_coords(&self, p: &Point3) -> (f64, f64, f64) {
        match self.shape {
            Shape::Plane { .. } => (p.x, p.y, f64::NAN),
            Shape::Sphere { .. } => {
                // Longitude/latitude scaled to arc length on the sphere.
                let r = p.coords.norm();
                (r * p.x.atan2(p.z), r * (p.y / r).clamp(-1.0, 1.0).asin(), f64::NAN)
            }
            Shape::Box { half_extents } => {
                // Use the two coordinates tangent to the face that was hit.
                let rel = [
                    p.x.abs() / half_extents[0],
                    p.y.abs() / half_extents[1],
                    p.z.abs() / half_extents[2],
                ];
                let face = (0..3).max_by(|&a, &b| rel[a].total_cmp(&rel[b])).unwrap();
                match face {
                    0 => (p.y, p.z, f64::NAN),
                    1 => (p.x, p.z, f64::NAN),
                    _ => (p.x, p.y, f64::NAN),
                }
            }
        }
    }

    pub fn color_at_local(&self, p: &Point3) -> [u8; 3] {
        let (a, b, _) = self.tex_coords(p);
        self.texture.color(a, b)
    }

    pub fn edge_distance_local(&self, p: &Point3) -> f64 {
        let (a, b, _) = self.tex_coords(p);
        self.texture.edge_distance(a, b)
    }

    /// Nearest positive ray parameter in the local frame; `dir` is unit length.
    fn intersect_local(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match self.shape {
            Shape::Plane { half_extents } => {
                if d.z == 0.0 {
                    return None;
                }
                let t = -o.z / d.z;
                if t <= MIN_HIT_DISTANCE {
                    return None;
                }
                let p = o + d * t;
                (p.x.abs() <= half_extents[0] && p.y.abs() <= half_extents[1]).then_some(t)
            }
            Shape::Sphere { radius } => {
                let b = o.dot(d);
                let c = o.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t > MIN_HIT_DISTANCE)
            }
            Shape::Box { half_extents } => {
                let mut near = f64::NEG_INFINITY;
                let mut far = f64::INFINITY;
                for k in 0..3 {
                    let h = half_extents[k];
                    if d[k] == 0.0 {
                        if o[k].abs() > h {
                            return None;
                        }
                        continue;
                    }
                    let a = (-h - o[k]) / d[k];
                    let b = (h - o[k]) / d[k];
                    near = near.max(a.min(b));
                    far = far.min(a.max(b));
                }
                if far < near {
                    return None;
                }
                [near, far].into_iter().find(|&t| t > MIN_HIT_DISTANCE)
            }
        }
    }

    /// True if `p` (local frame) lies on the primitive's surface.
    fn contains_local(&self, p: &Point3, tol: f64) -> bool {
        match self.shape {
            Shape::Plane { half_extents } => {
                p.z.abs() <= tol && p.x.abs() <= half_extents[0] + tol && p.y.abs() <= half_extents[1] + tol
            }
            Shape::Sphere { radius } => (p.coords.norm() - radius).abs() <= tol,
            Shape::Box { half_extents } => {
                let inside = (0..3).all(|k| p[k].abs() <= half_extents[k] + tol);
                let on_face = (0..3).any(|k| (p[k].abs() - half_extents[k]).abs() <= tol);
                inside && on_face
            }
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::Validation {
                path: "primitives".into(),
                message: "scene needs at least one primitive".into(),
            });
        }
        for (i, p) in self.primitives.iter().enumerate() {
            let positive = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
            let ok = match p.shape {
                Shape::Plane { half_extents } => positive(&half_extents),
                Shape::Sphere { radius } => positive(&[radius]),
                Shape::Box { half_extents } => positive(&half_extents),
            };
            let tex_ok = match p.texture {
                Texture::Solid(_) => true,
                Texture::Checker { cell_size_m, .. } => cell_size_m.is_finite() && cell_size_m > 0.0,
            };
            if !ok || !tex_ok {
                return Err(Error::Validation {
                    path: format!("primitives[{i}]"),
                    message: "degenerate size".into(),
                });
            }
            if p.pose.parent_frame() != self.frame {
                return Err(Error::Validation {
                    path: format!("primitives[{i}].pose.parent"),
                    message: format!("expected scene frame `{}`", self.frame),
                });
            }
        }
        Ok(())
    }

    /// Nearest intersection of the ray `origin + t * dir` (scene frame).
    pub fn trace(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<Hit> {
        let dir = dir.normalize();
        let mut best: Option<Hit> = None;
        for (i, prim) in self.primitives.iter().enumerate() {
            let inv = prim.pose.inverse();
            let o = inv.transform_point(origin).coords;
            let d = inv.transform_vector(&dir);
            if let Some(t) = prim.intersect_local(&o, &d) {
                if best.is_none_or(|b| t < b.distance) {
                    best = Some(Hit {
                        distance: t,
                        primitive: i,
                        local: Point3::from(o + d * t),
                    });
                }
            }
        }
        best
    }

    pub fn shade(&self, hit: &Hit) -> [u8; 3] {
        self.primitives[hit.primitive].color_at_local(&hit.local)
    }

    /// Texture color at a scene point lying on some primitive's surface.
    pub fn surface_color(&self, p: &Point3) -> Option<[u8; 3]> {
        self.surface_lookup(p).map(|(prim, local)| prim.color_at_local(&local))
    }

    /// Distance (meters, in texture space) from a surface point to the
    /// nearest texture edge.
    pub fn texture_edge_distance(&self, p: &Point3) -> Option<f64> {
        self.surface_lookup(p).map(|(prim, local)| prim.edge_distance_local(&local))
    }

    fn surface_lookup(&self, p: &Point3) -> Option<(&Primitive, Point3)> {
        self.primitives.iter().find_map(|prim| {
            let local = prim.pose.inverse().transform_point(p);
            prim.contains_local(&local, 1e-6).then_some((prim, local))
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneJson {
    schema: String,
    frame: String,
    primitives: Vec<PrimitiveJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PrimitiveJson {
    Plane {
        half_extents: [f64; 2],
        pose: PoseJson,
        texture: Texture,
    },
    Sphere {
        radius: f64,
        pose: PoseJson,
        texture: Texture,
    },
    Box {
        half_extents: [f64; 3],
        pose: PoseJson,
        texture: Texture,
    },
}

impl Scene {
    pub fn from_json_str(text: &str) -> Result<Scene> {
        let json: SceneJson = serde_json::from_str(text).map_err(|e| Error::Validation {
            path: "scene".into(),
            message: e.to_string(),
        })?;
        if json.schema != SCENE_SCHEMA {
            return Err(Error::Validation {
                path: "schema".into(),
                message: format!("expected `{SCENE_SCHEMA}`"),
            });
        }
        let primitives = json
            .primitives
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let path = format!("primitives[{i}].pose");
                Ok(match p {
                    PrimitiveJson::Plane {
                        half_extents,
                        pose,
                        texture,
                    } => Primitive {
                        shape: Shape::Plane {
                            half_extents: *half_extents,
                        },
                        pose: pose.to_pose(&path)?,
                        texture: *texture,
                    },
                    PrimitiveJson::Sphere { radius, pose, texture } => Primitive {
                        shape: Shape::Sphere { radius: *radius },
                        pose: pose.to_pose(&path)?,
                        texture: *texture,
                    },
                    PrimitiveJson::Box {
                        half_extents,
                        pose,
                        texture,
                    } => Primitive {
                        shape: Shape::Box {
                            half_extents: *half_extents,
                        },
                        pose: pose.to_pose(&path)?,
                        texture: *texture,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scene = Scene {
            frame: json.frame,
            primitives,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json_string(&self) -> String {
        let json = SceneJson {
            schema: SCENE_SCHEMA.into(),
            frame: self.frame.clone(),
            primitives: self
                .primitives
                .iter()
                .map(|p| {
                    let pose = PoseJson::from(&p.pose);
                    let texture = p.texture;
                    match p.shape {
                        Shape::Plane { half_extents } => PrimitiveJson::Plane {
                            half_extents,
                            pose,
                            texture,
                        },
                        Shape::Sphere { radius } => PrimitiveJson::Sphere { radius, pose, texture },
                        Shape::Box { half_extents } => PrimitiveJson::Box {
                            half_extents,
                            pose,
                            texture,
                        },
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&json).expect("scene serializes") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scene> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Scene::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }
}
