//! Geometric and photometric augmentation shared by landmarks and rasters.
//!
//! Angles are in degrees. A positive angle rotates counter-clockwise in
//! y-up axes, which renders clockwise on a y-down image.

mod grid;
mod raster;

pub use grid::{gen_config_grid, ConfigGrid, GridSpace, TrainingConfig};
pub use raster::{grayscale, warp_raster, Interpolation, RasterImage};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{minimal_bounding_box, LandmarkSet, Point2};

/// Row-major 2x3 matrix `[a b tx; c d ty]` mapping `(x, y)` to
/// `(a x + b y + tx, c x + d y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub m: [[f64; 3]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformKind {
    Rotation { degrees: f64 },
    Scale { factor: f64 },
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let [[a, b, tx], [c, d, ty]] = self.m;
        Point2::new(a * p.x + b * p.y + tx, c * p.x + d * p.y + ty)
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &AffineTransform) -> AffineTransform {
        let [[a, b, tx], [c, d, ty]] = self.m;
        let [[e, f, ux], [g, h, uy]] = first.m;
        AffineTransform {
            m: [
                [a * e + b * g, a * f + b * h, a * ux + b * uy + tx],
                [c * e + d * g, c * f + d * h, c * ux + d * uy + ty],
            ],
        }
    }

    pub fn inverse(&self) -> Result<AffineTransform> {
        let det = self.determinant();
        if det.is_nan() || det.abs() <= 1e-12 || !self.m.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::SingularTransform(det));
        }
        let [[a, b, tx], [c, d, ty]] = self.m;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(AffineTransform {
            m: [
                [ia, ib, -(ia * tx + ib * ty)],
                [ic, id, -(ic * tx + id * ty)],
            ],
        })
    }
}

pub fn make_transform(kind: TransformKind, center: Point2) -> Result<AffineTransform> {
    let (a, b, c, d) = match kind {
        TransformKind::Rotation { degrees } => {
            if !degrees.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite angle {degrees}"
                )));
            }
            let (s, co) = exact_sin_cos(degrees);
            (co, -s, s, co)
        }
        TransformKind::Scale { factor } => {
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "scale factor must be positive, got {factor}"
                )));
            }
            (factor, 0.0, 0.0, factor)
        }
    };
    // Fix `center`: t = c - A c.
    Ok(AffineTransform {
        m: [
            [a, b, center.x - (a * center.x + b * center.y)],
            [c, d, center.y - (c * center.x + d * center.y)],
        ],
    })
}

/// sin/cos of an angle in degrees, exact at multiples of 90.
fn exact_sin_cos(degrees: f64) -> (f64, f64) {
    let r = degrees.rem_euclid(360.0);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        degrees.to_radians().sin_cos()
    }
}

pub fn apply_transform(t: &AffineTransform, landmarks: &LandmarkSet) -> Result<LandmarkSet> {
    landmarks.map_points(|p| t.apply(*p))
}

/// Center used when landmarks are transformed without an image.
pub fn landmark_center(landmarks: &LandmarkSet) -> Point2 {
    minimal_bounding_box(landmarks).center()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub rotation_range_deg: [f64; 2],
    pub rotation_prob: f64,
    pub zoom_range: [f64; 2],
    pub zoom_prob: f64,
    pub grayscale_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotation_range_deg: [0.0, 0.0],
            rotation_prob: 0.0,
            zoom_range: [1.0, 1.0],
            zoom_prob: 0.0,
            grayscale_prob: 0.0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let [rlo, rhi] = self.rotation_range_deg;
        let [zlo, zhi] = self.zoom_range;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(rlo.is_finite() && rhi.is_finite() && rlo <= rhi) {
            return bad(format!("bad rotation range [{rlo}, {rhi}]"));
        }
        if !(zlo > 0.0 && zhi.is_finite() && zlo <= zhi) {
            return bad(format!("bad zoom range [{zlo}, {zhi}]"));
        }
        for (name, p) in [
            ("rotation_prob", self.rotation_prob),
            ("zoom_prob", self.zoom_prob),
            ("grayscale_prob", self.grayscale_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Named augmentation presets: `R90`, `R90Z` and `R150G`.
pub fn preset(name: &str) -> Result<AugmentConfig> {
    let rotation = |deg: f64| AugmentConfig {
        rotation_range_deg: [-deg, deg],
        rotation_prob: 0.6,
        ..Default::default()
    };
    match name {
        "R90" => Ok(rotation(90.0)),
        "R90Z" => Ok(AugmentConfig {
            zoom_range: [0.75, 1.25],
            zoom_prob: 1.0,
            ..rotation(90.0)
        }),
        "R150G" => Ok(AugmentConfig {
            grayscale_prob: 0.5,
            ..rotation(150.0)
        }),
        other => Err(Error::InvalidArgument(format!(
            "unknown preset `{other}` (expected R90, R90Z or R150G)"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAugmentation {
    pub transform: AffineTransform,
    pub rotation_deg: Option<f64>,
    pub zoom: Option<f64>,
    pub grayscale: bool,
}

/// Draws one augmentation from `config`, deterministically in `seed`.
///
/// The generator is ChaCha8 seeded with `seed_from_u64`. Exactly five
/// uniforms are drawn in a fixed order (rotation gate, angle, zoom gate,
/// factor, grayscale gate), so each decision is independent and the stream
/// layout never depends on earlier outcomes. The result is the rotation
/// applied after the zoom, both about `center`.
pub fn sample_augmentation(
    config: &AugmentConfig,
    seed: u64,
    center: Point2,
) -> Result<SampledAugmentation> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = || rng.random::<f64>();
    let (rot_gate, rot_u, zoom_gate, zoom_u, gray_gate) =
        (uniform(), uniform(), uniform(), uniform(), uniform());

    let lerp = |[lo, hi]: [f64; 2], u: f64| if lo == hi { lo } else { lo + (hi - lo) * u };
    let rotation_deg =
        (rot_gate < config.rotation_prob).then(|| lerp(config.rotation_range_deg, rot_u));
    let zoom = (zoom_gate < config.zoom_prob).then(|| lerp(config.zoom_range, zoom_u));

    let mut transform = AffineTransform::IDENTITY;
    if let Some(factor) = zoom {
        transform = make_transform(TransformKind::Scale { factor }, center)?;
    }
    if let Some(degrees) = rotation_deg {
        transform =
            make_transform(TransformKind::Rotation { degrees }, center)?.compose(&transform);
    }
    Ok(SampledAugmentation {
        transform,
        rotation_deg,
        zoom,
        grayscale: gray_gate < config.grayscale_prob,
    })
}
