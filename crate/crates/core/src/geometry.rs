//! Landmark geometry: bounding boxes, normalization factors and mean faces.
//!
//! Landmark sets follow the 68-point Multi-PIE ordering (jawline 0-16,
//! brows 17-26, nose 27-35, eyes 36-47, mouth 48-67), 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LANDMARKS: usize = 68;

/// 0-based index of the outer corner of the subject's right eye (image left).
pub const OUTER_EYE_RIGHT: usize = 36;
/// 0-based index of the outer corner of the subject's left eye (image right).
pub const OUTER_EYE_LEFT: usize = 45;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Exactly 68 finite points in Multi-PIE order.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point2>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        if points.len() != NUM_LANDMARKS {
            return Err(Error::LandmarkCount {
                expected: NUM_LANDMARKS,
                found: points.len(),
            });
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index });
        }
        Ok(Self { points })
    }

    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        Self::new(pairs.iter().map(|&[x, y]| Point2::new(x, y)).collect())
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn get(&self, index: usize) -> Point2 {
        self.points[index]
    }

    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| [p.x, p.y]).collect()
    }

    /// Applies `f` to every point. Non-finite results are rejected.
    pub fn map_points(&self, f: impl FnMut(&Point2) -> Point2) -> Result<Self> {
        Self::new(self.points.iter().map(f).collect())
    }
}

/// Upright box given by its top-left corner and size.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite box ({x}, {y}, {w}, {h})"
            )));
        }
        if w < 0.0 || h < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "box has negative size ({w} x {h})"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.x && p.x <= self.x + self.w && p.y >= self.y && p.y <= self.y + self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationKind {
    /// Distance between the two outer eye corners.
    #[serde(rename = "iod")]
    Interocular,
    /// Geometric mean of the minimal box's width and height.
    #[serde(rename = "box")]
    BoxSize,
}

impl NormalizationKind {
    pub fn label(&self) -> &'static str {
        match self {
            NormalizationKind::Interocular => "iod",
            NormalizationKind::BoxSize => "box",
        }
    }
}

impl std::fmt::Display for NormalizationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for NormalizationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iod" | "interocular" => Ok(NormalizationKind::Interocular),
            "box" | "box_size" => Ok(NormalizationKind::BoxSize),
            other => Err(Error::InvalidArgument(format!(
                "unknown normalization `{other}` (expected iod or box)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomStats {
    /// Width over height of the minimal box around the box-normalized mean face.
    pub mean_face_aspect_ratio: f64,
    /// Mean over faces of interocular distance divided by box size.
    pub mean_iod_over_box: f64,
}

pub fn minimal_bounding_box(landmarks: &LandmarkSet) -> BoundingBox {
    let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in landmarks.points() {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    BoundingBox {
        x: min.x,
        y: min.y,
        w: max.x - min.x,
        h: max.y - min.y,
    }
}

/// Geometric mean of box width and height; 0 for a degenerate box.
pub fn box_size(bbox: &BoundingBox) -> f64 {
    (bbox.w * bbox.h).sqrt()
}

pub fn interocular_distance(landmarks: &LandmarkSet) -> f64 {
    landmarks
        .get(OUTER_EYE_RIGHT)
        .distance(&landmarks.get(OUTER_EYE_LEFT))
}

/// Normalization factor of a ground-truth face. `gt_box` is only consulted
/// for [`NormalizationKind::BoxSize`].
pub fn normalization_factor(
    gt: &LandmarkSet,
    gt_box: &BoundingBox,
    norm: NormalizationKind,
) -> f64 {
    match norm {
        NormalizationKind::Interocular => interocular_distance(gt),
        NormalizationKind::BoxSize => box_size(gt_box),
    }
}

pub(crate) fn checked_factor(factor: f64, norm: NormalizationKind, context: &str) -> Result<f64> {
    if factor > 0.0 && factor.is_finite() {
        Ok(factor)
    } else {
        Err(Error::DegenerateNormalization {
            what: norm.label(),
            context: context.to_string(),
        })
    }
}

/// Translates the minimal-box center to the origin and scales so the chosen
/// normalization factor becomes 1.
pub fn normalize_face(landmarks: &LandmarkSet, norm: NormalizationKind) -> Result<LandmarkSet> {
    let bbox = minimal_bounding_box(landmarks);
    let factor = checked_factor(normalization_factor(landmarks, &bbox, norm), norm, "face")?;
    let c = bbox.center();
    landmarks.map_points(|p| Point2::new((p.x - c.x) / factor, (p.y - c.y) / factor))
}

pub fn mean_face(sets: &[LandmarkSet], norm: NormalizationKind) -> Result<LandmarkSet> {
    if sets.is_empty() {
        return Err(Error::EmptyInput(
            "mean_face needs at least one landmark set",
        ));
    }
    let mut acc = vec![Point2::default(); NUM_LANDMARKS];
    for (i, set) in sets.iter().enumerate() {
        let normalized = normalize_face(set, norm).map_err(|e| match e {
            Error::DegenerateNormalization { what, .. } => Error::DegenerateNormalization {
                what,
                context: format!("landmark set {i}"),
            },
            other => other,
        })?;
        for (a, p) in acc.iter_mut().zip(normalized.points()) {
            a.x += p.x;
            a.y += p.y;
        }
    }
    let n = sets.len() as f64;
    LandmarkSet::new(
        acc.into_iter()
            .map(|a| Point2::new(a.x / n, a.y / n))
            .collect(),
    )
}

pub fn geometry_stats(records: &[LandmarkSet]) -> Result<GeomStats> {
    if records.is_empty() {
        return Err(Error::EmptyInput("geometry_stats needs at least one face"));
    }
    let mean = mean_face(records, NormalizationKind::BoxSize)?;
    let mean_box = minimal_bounding_box(&mean);
    if mean_box.h <= 0.0 {
        return Err(Error::DegenerateNormalization {
            what: "box",
            context: "mean face has zero height".to_string(),
        });
    }
    let mut ratio_sum = 0.0;
    for (i, set) in records.iter().enumerate() {
        let context = format!("landmark set {i}");
        let iod = checked_factor(
            interocular_distance(set),
            NormalizationKind::Interocular,
            &context,
        )?;
        let bsize = checked_factor(
            box_size(&minimal_bounding_box(set)),
            NormalizationKind::BoxSize,
            &context,
        )?;
        ratio_sum += iod / bsize;
    }
    Ok(GeomStats {
        mean_face_aspect_ratio: mean_box.w / mean_box.h,
        mean_iod_over_box: ratio_sum / records.len() as f64,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Left/right counterpart of each Multi-PIE index.
    pub(crate) const MIRROR: [usize; 68] = [
        16, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0, // jaw
        26, 25, 24, 23, 22, 21, 20, 19, 18, 17, // brows
        27, 28, 29, 30, 35, 34, 33, 32, 31, // nose
        45, 44, 43, 42, 47, 46, 39, 38, 37, 36, 41, 40, // eyes
        54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55, // outer mouth
        64, 63, 62, 61, 60, 67, 66, 65, // inner mouth
    ];

    pub(crate) fn random_face(rng: &mut impl Rng) -> LandmarkSet {
        let cx = rng.random_range(50.0..400.0);
        let cy = rng.random_range(50.0..400.0);
        let scale = rng.random_range(20.0..120.0);
        LandmarkSet::new(
            (0..68)
                .map(|_| {
                    Point2::new(
                        cx + scale * rng.random_range(-1.0..1.0),
                        cy + scale * rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn constant_face(x: f64, y: f64) -> LandmarkSet {
        LandmarkSet::new(vec![Point2::new(x, y); 68]).unwrap()
    }

    #[test]
    fn landmark_set_rejects_wrong_length_and_nan() {
        assert!(matches!(
            LandmarkSet::new(vec![Point2::default(); 67]),
            Err(Error::LandmarkCount { found: 67, .. })
        ));
        let mut pts = vec![Point2::default(); 68];
        pts[12].y = f64::NAN;
        assert!(matches!(
            LandmarkSet::new(pts),
            Err(Error::NonFiniteCoordinate { index: 12 })
        ));
    }

    #[test]
    fn box_of_coincident_points_is_degenerate() {
        let b = minimal_bounding_box(&constant_face(5.0, 5.0));
        assert_eq!(
            b,
            BoundingBox {
                x: 5.0,
                y: 5.0,
                w: 0.0,
                h: 0.0
            }
        );
    }

    #[test]
    fn box_of_corner_extrema() {
        let mut pts = vec![Point2::new(3.0, 4.0); 68];
        pts[0] = Point2::new(0.0, 0.0);
        pts[67] = Point2::new(10.0, 20.0);
        let b = minimal_bounding_box(&LandmarkSet::new(pts).unwrap());
        assert_eq!(
            b,
            BoundingBox {
                x: 0.0,
                y: 0.0,
                w: 10.0,
                h: 20.0
            }
        );
    }

    #[test]
    fn box_matches_independent_min_max_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let face = random_face(&mut rng);
            let xs: Vec<f64> = face.points().iter().map(|p| p.x).collect();
            let ys: Vec<f64> = face.points().iter().map(|p| p.y).collect();
            let mut sx = xs.clone();
            sx.sort_by(f64::total_cmp);
            let mut sy = ys.clone();
            sy.sort_by(f64::total_cmp);
            let b = minimal_bounding_box(&face);
            assert_eq!(b.x, sx[0]);
            assert_eq!(b.y, sy[0]);
            assert_eq!(b.w, sx[67] - sx[0]);
            assert_eq!(b.h, sy[67] - sy[0]);
        }
    }

    #[test]
    fn box_size_examples() {
        assert_eq!(
            box_size(&BoundingBox {
                x: 0.0,
                y: 0.0,
                w: 16.0,
                h: 4.0
            }),
            8.0
        );
        assert_eq!(
            box_size(&BoundingBox {
                x: 0.0,
                y: 0.0,
                w: 10.0,
                h: 10.0
            }),
            10.0
        );
        assert_eq!(
            box_size(&BoundingBox {
                x: 3.0,
                y: 7.0,
                w: 0.0,
                h: 5.0
            }),
            0.0
        );
    }

    #[test]
    fn bounding_box_rejects_negative_size() {
        assert!(BoundingBox::new(0.0, 0.0, -1.0, 2.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, 2.0).is_ok());
    }

    #[test]
    fn interocular_examples() {
        let mut pts = vec![Point2::new(7.0, -2.0); 68];
        pts[OUTER_EYE_RIGHT] = Point2::new(0.0, 0.0);
        pts[OUTER_EYE_LEFT] = Point2::new(3.0, 4.0);
        assert_eq!(
            interocular_distance(&LandmarkSet::new(pts.clone()).unwrap()),
            5.0
        );

        pts[OUTER_EYE_LEFT] = Point2::new(0.0, 0.0);
        assert_eq!(
            interocular_distance(&LandmarkSet::new(pts.clone()).unwrap()),
            0.0
        );

        pts[OUTER_EYE_RIGHT] = Point2::new(10.0, 10.0);
        pts[OUTER_EYE_LEFT] = Point2::new(110.0, 10.0);
        assert_eq!(interocular_distance(&LandmarkSet::new(pts).unwrap()), 100.0);
    }

    #[test]
    fn mean_face_of_copies_is_normalized_face() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let face = random_face(&mut rng);
        for norm in [NormalizationKind::Interocular, NormalizationKind::BoxSize] {
            let expected = normalize_face(&face, norm).unwrap();
            let single = mean_face(std::slice::from_ref(&face), norm).unwrap();
            assert_eq!(single, expected);
            let many = mean_face(&vec![face.clone(); 5], norm).unwrap();
            for (a, b) in many.points().iter().zip(expected.points()) {
                assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_face_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let face = random_face(&mut rng);
        let once = mean_face(&[face], NormalizationKind::BoxSize).unwrap();
        let twice = mean_face(std::slice::from_ref(&once), NormalizationKind::BoxSize).unwrap();
        for (a, b) in once.points().iter().zip(twice.points()) {
            assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_of_mirrored_pair_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let face = random_face(&mut rng);
        // Mirror about x = 0 and relabel left/right so index semantics hold.
        let mirrored = LandmarkSet::new(
            (0..68)
                .map(|i| {
                    let p = face.get(MIRROR[i]);
                    Point2::new(-p.x, p.y)
                })
                .collect(),
        )
        .unwrap();
        let mean = mean_face(&[face, mirrored], NormalizationKind::Interocular).unwrap();
        for i in 0..68 {
            let a = mean.get(i);
            let b = mean.get(MIRROR[i]);
            assert!(
                (a.x.abs() - b.x.abs()).abs() < 1e-9,
                "pair {i}/{}",
                MIRROR[i]
            );
            assert!((a.y - b.y).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_face_errors() {
        assert!(matches!(
            mean_face(&[], NormalizationKind::BoxSize),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            mean_face(&[constant_face(1.0, 1.0)], NormalizationKind::Interocular),
            Err(Error::DegenerateNormalization { .. })
        ));
    }

    fn square_face_with_iod_equal_box() -> LandmarkSet {
        // Box is 10x10; outer eye corners span the full width.
        let mut pts = vec![Point2::new(5.0, 5.0); 68];
        pts[0] = Point2::new(0.0, 0.0);
        pts[8] = Point2::new(10.0, 10.0);
        pts[OUTER_EYE_RIGHT] = Point2::new(0.0, 3.0);
        pts[OUTER_EYE_LEFT] = Point2::new(10.0, 3.0);
        LandmarkSet::new(pts).unwrap()
    }

    #[test]
    fn geometry_stats_single_shape() {
        let face = square_face_with_iod_equal_box();
        let stats = geometry_stats(&vec![face; 3]).unwrap();
        assert!((stats.mean_face_aspect_ratio - 1.0).abs() < 1e-12);
        assert!((stats.mean_iod_over_box - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometry_stats_arithmetic_mean_of_ratios() {
        // 10x10 boxes; eye corners on a 3-4-5 diagonal give iod 8 and 12.
        let face = |iod: f64| {
            let mut pts = vec![Point2::new(0.0, 0.0); 68];
            pts[8] = Point2::new(10.0, 10.0);
            pts[OUTER_EYE_LEFT] = Point2::new(iod * 0.6, iod * 0.8);
            LandmarkSet::new(pts).unwrap()
        };
        let stats = geometry_stats(&[face(8.0), face(12.0)]).unwrap();
        assert!((stats.mean_iod_over_box - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometry_stats_matches_per_face_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let faces: Vec<_> = (0..10).map(|_| random_face(&mut rng)).collect();
        let stats = geometry_stats(&faces).unwrap();

        let mut ratio = 0.0;
        let mut acc = vec![(0.0, 0.0); 68];
        for f in &faces {
            let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for p in f.points() {
                lo_x = lo_x.min(p.x);
                lo_y = lo_y.min(p.y);
                hi_x = hi_x.max(p.x);
                hi_y = hi_y.max(p.y);
            }
            let side = ((hi_x - lo_x) * (hi_y - lo_y)).sqrt();
            let a = f.get(36);
            let b = f.get(45);
            let iod = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
            ratio += iod / side;
            let (cx, cy) = ((lo_x + hi_x) / 2.0, (lo_y + hi_y) / 2.0);
            for (k, p) in f.points().iter().enumerate() {
                acc[k].0 += (p.x - cx) / side / 10.0;
                acc[k].1 += (p.y - cy) / side / 10.0;
            }
        }
        let w = acc.iter().map(|p| p.0).fold(f64::MIN, f64::max)
            - acc.iter().map(|p| p.0).fold(f64::MAX, f64::min);
        let h = acc.iter().map(|p| p.1).fold(f64::MIN, f64::max)
            - acc.iter().map(|p| p.1).fold(f64::MAX, f64::min);
        assert!((stats.mean_iod_over_box - ratio / 10.0).abs() < 1e-12);
        assert!((stats.mean_face_aspect_ratio - w / h).abs() < 1e-9);
    }

    fn arb_face() -> impl Strategy<Value = LandmarkSet> {
        prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 68).prop_map(|v| {
            LandmarkSet::new(v.into_iter().map(|(x, y)| Point2::new(x, y)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn box_is_tight(face in arb_face()) {
            let b = minimal_bounding_box(&face);
            // `x + w` may differ from the true maximum by one rounding step.
            let near = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
            prop_assert!(face.points().iter().all(|p| p.x >= b.x && p.y >= b.y
                && (p.x <= b.x + b.w || near(p.x, b.x + b.w))
                && (p.y <= b.y + b.h || near(p.y, b.y + b.h))));
            prop_assert!(face.points().iter().any(|p| p.x == b.x));
            prop_assert!(face.points().iter().any(|p| p.y == b.y));
            prop_assert!(face.points().iter().any(|p| near(p.x, b.x + b.w)));
            prop_assert!(face.points().iter().any(|p| near(p.y, b.y + b.h)));
        }

        #[test]
        fn scale_equivariance(face in arb_face(), s in 0.01f64..100.0) {
            let scaled = face.map_points(|p| Point2::new(p.x * s, p.y * s)).unwrap();
            let iod = interocular_distance(&face);
            let bs = box_size(&minimal_bounding_box(&face));
            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1e-300);
            prop_assert!(rel(interocular_distance(&scaled), s * iod));
            prop_assert!(rel(box_size(&minimal_bounding_box(&scaled)), s * bs));
        }

        #[test]
        fn iod_rotation_invariant(face in arb_face(), theta in -3.2f64..3.2) {
            let (sn, cs) = theta.sin_cos();
            let rotated = face.map_points(|p| Point2::new(cs * p.x - sn * p.y, sn * p.x + cs * p.y)).unwrap();
            let a = interocular_distance(&face);
            let b = interocular_distance(&rotated);
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-9));
        }
    }
}
