//! Normalized bounding boxes, planar affine maps between modality frames,
//! box expansion and the crop quality predicates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Smallest absolute determinant accepted for an affine map.
/// A `(source, destination)` point correspondence.
pub type PointPair<T> = ((T, T), (T, T));

pub const MIN_DETERMINANT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("image geometry must be at least 1x1, got {width}x{height}")]
    InvalidGeometry { width: u32, height: u32 },
    #[error("affine transform is not invertible (determinant {0:e})")]
    NotInvertible(f64),
    #[error("affine fit needs at least 3 correspondences, got {0}")]
    FewerThanThreePairs(usize),
    #[error("source points are collinear or coincident")]
    DegenerateConfiguration,
}

/// Pixel dimensions of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageGeometry {
    width_px: u32,
    height_px: u32,
}

impl ImageGeometry {
    pub fn new(width_px: u32, height_px: u32) -> Result<Self, GeometryError> {
        if width_px == 0 || height_px == 0 {
            return Err(GeometryError::InvalidGeometry {
                width: width_px,
                height: height_px,
            });
        }
        Ok(Self {
            width_px,
            height_px,
        })
    }

    pub fn width(&self) -> u32 {
        self.width_px
    }

    pub fn height(&self) -> u32 {
        self.height_px
    }

    fn size<T: Real>(&self) -> (T, T) {
        (
            T::lit(f64::from(self.width_px)),
            T::lit(f64::from(self.height_px)),
        )
    }
}

/// Axis-aligned rectangle given by its corner coordinates. Not validated;
/// used for intermediate (possibly out-of-frame) geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Real> Rect<T> {
    pub fn width(&self) -> T {
        self.x1 - self.x0
    }

    pub fn height(&self) -> T {
        self.y1 - self.y0
    }

    /// Area, zero for empty or inverted rectangles.
    pub fn area(&self) -> T {
        let w = self.width().max(T::zero());
        let h = self.height().max(T::zero());
        w * h
    }

    pub fn intersect(&self, other: &Rect<T>) -> Rect<T> {
        Rect {
            x0: self.x0.max(other.x0),
            y0: self.y0.max(other.y0),
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
        }
    }

    pub fn contains(&self, other: &Rect<T>) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    fn hull_of(points: &[(T, T)]) -> Rect<T> {
        let mut r = Rect {
            x0: T::infinity(),
            y0: T::infinity(),
            x1: T::neg_infinity(),
            y1: T::neg_infinity(),
        };
        for &(x, y) in points {
            r.x0 = r.x0.min(x);
            r.y0 = r.y0.min(y);
            r.x1 = r.x1.max(x);
            r.y1 = r.y1.max(y);
        }
        r
    }
}

/// One normalized detection label: category plus center/extent in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub category_id: u32,
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
}

impl<T: Real> BBox<T> {
    pub fn new(category_id: u32, cx: T, cy: T, w: T, h: T) -> Result<Self, GeometryError> {
        let b = Self {
            category_id,
            cx,
            cy,
            w,
            h,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(GeometryError::InvalidBox(format!(
                "cx={cx} cy={cy} w={w} h={h}"
            )))
        }
    }

    pub fn is_valid(&self) -> bool {
        let (zero, one) = (T::zero(), T::one());
        let unit = |v: T| v >= zero && v <= one;
        let extent = |v: T| v > zero && v <= one;
        unit(self.cx) && unit(self.cy) && extent(self.w) && extent(self.h)
    }

    /// Normalized corner rectangle.
    pub fn rect(&self) -> Rect<T> {
        let (hw, hh) = (self.w * T::half(), self.h * T::half());
        Rect {
            x0: self.cx - hw,
            y0: self.cy - hh,
            x1: self.cx + hw,
            y1: self.cy + hh,
        }
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    /// Builds a box from a normalized rectangle after clipping it to the unit
    /// square. `None` when nothing of the rectangle remains inside.
    pub fn from_rect_clipped(category_id: u32, rect: Rect<T>) -> Option<Self> {
        let unit = Rect {
            x0: T::zero(),
            y0: T::zero(),
            x1: T::one(),
            y1: T::one(),
        };
        let r = rect.intersect(&unit);
        if !(r.width() > T::zero() && r.height() > T::zero()) {
            return None;
        }
        let b = Self {
            category_id,
            cx: (r.x0 + r.x1) * T::half(),
            cy: (r.y0 + r.y1) * T::half(),
            w: r.width(),
            h: r.height(),
        };
        b.is_valid().then_some(b)
    }

    /// Rectangle in pixel coordinates of `geom`.
    pub fn pixel_rect(&self, geom: ImageGeometry) -> Rect<T> {
        let (gw, gh) = geom.size::<T>();
        let r = self.rect();
        Rect {
            x0: r.x0 * gw,
            y0: r.y0 * gh,
            x1: r.x1 * gw,
            y1: r.y1 * gh,
        }
    }

    /// Clips a pixel rectangle to `geom` and normalizes it.
    pub fn from_pixel_rect(category_id: u32, rect: Rect<T>, geom: ImageGeometry) -> Option<Self> {
        let (gw, gh) = geom.size::<T>();
        Self::from_rect_clipped(
            category_id,
            Rect {
                x0: rect.x0 / gw,
                y0: rect.y0 / gh,
                x1: rect.x1 / gw,
                y1: rect.y1 / gh,
            },
        )
    }

    /// Center in pixel coordinates of `geom`.
    pub fn pixel_center(&self, geom: ImageGeometry) -> (T, T) {
        let (gw, gh) = geom.size::<T>();
        (self.cx * gw, self.cy * gh)
    }

    pub fn cast<U: Real>(&self) -> BBox<U> {
        BBox {
            category_id: self.category_id,
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            w: U::lit(self.w.as_f64()),
            h: U::lit(self.h.as_f64()),
        }
    }
}

/// Planar affine map `(x, y) -> (a*x + b*y + tx, c*x + d*y + ty)` on pixel
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform<T> {
    pub a: T,
    pub b: T,
    pub tx: T,
    pub c: T,
    pub d: T,
    pub ty: T,
}

impl<T: Real> AffineTransform<T> {
    pub fn new(a: T, b: T, tx: T, c: T, d: T, ty: T) -> Result<Self, GeometryError> {
        let t = Self { a, b, tx, c, d, ty };
        let det = t.determinant();
        if !(det.abs() > T::lit(MIN_DETERMINANT)) || !t.coefficients().iter().all(|v| v.is_finite())
        {
            return Err(GeometryError::NotInvertible(det.as_f64()));
        }
        Ok(t)
    }

    pub fn identity() -> Self {
        let (z, o) = (T::zero(), T::one());
        Self {
            a: o,
            b: z,
            tx: z,
            c: z,
            d: o,
            ty: z,
        }
    }

    pub fn translation(tx: T, ty: T) -> Self {
        Self {
            tx,
            ty,
            ..Self::identity()
        }
    }

    pub fn scale(sx: T, sy: T) -> Result<Self, GeometryError> {
        Self::new(sx, T::zero(), T::zero(), T::zero(), sy, T::zero())
    }

    /// Coefficients in file order `a b tx c d ty`.
    pub fn coefficients(&self) -> [T; 6] {
        [self.a, self.b, self.tx, self.c, self.d, self.ty]
    }

    pub fn determinant(&self) -> T {
        self.a * self.d - self.b * self.c
    }

    pub fn apply(&self, (x, y): (T, T)) -> (T, T) {
        (
            self.a * x + self.b * y + self.tx,
            self.c * x + self.d * y + self.ty,
        )
    }

    /// The map applying `self` first and `next` second.
    pub fn then(&self, next: &Self) -> Self {
        Self {
            a: next.a * self.a + next.b * self.c,
            b: next.a * self.b + next.b * self.d,
            tx: next.a * self.tx + next.b * self.ty + next.tx,
            c: next.c * self.a + next.d * self.c,
            d: next.c * self.b + next.d * self.d,
            ty: next.c * self.tx + next.d * self.ty + next.ty,
        }
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let det = self.determinant();
        let a = self.d / det;
        let b = -self.b / det;
        let c = -self.c / det;
        let d = self.a / det;
        Self::new(
            a,
            b,
            -(a * self.tx + b * self.ty),
            c,
            d,
            -(c * self.tx + d * self.ty),
        )
    }
}

/// Least-squares affine fit from `(source, target)` pixel correspondences.
///
/// The two output rows share one design matrix `[x y 1]`; sources are
/// centered first so the normal equations reduce to a well-conditioned 2x2
/// system per row.
pub fn fit_affine<T: Real>(pairs: &[PointPair<T>]) -> Result<AffineTransform<T>, GeometryError> {
    if pairs.len() < 3 {
        return Err(GeometryError::FewerThanThreePairs(pairs.len()));
    }
    let n = T::from_count(pairs.len());
    let mut mean_src = (T::zero(), T::zero());
    let mut mean_dst = (T::zero(), T::zero());
    for &((sx, sy), (dx, dy)) in pairs {
        mean_src.0 += sx;
        mean_src.1 += sy;
        mean_dst.0 += dx;
        mean_dst.1 += dy;
    }
    mean_src = (mean_src.0 / n, mean_src.1 / n);
    mean_dst = (mean_dst.0 / n, mean_dst.1 / n);

    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    let (mut sxu, mut syu, mut sxv, mut syv) = (T::zero(), T::zero(), T::zero(), T::zero());
    for &((sx, sy), (dx, dy)) in pairs {
        let (x, y) = (sx - mean_src.0, sy - mean_src.1);
        let (u, v) = (dx - mean_dst.0, dy - mean_dst.1);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sxu += x * u;
        syu += y * u;
        sxv += x * v;
        syv += y * v;
    }

    let det = sxx * syy - sxy * sxy;
    let scale = sxx * syy;
    if !(scale > T::zero()) || !(det > T::epsilon().sqrt() * scale) {
        return Err(GeometryError::DegenerateConfiguration);
    }

    // Cramer's rule on [[sxx, sxy], [sxy, syy]] for each output row.
    let a = (sxu * syy - syu * sxy) / det;
    let b = (syu * sxx - sxu * sxy) / det;
    let c = (sxv * syy - syv * sxy) / det;
    let d = (syv * sxx - sxv * sxy) / det;
    let tx = mean_dst.0 - a * mean_src.0 - b * mean_src.1;
    let ty = mean_dst.1 - c * mean_src.0 - d * mean_src.1;
    AffineTransform::new(a, b, tx, c, d, ty)
}

/// Result of carrying a label into another frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transferred<T> {
    Kept(BBox<T>),
    /// Too little of the mapped box lands inside the destination frame.
    Discarded,
}

impl<T> Transferred<T> {
    pub fn kept(self) -> Option<BBox<T>> {
        match self {
            Transferred::Kept(b) => Some(b),
            Transferred::Discarded => None,
        }
    }
}

/// Pixel-space hull of a box after mapping its four corners through `t`.
pub fn transformed_hull<T: Real>(
    bbox: &BBox<T>,
    src: ImageGeometry,
    t: &AffineTransform<T>,
) -> Rect<T> {
    let r = bbox.pixel_rect(src);
    let corners = [(r.x0, r.y0), (r.x1, r.y0), (r.x0, r.y1), (r.x1, r.y1)].map(|p| t.apply(p));
    Rect::hull_of(&corners)
}

/// Maps a label from the `src` frame to the `dst` frame.
///
/// The label is discarded when less than `min_inside_fraction` of the mapped
/// hull's area lies inside the destination image; otherwise the hull is
/// clipped to the frame.
pub fn transform_bbox<T: Real>(
    bbox: &BBox<T>,
    src: ImageGeometry,
    t: &AffineTransform<T>,
    dst: ImageGeometry,
    min_inside_fraction: T,
) -> Transferred<T> {
    let hull = transformed_hull(bbox, src, t);
    let (gw, gh) = dst.size::<T>();
    let frame = Rect {
        x0: T::zero(),
        y0: T::zero(),
        x1: gw,
        y1: gh,
    };
    let hull_area = hull.area();
    let inside = hull.intersect(&frame).area();
    if !(hull_area > T::zero()) || !(inside > T::zero()) || inside < min_inside_fraction * hull_area {
        return Transferred::Discarded;
    }
    match BBox::from_pixel_rect(bbox.category_id, hull, dst) {
        Some(b) => Transferred::Kept(b),
        None => Transferred::Discarded,
    }
}

/// The box rectangle with its area scaled by `1 + area_factor` about the
/// center, before any clipping.
pub fn expanded_rect<T: Real>(bbox: &BBox<T>, area_factor: T) -> Rect<T> {
    let s = (T::one() + area_factor.max(T::zero())).sqrt();
    let (hw, hh) = (bbox.w * s * T::half(), bbox.h * s * T::half());
    Rect {
        x0: bbox.cx - hw,
        y0: bbox.cy - hh,
        x1: bbox.cx + hw,
        y1: bbox.cy + hh,
    }
}

/// Grows the box area by `area_factor` (0.5 means +50% area), keeping the
/// center, then clips to the unit square.
pub fn expand_bbox_area<T: Real>(bbox: &BBox<T>, area_factor: T) -> BBox<T> {
    BBox::from_rect_clipped(bbox.category_id, expanded_rect(bbox, area_factor)).unwrap_or(*bbox)
}

/// Accepts crops whose height:width ratio lies within 1:2 ..= 2:1.
pub fn aspect_ratio_ok(width_px: u32, height_px: u32) -> bool {
    let (w, h) = (u64::from(width_px), u64::from(height_px));
    w > 0 && h > 0 && 2 * h >= w && h <= 2 * w
}

/// Intersection over union of two normalized boxes (categories ignored).
pub fn iou<T: Real>(a: &BBox<T>, b: &BBox<T>) -> T {
    rect_iou(&a.rect(), &b.rect())
}

pub fn rect_iou<T: Real>(a: &Rect<T>, b: &Rect<T>) -> T {
    let inter = a.intersect(b).area();
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bb(cx: f64, cy: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(0, cx, cy, w, h).unwrap()
    }

    fn geom(w: u32, h: u32) -> ImageGeometry {
        ImageGeometry::new(w, h).unwrap()
    }

    #[test]
    fn rejects_invalid_boxes_and_geometry() {
        assert!(BBox::new(0, 1.1, 0.5, 0.1, 0.1).is_err());
        assert!(BBox::new(0, 0.5, 0.5, 0.0, 0.1).is_err());
        assert!(BBox::new(0, 0.5, 0.5, f64::NAN, 0.1).is_err());
        assert!(ImageGeometry::new(0, 10).is_err());
    }

    #[test]
    fn fit_identity() {
        let pairs = [((0.0, 0.0), (0.0, 0.0)), ((1.0, 0.0), (1.0, 0.0)), ((0.0, 1.0), (0.0, 1.0))];
        let t = fit_affine(&pairs).unwrap();
        for (got, want) in t.coefficients().iter().zip([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn fit_translation() {
        let pairs = [
            ((0.0, 0.0), (10.0, 20.0)),
            ((1.0, 0.0), (11.0, 20.0)),
            ((0.0, 1.0), (10.0, 21.0)),
        ];
        let t = fit_affine(&pairs).unwrap();
        for (got, want) in t.coefficients().iter().zip([1.0, 0.0, 10.0, 0.0, 1.0, 20.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn fit_recovers_generating_transform() {
        let truth = AffineTransform::new(1.2, 0.1, 33.0, -0.05, 0.9, -7.0).unwrap();
        let src = [(0.0, 0.0), (100.0, 5.0), (12.0, 250.0), (640.0, 480.0), (333.0, 17.0), (50.0, 600.0)];
        let pairs: Vec<_> = src.iter().map(|&p| (p, truth.apply(p))).collect();
        let t = fit_affine(&pairs).unwrap();
        for (got, want) in t.coefficients().iter().zip(truth.coefficients()) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn fit_errors() {
        let two = [((0.0, 0.0), (0.0, 0.0)), ((1.0, 0.0), (1.0, 0.0))];
        assert_eq!(fit_affine(&two), Err(GeometryError::FewerThanThreePairs(2)));
        let collinear = [
            ((0.0, 0.0), (0.0, 0.0)),
            ((1.0, 1.0), (1.0, 0.0)),
            ((2.0, 2.0), (0.0, 1.0)),
        ];
        assert_eq!(fit_affine(&collinear), Err(GeometryError::DegenerateConfiguration));
        let coincident = [((3.0, 3.0), (0.0, 0.0)); 4];
        assert_eq!(fit_affine(&coincident), Err(GeometryError::DegenerateConfiguration));
    }

    #[test]
    fn fit_works_in_f32() {
        let truth = AffineTransform::<f32>::new(0.9, 0.05, 4.0, -0.02, 1.1, 2.0).unwrap();
        let pairs: Vec<_> = [(0.0f32, 0.0f32), (10.0, 0.0), (0.0, 10.0), (7.0, 3.0)]
            .iter()
            .map(|&p| (p, truth.apply(p)))
            .collect();
        let t = fit_affine(&pairs).unwrap();
        for (got, want) in t.coefficients().iter().zip(truth.coefficients()) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-3);
        }
    }

    #[test]
    fn transform_identity_keeps_box() {
        let b = bb(0.3, 0.6, 0.2, 0.1);
        let g = geom(1000, 800);
        let out = transform_bbox(&b, g, &AffineTransform::identity(), g, 0.5).kept().unwrap();
        assert_abs_diff_eq!(out.cx, b.cx, epsilon = 1e-12);
        assert_abs_diff_eq!(out.cy, b.cy, epsilon = 1e-12);
        assert_abs_diff_eq!(out.w, b.w, epsilon = 1e-12);
        assert_abs_diff_eq!(out.h, b.h, epsilon = 1e-12);
    }

    #[test]
    fn transform_out_of_frame_is_discarded() {
        let b = bb(0.5, 0.5, 0.1, 0.1);
        let g = geom(1000, 1000);
        let t = AffineTransform::translation(600.0, 0.0);
        assert_eq!(transform_bbox(&b, g, &t, g, 0.5), Transferred::Discarded);
    }

    #[test]
    fn transform_scale_matches_renormalized_box() {
        let b = bb(0.5, 0.5, 0.2, 0.2);
        let t = AffineTransform::scale(2.0, 2.0).unwrap();
        let out = transform_bbox(&b, geom(100, 100), &t, geom(200, 200), 0.5).kept().unwrap();
        assert_abs_diff_eq!(out.cx, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.cy, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.w, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(out.h, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn transform_partial_overlap_clips_or_discards() {
        // Hull x-range [900, 1100] on a 1000 px frame: half inside.
        let b = bb(0.5, 0.5, 0.2, 0.2);
        let g = geom(1000, 1000);
        let t = AffineTransform::translation(500.0, 0.0);
        let kept = transform_bbox(&b, g, &t, g, 0.5).kept().unwrap();
        assert_abs_diff_eq!(kept.cx, 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(kept.w, 0.1, epsilon = 1e-12);
        assert_eq!(transform_bbox(&b, g, &t, g, 0.6), Transferred::Discarded);
    }

    #[test]
    fn expansion_cases() {
        let b = bb(0.5, 0.5, 0.2, 0.1);
        let same = expand_bbox_area(&b, 0.0);
        for (x, y) in [(same.cx, b.cx), (same.cy, b.cy), (same.w, b.w), (same.h, b.h)] {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
        let e = expand_bbox_area(&b, 0.5);
        assert_abs_diff_eq!(e.w, 0.244_948_974_278_317_8, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h, 0.122_474_487_139_158_9, epsilon = 1e-12);
        assert_abs_diff_eq!(e.cx, 0.5, epsilon = 1e-15);

        // Left edge 0.05 - 0.12247 < 0: clipped to 0, right edge kept.
        let edge = bb(0.05, 0.5, 0.2, 0.1);
        let e = expand_bbox_area(&edge, 0.5);
        let r = e.rect();
        assert_abs_diff_eq!(r.x0, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.x1, 0.05 + 0.1 * 1.5f64.sqrt(), epsilon = 1e-12);
        assert!(r.x0 >= -1e-15 && r.x1 <= 1.0);
    }

    #[test]
    fn aspect_ratio_cases() {
        assert!(aspect_ratio_ok(100, 100));
        assert!(!aspect_ratio_ok(100, 201));
        assert!(aspect_ratio_ok(100, 200));
        assert!(aspect_ratio_ok(200, 100));
        assert!(!aspect_ratio_ok(201, 100));
        assert!(!aspect_ratio_ok(0, 100));
    }

    #[test]
    fn iou_cases() {
        let a = bb(0.25, 0.25, 0.5, 0.5);
        assert_abs_diff_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&bb(0.1, 0.1, 0.1, 0.1), &bb(0.8, 0.8, 0.1, 0.1)), 0.0);
        let b = bb(0.5, 0.5, 0.5, 0.5);
        assert_abs_diff_eq!(iou(&a, &b), 1.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_round_trips() {
        let t = AffineTransform::new(1.2, 0.1, 33.0, -0.05, 0.9, -7.0).unwrap();
        let id = t.then(&t.inverse().unwrap());
        for (got, want) in id.coefficients().iter().zip([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert!(AffineTransform::new(1.0, 2.0, 0.0, 2.0, 4.0, 0.0).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox<f64>> {
        (0.1f64..0.9, 0.1f64..0.9, 0.01f64..0.2, 0.01f64..0.2).prop_map(|(cx, cy, w, h)| bb(cx, cy, w, h))
    }

    fn arb_affine() -> impl Strategy<Value = AffineTransform<f64>> {
        (0.5f64..2.0, -0.3f64..0.3, -50.0f64..50.0, -0.3f64..0.3, 0.5f64..2.0, -50.0f64..50.0)
            .prop_filter_map("invertible", |(a, b, tx, c, d, ty)| {
                AffineTransform::new(a, b, tx, c, d, ty).ok()
            })
    }

    proptest! {
        #[test]
        fn fit_reproduces_targets(t in arb_affine(), pts in prop::collection::vec((0.0f64..2000.0, 0.0f64..2000.0), 3..40)) {
            let pairs: Vec<_> = pts.iter().map(|&p| (p, t.apply(p))).collect();
            if let Ok(fit) = fit_affine(&pairs) {
                for &(s, d) in &pairs {
                    let (x, y) = fit.apply(s);
                    prop_assert!((x - d.0).abs() < 1e-9 && (y - d.1).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn expansion_area_law_and_monotone(b in arb_box(), f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
            let r = expanded_rect(&b, f1);
            prop_assert!((r.area() / b.area() - (1.0 + f1)).abs() < 1e-9);
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            let (a, c) = (expand_bbox_area(&b, lo), expand_bbox_area(&b, hi));
            prop_assert!(c.w >= a.w - 1e-15 && c.h >= a.h - 1e-15);
            let cr = c.rect();
            prop_assert!(cr.x0 >= -1e-12 && cr.y0 >= -1e-12 && cr.x1 <= 1.0 + 1e-12 && cr.y1 <= 1.0 + 1e-12);
        }

        #[test]
        fn iou_symmetric_and_translation_invariant(a in arb_box(), b in arb_box(), dx in -0.05f64..0.05, dy in -0.05f64..0.05) {
            let ab = iou(&a, &b);
            prop_assert!((ab - iou(&b, &a)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
            let shift = |x: &BBox<f64>| bb(x.cx + dx, x.cy + dy, x.w, x.h);
            prop_assert!((iou(&shift(&a), &shift(&b)) - ab).abs() < 1e-9);
        }

        #[test]
        fn identity_transfer_is_identity(b in arb_box()) {
            let g = geom(1024, 768);
            let out = transform_bbox(&b, g, &AffineTransform::identity(), g, 0.5).kept().unwrap();
            prop_assert!((out.cx - b.cx).abs() < 1e-12 && (out.w - b.w).abs() < 1e-12);
            prop_assert!((out.cy - b.cy).abs() < 1e-12 && (out.h - b.h).abs() < 1e-12);
        }

        #[test]
        fn composed_transfer_is_contained_in_two_step(
            b in (0.4f64..0.6, 0.4f64..0.6, 0.02f64..0.1, 0.02f64..0.1).prop_map(|(cx, cy, w, h)| bb(cx, cy, w, h)),
            rot1 in -0.3f64..0.3, rot2 in -0.3f64..0.3,
        ) {
            let g = geom(1000, 1000);
            let rot = |th: f64| {
                let (s, c) = th.sin_cos();
                // rotation about the frame center
                AffineTransform::new(c, -s, 500.0 - 500.0 * c + 500.0 * s, s, c, 500.0 - 500.0 * s - 500.0 * c).unwrap()
            };
            let (t1, t2) = (rot(rot1), rot(rot2));
            let step = transform_bbox(&b, g, &t1, g, 0.5).kept().unwrap();
            let two = transform_bbox(&step, g, &t2, g, 0.5).kept().unwrap();
            let one = transform_bbox(&b, g, &t1.then(&t2), g, 0.5).kept().unwrap();
            let (outer, inner) = (two.rect(), one.rect());
            prop_assert!(outer.x0 <= inner.x0 + 1e-9 && outer.y0 <= inner.y0 + 1e-9);
            prop_assert!(outer.x1 >= inner.x1 - 1e-9 && outer.y1 >= inner.y1 - 1e-9);
        }
    }
}
