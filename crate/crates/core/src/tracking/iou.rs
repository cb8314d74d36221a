use crate::model::BBox;

/// Intersection over union of two boxes with positive extent.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    // (x + w) - x need not round back to w
    if a == b {
        return 1.0;
    }
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    /// Counts unit pixels covered by integer boxes.
    fn raster_iou(a: (i32, i32, i32, i32), c: (i32, i32, i32, i32)) -> f64 {
        let inside = |r: (i32, i32, i32, i32), px: i32, py: i32| {
            px >= r.0 && px < r.0 + r.2 && py >= r.1 && py < r.1 + r.3
        };
        let (mut inter, mut union) = (0u32, 0u32);
        let x0 = a.0.min(c.0);
        let y0 = a.1.min(c.1);
        let x1 = (a.0 + a.2).max(c.0 + c.2);
        let y1 = (a.1 + a.3).max(c.1 + c.3);
        for py in y0..y1 {
            for px in x0..x1 {
                let (ia, ic) = (inside(a, px, py), inside(c, px, py));
                inter += u32::from(ia && ic);
                union += u32::from(ia || ic);
            }
        }
        f64::from(inter) / f64::from(union)
    }

    #[test]
    fn identical_and_disjoint() {
        let a = b(3.0, 4.0, 10.0, 20.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 10.0, 10.0), &b(20.0, 20.0, 5.0, 5.0)), 0.0);
        // edge contact has zero area
        assert_eq!(iou(&b(0.0, 0.0, 10.0, 10.0), &b(10.0, 0.0, 5.0, 5.0)), 0.0);
    }

    #[test]
    fn partial_overlap_matches_raster_count() {
        let expected = raster_iou((0, 0, 10, 10), (5, 5, 10, 10));
        assert_eq!(expected, 25.0 / 175.0);
        let got = iou(&b(0.0, 0.0, 10.0, 10.0), &b(5.0, 5.0, 10.0, 10.0));
        assert!((got - 0.142857142857).abs() < 1e-9);
        assert!((got - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(
            x1 in -1e3f64..1e3, y1 in -1e3f64..1e3, w1 in 1e-3f64..1e3, h1 in 1e-3f64..1e3,
            x2 in -1e3f64..1e3, y2 in -1e3f64..1e3, w2 in 1e-3f64..1e3, h2 in 1e-3f64..1e3,
        ) {
            let a = b(x1, y1, w1, h1);
            let c = b(x2, y2, w2, h2);
            let s = iou(&a, &c);
            prop_assert_eq!(s, iou(&c, &a));
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn integer_boxes_match_raster(
            x1 in -20i32..20, y1 in -20i32..20, w1 in 1i32..25, h1 in 1i32..25,
            x2 in -20i32..20, y2 in -20i32..20, w2 in 1i32..25, h2 in 1i32..25,
        ) {
            let got = iou(
                &b(x1.into(), y1.into(), w1.into(), h1.into()),
                &b(x2.into(), y2.into(), w2.into(), h2.into()),
            );
            let want = raster_iou((x1, y1, w1, h1), (x2, y2, w2, h2));
            prop_assert!((got - want).abs() <= 1e-9, "{} vs {}", got, want);
        }
    }
}
