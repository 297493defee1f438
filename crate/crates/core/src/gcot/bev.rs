//! Bird's-eye-view rendering.
//!
//! Projects an aggregated point cloud onto the floor plane as a height map
//! (brighter = higher) and draws annotated object boxes as colored outline
//! rectangles. The raster uses image conventions: `x` grows to the right,
//! `y` grows downward, so world `+y` points up in the image.

use std::collections::BTreeMap;

use super::GcotError;
use crate::scene::{pnm, ObjectRecord, Vec3};

/// Fixed palette for category outlines, cycled in sorted-category order.
pub const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
    [170, 110, 40],
];

const HEIGHT_LO: u8 = 25;
const HEIGHT_SPAN: f64 = 230.0;
const FLAT_GRAY: u8 = 140;
const OUTLINE_PX: i64 = 2;

/// A rendered bird's-eye view.
#[derive(Debug, Clone, PartialEq)]
pub struct BevImage {
    pub width: usize,
    pub height: usize,
    /// Meters covered by one pixel edge.
    pub meters_per_px: f64,
    /// World coordinates of the outer corner of pixel (0, 0): minimum x,
    /// maximum y.
    pub origin: [f64; 2],
    /// Row-major RGB.
    pub pixels: Vec<[u8; 3]>,
    /// Outline color assigned to each annotated category.
    pub color_key: BTreeMap<String, [u8; 3]>,
}

impl BevImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        self.pixels[y * self.width + x]
    }

    /// Column covering world coordinate `x`.
    pub fn to_px_x(&self, x: f64) -> i64 {
        ((x - self.origin[0]) / self.meters_per_px).floor() as i64
    }

    /// Row covering world coordinate `y`.
    pub fn to_px_y(&self, y: f64) -> i64 {
        ((self.origin[1] - y) / self.meters_per_px).floor() as i64
    }

    /// Serializes as a binary PPM.
    pub fn to_ppm(&self) -> Vec<u8> {
        let flat: Vec<u8> = self.pixels.iter().flat_map(|p| p.iter().copied()).collect();
        pnm::encode_ppm(self.width, self.height, &flat)
    }

    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let (x, y) = (x as usize, y as usize);
            self.pixels[y * self.width + x] = color;
        }
    }

    /// Draws an axis-aligned rectangle outline `OUTLINE_PX` pixels thick,
    /// inset from the given pixel bounds (inclusive).
    fn stroke_rect(&mut self, x1: i64, y1: i64, x2: i64, y2: i64, color: [u8; 3]) {
        for t in 0..OUTLINE_PX {
            let (lx, ly, hx, hy) = (x1 + t, y1 + t, x2 - t, y2 - t);
            if lx > hx || ly > hy {
                break;
            }
            for x in lx..=hx {
                self.put(x, ly, color);
                self.put(x, hy, color);
            }
            for y in ly..=hy {
                self.put(lx, y, color);
                self.put(hx, y, color);
            }
        }
    }
}

/// Renders points and annotated boxes at `meters_per_px` resolution.
///
/// Bounds cover all points and box footprints plus a one-pixel margin, so
/// every annotation is guaranteed to land inside the raster. Pixels with no
/// points stay black; covered pixels encode the maximum point height.
pub fn render_bev(
    points: &[Vec3],
    objects: &[ObjectRecord],
    meters_per_px: f64,
) -> Result<BevImage, GcotError> {
    if !(meters_per_px.is_finite() && meters_per_px > 0.0) {
        return Err(GcotError::InvalidConfig(format!(
            "meters_per_px must be positive, got {meters_per_px}"
        )));
    }
    if points.is_empty() {
        return Err(GcotError::EmptyPoints);
    }
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    let mut min_z = f64::INFINITY;
    let mut max_z = f64::NEG_INFINITY;
    for p in points {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
        min_z = min_z.min(p.z);
        max_z = max_z.max(p.z);
    }
    for o in objects {
        min_x = min_x.min(o.bbox.min().x);
        max_x = max_x.max(o.bbox.max().x);
        min_y = min_y.min(o.bbox.min().y);
        max_y = max_y.max(o.bbox.max().y);
    }

    let origin = [min_x - meters_per_px, max_y + meters_per_px];
    let width = (((max_x - min_x) / meters_per_px).ceil() as usize) + 2;
    let height = (((max_y - min_y) / meters_per_px).ceil() as usize) + 2;
    let mut img = BevImage {
        width,
        height,
        meters_per_px,
        origin,
        pixels: vec![[0, 0, 0]; width * height],
        color_key: BTreeMap::new(),
    };

    // Height map: per-pixel maximum z.
    let mut top: Vec<Option<f64>> = vec![None; width * height];
    for p in points {
        let (x, y) = (img.to_px_x(p.x), img.to_px_y(p.y));
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            let idx = y as usize * width + x as usize;
            top[idx] = Some(top[idx].map_or(p.z, |z: f64| z.max(p.z)));
        }
    }
    let span = max_z - min_z;
    for (idx, z) in top.iter().enumerate() {
        if let Some(z) = z {
            let gray = if span > 0.0 {
                HEIGHT_LO + ((z - min_z) / span * HEIGHT_SPAN) as u8
            } else {
                FLAT_GRAY
            };
            img.pixels[idx] = [gray, gray, gray];
        }
    }

    // Category colors in sorted order, then box outlines on top.
    let mut categories: Vec<&str> = objects.iter().map(|o| o.category.as_str()).collect();
    categories.sort_unstable();
    categories.dedup();
    for (i, cat) in categories.iter().enumerate() {
        img.color_key
            .insert((*cat).to_string(), PALETTE[i % PALETTE.len()]);
    }
    for o in objects {
        let color = img.color_key[o.category.as_str()];
        let x1 = img.to_px_x(o.bbox.min().x);
        let x2 = img.to_px_x(o.bbox.max().x);
        let y1 = img.to_px_y(o.bbox.max().y);
        let y2 = img.to_px_y(o.bbox.min().y);
        img.stroke_rect(x1, y1, x2, y2, color);
    }
    Ok(img)
}
