//! Binary masks, polygons, and the raster operations the rest of the crate
//! is built on: set counting, connected-component labeling, polygon
//! rasterization, and contour extraction.
//!
//! Coordinate convention: x grows rightward, y grows downward, and the
//! center of the top-left pixel sits at (0.0, 0.0). A pixel (x, y) therefore
//! occupies the square [x-0.5, x+0.5] x [y-0.5, y+0.5].

use std::path::Path;

use crate::error::{Error, Result};

/// Rectangular bit raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

/// Pixel connectivity for component labeling and contour extraction.
/// Serializes as the number 4 or 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::invalid(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl serde::Serialize for Connectivity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> serde::Deserialize<'de> for Connectivity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Connectivity::from_u8(v).map_err(serde::de::Error::custom)
    }
}

/// Closed polygon with subpixel vertices. The last vertex implicitly
/// connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::invalid(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        Ok(Polygon { vertices })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }
}

/// Connected-component labeling of a mask. Labels are dense 1..=count in
/// raster-scan order of each component's first pixel; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    count: u32,
}

impl ComponentLabeling {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_at(&self, x: u32, y: u32) -> u32 {
        self.labels[(y * self.width + x) as usize]
    }

    /// Mask of a single component.
    pub fn component_mask(&self, label: u32) -> BinaryMask {
        let bits = self.labels.iter().map(|&l| l == label && l != 0).collect();
        BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    /// Pixel count per label, indexed 1..=count (index 0 unused).
    pub fn component_sizes(&self) -> Vec<u64> {
        let mut sizes = vec![0u64; self.count as usize + 1];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes[0] = 0;
        sizes
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; (width as usize) * (height as usize)],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != (width as usize) * (height as usize) {
            return Err(Error::invalid(format!(
                "bit count {} does not match {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    /// Convenience constructor from a 0/1 string grid, rows separated by
    /// whitespace. Mostly used by tests.
    pub fn from_rows(rows: &[&str]) -> Result<Self> {
        let height = rows.len() as u32;
        let width = rows.first().map(|r| r.len()).unwrap_or(0) as u32;
        let mut bits = Vec::with_capacity((width * height) as usize);
        for row in rows {
            if row.len() as u32 != width {
                return Err(Error::invalid("ragged rows"));
            }
            for ch in row.chars() {
                bits.push(ch != '0' && ch != '.');
            }
        }
        BinaryMask::from_bits(width, height, bits)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[(y * self.width + x) as usize] = value;
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_size(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn union_with(&mut self, other: &BinaryMask) -> Result<()> {
        self.same_size(other)?;
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    pub fn intersect_with(&mut self, other: &BinaryMask) -> Result<()> {
        self.same_size(other)?;
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= b;
        }
        Ok(())
    }

    /// Bounding box of set pixels as (x0, y0, x1, y1) inclusive, or None if
    /// the mask is empty.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bbox: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bbox
    }

    /// Morphological dilation by a square structuring element of the given
    /// radius (Chebyshev distance).
    pub fn dilate(&self, radius: u32) -> BinaryMask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        let mut out = BinaryMask::new(self.width, self.height);
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                if !self.bits[(y as u32 * self.width + x as u32) as usize] {
                    continue;
                }
                let x0 = (x - r).max(0);
                let x1 = (x + r).min(self.width as i64 - 1);
                let y0 = (y - r).max(0);
                let y1 = (y + r).min(self.height as i64 - 1);
                for yy in y0..=y1 {
                    for xx in x0..=x1 {
                        out.bits[(yy as u32 * self.width + xx as u32) as usize] = true;
                    }
                }
            }
        }
        out
    }

    /// Load from an 8-bit single-channel PNG: 0 is background, any nonzero
    /// value is foreground.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        let (width, height) = img.dimensions();
        let bits = img.as_raw().iter().map(|&v| v != 0).collect();
        BinaryMask::from_bits(width, height, bits)
    }

    /// Save as an 8-bit single-channel PNG; foreground written as 255.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width, self.height, raw)
            .expect("buffer sized from mask dimensions");
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// |A ∩ B| as a pixel count.
pub fn intersect_count(a: &BinaryMask, b: &BinaryMask) -> Result<u64> {
    a.same_size(b)?;
    Ok(a.bits
        .iter()
        .zip(&b.bits)
        .filter(|&(&x, &y)| x && y)
        .count() as u64)
}

/// |A ∪ B| as a pixel count.
pub fn union_count(a: &BinaryMask, b: &BinaryMask) -> Result<u64> {
    a.same_size(b)?;
    Ok(a.bits
        .iter()
        .zip(&b.bits)
        .filter(|&(&x, &y)| x || y)
        .count() as u64)
}

/// Label maximal connected foreground regions. Flood fill in raster-scan
/// order keeps labels deterministic: component k is the k-th component whose
/// first pixel is reached scanning rows top to bottom.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; (w as usize) * (h as usize)];
    let mut count = 0u32;
    let mut stack: Vec<(u32, u32)> = Vec::new();

    let offsets: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ],
    };

    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if !mask.bits[idx] || labels[idx] != 0 {
                continue;
            }
            count += 1;
            labels[idx] = count;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for &(dx, dy) in offsets {
                    let nx = cx as i64 + dx;
                    let ny = cy as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let nidx = (ny as u32 * w + nx as u32) as usize;
                    if mask.bits[nidx] && labels[nidx] == 0 {
                        labels[nidx] = count;
                        stack.push((nx as u32, ny as u32));
                    }
                }
            }
        }
    }

    ComponentLabeling {
        width: w,
        height: h,
        labels,
        count,
    }
}

/// Rasterize a polygon: a pixel is set iff its center lies inside under the
/// even-odd rule. Scanline implementation; on-edge centers resolve by a
/// half-open crossing rule (left/top edges in, right/bottom out).
pub fn rasterize(polygon: &Polygon, width: u32, height: u32) -> Result<BinaryMask> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("rasterize canvas must be nonzero"));
    }
    let mut mask = BinaryMask::new(width, height);
    let verts = polygon.vertices();
    let n = verts.len();

    let y_min = verts.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let y_max = verts.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let row_start = y_min.ceil().max(0.0) as i64;
    let row_end = y_max.floor().min(height as f64 - 1.0) as i64;

    let mut crossings: Vec<f64> = Vec::new();
    for row in row_start..=row_end {
        let py = row as f64;
        crossings.clear();
        for i in 0..n {
            let (x1, y1) = verts[i];
            let (x2, y2) = verts[(i + 1) % n];
            if (y1 <= py && py < y2) || (y2 <= py && py < y1) {
                crossings.push(x1 + (py - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // half-open spans [c0, c1), [c2, c3), ...
        for pair in crossings.chunks(2) {
            if pair.len() < 2 {
                break;
            }
            let start = pair[0].ceil().max(0.0) as i64;
            let end = (pair[1].ceil() - 1.0).min(width as f64 - 1.0) as i64;
            for x in start..=end {
                mask.set(x as u32, row as u32, true);
            }
        }
    }
    Ok(mask)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    East,
    South,
    West,
    North,
}

impl Dir {
    fn left(self) -> Dir {
        match self {
            Dir::East => Dir::North,
            Dir::North => Dir::West,
            Dir::West => Dir::South,
            Dir::South => Dir::East,
        }
    }

    fn right(self) -> Dir {
        match self {
            Dir::East => Dir::South,
            Dir::South => Dir::West,
            Dir::West => Dir::North,
            Dir::North => Dir::East,
        }
    }

    fn step(self, cx: i64, cy: i64) -> (i64, i64) {
        match self {
            Dir::East => (cx + 1, cy),
            Dir::South => (cx, cy + 1),
            Dir::West => (cx - 1, cy),
            Dir::North => (cx, cy - 1),
        }
    }
}

/// Extract one outer contour per 8-connected component, holes ignored.
/// Contours follow the cracks between foreground and background pixel
/// squares, so vertices sit at half-integer coordinates and rasterizing a
/// contour reproduces its (hole-filled) component exactly.
pub fn extract_contours(mask: &BinaryMask) -> Vec<Polygon> {
    let labeling = connected_components(mask, Connectivity::Eight);
    let mut firsts: Vec<Option<(u32, u32)>> = vec![None; labeling.count as usize + 1];
    for y in 0..mask.height {
        for x in 0..mask.width {
            let l = labeling.label_at(x, y) as usize;
            if l != 0 && firsts[l].is_none() {
                firsts[l] = Some((x, y));
            }
        }
    }

    let fg = |px: i64, py: i64, label: u32| -> bool {
        if px < 0 || py < 0 || px >= mask.width as i64 || py >= mask.height as i64 {
            return false;
        }
        labeling.label_at(px as u32, py as u32) == label
    };

    let mut polygons = Vec::with_capacity(labeling.count as usize);
    for label in 1..=labeling.count {
        let (sx, sy) = firsts[label as usize].unwrap();
        // Walk the boundary keeping the component on the right-hand side.
        // Corner (cx, cy) is the point (cx - 0.5, cy - 0.5).
        let start = (sx as i64, sy as i64);
        let start_dir = Dir::East;
        let mut corner = start;
        let mut dir = start_dir;
        let mut vertices: Vec<(f64, f64)> = Vec::new();
        let mut steps = 0u64;
        loop {
            let (cx, cy) = corner;
            let (left_ahead, right_ahead) = match dir {
                Dir::East => ((cx, cy - 1), (cx, cy)),
                Dir::South => ((cx, cy), (cx - 1, cy)),
                Dir::West => ((cx - 1, cy), (cx - 1, cy - 1)),
                Dir::North => ((cx - 1, cy - 1), (cx, cy - 1)),
            };
            let new_dir = if fg(left_ahead.0, left_ahead.1, label) {
                dir.left()
            } else if fg(right_ahead.0, right_ahead.1, label) {
                dir
            } else {
                dir.right()
            };
            if new_dir != dir {
                vertices.push((cx as f64 - 0.5, cy as f64 - 0.5));
            }
            // the walk state just before a step repeats exactly when the
            // outer boundary cycle is complete
            if steps > 0 && corner == start && new_dir == start_dir {
                break;
            }
            dir = new_dir;
            corner = dir.step(corner.0, corner.1);
            steps += 1;
        }
        if vertices.len() < 3 {
            // single pixel or degenerate run; emit its square explicitly
            vertices = vec![
                (sx as f64 - 0.5, sy as f64 - 0.5),
                (sx as f64 + 0.5, sy as f64 - 0.5),
                (sx as f64 + 0.5, sy as f64 + 0.5),
                (sx as f64 - 0.5, sy as f64 + 0.5),
            ];
        }
        polygons.push(Polygon { vertices });
    }
    polygons
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(w: u32, h: u32) -> BinaryMask {
        BinaryMask::from_bits(w, h, vec![true; (w * h) as usize]).unwrap()
    }

    fn block(canvas_w: u32, canvas_h: u32, x0: u32, y0: u32, w: u32, h: u32) -> BinaryMask {
        let mut m = BinaryMask::new(canvas_w, canvas_h);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn intersect_identical_full() {
        let a = full(2, 2);
        assert_eq!(intersect_count(&a, &a).unwrap(), 4);
    }

    #[test]
    fn intersect_and_union_shifted_blocks() {
        // 2x2 block at (0,0) vs 2x2 block at (1,0) on a 4x4 canvas
        let a = block(4, 4, 0, 0, 2, 2);
        let b = block(4, 4, 1, 0, 2, 2);
        assert_eq!(intersect_count(&a, &b).unwrap(), 2);
        assert_eq!(union_count(&a, &b).unwrap(), 6);
    }

    #[test]
    fn intersect_disjoint_is_zero() {
        let a = block(4, 4, 0, 0, 2, 2);
        let b = block(4, 4, 2, 2, 2, 2);
        assert_eq!(intersect_count(&a, &b).unwrap(), 0);
    }

    #[test]
    fn union_empty_masks() {
        let a = BinaryMask::new(3, 3);
        assert_eq!(union_count(&a, &a).unwrap(), 0);
    }

    #[test]
    fn counts_reject_dimension_mismatch() {
        let a = BinaryMask::new(2, 2);
        let b = BinaryMask::new(3, 2);
        assert!(intersect_count(&a, &b).is_err());
        assert!(union_count(&a, &b).is_err());
    }

    #[test]
    fn components_single_pixel() {
        let mut m = BinaryMask::new(3, 3);
        m.set(1, 1, true);
        assert_eq!(connected_components(&m, Connectivity::Eight).count(), 1);
    }

    #[test]
    fn components_diagonal_touch() {
        let m = BinaryMask::from_rows(&["10", "01"]).unwrap();
        assert_eq!(connected_components(&m, Connectivity::Eight).count(), 1);
        assert_eq!(connected_components(&m, Connectivity::Four).count(), 2);
    }

    #[test]
    fn components_empty_mask() {
        let m = BinaryMask::new(4, 4);
        assert_eq!(connected_components(&m, Connectivity::Eight).count(), 0);
    }

    #[test]
    fn components_partition_foreground() {
        let m = BinaryMask::from_rows(&["1100", "1100", "0011", "0011"]).unwrap();
        let lab = connected_components(&m, Connectivity::Four);
        assert_eq!(lab.count(), 2);
        let sizes = lab.component_sizes();
        assert_eq!(sizes[1] + sizes[2], m.count());
        for (i, &l) in lab.labels().iter().enumerate() {
            assert_eq!(l != 0, m.bits()[i]);
        }
    }

    #[test]
    fn rasterize_square_over_four_centers() {
        let p = Polygon::new(vec![(-0.25, -0.25), (1.25, -0.25), (1.25, 1.25), (-0.25, 1.25)])
            .unwrap();
        let m = rasterize(&p, 4, 4).unwrap();
        assert_eq!(m.count(), 4);
        assert!(m.get(0, 0) && m.get(1, 0) && m.get(0, 1) && m.get(1, 1));
    }

    #[test]
    fn rasterize_off_canvas_is_empty() {
        let p = Polygon::new(vec![(10.0, 10.0), (12.0, 10.0), (12.0, 12.0)]).unwrap();
        let m = rasterize(&p, 4, 4).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn rasterize_full_canvas() {
        let p = Polygon::new(vec![(-0.5, -0.5), (3.5, -0.5), (3.5, 3.5), (-0.5, 3.5)]).unwrap();
        let m = rasterize(&p, 4, 4).unwrap();
        assert_eq!(m.count(), 16);
    }

    #[test]
    fn rasterize_degenerate_polygon_is_empty() {
        let p = Polygon::new(vec![(1.0, 1.0), (1.0, 1.0), (1.0, 1.0)]).unwrap();
        let m = rasterize(&p, 4, 4).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn contours_empty_mask() {
        assert!(extract_contours(&BinaryMask::new(4, 4)).is_empty());
    }

    #[test]
    fn contours_round_trip_block() {
        let m = block(8, 8, 2, 2, 3, 3);
        let polys = extract_contours(&m);
        assert_eq!(polys.len(), 1);
        let back = rasterize(&polys[0], 8, 8).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn contours_two_disjoint_blocks() {
        let m = BinaryMask::from_rows(&["11000", "11000", "00000", "00011", "00011"]).unwrap();
        assert_eq!(extract_contours(&m).len(), 2);
    }

    #[test]
    fn contours_round_trip_diagonal_component() {
        let m = BinaryMask::from_rows(&["1000", "0100", "0010", "0001"]).unwrap();
        let polys = extract_contours(&m);
        assert_eq!(polys.len(), 1);
        let back = rasterize(&polys[0], 4, 4).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn contours_single_pixel() {
        let mut m = BinaryMask::new(3, 3);
        m.set(2, 0, true);
        let polys = extract_contours(&m);
        assert_eq!(polys.len(), 1);
        let back = rasterize(&polys[0], 3, 3).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let m = block(5, 7, 1, 2, 3, 4);
        m.save_png(&path).unwrap();
        assert_eq!(BinaryMask::load_png(&path).unwrap(), m);
    }
}
