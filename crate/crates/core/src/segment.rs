//! Brightfield nucleus segmentation: luma, median denoising, two-class
//! intensity k-means, then selection of the centered component with holes
//! filled.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Error, Result};
use crate::field::{Field, Grid, RealField, RgbImage};

/// Minimum foreground pixel count of a valid nucleus mask.
pub const MIN_MASK_PIXELS: usize = 16;

/// BT.601 luma weights.
pub const BT601: [f64; 3] = [0.299, 0.587, 0.114];

/// Unvalidated binary image.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Grid,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(grid: Grid, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            bail!(
                InvalidInput,
                "mask has {} pixels, grid {}",
                bits.len(),
                grid.len()
            );
        }
        Ok(Self { grid, bits })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[self.grid.index(row, col)]
    }

    /// 4-connected foreground components, each a list of pixel indices.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let (w, h) = (self.grid.width, self.grid.height);
        let mut seen = vec![false; self.bits.len()];
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            seen[start] = true;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                comp.push(i);
                let (r, c) = (i / w, i % w);
                let mut visit = |j: usize| {
                    if self.bits[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                };
                if c > 0 {
                    visit(i - 1);
                }
                if c + 1 < w {
                    visit(i + 1);
                }
                if r > 0 {
                    visit(i - w);
                }
                if r + 1 < h {
                    visit(i + w);
                }
            }
            out.push(comp);
        }
        out
    }

    /// 1.0 inside, 0.0 outside.
    pub fn to_real(&self) -> RealField {
        Field::from_raw(
            self.grid,
            self.bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

/// Binary nucleus mask: exactly one 4-connected foreground component of at
/// least [`MIN_MASK_PIXELS`] pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct NucleusMask(BinaryMask);

impl NucleusMask {
    pub fn new(mask: BinaryMask) -> Result<Self> {
        let n = mask.count();
        if n < MIN_MASK_PIXELS {
            bail!(
                Segmentation,
                "mask has {n} pixels, need at least {MIN_MASK_PIXELS}"
            );
        }
        let comps = mask.components().len();
        if comps != 1 {
            bail!(
                Segmentation,
                "mask has {comps} connected components, expected 1"
            );
        }
        Ok(Self(mask))
    }

    pub fn from_bools(grid: Grid, bits: Vec<bool>) -> Result<Self> {
        Self::new(BinaryMask::new(grid, bits)?)
    }

    pub fn grid(&self) -> Grid {
        self.0.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.0.bits
    }

    pub fn area(&self) -> usize {
        self.0.count()
    }

    pub fn as_binary(&self) -> &BinaryMask {
        &self.0
    }

    pub fn to_real(&self) -> RealField {
        self.0.to_real()
    }
}

/// A square region of interest centered on a nucleus.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiSpec {
    pub image_id: String,
    /// `(x, y)` pixel coordinates in the source image.
    pub center: [usize; 2],
    pub size: usize,
}

impl RoiSpec {
    pub const DEFAULT_SIZE: usize = 256;

    /// Top-left `(row, col)` of the ROI, checking that it lies inside a
    /// `width x height` image.
    pub fn origin_in(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        let half = self.size / 2;
        let [cx, cy] = self.center;
        if self.size == 0
            || cx < half
            || cy < half
            || cx - half + self.size > width
            || cy - half + self.size > height
        {
            bail!(
                InvalidInput,
                "ROI `{}` of size {} at ({cx}, {cy}) is not inside the {width}x{height} image",
                self.image_id,
                self.size
            );
        }
        Ok((cy - half, cx - half))
    }

    pub fn crop_rgb(&self, image: &RgbImage) -> Result<RgbImage> {
        let (r0, c0) = self.origin_in(image.width(), image.height())?;
        image.crop(r0, c0, self.size, self.size)
    }

    pub fn crop_field<T: crate::field::Sample>(&self, field: &Field<T>) -> Result<Field<T>> {
        let (r0, c0) = self.origin_in(field.width(), field.height())?;
        field.crop(r0, c0, self.size, self.size)
    }
}

/// Segmentation constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentParams {
    pub luma_weights: [f64; 3],
    pub median_window: usize,
    pub init_low_percentile: f64,
    pub init_high_percentile: f64,
    pub max_iterations: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            luma_weights: BT601,
            median_window: 3,
            init_low_percentile: 10.0,
            init_high_percentile: 90.0,
            max_iterations: 100,
        }
    }
}

pub fn rgb_to_luma(rgb: &RgbImage) -> RealField {
    rgb_to_luma_with(rgb, BT601)
}

pub fn rgb_to_luma_with(rgb: &RgbImage, weights: [f64; 3]) -> RealField {
    let grid = Grid {
        width: rgb.width(),
        height: rgb.height(),
        pixel_pitch: Grid::DEFAULT_PITCH_UM,
    };
    let data = rgb.pixels().iter().map(|p| luma(*p, weights)).collect();
    Field::from_raw(grid, data)
}

#[inline]
pub(crate) fn luma(p: [u8; 3], w: [f64; 3]) -> f64 {
    w[0] * p[0] as f64 + w[1] * p[1] as f64 + w[2] * p[2] as f64
}

/// Median over a `window x window` neighborhood with replicated borders.
pub fn median_filter(grey: &RealField, window: usize) -> Result<RealField> {
    if window < 3 || window % 2 == 0 {
        bail!(
            InvalidInput,
            "median window must be odd and >= 3, got {window}"
        );
    }
    let half = (window / 2) as isize;
    let (w, h) = (grey.width() as isize, grey.height() as isize);
    let src = grey.as_slice();
    let mut buf = Vec::with_capacity(window * window);
    let mut out = Vec::with_capacity(src.len());
    for r in 0..h {
        for c in 0..w {
            buf.clear();
            for dr in -half..=half {
                let rr = (r + dr).clamp(0, h - 1);
                for dc in -half..=half {
                    let cc = (c + dc).clamp(0, w - 1);
                    buf.push(src[(rr * w + cc) as usize]);
                }
            }
            let mid = buf.len() / 2;
            let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
            out.push(*m);
        }
    }
    Ok(Field::from_raw(grey.grid(), out))
}

/// Linear-interpolated percentile of sorted data, `p` in [0, 100].
pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

/// Outcome of two-class intensity clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans2 {
    /// Foreground (darker cluster) pixels.
    pub mask: BinaryMask,
    pub centroids: [f64; 2],
    pub iterations: usize,
}

/// Scalar 2-means; the lower-centroid cluster is the nucleus.
pub fn kmeans2(grey: &RealField) -> Result<BinaryMask> {
    Ok(kmeans2_with(grey, &SegmentParams::default())?.mask)
}

pub fn kmeans2_with(grey: &RealField, params: &SegmentParams) -> Result<KMeans2> {
    let v = grey.as_slice();
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    if min == max {
        bail!(
            Degenerate,
            "constant image cannot be split into two intensity clusters"
        );
    }
    let mut lo = percentile_sorted(&sorted, params.init_low_percentile);
    let mut hi = percentile_sorted(&sorted, params.init_high_percentile);
    if lo >= hi {
        lo = min;
        hi = max;
    }
    let mut labels: Vec<bool> = Vec::new();
    let mut iterations = 0;
    while iterations < params.max_iterations.max(1) {
        iterations += 1;
        let next: Vec<bool> = v
            .iter()
            .map(|&x| (x - lo).abs() <= (hi - x).abs())
            .collect();
        let (mut s0, mut n0, mut s1, mut n1) = (0.0, 0usize, 0.0, 0usize);
        for (&fg, &x) in next.iter().zip(v) {
            if fg {
                s0 += x;
                n0 += 1;
            } else {
                s1 += x;
                n1 += 1;
            }
        }
        if n0 == 0 || n1 == 0 {
            bail!(Degenerate, "k-means produced an empty cluster");
        }
        lo = s0 / n0 as f64;
        hi = s1 / n1 as f64;
        let converged = next == labels;
        labels = next;
        if converged {
            break;
        }
    }
    Ok(KMeans2 {
        mask: BinaryMask::new(grey.grid(), labels)?,
        centroids: [lo, hi],
        iterations,
    })
}

/// Keeps the 4-connected component whose centroid is nearest `center`
/// (`(x, y)` pixels) and fills its enclosed holes.
pub fn refine_mask(raw: &BinaryMask, center: [f64; 2]) -> Result<NucleusMask> {
    let comps = raw.components();
    if comps.is_empty() {
        bail!(Segmentation, "no foreground pixels");
    }
    let w = raw.grid.width;
    let pick = comps
        .iter()
        .map(|comp| {
            let n = comp.len() as f64;
            let (sx, sy) = comp.iter().fold((0.0, 0.0), |(sx, sy), &i| {
                (sx + (i % w) as f64, sy + (i / w) as f64)
            });
            ((sx / n - center[0]).hypot(sy / n - center[1]), comp)
        })
        .fold(None::<(f64, &Vec<usize>)>, |best, (d, comp)| match best {
            Some((bd, bc)) if bd < d || (bd == d && bc.len() >= comp.len()) => Some((bd, bc)),
            _ => Some((d, comp)),
        })
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Segmentation("no component selected".into()))?;

    let mut bits = vec![false; raw.bits.len()];
    for &i in pick {
        bits[i] = true;
    }
    fill_holes(raw.grid, &mut bits);
    NucleusMask::from_bools(raw.grid, bits)
}

/// Sets every background pixel not 4-connected to the image border.
pub(crate) fn fill_holes(grid: Grid, bits: &mut [bool]) {
    let (w, h) = (grid.width, grid.height);
    let mut outside = vec![false; bits.len()];
    let mut queue = VecDeque::new();
    for i in 0..bits.len() {
        let (r, c) = (i / w, i % w);
        if (r == 0 || c == 0 || r + 1 == h || c + 1 == w) && !bits[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (r, c) = (i / w, i % w);
        let neighbors = [
            (c > 0).then(|| i - 1),
            (c + 1 < w).then(|| i + 1),
            (r > 0).then(|| i - w),
            (r + 1 < h).then(|| i + w),
        ];
        for j in neighbors.into_iter().flatten() {
            if !bits[j] && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }
    for (b, o) in bits.iter_mut().zip(outside) {
        if !o {
            *b = true;
        }
    }
}

/// Full chain on the ROI cut from `image`: luma, median, 2-means, refine.
pub fn segment_nucleus(image: &RgbImage, roi: &RoiSpec) -> Result<NucleusMask> {
    segment_nucleus_with(image, roi, &SegmentParams::default())
}

pub fn segment_nucleus_with(
    image: &RgbImage,
    roi: &RoiSpec,
    params: &SegmentParams,
) -> Result<NucleusMask> {
    let patch = roi.crop_rgb(image)?;
    let grey = rgb_to_luma_with(&patch, params.luma_weights);
    let smooth = median_filter(&grey, params.median_window)?;
    let clusters = kmeans2_with(&smooth, params)?;
    let c = (roi.size - 1) as f64 / 2.0;
    refine_mask(&clusters.mask, [c, c])
}

/// Sørensen-Dice overlap of two equally sized masks.
pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let total = a.iter().filter(|&&x| x).count() + b.iter().filter(|&&x| x).count();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}
