//! Image comparison helpers with exclusion bands around edges.

use omniview_core::ImageFrame;

/// Marks every pixel within `radius` (Chebyshev distance) of a boundary,
/// where a boundary lies between two 4-neighbors whose labels differ.
pub fn boundary_band<T: PartialEq>(labels: &[T], width: usize, height: usize, radius: usize) -> Vec<bool> {
    assert_eq!(labels.len(), width * height);
    let mut edge = vec![false; labels.len()];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width && labels[i] != labels[i + 1] {
                edge[i] = true;
                edge[i + 1] = true;
            }
            if y + 1 < height && labels[i] != labels[i + width] {
                edge[i] = true;
                edge[i + width] = true;
            }
        }
    }
    dilate(&edge, width, height, radius)
}

fn dilate(mask: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let mut horiz = vec![false; mask.len()];
    for y in 0..height {
        let row = &mask[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            horiz[y * width + x] = row[lo..=hi].iter().any(|&b| b);
        }
    }
    let mut out = vec![false; mask.len()];
    for x in 0..width {
        for y in 0..height {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(height - 1);
            out[y * width + x] = (lo..=hi).any(|yy| horiz[yy * width + x]);
        }
    }
    out
}

/// Band around color changes in an RGB or gray frame.
pub fn texture_edge_band(frame: &ImageFrame, radius: usize) -> Vec<bool> {
    let c = frame.channels as usize;
    let labels: Vec<&[u8]> = frame.data.chunks_exact(c).collect();
    boundary_band(&labels, frame.width as usize, frame.height as usize, radius)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mae {
    /// Mean absolute error per channel, in 8-bit levels.
    pub per_channel: [f64; 3],
    /// Pixels that entered the mean.
    pub pixels: usize,
}

impl Mae {
    pub fn worst(&self) -> f64 {
        self.per_channel.iter().copied().fold(0.0, f64::max)
    }
}

/// Mean absolute error between two RGB frames over pixels where
/// `exclude` is false.
pub fn mae(a: &ImageFrame, b: &ImageFrame, exclude: &[bool]) -> Mae {
    assert_eq!((a.width, a.height, a.channels), (b.width, b.height, 3));
    assert_eq!(a.channels, 3);
    let mut sum = [0u64; 3];
    let mut n = 0usize;
    for ((pa, pb), &skip) in a.data.chunks_exact(3).zip(b.data.chunks_exact(3)).zip(exclude) {
        if skip {
            continue;
        }
        n += 1;
        for k in 0..3 {
            sum[k] += u64::from(pa[k].abs_diff(pb[k]));
        }
    }
    let d = n.max(1) as f64;
    Mae {
        per_channel: sum.map(|s| s as f64 / d),
        pixels: n,
    }
}
