use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::kernel::conv::Dims4;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Zero padding on each side before the random crop.
    pub pad: usize,
    pub flip: bool,
    /// Side of the zeroed square, if any.
    pub cutout: Option<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            pad: 4,
            flip: true,
            cutout: None,
        }
    }
}

/// Zero-pads one CHW image by `pad` and crops an `h x w` window whose top-left
/// corner sits at `(oy, ox)` in padded coordinates.
pub fn pad_crop(img: &[f64], c: usize, h: usize, w: usize, pad: usize, oy: usize, ox: usize) -> Vec<f64> {
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            let sy = (y + oy) as isize - pad as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let sx = (x + ox) as isize - pad as isize;
                if sx >= 0 && sx < w as isize {
                    out[(ch * h + y) * w + x] = img[(ch * h + sy as usize) * w + sx as usize];
                }
            }
        }
    }
    out
}

pub fn flip_horizontal(img: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; c * h * w];
    for row in 0..c * h {
        for x in 0..w {
            out[row * w + x] = img[row * w + (w - 1 - x)];
        }
    }
    out
}

/// Zeroes the `size x size` square centred on `(cy, cx)`, clipped to the image.
pub fn cutout(img: &mut [f64], c: usize, h: usize, w: usize, cy: usize, cx: usize, size: usize) {
    let y0 = cy.saturating_sub(size / 2);
    let x0 = cx.saturating_sub(size / 2);
    let y1 = (cy + size - size / 2).min(h);
    let x1 = (cx + size - size / 2).min(w);
    for ch in 0..c {
        for y in y0..y1 {
            for x in x0..x1 {
                img[(ch * h + y) * w + x] = 0.0;
            }
        }
    }
}

/// Random crop, flip and optional cutout applied independently per image.
pub fn augment_batch(x: &[f64], d: Dims4, cfg: &AugmentConfig, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    let per = d.c * d.plane();
    let mut out = Vec::with_capacity(x.len());
    for img in x.chunks(per) {
        let oy = r.gen_range(0..=2 * cfg.pad);
        let ox = r.gen_range(0..=2 * cfg.pad);
        let mut y = pad_crop(img, d.c, d.h, d.w, cfg.pad, oy, ox);
        if cfg.flip && r.gen_bool(0.5) {
            y = flip_horizontal(&y, d.c, d.h, d.w);
        }
        if let Some(size) = cfg.cutout {
            let cy = r.gen_range(0..d.h);
            let cx = r.gen_range(0..d.w);
            cutout(&mut y, d.c, d.h, d.w, cy, cx, size);
        }
        out.extend_from_slice(&y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(seed: u64) -> Vec<f64> {
        let mut r = rng::seeded(seed);
        (0..3 * 32 * 32).map(|_| r.gen_range(0.5..2.0)).collect()
    }

    #[test]
    fn double_flip_is_identity() {
        let img = image(1);
        assert_eq!(flip_horizontal(&flip_horizontal(&img, 3, 32, 32), 3, 32, 32), img);
    }

    #[test]
    fn centre_crop_is_identity() {
        let img = image(2);
        assert_eq!(pad_crop(&img, 3, 32, 32, 4, 4, 4), img);
    }

    #[test]
    fn shifted_crop_moves_pixels() {
        let img = image(3);
        let out = pad_crop(&img, 3, 32, 32, 4, 5, 4);
        assert_eq!(out[0], img[32]);
        assert!(out[31 * 32..32 * 32].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cutout_zeroes_at_most_a_square() {
        let mut r = rng::seeded(4);
        for _ in 0..200 {
            let mut img = image(5);
            let (cy, cx) = (r.gen_range(0..32), r.gen_range(0..32));
            cutout(&mut img, 3, 32, 32, cy, cx, 8);
            for ch in 0..3 {
                let zeros = img[ch * 1024..(ch + 1) * 1024].iter().filter(|&&v| v == 0.0).count();
                assert!(zeros <= 64 && zeros > 0);
            }
        }
        let mut img = image(6);
        cutout(&mut img, 3, 32, 32, 16, 16, 8);
        assert_eq!(img.iter().filter(|&&v| v == 0.0).count(), 3 * 64);
    }

    #[test]
    fn augmentation_preserves_shape_and_is_seeded() {
        let d = Dims4::new(4, 3, 32, 32);
        let x: Vec<f64> = (0..4).flat_map(image).collect();
        let cfg = AugmentConfig {
            cutout: Some(8),
            ..Default::default()
        };
        let a = augment_batch(&x, d, &cfg, 9);
        assert_eq!(a.len(), x.len());
        assert_eq!(a, augment_batch(&x, d, &cfg, 9));
        assert_ne!(a, augment_batch(&x, d, &cfg, 10));
    }

    #[test]
    fn no_padding_no_flip_keeps_pixels() {
        let d = Dims4::new(2, 3, 32, 32);
        let x: Vec<f64> = (0..2).flat_map(image).collect();
        let cfg = AugmentConfig {
            pad: 4,
            flip: true,
            cutout: None,
        };
        // nonzero pixels survive only as a sub-multiset of the original
        let out = augment_batch(&x, d, &cfg, 1);
        let mut orig: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        orig.sort_unstable();
        for v in out.iter().filter(|&&v| v != 0.0) {
            assert!(orig.binary_search(&v.to_bits()).is_ok());
        }
    }
}
