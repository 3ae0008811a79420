//! im2col machinery backing the conv2d tape operation.

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvDims {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvDims {
    pub fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }
    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfold `x` [C x H x W] into a patches matrix [positions x patch_len],
/// cross-correlation layout, zero padding.
pub(crate) fn im2col<T: Real>(x: &[T], d: &ConvDims) -> Vec<T> {
    let mut patches = vec![T::zero(); d.positions() * d.patch_len()];
    let kcols = d.kh * d.kw;
    for oh in 0..d.out_h {
        for ow in 0..d.out_w {
            let row = (oh * d.out_w + ow) * d.patch_len();
            let ih0 = (oh * d.stride) as isize - d.padding as isize;
            let iw0 = (ow * d.stride) as isize - d.padding as isize;
            for c in 0..d.in_c {
                let cbase = c * d.in_h * d.in_w;
                let pbase = row + c * kcols;
                for i in 0..d.kh {
                    let ih = ih0 + i as isize;
                    if ih < 0 || ih >= d.in_h as isize {
                        continue;
                    }
                    let irow = cbase + ih as usize * d.in_w;
                    for j in 0..d.kw {
                        let iw = iw0 + j as isize;
                        if iw < 0 || iw >= d.in_w as isize {
                            continue;
                        }
                        patches[pbase + i * d.kw + j] = x[irow + iw as usize];
                    }
                }
            }
        }
    }
    patches
}

/// Scatter a patches-shaped gradient back onto the input layout (+=).
pub(crate) fn col2im_accumulate<T: Real>(gpatches: &[T], gx: &mut [T], d: &ConvDims) {
    let kcols = d.kh * d.kw;
    for oh in 0..d.out_h {
        for ow in 0..d.out_w {
            let row = (oh * d.out_w + ow) * d.patch_len();
            let ih0 = (oh * d.stride) as isize - d.padding as isize;
            let iw0 = (ow * d.stride) as isize - d.padding as isize;
            for c in 0..d.in_c {
                let cbase = c * d.in_h * d.in_w;
                let pbase = row + c * kcols;
                for i in 0..d.kh {
                    let ih = ih0 + i as isize;
                    if ih < 0 || ih >= d.in_h as isize {
                        continue;
                    }
                    let irow = cbase + ih as usize * d.in_w;
                    for j in 0..d.kw {
                        let iw = iw0 + j as isize;
                        if iw < 0 || iw >= d.in_w as isize {
                            continue;
                        }
                        let gi = irow + iw as usize;
                        gx[gi] = gx[gi] + gpatches[pbase + i * d.kw + j];
                    }
                }
            }
        }
    }
}
