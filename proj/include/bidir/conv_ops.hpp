#pragma once

#include "bidir/errors.hpp"
#include "bidir/tensor.hpp"

namespace bidir {

/// Geometry of one conv layer. Output dims use the standard floor rule
/// out = floor((in + 2*pad - k) / stride) + 1; with floor semantics trailing
/// input pixels can stay unused, and the transposed direction simply never
/// writes them.
struct ConvDims {
    Index ic = 0, ih = 0, iw = 0;
    Index oc = 0, kh = 0, kw = 0;
    Index stride = 1, pad = 0;
    Index oh = 0, ow = 0;

    Index cols_rows() const { return ic * kh * kw; }   // R: patch size
    Index cols_cols() const { return oh * ow; }        // Q: output positions
    Index in_size() const { return ic * ih * iw; }
    Index out_size() const { return oc * oh * ow; }
};

inline ConvDims make_conv_dims(Index ic, Index ih, Index iw, Index oc, Index kh, Index kw,
                               Index stride, Index pad) {
    if (stride < 1) throw ValueError("conv: stride must be positive");
    if (pad < 0) throw ValueError("conv: negative padding");
    if (kh < 1 || kw < 1 || ic < 1 || oc < 1) throw ValueError("conv: bad kernel geometry");
    ConvDims d{ic, ih, iw, oc, kh, kw, stride, pad};
    d.oh = (ih + 2 * pad - kh) / stride + 1;
    d.ow = (iw + 2 * pad - kw) / stride + 1;
    if (ih + 2 * pad < kh || iw + 2 * pad < kw)
        throw ShapeError("conv: kernel larger than padded input");
    return d;
}

/// Unfolds one sample [ic x ih x iw] into a patch matrix block of row stride
/// `ld` (R rows of Q entries each), zero-filling padded positions. With
/// ld > Q this writes one sample's block inside a wider all-batch matrix.
template <typename Scalar>
void im2col(const Scalar* x, const ConvDims& d, Scalar* col, Index ld) {
    for (Index c = 0; c < d.ic; ++c) {
        const Scalar* plane = x + c * d.ih * d.iw;
        for (Index u = 0; u < d.kh; ++u)
            for (Index v = 0; v < d.kw; ++v) {
                Scalar* row = col + ((c * d.kh + u) * d.kw + v) * ld;
                for (Index oi = 0; oi < d.oh; ++oi) {
                    const Index i = oi * d.stride - d.pad + u;
                    for (Index oj = 0; oj < d.ow; ++oj) {
                        const Index j = oj * d.stride - d.pad + v;
                        row[oi * d.ow + oj] =
                            (i >= 0 && i < d.ih && j >= 0 && j < d.iw) ? plane[i * d.iw + j]
                                                                       : Scalar(0);
                    }
                }
            }
    }
}

/// [R x Q] patch matrix of a single sample.
template <typename Scalar>
void im2col(const Scalar* x, const ConvDims& d, Scalar* col) {
    im2col(x, d, col, d.cols_cols());
}

/// Adjoint of im2col: scatter-adds a patch-matrix block (row stride `ld`)
/// back onto one sample. Caller zeroes the destination first.
template <typename Scalar>
void col2im_add(const Scalar* col, const ConvDims& d, Scalar* x, Index ld) {
    for (Index c = 0; c < d.ic; ++c) {
        Scalar* plane = x + c * d.ih * d.iw;
        for (Index u = 0; u < d.kh; ++u)
            for (Index v = 0; v < d.kw; ++v) {
                const Scalar* row = col + ((c * d.kh + u) * d.kw + v) * ld;
                for (Index oi = 0; oi < d.oh; ++oi) {
                    const Index i = oi * d.stride - d.pad + u;
                    if (i < 0 || i >= d.ih) continue;
                    for (Index oj = 0; oj < d.ow; ++oj) {
                        const Index j = oj * d.stride - d.pad + v;
                        if (j >= 0 && j < d.iw) plane[i * d.iw + j] += row[oi * d.ow + oj];
                    }
                }
            }
    }
}

template <typename Scalar>
void col2im_add(const Scalar* col, const ConvDims& d, Scalar* x) {
    col2im_add(col, d, x, d.cols_cols());
}

}  // namespace bidir
