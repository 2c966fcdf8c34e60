#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "../image.hpp"
#include "../projector.hpp"
#include "tensor.hpp"

namespace sinomar::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

namespace detail {

inline int conv_out_dim(int in, int stride) { return (in - 1) / stride + 1; }  // k=3, pad=1

/// Unfolds one batch item into a (Cin*9) x (Hout*Wout) column matrix.
inline void im2col(const double* x, int C, int H, int W, int stride, double* col) {
    const int Ho = conv_out_dim(H, stride), Wo = conv_out_dim(W, stride);
    const size_t P = static_cast<size_t>(Ho) * Wo;
    for (int ci = 0; ci < C; ++ci) {
        const double* plane = x + static_cast<size_t>(ci) * H * W;
        for (int kr = 0; kr < 3; ++kr) {
            for (int kc = 0; kc < 3; ++kc) {
                double* dst = col + (static_cast<size_t>(ci) * 9 + kr * 3 + kc) * P;
                for (int orow = 0; orow < Ho; ++orow) {
                    const int ir = orow * stride + kr - 1;
                    if (ir < 0 || ir >= H) {
                        for (int ocol = 0; ocol < Wo; ++ocol) dst[orow * Wo + ocol] = 0.0;
                        continue;
                    }
                    const double* src = plane + static_cast<size_t>(ir) * W;
                    for (int ocol = 0; ocol < Wo; ++ocol) {
                        const int ic = ocol * stride + kc - 1;
                        dst[orow * Wo + ocol] = (ic >= 0 && ic < W) ? src[ic] : 0.0;
                    }
                }
            }
        }
    }
}

/// Transpose of im2col: scatter-adds column-matrix cotangents back onto the
/// input plane.
inline void col2im_add(const double* col, int C, int H, int W, int stride, double* gx) {
    const int Ho = conv_out_dim(H, stride), Wo = conv_out_dim(W, stride);
    const size_t P = static_cast<size_t>(Ho) * Wo;
    for (int ci = 0; ci < C; ++ci) {
        double* plane = gx + static_cast<size_t>(ci) * H * W;
        for (int kr = 0; kr < 3; ++kr) {
            for (int kc = 0; kc < 3; ++kc) {
                const double* src = col + (static_cast<size_t>(ci) * 9 + kr * 3 + kc) * P;
                for (int orow = 0; orow < Ho; ++orow) {
                    const int ir = orow * stride + kr - 1;
                    if (ir < 0 || ir >= H) continue;
                    double* dst = plane + static_cast<size_t>(ir) * W;
                    for (int ocol = 0; ocol < Wo; ++ocol) {
                        const int ic = ocol * stride + kc - 1;
                        if (ic >= 0 && ic < W) dst[ic] += src[orow * Wo + ocol];
                    }
                }
            }
        }
    }
}

inline std::vector<double>& scratch_col() {
    thread_local std::vector<double> buf;
    return buf;
}

}  // namespace detail

/// 3x3 cross-correlation with bias, zero padding 1, stride 1 or 2.
/// weight shape (Cout, Cin, 3, 3), bias shape (Cout).
inline Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1) {
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
    const int N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
    const int Cout = w->shape.n;
    if (w->shape.c != C || w->shape.h != 3 || w->shape.w != 3)
        throw std::invalid_argument("conv2d: weight shape mismatch");
    if (b->shape.numel() != static_cast<size_t>(Cout))
        throw std::invalid_argument("conv2d: bias shape mismatch");

    const int Ho = detail::conv_out_dim(H, stride), Wo = detail::conv_out_dim(W, stride);
    const size_t P = static_cast<size_t>(Ho) * Wo;
    const int K = C * 9;
    Tensor out = make_tensor({N, Cout, Ho, Wo},
                             x->requires_grad || w->requires_grad || b->requires_grad);

    auto& col = detail::scratch_col();
    col.resize(static_cast<size_t>(K) * P);
    CMapRM wmat(w->value.data(), Cout, K);
    for (int n = 0; n < N; ++n) {
        detail::im2col(x->value.data() + static_cast<size_t>(n) * C * H * W, C, H, W, stride,
                       col.data());
        CMapRM cmat(col.data(), K, static_cast<Eigen::Index>(P));
        MapRM omat(out->value.data() + static_cast<size_t>(n) * Cout * P, Cout,
                   static_cast<Eigen::Index>(P));
        omat.noalias() = wmat * cmat;
        for (int oc = 0; oc < Cout; ++oc) omat.row(oc).array() += b->value[oc];
    }

    if (out->requires_grad) {
        tape.record([x, w, b, out, stride, N, C, H, W, Cout, P, K]() {
            auto& colb = detail::scratch_col();
            colb.resize(static_cast<size_t>(K) * P);
            CMapRM wmat(w->value.data(), Cout, K);
            if (x->requires_grad) x->ensure_grad();
            if (w->requires_grad) w->ensure_grad();
            if (b->requires_grad) b->ensure_grad();
            std::vector<double> gcol(static_cast<size_t>(K) * P);
            for (int n = 0; n < N; ++n) {
                CMapRM gout(out->grad.data() + static_cast<size_t>(n) * Cout * P, Cout,
                            static_cast<Eigen::Index>(P));
                if (w->requires_grad || b->requires_grad) {
                    detail::im2col(x->value.data() + static_cast<size_t>(n) * C * H * W, C, H, W,
                                   stride, colb.data());
                    CMapRM cmat(colb.data(), K, static_cast<Eigen::Index>(P));
                    MapRM gw(w->grad.data(), Cout, K);
                    gw.noalias() += gout * cmat.transpose();
                    for (int oc = 0; oc < Cout; ++oc) b->grad[oc] += gout.row(oc).sum();
                }
                if (x->requires_grad) {
                    MapRM gc(gcol.data(), K, static_cast<Eigen::Index>(P));
                    gc.noalias() = wmat.transpose() * gout;
                    detail::col2im_add(gcol.data(), C, H, W, stride,
                                       x->grad.data() + static_cast<size_t>(n) * C * H * W);
                }
            }
        });
    }
    return out;
}

inline Tensor leaky_relu(Tape& tape, const Tensor& x, double slope = 0.2) {
    Tensor out = make_like(x, x->requires_grad);
    for (size_t i = 0; i < x->value.size(); ++i) {
        const double v = x->value[i];
        out->value[i] = v >= 0.0 ? v : slope * v;
    }
    if (out->requires_grad) {
        tape.record([x, out, slope]() {
            x->ensure_grad();
            for (size_t i = 0; i < x->value.size(); ++i)
                x->grad[i] += out->grad[i] * (x->value[i] >= 0.0 ? 1.0 : slope);
        });
    }
    return out;
}

/// Nearest-neighbor x2 upsampling.
inline Tensor upsample_nearest2(Tape& tape, const Tensor& x) {
    const int N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
    Tensor out = make_tensor({N, C, 2 * H, 2 * W}, x->requires_grad);
    for (int nc = 0; nc < N * C; ++nc) {
        const double* src = x->value.data() + static_cast<size_t>(nc) * H * W;
        double* dst = out->value.data() + static_cast<size_t>(nc) * 4 * H * W;
        for (int r = 0; r < 2 * H; ++r)
            for (int c = 0; c < 2 * W; ++c) dst[r * 2 * W + c] = src[(r / 2) * W + c / 2];
    }
    if (out->requires_grad) {
        tape.record([x, out, N, C, H, W]() {
            x->ensure_grad();
            for (int nc = 0; nc < N * C; ++nc) {
                double* gx = x->grad.data() + static_cast<size_t>(nc) * H * W;
                const double* go = out->grad.data() + static_cast<size_t>(nc) * 4 * H * W;
                for (int r = 0; r < 2 * H; ++r)
                    for (int c = 0; c < 2 * W; ++c) gx[(r / 2) * W + c / 2] += go[r * 2 * W + c];
            }
        });
    }
    return out;
}

/// 2x2 stride-2 max pooling with ceil semantics (partial windows at the
/// bottom/right edges). Ties route the gradient to the first maximum in
/// scan order.
inline Tensor maxpool2(Tape& tape, const Tensor& x) {
    const int N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
    const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
    Tensor out = make_tensor({N, C, Ho, Wo}, x->requires_grad);
    auto argmax = std::make_shared<std::vector<int>>(out->value.size());
    for (int nc = 0; nc < N * C; ++nc) {
        const double* src = x->value.data() + static_cast<size_t>(nc) * H * W;
        double* dst = out->value.data() + static_cast<size_t>(nc) * Ho * Wo;
        int* amx = argmax->data() + static_cast<size_t>(nc) * Ho * Wo;
        for (int orow = 0; orow < Ho; ++orow)
            for (int ocol = 0; ocol < Wo; ++ocol) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int dr = 0; dr < 2; ++dr)
                    for (int dc = 0; dc < 2; ++dc) {
                        const int r = 2 * orow + dr, c = 2 * ocol + dc;
                        if (r >= H || c >= W) continue;
                        if (src[r * W + c] > best) {
                            best = src[r * W + c];
                            best_idx = r * W + c;
                        }
                    }
                dst[orow * Wo + ocol] = best;
                amx[orow * Wo + ocol] = best_idx;
            }
    }
    if (out->requires_grad) {
        tape.record([x, out, argmax, N, C, H, W, Ho, Wo]() {
            x->ensure_grad();
            for (int nc = 0; nc < N * C; ++nc) {
                double* gx = x->grad.data() + static_cast<size_t>(nc) * H * W;
                const double* go = out->grad.data() + static_cast<size_t>(nc) * Ho * Wo;
                const int* amx = argmax->data() + static_cast<size_t>(nc) * Ho * Wo;
                for (int i = 0; i < Ho * Wo; ++i) gx[amx[i]] += go[i];
            }
        });
    }
    return out;
}

/// Channel concatenation of two tensors with equal spatial shape.
inline Tensor concat(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a->shape.n != b->shape.n || a->shape.h != b->shape.h || a->shape.w != b->shape.w)
        throw std::invalid_argument("concat: shape mismatch");
    const int N = a->shape.n, H = a->shape.h, W = a->shape.w;
    const int Ca = a->shape.c, Cb = b->shape.c;
    const size_t plane = static_cast<size_t>(H) * W;
    Tensor out = make_tensor({N, Ca + Cb, H, W}, a->requires_grad || b->requires_grad);
    for (int n = 0; n < N; ++n) {
        std::copy_n(a->value.data() + n * Ca * plane, Ca * plane,
                    out->value.data() + static_cast<size_t>(n) * (Ca + Cb) * plane);
        std::copy_n(b->value.data() + n * Cb * plane, Cb * plane,
                    out->value.data() + static_cast<size_t>(n) * (Ca + Cb) * plane + Ca * plane);
    }
    if (out->requires_grad) {
        tape.record([a, b, out, N, Ca, Cb, plane]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (size_t i = 0; i < Ca * plane; ++i)
                        a->grad[n * Ca * plane + i] +=
                            out->grad[static_cast<size_t>(n) * (Ca + Cb) * plane + i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (int n = 0; n < N; ++n)
                    for (size_t i = 0; i < Cb * plane; ++i)
                        b->grad[n * Cb * plane + i] +=
                            out->grad[static_cast<size_t>(n) * (Ca + Cb) * plane + Ca * plane + i];
            }
        });
    }
    return out;
}

/// Top-left spatial crop; the backward zero-pads back to the input shape.
inline Tensor crop2d(Tape& tape, const Tensor& x, int Ho, int Wo) {
    const int N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
    if (Ho > H || Wo > W) throw std::invalid_argument("crop2d: target larger than input");
    if (Ho == H && Wo == W) return x;
    Tensor out = make_tensor({N, C, Ho, Wo}, x->requires_grad);
    for (int nc = 0; nc < N * C; ++nc)
        for (int r = 0; r < Ho; ++r)
            std::copy_n(x->value.data() + (static_cast<size_t>(nc) * H + r) * W, Wo,
                        out->value.data() + (static_cast<size_t>(nc) * Ho + r) * Wo);
    if (out->requires_grad) {
        tape.record([x, out, N, C, H, W, Ho, Wo]() {
            x->ensure_grad();
            for (int nc = 0; nc < N * C; ++nc)
                for (int r = 0; r < Ho; ++r)
                    for (int c = 0; c < Wo; ++c)
                        x->grad[(static_cast<size_t>(nc) * H + r) * W + c] +=
                            out->grad[(static_cast<size_t>(nc) * Ho + r) * Wo + c];
        });
    }
    return out;
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    if (!(a->shape == b->shape)) throw std::invalid_argument("add: shape mismatch");
    Tensor out = make_like(a, a->requires_grad || b->requires_grad);
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] + b->value[i];
    if (out->requires_grad) {
        tape.record([a, b, out]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += out->grad[i];
            }
        });
    }
    return out;
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    if (!(a->shape == b->shape)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = make_like(a, a->requires_grad || b->requires_grad);
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] - b->value[i];
    if (out->requires_grad) {
        tape.record([a, b, out]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] -= out->grad[i];
            }
        });
    }
    return out;
}

/// out = scale * x + bias, elementwise with scalar constants.
inline Tensor affine(Tape& tape, const Tensor& x, double scale, double bias = 0.0) {
    Tensor out = make_like(x, x->requires_grad);
    for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = scale * x->value[i] + bias;
    if (out->requires_grad) {
        tape.record([x, out, scale]() {
            x->ensure_grad();
            for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += scale * out->grad[i];
        });
    }
    return out;
}

/// Composite rule as a fused select: out = mask ? x : other. `other` and
/// `mask` are constants; bins where mask = 0 are copied from `other`
/// bit-exactly and receive no gradient.
inline Tensor composite_select(Tape& tape, const Tensor& x, const Tensor& other,
                               const Tensor& mask01) {
    if (!(x->shape == other->shape) || !(x->shape == mask01->shape))
        throw std::invalid_argument("composite_select: shape mismatch");
    Tensor out = make_like(x, x->requires_grad);
    for (size_t i = 0; i < out->value.size(); ++i)
        out->value[i] = mask01->value[i] != 0.0 ? x->value[i] : other->value[i];
    if (out->requires_grad) {
        tape.record([x, mask01, out]() {
            x->ensure_grad();
            for (size_t i = 0; i < x->grad.size(); ++i)
                if (mask01->value[i] != 0.0) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

/// Mean absolute error against a constant-free scalar: mean(|x|).
inline Tensor mean_abs(Tape& tape, const Tensor& x) {
    Tensor out = make_tensor({1, 1, 1, 1}, x->requires_grad);
    double acc = 0.0;
    for (double v : x->value) acc += std::fabs(v);
    const double inv_n = 1.0 / static_cast<double>(x->value.size());
    out->value[0] = acc * inv_n;
    if (out->requires_grad) {
        tape.record([x, out, inv_n]() {
            x->ensure_grad();
            const double g = out->grad[0] * inv_n;
            for (size_t i = 0; i < x->value.size(); ++i) {
                const double v = x->value[i];
                // L1 subgradient at 0 is defined as 0.
                x->grad[i] += v > 0.0 ? g : (v < 0.0 ? -g : 0.0);
            }
        });
    }
    return out;
}

/// Mean of |x| over the pixels where keep01 is nonzero.
inline Tensor masked_mean_abs(Tape& tape, const Tensor& x, const Tensor& keep01) {
    if (!(x->shape == keep01->shape)) throw std::invalid_argument("masked_mean_abs: shape mismatch");
    double count = 0.0;
    for (double k : keep01->value) count += (k != 0.0) ? 1.0 : 0.0;
    if (count == 0.0) throw std::invalid_argument("masked_mean_abs: empty keep mask");
    Tensor out = make_tensor({1, 1, 1, 1}, x->requires_grad);
    double acc = 0.0;
    for (size_t i = 0; i < x->value.size(); ++i)
        if (keep01->value[i] != 0.0) acc += std::fabs(x->value[i]);
    const double inv_n = 1.0 / count;
    out->value[0] = acc * inv_n;
    if (out->requires_grad) {
        tape.record([x, keep01, out, inv_n]() {
            x->ensure_grad();
            const double g = out->grad[0] * inv_n;
            for (size_t i = 0; i < x->value.size(); ++i) {
                if (keep01->value[i] == 0.0) continue;
                const double v = x->value[i];
                x->grad[i] += v > 0.0 ? g : (v < 0.0 ? -g : 0.0);
            }
        });
    }
    return out;
}

/// Weighted sum of scalar tensors.
inline Tensor weighted_sum(Tape& tape, const std::vector<Tensor>& terms,
                           const std::vector<double>& weights) {
    if (terms.empty() || terms.size() != weights.size())
        throw std::invalid_argument("weighted_sum: size mismatch");
    bool rg = false;
    for (const auto& t : terms) {
        if (t->shape.numel() != 1) throw std::invalid_argument("weighted_sum: scalar terms only");
        rg = rg || t->requires_grad;
    }
    Tensor out = make_tensor({1, 1, 1, 1}, rg);
    for (size_t i = 0; i < terms.size(); ++i) out->value[0] += weights[i] * terms[i]->value[0];
    if (rg) {
        tape.record([terms, weights, out]() {
            for (size_t i = 0; i < terms.size(); ++i) {
                if (!terms[i]->requires_grad) continue;
                terms[i]->ensure_grad();
                terms[i]->grad[0] += weights[i] * out->grad[0];
            }
        });
    }
    return out;
}

/// Differentiable forward projection: applies the linear operator per batch
/// item (single channel); the backward is the exact adjoint (back_project).
inline Tensor fp_op(Tape& tape, const Tensor& x_mu, const FanBeamGeometry& geom) {
    if (x_mu->shape.c != 1) throw std::invalid_argument("fp_op: single-channel input expected");
    if (x_mu->shape.h != geom.grid.height || x_mu->shape.w != geom.grid.width)
        throw std::invalid_argument("fp_op: image/geometry mismatch");
    const int N = x_mu->shape.n;
    Tensor out = make_tensor({N, 1, geom.num_views, geom.num_bins}, x_mu->requires_grad);
    const size_t ipix = x_mu->shape.plane(), spix = out->shape.plane();
    for (int n = 0; n < N; ++n) {
        Image img(geom.grid, Unit::Mu);
        std::copy_n(x_mu->value.data() + n * ipix, ipix, img.v.data());
        Sinogram s = forward_project(img, geom);
        std::copy_n(s.v.data(), spix, out->value.data() + n * spix);
    }
    if (out->requires_grad) {
        tape.record([x_mu, out, geom, N, ipix, spix]() {
            x_mu->ensure_grad();
            for (int n = 0; n < N; ++n) {
                Sinogram g(geom);
                std::copy_n(out->grad.data() + n * spix, spix, g.v.data());
                Image gi = vjp_forward_project(g, geom);
                for (size_t i = 0; i < ipix; ++i) x_mu->grad[n * ipix + i] += gi.v[i];
            }
        });
    }
    return out;
}

/// Differentiable filtered backprojection; backward applies vjp_fbp.
inline Tensor fbp_op(Tape& tape, const Tensor& s, const FanBeamGeometry& geom) {
    if (s->shape.c != 1) throw std::invalid_argument("fbp_op: single-channel input expected");
    if (s->shape.h != geom.num_views || s->shape.w != geom.num_bins)
        throw std::invalid_argument("fbp_op: sinogram/geometry mismatch");
    const int N = s->shape.n;
    Tensor out = make_tensor({N, 1, geom.grid.height, geom.grid.width}, s->requires_grad);
    const size_t spix = s->shape.plane(), ipix = out->shape.plane();
    for (int n = 0; n < N; ++n) {
        Sinogram sn(geom);
        std::copy_n(s->value.data() + n * spix, spix, sn.v.data());
        Image x = fbp(sn, geom);
        std::copy_n(x.v.data(), ipix, out->value.data() + n * ipix);
    }
    if (out->requires_grad) {
        tape.record([s, out, geom, N, spix, ipix]() {
            s->ensure_grad();
            for (int n = 0; n < N; ++n) {
                Image g(geom.grid, Unit::Mu);
                std::copy_n(out->grad.data() + n * ipix, ipix, g.v.data());
                Sinogram gs = vjp_fbp(g, geom);
                for (size_t i = 0; i < spix; ++i) s->grad[n * spix + i] += gs.v[i];
            }
        });
    }
    return out;
}

}  // namespace sinomar::nn
