#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fft.hpp"
#include "geometry.hpp"
#include "image.hpp"

namespace sinomar {

namespace detail {

/// Visits the bilinear sampling taps of one ray. The ray is sampled at
/// midpoints of equal sub-intervals no longer than pixel_size / 2, restricted
/// to the part of the segment inside the (slightly inflated) grid bounding
/// box. Every tap is reported as (flat pixel index, weight); the same
/// enumeration drives both the gather (forward) and the scatter (adjoint), so
/// the two operators form an exact adjoint pair.
template <typename Fn>
inline void for_each_ray_tap(const FanBeamGeometry& geom, int view, double bin, Fn&& fn) {
    const ImageGrid& grid = geom.grid;
    const Vec2 src = geom.source_position(view);
    const Vec2 dir = geom.ray_direction(view, bin);
    const double ray_len = geom.source_to_detector;

    // Clip [0, ray_len] against the grid bounding box inflated by one pixel.
    const double half_w = 0.5 * grid.physical_width() + grid.pixel_size;
    const double half_h = 0.5 * grid.physical_height() + grid.pixel_size;
    double t0 = 0.0, t1 = ray_len;
    auto clip_axis = [&](double p, double d, double lo, double hi) {
        if (d == 0.0) {
            if (p < lo || p > hi) t1 = -1.0;
            return;
        }
        double ta = (lo - p) / d, tb = (hi - p) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    };
    clip_axis(src.x, dir.x, -half_w, half_w);
    clip_axis(src.y, dir.y, -half_h, half_h);
    if (t1 <= t0) return;

    const double max_step = 0.5 * grid.pixel_size;
    const int steps = static_cast<int>(std::ceil((t1 - t0) / max_step));
    const double h = (t1 - t0) / steps;
    const double inv_px = 1.0 / grid.pixel_size;
    const int H = grid.height, W = grid.width;

    for (int i = 0; i < steps; ++i) {
        const double t = t0 + (i + 0.5) * h;
        const double x = src.x + t * dir.x;
        const double y = src.y + t * dir.y;
        const double fc = x * inv_px + (W - 1) * 0.5;
        const double fr = (H - 1) * 0.5 - y * inv_px;
        const int c0 = static_cast<int>(std::floor(fc));
        const int r0 = static_cast<int>(std::floor(fr));
        const double ac = fc - c0;
        const double ar = fr - r0;
        const double w00 = (1.0 - ar) * (1.0 - ac) * h;
        const double w01 = (1.0 - ar) * ac * h;
        const double w10 = ar * (1.0 - ac) * h;
        const double w11 = ar * ac * h;
        if (r0 >= 0 && r0 < H) {
            if (c0 >= 0 && c0 < W) fn(r0 * W + c0, w00);
            if (c0 + 1 >= 0 && c0 + 1 < W) fn(r0 * W + c0 + 1, w01);
        }
        if (r0 + 1 >= 0 && r0 + 1 < H) {
            if (c0 >= 0 && c0 < W) fn((r0 + 1) * W + c0, w10);
            if (c0 + 1 >= 0 && c0 + 1 < W) fn((r0 + 1) * W + c0 + 1, w11);
        }
    }
}

inline void require_paired(const ImageGrid& grid, const FanBeamGeometry& geom, const char* what) {
    if (!(grid == geom.grid)) throw std::invalid_argument(std::string(what) + ": grid/geometry mismatch");
}

}  // namespace detail

/// Line integrals of a mu image along every (view, bin) ray. Linear in the
/// image; sub-bin offsets are supported through `bin_offset` (in bins), used
/// by the partial-volume simulation.
inline Sinogram forward_project(const Image& x, const FanBeamGeometry& geom,
                                double bin_offset = 0.0) {
    if (x.unit != Unit::Mu) throw std::invalid_argument("forward_project: image must be in mu");
    detail::require_paired(x.grid, geom, "forward_project");
    Sinogram s(geom);
    for (int v = 0; v < geom.num_views; ++v) {
        for (int b = 0; b < geom.num_bins; ++b) {
            double acc = 0.0;
            detail::for_each_ray_tap(geom, v, b + bin_offset,
                                     [&](int idx, double w) { acc += w * x.v[idx]; });
            s.at(v, b) = acc;
        }
    }
    return s;
}

/// Exact algebraic adjoint of forward_project: scatters each sinogram value
/// back over the same bilinear taps.
inline Image back_project(const Sinogram& s, const FanBeamGeometry& geom) {
    if (s.geom.num_views != geom.num_views || s.geom.num_bins != geom.num_bins)
        throw std::invalid_argument("back_project: sinogram/geometry shape mismatch");
    Image x(geom.grid, Unit::Mu);
    for (int v = 0; v < geom.num_views; ++v) {
        for (int b = 0; b < geom.num_bins; ++b) {
            const double val = s.at(v, b);
            if (val == 0.0) continue;
            detail::for_each_ray_tap(geom, v, static_cast<double>(b),
                                     [&](int idx, double w) { x.v[idx] += w * val; });
        }
    }
    return x;
}

namespace detail {

/// Frequency response of the band-limited ramp with Hann apodization,
/// sampled on the DFT grid of size nfft for detector pitch `arc` (radians).
inline std::vector<double> ramp_response(size_t nfft, double arc) {
    std::vector<double> H(nfft);
    const double f_nyq = 0.5 / arc;
    for (size_t k = 0; k < nfft; ++k) {
        const size_t ks = std::min(k, nfft - k);
        const double f = static_cast<double>(ks) / (static_cast<double>(nfft) * arc);
        H[k] = f * 0.5 * (1.0 + std::cos(kPi * f / f_nyq));
    }
    return H;
}

inline size_t ramp_pad_size(int num_bins) { return next_pow2(2 * static_cast<size_t>(num_bins)); }

/// Filters one padded row in place with the sampled ramp response.
inline void ramp_row(std::vector<std::complex<double>>& buf, const std::vector<double>& H) {
    fft_inplace(buf, false);
    for (size_t k = 0; k < buf.size(); ++k) buf[k] *= H[k];
    fft_inplace(buf, true);
}

/// Interpolation weight of padding sample j on the linear bridge that closes
/// the circular buffer from bin B-1 back to bin 0.
inline double bridge_alpha(size_t j, int B, size_t nfft) {
    return static_cast<double>(j - (B - 1)) / static_cast<double>(nfft - (B - 1));
}

template <bool Adjoint>
inline Sinogram ramp_filter_impl(const Sinogram& s) {
    const int B = s.geom.num_bins;
    const size_t nfft = ramp_pad_size(B);
    const std::vector<double> H = ramp_response(nfft, s.geom.detector_arc);
    Sinogram out(s.geom);
    std::vector<std::complex<double>> buf(nfft);
    for (int v = 0; v < s.geom.num_views; ++v) {
        std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
        for (int b = 0; b < B; ++b) buf[b] = s.at(v, b);
        if constexpr (!Adjoint) {
            // Bridge the padding linearly from the right edge back to the
            // left edge; a constant row then stays constant around the circle
            // and is annihilated exactly by the zero DC response.
            const double left = s.at(v, 0), right = s.at(v, B - 1);
            for (size_t j = B; j < nfft; ++j) {
                const double a = bridge_alpha(j, B, nfft);
                buf[j] = (1.0 - a) * right + a * left;
            }
        }
        ramp_row(buf, H);
        for (int b = 0; b < B; ++b) out.at(v, b) = buf[b].real();
        if constexpr (Adjoint) {
            // Transpose of the bridge: padding cotangents flow back into the
            // two edge bins.
            double to_left = 0.0, to_right = 0.0;
            for (size_t j = B; j < nfft; ++j) {
                const double a = bridge_alpha(j, B, nfft);
                to_left += a * buf[j].real();
                to_right += (1.0 - a) * buf[j].real();
            }
            out.at(v, 0) += to_left;
            out.at(v, B - 1) += to_right;
        }
    }
    return out;
}

}  // namespace detail

/// Per-view convolution with the Hann-apodized Ram-Lak kernel (cutoff at the
/// detector Nyquist frequency), linear in the sinogram. Rows are padded with
/// a linear bridge between their edge values, so constant rows are
/// annihilated exactly.
inline Sinogram ramp_filter(const Sinogram& s) { return detail::ramp_filter_impl<false>(s); }

namespace detail {

inline Sinogram fan_preweight(const Sinogram& s) {
    Sinogram out(s.geom);
    for (int v = 0; v < s.geom.num_views; ++v)
        for (int b = 0; b < s.geom.num_bins; ++b)
            out.at(v, b) = s.at(v, b) * std::cos(s.geom.bin_angle(b));
    return out;
}

/// Weighted fan-beam backprojection of a filtered sinogram: for every pixel
/// and view, the filtered view row is linearly interpolated at the pixel's
/// fan angle and accumulated with the 1/L^2 distance weight. `Adjoint=true`
/// runs the exact transpose: it reads `img` and scatters into `sino` with the
/// same weights and branch structure.
template <bool Adjoint>
inline void fan_backproject_impl(const FanBeamGeometry& geom, double* sino, double* img) {
    const ImageGrid& grid = geom.grid;
    const int H = grid.height, W = grid.width, B = geom.num_bins;
    const double scale = 0.5 * (geom.angular_range / geom.num_views) * geom.source_to_isocenter;
    for (int v = 0; v < geom.num_views; ++v) {
        const Vec2 src = geom.source_position(v);
        const double beta = geom.view_angle(v);
        // Central direction and its normal span the source frame.
        const double cx = -std::cos(beta), cy = -std::sin(beta);
        const double nx = -cy, ny = cx;
        double* row = sino + static_cast<size_t>(v) * B;
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                const Vec2 p = grid.pixel_center(r, c);
                const double dx = p.x - src.x, dy = p.y - src.y;
                const double along = dx * cx + dy * cy;
                const double across = dx * nx + dy * ny;
                const double gamma = std::atan2(across, along);
                const double fb = gamma / geom.detector_arc + geom.center_bin();
                const int b0 = static_cast<int>(std::floor(fb));
                if (b0 < 0 || b0 + 1 >= B) continue;
                const double a = fb - b0;
                const double L2 = dx * dx + dy * dy;
                const double w = scale / L2;
                const size_t pix = static_cast<size_t>(r) * W + c;
                if constexpr (Adjoint) {
                    const double g = img[pix] * w;
                    row[b0] += (1.0 - a) * g;
                    row[b0 + 1] += a * g;
                } else {
                    img[pix] += w * ((1.0 - a) * row[b0] + a * row[b0 + 1]);
                }
            }
        }
    }
}

}  // namespace detail

/// Filtered backprojection: cosine pre-weight, Hann-apodized ramp, weighted
/// fan-beam backprojection. Linear in the sinogram.
inline Image fbp(const Sinogram& s, const FanBeamGeometry& geom) {
    if (s.geom.num_views != geom.num_views || s.geom.num_bins != geom.num_bins)
        throw std::invalid_argument("fbp: sinogram/geometry shape mismatch");
    Sinogram q = ramp_filter(detail::fan_preweight(s));
    Image x(geom.grid, Unit::Mu);
    detail::fan_backproject_impl<false>(geom, q.v.data(), x.v.data());
    return x;
}

/// Vector-Jacobian product of forward_project: the adjoint, i.e. back_project.
inline Image vjp_forward_project(const Sinogram& grad_out, const FanBeamGeometry& geom) {
    return back_project(grad_out, geom);
}

/// Vector-Jacobian product of fbp: the adjoint of
/// backproject . ramp_filter . preweight, applied in reverse order.
inline Sinogram vjp_fbp(const Image& grad_out, const FanBeamGeometry& geom) {
    detail::require_paired(grad_out.grid, geom, "vjp_fbp");
    Image g_img = grad_out;  // scatter source; impl does not modify it
    Sinogram g(geom);
    detail::fan_backproject_impl<true>(geom, g.v.data(), g_img.v.data());
    return detail::fan_preweight(detail::ramp_filter_impl<true>(g));
}

}  // namespace sinomar
