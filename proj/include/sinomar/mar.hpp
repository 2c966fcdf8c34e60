#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "image.hpp"
#include "projector.hpp"

namespace sinomar {

/// Metal segmentation by thresholding (default 2000 HU).
inline MetalMask segment_metal(const Image& x, double threshold_hu = 2000.0) {
    if (x.unit != Unit::HU) throw std::invalid_argument("segment_metal: image must be in HU");
    MetalMask mask(x.grid);
    for (size_t i = 0; i < x.v.size(); ++i) mask.m[i] = x.v[i] >= threshold_hu ? 1 : 0;
    return mask;
}

namespace detail {

inline std::vector<std::pair<int, int>> disk_offsets(int radius) {
    std::vector<std::pair<int, int>> offs;
    for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc)
            if (dr * dr + dc * dc <= radius * radius) offs.emplace_back(dr, dc);
    return offs;
}

}  // namespace detail

/// Morphological dilation with a disk structuring element.
inline MetalMask dilate_mask(const MetalMask& mask, int radius) {
    if (radius < 0) throw std::invalid_argument("dilate_mask: radius must be >= 0");
    if (radius == 0) return mask;
    const auto offs = detail::disk_offsets(radius);
    MetalMask out(mask.grid);
    const int H = mask.grid.height, W = mask.grid.width;
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            if (!mask.at(r, c)) continue;
            for (auto [dr, dc] : offs) {
                const int rr = r + dr, cc = c + dc;
                if (rr >= 0 && rr < H && cc >= 0 && cc < W) out.at(rr, cc) = 1;
            }
        }
    return out;
}

/// Morphological erosion with a disk structuring element. May return an
/// empty mask; callers must check.
inline MetalMask erode_mask(const MetalMask& mask, int radius) {
    if (radius < 0) throw std::invalid_argument("erode_mask: radius must be >= 0");
    if (radius == 0) return mask;
    const auto offs = detail::disk_offsets(radius);
    MetalMask out(mask.grid);
    const int H = mask.grid.height, W = mask.grid.width;
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            bool keep = true;
            for (auto [dr, dc] : offs) {
                const int rr = r + dr, cc = c + dc;
                if (rr < 0 || rr >= H || cc < 0 || cc >= W || !mask.at(rr, cc)) {
                    keep = false;
                    break;
                }
            }
            if (keep) out.at(r, c) = 1;
        }
    return out;
}

/// Metal trace: forward projection of the mask (as a unit-mu image) is
/// strictly positive wherever a ray intersects metal.
inline MetalTrace metal_trace(const MetalMask& mask, const FanBeamGeometry& geom) {
    if (!(mask.grid == geom.grid)) throw std::invalid_argument("metal_trace: grid mismatch");
    Image m_img(mask.grid, Unit::Mu);
    for (size_t i = 0; i < mask.m.size(); ++i) m_img.v[i] = mask.m[i] ? 1.0 : 0.0;
    Sinogram proj = forward_project(m_img, geom);
    MetalTrace tr(geom.num_views, geom.num_bins);
    for (size_t i = 0; i < proj.v.size(); ++i) tr.m[i] = proj.v[i] > 0.0 ? 1 : 0;
    return tr;
}

/// Replaces trace bins of each view row by linear interpolation between the
/// nearest unaffected bins. Bins outside the trace pass through unchanged.
inline Sinogram li_complete(const Sinogram& s, const MetalTrace& tr) {
    require_same_shape(s, tr, "li_complete");
    Sinogram out = s;
    const int B = s.geom.num_bins;
    for (int v = 0; v < s.geom.num_views; ++v) {
        int b = 0;
        while (b < B) {
            if (!tr.at(v, b)) {
                ++b;
                continue;
            }
            int run_start = b;
            while (b < B && tr.at(v, b)) ++b;
            int run_end = b - 1;
            if (run_start == 0 || run_end == B - 1)
                throw std::invalid_argument("li_complete: trace run touches the detector boundary");
            const double left = s.at(v, run_start - 1);
            const double right = s.at(v, run_end + 1);
            const int span = run_end - run_start + 2;
            for (int k = run_start; k <= run_end; ++k) {
                const double t = static_cast<double>(k - run_start + 1) / span;
                out.at(v, k) = left + t * (right - left);
            }
        }
    }
    return out;
}

/// Normalized completion against an explicit prior sinogram: divide, LI the
/// ratio, multiply back. Bins outside the trace are passed through.
inline Sinogram normalized_complete(const Sinogram& s, const MetalTrace& tr,
                                    const Sinogram& prior, double eps = 1e-6) {
    require_same_shape(s, prior, "normalized_complete");
    require_same_shape(s, tr, "normalized_complete");
    Sinogram ratio(s.geom);
    for (size_t i = 0; i < s.v.size(); ++i) ratio.v[i] = s.v[i] / std::max(prior.v[i], eps);
    Sinogram completed = li_complete(ratio, tr);
    Sinogram out = s;
    for (size_t i = 0; i < s.v.size(); ++i)
        if (tr.m[i]) out.v[i] = completed.v[i] * std::max(prior.v[i], eps);
    return out;
}

struct NmarOptions {
    double air_hu = -500.0;    // below: air
    double bone_hu = 350.0;    // above: kept as-is
    double metal_hu = 2000.0;  // above: replaced by soft tissue
    int metal_dilate_px = 2;   // halo margin replaced together with the metal
    double eps = 1e-6;
};

/// Tissue prior for NMAR: air, flat soft tissue, preserved bone. Metal pixels
/// are replaced by soft tissue together with a small dilated margin, which
/// keeps the bright reconstruction halo around implants from being mistaken
/// for bone.
inline Image nmar_prior_image(const Image& x_ma, const NmarOptions& opt = {}) {
    if (x_ma.unit != Unit::HU) throw std::invalid_argument("nmar_prior_image: image must be in HU");
    MetalMask metal = segment_metal(x_ma, opt.metal_hu);
    if (!metal.empty() && opt.metal_dilate_px > 0) metal = dilate_mask(metal, opt.metal_dilate_px);
    Image prior(x_ma.grid, Unit::HU);
    for (size_t i = 0; i < x_ma.v.size(); ++i) {
        const double hu = x_ma.v[i];
        if (metal.m[i]) prior.v[i] = 0.0;
        else if (hu >= opt.bone_hu) prior.v[i] = hu;
        else if (hu < opt.air_hu) prior.v[i] = -1000.0;
        else prior.v[i] = 0.0;
    }
    return prior;
}

/// NMAR completion: LI on the sinogram normalized by the forward projection
/// of a tissue prior built from the uncorrected image.
inline Sinogram nmar_complete(const Sinogram& s_ma, const MetalTrace& tr, const Image& x_ma,
                              const FanBeamGeometry& geom, const NmarOptions& opt = {}) {
    Image prior = nmar_prior_image(x_ma, opt);
    Sinogram s_prior = forward_project(prior.to_mu(), geom);
    return normalized_complete(s_ma, tr, s_prior, opt.eps);
}

/// Composite rule: network output inside the trace, LI sinogram outside.
/// Outside bins are copied, not recomputed, so they match s_li bit-exactly.
inline Sinogram composite(const Sinogram& s_net, const Sinogram& s_li, const MetalTrace& tr) {
    require_same_shape(s_net, s_li, "composite");
    require_same_shape(s_net, tr, "composite");
    Sinogram out(s_net.geom);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = tr.m[i] ? s_net.v[i] : s_li.v[i];
    return out;
}

}  // namespace sinomar
