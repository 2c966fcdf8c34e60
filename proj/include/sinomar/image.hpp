#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"

namespace sinomar {

enum class Unit { HU, Mu };

inline const char* unit_name(Unit u) { return u == Unit::HU ? "HU" : "mu"; }

inline double hu_to_mu(double hu) { return kMuWaterPerMm * (1.0 + hu / 1000.0); }
inline double mu_to_hu(double mu) { return (mu / kMuWaterPerMm - 1.0) * 1000.0; }

/// 2-D attenuation image on an ImageGrid, tagged HU or mu (mm^-1).
struct Image {
    ImageGrid grid;
    Unit unit = Unit::HU;
    std::vector<double> v;  // row-major, row 0 at +y

    Image() = default;
    Image(const ImageGrid& g, Unit u, double fill = 0.0)
        : grid(g), unit(u), v(static_cast<size_t>(g.pixels()), fill) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * grid.width + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * grid.width + c]; }

    Image to_mu() const {
        if (unit == Unit::Mu) return *this;
        Image out(grid, Unit::Mu);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = hu_to_mu(v[i]);
        return out;
    }

    Image to_hu() const {
        if (unit == Unit::HU) return *this;
        Image out(grid, Unit::HU);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = mu_to_hu(v[i]);
        return out;
    }
};

/// Post-log line integrals on a num_views x num_bins lattice (views-major).
struct Sinogram {
    FanBeamGeometry geom;
    std::vector<double> v;

    Sinogram() = default;
    explicit Sinogram(const FanBeamGeometry& g, double fill = 0.0)
        : geom(g), v(static_cast<size_t>(g.num_views) * g.num_bins, fill) {}

    double& at(int view, int bin) { return v[static_cast<size_t>(view) * geom.num_bins + bin]; }
    double at(int view, int bin) const { return v[static_cast<size_t>(view) * geom.num_bins + bin]; }
};

/// Binary metal mask in the image domain.
struct MetalMask {
    ImageGrid grid;
    std::vector<uint8_t> m;

    MetalMask() = default;
    explicit MetalMask(const ImageGrid& g) : grid(g), m(static_cast<size_t>(g.pixels()), 0) {}

    uint8_t& at(int r, int c) { return m[static_cast<size_t>(r) * grid.width + c]; }
    uint8_t at(int r, int c) const { return m[static_cast<size_t>(r) * grid.width + c]; }

    size_t count() const {
        size_t n = 0;
        for (uint8_t b : m) n += b;
        return n;
    }
    bool empty() const { return count() == 0; }
};

/// Binary metal-trace mask in the sinogram domain.
struct MetalTrace {
    int num_views = 0;
    int num_bins = 0;
    std::vector<uint8_t> m;

    MetalTrace() = default;
    MetalTrace(int views, int bins)
        : num_views(views), num_bins(bins), m(static_cast<size_t>(views) * bins, 0) {}

    uint8_t& at(int view, int bin) { return m[static_cast<size_t>(view) * num_bins + bin]; }
    uint8_t at(int view, int bin) const { return m[static_cast<size_t>(view) * num_bins + bin]; }

    size_t count() const {
        size_t n = 0;
        for (uint8_t b : m) n += b;
        return n;
    }
    bool empty() const { return count() == 0; }
};

inline void require_same_shape(const Sinogram& a, const Sinogram& b, const char* what) {
    if (a.geom.num_views != b.geom.num_views || a.geom.num_bins != b.geom.num_bins)
        throw std::invalid_argument(std::string(what) + ": sinogram shape mismatch");
}

inline void require_same_shape(const Sinogram& a, const MetalTrace& t, const char* what) {
    if (a.geom.num_views != t.num_views || a.geom.num_bins != t.num_bins)
        throw std::invalid_argument(std::string(what) + ": trace shape mismatch");
}

}  // namespace sinomar
