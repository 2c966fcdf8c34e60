#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sinomar {

inline constexpr double kPi = 3.14159265358979323846;

/// Reference attenuation of water (mm^-1) at the 70 keV reference energy.
/// Fixes the HU <-> mu conversion: mu = kMuWater * (1 + HU / 1000).
inline constexpr double kMuWaterPerMm = 0.0193;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Square pixel lattice with its physical origin at the grid center.
/// Row 0 sits at +y; columns increase toward +x.
struct ImageGrid {
    int height = 0;
    int width = 0;
    double pixel_size = 1.0;  // mm per pixel

    ImageGrid() = default;
    ImageGrid(int h, int w, double px) : height(h), width(w), pixel_size(px) {
        if (h < 8 || w < 8) throw std::invalid_argument("ImageGrid: size must be >= 8");
        if (!(px > 0.0)) throw std::invalid_argument("ImageGrid: pixel_size must be > 0");
    }

    int pixels() const { return height * width; }
    double physical_width() const { return width * pixel_size; }
    double physical_height() const { return height * pixel_size; }
    /// Diagonal of the physical field of view in mm.
    double fov_diagonal() const {
        return pixel_size * std::sqrt(double(height) * height + double(width) * width);
    }

    /// Physical position (mm) of a pixel center, fractional indices allowed.
    Vec2 pixel_center(double row, double col) const {
        return {(col - (width - 1) / 2.0) * pixel_size,
                ((height - 1) / 2.0 - row) * pixel_size};
    }

    bool operator==(const ImageGrid& o) const {
        return height == o.height && width == o.width && pixel_size == o.pixel_size;
    }
};

/// Circular fan-beam acquisition with an equiangular (curved) detector.
/// View angles are counterclockwise from the +x axis, uniformly covering
/// angular_range starting at 0. The center bin of the odd-sized detector
/// lies on the central ray through the isocenter.
struct FanBeamGeometry {
    int num_views = 0;
    int num_bins = 0;
    double angular_range = 2.0 * kPi;       // radians
    double source_to_isocenter = 0.0;       // mm
    double source_to_detector = 0.0;        // mm
    double detector_arc = 0.0;              // bin pitch in radians
    ImageGrid grid;                         // paired image lattice

    FanBeamGeometry() = default;
    FanBeamGeometry(const ImageGrid& g, int views, int bins, double range,
                    double s2i, double s2d, double arc)
        : num_views(views), num_bins(bins), angular_range(range),
          source_to_isocenter(s2i), source_to_detector(s2d), detector_arc(arc),
          grid(g) {
        validate();
    }

    void validate() const {
        if (num_views < 4) throw std::invalid_argument("FanBeamGeometry: num_views must be >= 4");
        if (num_bins < 3 || num_bins % 2 == 0)
            throw std::invalid_argument("FanBeamGeometry: num_bins must be odd and >= 3");
        if (!(source_to_detector > source_to_isocenter && source_to_isocenter > 0.0))
            throw std::invalid_argument("FanBeamGeometry: need source_to_detector > source_to_isocenter > 0");
        if (!(detector_arc > 0.0))
            throw std::invalid_argument("FanBeamGeometry: detector_arc must be > 0");
        // The fan must subtend the full field of view (no truncation).
        double fov_radius = 0.5 * grid.fov_diagonal();
        double covered = source_to_isocenter * std::sin(half_fan_angle());
        if (covered < fov_radius)
            throw std::invalid_argument("FanBeamGeometry: detector arc does not cover the field of view");
    }

    double view_angle(int view) const { return view * angular_range / num_views; }

    std::vector<double> view_angles() const {
        std::vector<double> a(num_views);
        for (int v = 0; v < num_views; ++v) a[v] = view_angle(v);
        return a;
    }

    int center_bin() const { return (num_bins - 1) / 2; }

    /// Fan angle of a (possibly fractional) detector bin index.
    double bin_angle(double bin) const { return (bin - center_bin()) * detector_arc; }

    double half_fan_angle() const { return bin_angle(num_bins - 1); }

    Vec2 source_position(int view) const {
        double beta = view_angle(view);
        return {source_to_isocenter * std::cos(beta), source_to_isocenter * std::sin(beta)};
    }

    /// Unit direction of the (view, bin) ray, from source toward detector.
    Vec2 ray_direction(int view, double bin) const {
        double beta = view_angle(view);
        double gamma = bin_angle(bin);
        // Central direction points from source to isocenter; rotate by gamma.
        double cx = -std::cos(beta), cy = -std::sin(beta);
        double cg = std::cos(gamma), sg = std::sin(gamma);
        return {cg * cx - sg * cy, sg * cx + cg * cy};
    }

    bool operator==(const FanBeamGeometry& o) const {
        return num_views == o.num_views && num_bins == o.num_bins &&
               angular_range == o.angular_range &&
               source_to_isocenter == o.source_to_isocenter &&
               source_to_detector == o.source_to_detector &&
               detector_arc == o.detector_arc && grid == o.grid;
    }
};

struct RaySegment {
    Vec2 source;
    Vec2 detector;
};

/// Source and detector-element positions of one ray.
inline RaySegment ray_endpoints(const FanBeamGeometry& geom, int view, int bin) {
    if (view < 0 || view >= geom.num_views || bin < 0 || bin >= geom.num_bins)
        throw std::out_of_range("ray_endpoints: view/bin out of range");
    Vec2 s = geom.source_position(view);
    Vec2 d = geom.ray_direction(view, bin);
    return {s, s + geom.source_to_detector * d};
}

namespace detail {

/// Scanner distances and detector pitch for a given grid. The source sits at
/// 2.5 FOV diagonals, the detector at twice that, and the equiangular arc
/// covers the field of view with a 2% margin.
inline FanBeamGeometry make_geometry(const ImageGrid& grid, int views, int bins) {
    double diag = grid.fov_diagonal();
    double s2i = 2.5 * diag;
    double s2d = 2.0 * s2i;
    double half_fan = std::asin(1.02 * (0.5 * diag) / s2i);
    double arc = 2.0 * half_fan / (bins - 1);
    return FanBeamGeometry(grid, views, bins, 2.0 * kPi, s2i, s2d, arc);
}

}  // namespace detail

/// The acquisition used throughout: 416x416 image, 640 views over a full
/// turn, 641 detector bins.
inline std::pair<ImageGrid, FanBeamGeometry> paper_geometry() {
    ImageGrid grid(416, 416, 1.0);
    return {grid, detail::make_geometry(grid, 640, 641)};
}

/// Desk-scale n x n variant. Views scale proportionally (rounded up to even),
/// bins are the next odd count >= views + 1, and the physical field of view is
/// kept fixed so toy_geometry(416) coincides with paper_geometry().
inline std::pair<ImageGrid, FanBeamGeometry> toy_geometry(int n) {
    if (n < 8) throw std::invalid_argument("toy_geometry: n must be >= 8");
    int views = static_cast<int>(std::ceil(640.0 * n / 416.0));
    if (views % 2 != 0) ++views;
    int bins = views + 1;
    ImageGrid grid(n, n, 416.0 / n);
    return {grid, detail::make_geometry(grid, views, bins)};
}

}  // namespace sinomar
