#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "image.hpp"
#include "rng.hpp"

namespace sinomar {

/// Rotated ellipse with a cosine-tapered edge; `value` is added to the image
/// inside the ellipse, fading to zero over `taper` (in units of the ellipse
/// radius, i.e. normalized coordinates).
struct Ellipse {
    double cx = 0.0, cy = 0.0;   // center, fraction of half-FOV [-1, 1]
    double ax = 0.5, ay = 0.5;   // semi-axes, fraction of half-FOV
    double angle = 0.0;          // radians
    double value = 0.0;          // HU increment
    double taper = 0.08;         // edge softness in normalized radius
};

/// Renders ellipses additively onto an HU image initialized to air (-1000).
/// Coordinates are normalized so that +-1 spans the inscribed circle radius.
inline Image render_phantom(const ImageGrid& grid, const std::vector<Ellipse>& parts) {
    Image img(grid, Unit::HU, -1000.0);
    const double half = 0.5 * std::min(grid.physical_width(), grid.physical_height());
    for (int r = 0; r < grid.height; ++r) {
        for (int c = 0; c < grid.width; ++c) {
            const Vec2 p = grid.pixel_center(r, c);
            const double px = p.x / half, py = p.y / half;
            double acc = 0.0;
            for (const Ellipse& e : parts) {
                const double dx = px - e.cx, dy = py - e.cy;
                const double ca = std::cos(e.angle), sa = std::sin(e.angle);
                const double u = (ca * dx + sa * dy) / e.ax;
                const double w = (-sa * dx + ca * dy) / e.ay;
                const double rho = std::sqrt(u * u + w * w);
                if (rho <= 1.0 - e.taper) {
                    acc += e.value;
                } else if (rho < 1.0) {
                    acc += e.value * 0.5 * (1.0 + std::cos(kPi * (rho - (1.0 - e.taper)) / e.taper));
                }
            }
            img.at(r, c) += acc;
        }
    }
    return img;
}

/// Fixed smooth test object: a soft-tissue body with a few internal features.
/// Used by operator round-trip tests.
inline Image smooth_ellipse_phantom(const ImageGrid& grid) {
    std::vector<Ellipse> parts;
    parts.push_back({0.0, 0.0, 0.72, 0.60, 0.3, 1030.0, 0.12});   // body: ~30 HU soft tissue
    parts.push_back({0.18, 0.12, 0.22, 0.16, -0.4, 60.0, 0.25});
    parts.push_back({-0.25, -0.10, 0.18, 0.24, 0.9, -80.0, 0.25});
    parts.push_back({0.05, -0.28, 0.12, 0.10, 0.0, 45.0, 0.30});
    return render_phantom(grid, parts);
}

/// Uniform disk of the given HU value, cosine-tapered edge.
inline Image disk_phantom(const ImageGrid& grid, double radius_frac, double hu, double taper = 0.04) {
    return render_phantom(grid, {{0.0, 0.0, radius_frac, radius_frac, 0.0, hu + 1000.0, taper}});
}

/// Random anatomy-like phantom: body ellipse near water, a few soft-tissue
/// inserts, one or two bone ellipses. HU stays well below the metal range.
inline Image random_phantom(const ImageGrid& grid, RandomStream& rng) {
    std::vector<Ellipse> parts;
    Ellipse body;
    body.cx = rng.uniform(-0.05, 0.05);
    body.cy = rng.uniform(-0.05, 0.05);
    body.ax = rng.uniform(0.58, 0.74);
    body.ay = rng.uniform(0.52, 0.68);
    body.angle = rng.uniform(-0.4, 0.4);
    body.value = 1000.0 + rng.uniform(-30.0, 40.0);
    body.taper = 0.10;
    parts.push_back(body);

    const int n_soft = rng.uniform_int(2, 5);
    for (int i = 0; i < n_soft; ++i) {
        Ellipse e;
        e.cx = body.cx + rng.uniform(-0.3, 0.3) * body.ax;
        e.cy = body.cy + rng.uniform(-0.3, 0.3) * body.ay;
        e.ax = rng.uniform(0.08, 0.24);
        e.ay = rng.uniform(0.08, 0.24);
        e.angle = rng.uniform(0.0, kPi);
        e.value = rng.uniform(-120.0, 120.0);
        e.taper = 0.25;
        parts.push_back(e);
    }

    const int n_bone = rng.uniform_int(1, 2);
    for (int i = 0; i < n_bone; ++i) {
        Ellipse e;
        e.cx = body.cx + rng.uniform(-0.45, 0.45) * body.ax;
        e.cy = body.cy + rng.uniform(-0.45, 0.45) * body.ay;
        e.ax = rng.uniform(0.05, 0.12);
        e.ay = rng.uniform(0.05, 0.12);
        e.angle = rng.uniform(0.0, kPi);
        e.value = rng.uniform(450.0, 1000.0);
        e.taper = 0.20;
        parts.push_back(e);
    }

    Image img = render_phantom(grid, parts);
    for (double& v : img.v) v = std::min(v, 1500.0);
    return img;
}

namespace detail {

inline void fill_disk(MetalMask& mask, double cx, double cy, double radius) {
    const ImageGrid& g = mask.grid;
    const double half = 0.5 * std::min(g.physical_width(), g.physical_height());
    for (int r = 0; r < g.height; ++r)
        for (int c = 0; c < g.width; ++c) {
            const Vec2 p = g.pixel_center(r, c);
            const double dx = p.x / half - cx, dy = p.y / half - cy;
            if (dx * dx + dy * dy <= radius * radius) mask.at(r, c) = 1;
        }
}

inline void fill_polygon(MetalMask& mask, const std::vector<Vec2>& verts) {
    const ImageGrid& g = mask.grid;
    const double half = 0.5 * std::min(g.physical_width(), g.physical_height());
    const int n = static_cast<int>(verts.size());
    for (int r = 0; r < g.height; ++r)
        for (int c = 0; c < g.width; ++c) {
            const Vec2 p = g.pixel_center(r, c);
            const double px = p.x / half, py = p.y / half;
            bool inside = false;
            for (int i = 0, j = n - 1; i < n; j = i++) {
                if (((verts[i].y > py) != (verts[j].y > py)) &&
                    (px < (verts[j].x - verts[i].x) * (py - verts[i].y) /
                                  (verts[j].y - verts[i].y) +
                              verts[i].x))
                    inside = !inside;
            }
            if (inside) mask.at(r, c) = 1;
        }
}

inline std::vector<Vec2> random_convex_polygon(RandomStream& rng, double cx, double cy, double radius) {
    const int n = rng.uniform_int(5, 7);
    std::vector<Vec2> verts(n);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    for (int i = 0; i < n; ++i) {
        const double ang = phase + 2.0 * kPi * i / n;
        const double rad = radius * rng.uniform(0.7, 1.0);
        verts[i] = {cx + rad * std::cos(ang), cy + rad * std::sin(ang)};
    }
    return verts;
}

}  // namespace detail

inline constexpr int kNumMaskFamilies = 6;

/// Procedural metal-implant masks drawn from one of kNumMaskFamilies shape
/// families. Families are disjoint by construction, which lets dataset
/// generation hold entire families out for testing.
inline MetalMask random_metal_mask(const ImageGrid& grid, int family, RandomStream& rng) {
    MetalMask mask(grid);
    const double min_px = std::max(2.5, 0.04 * std::min(grid.height, grid.width));
    const double half_px = 0.5 * std::min(grid.height, grid.width);
    const double rmin = min_px / half_px;                 // normalized radii
    const double rmax = 1.8 * rmin;
    auto rand_center = [&](double spread) {
        return Vec2{rng.uniform(-spread, spread), rng.uniform(-spread, spread)};
    };
    switch (family % kNumMaskFamilies) {
        case 0: {  // one disk
            Vec2 c = rand_center(0.35);
            detail::fill_disk(mask, c.x, c.y, rng.uniform(rmin, rmax));
            break;
        }
        case 1: {  // two disks (classic dark-band configuration)
            const double sep = rng.uniform(0.3, 0.5);
            const double ang = rng.uniform(0.0, kPi);
            Vec2 c = rand_center(0.15);
            detail::fill_disk(mask, c.x + sep * std::cos(ang), c.y + sep * std::sin(ang),
                              rng.uniform(rmin, rmax));
            detail::fill_disk(mask, c.x - sep * std::cos(ang), c.y - sep * std::sin(ang),
                              rng.uniform(rmin, rmax));
            break;
        }
        case 2: {  // three small disks
            for (int i = 0; i < 3; ++i) {
                Vec2 c = rand_center(0.4);
                detail::fill_disk(mask, c.x, c.y, rng.uniform(rmin, 1.3 * rmin));
            }
            break;
        }
        case 3: {  // elongated disk pair (screw-like)
            Vec2 c = rand_center(0.3);
            const double ang = rng.uniform(0.0, kPi);
            const double len = rng.uniform(0.12, 0.22);
            const int beads = 5;
            for (int i = 0; i < beads; ++i) {
                const double t = (i / double(beads - 1) - 0.5) * 2.0;
                detail::fill_disk(mask, c.x + t * len * std::cos(ang),
                                  c.y + t * len * std::sin(ang), rmin);
            }
            break;
        }
        case 4: {  // convex polygon
            Vec2 c = rand_center(0.3);
            detail::fill_polygon(mask, detail::random_convex_polygon(rng, c.x, c.y,
                                                                     rng.uniform(1.2 * rmin, 2.2 * rmin)));
            break;
        }
        default: {  // polygon + disk
            Vec2 c1 = rand_center(0.35);
            Vec2 c2 = rand_center(0.35);
            detail::fill_polygon(mask, detail::random_convex_polygon(rng, c1.x, c1.y,
                                                                     rng.uniform(1.1 * rmin, 1.8 * rmin)));
            detail::fill_disk(mask, c2.x, c2.y, rng.uniform(rmin, rmax));
            break;
        }
    }
    if (mask.empty()) {  // degenerate draw; fall back to a centered disk
        detail::fill_disk(mask, 0.0, 0.0, rmax);
    }
    return mask;
}

}  // namespace sinomar
