#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "image.hpp"
#include "mar.hpp"
#include "projector.hpp"
#include "rng.hpp"

namespace sinomar {

enum class MetalMaterial { Titanium, Iron, Gold };

inline const char* metal_name(MetalMaterial m) {
    switch (m) {
        case MetalMaterial::Titanium: return "titanium";
        case MetalMaterial::Iron: return "iron";
        default: return "gold";
    }
}

inline MetalMaterial metal_from_name(const std::string& s) {
    if (s == "titanium") return MetalMaterial::Titanium;
    if (s == "iron") return MetalMaterial::Iron;
    if (s == "gold") return MetalMaterial::Gold;
    throw std::invalid_argument("unknown metal material: " + s);
}

/// Polychromatic source description. Fluence fractions sum to one;
/// total_photons is the expected count per detector bin in air.
struct Spectrum {
    std::vector<double> energies;  // keV bin centers, strictly increasing
    std::vector<double> fluence;   // fraction per bin
    double total_photons = 2e7;

    void validate() const {
        if (energies.size() != fluence.size() || energies.empty())
            throw std::invalid_argument("Spectrum: energies/fluence size mismatch");
        double sum = 0.0, prev = 10.0;
        for (size_t i = 0; i < energies.size(); ++i) {
            if (energies[i] <= prev) throw std::invalid_argument("Spectrum: energies must be increasing and > 10 keV");
            if (fluence[i] < 0.0) throw std::invalid_argument("Spectrum: fluence must be nonnegative");
            prev = energies[i];
            sum += fluence[i];
        }
        if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("Spectrum: fluence must sum to 1");
        if (!(total_photons > 0.0)) throw std::invalid_argument("Spectrum: total_photons must be > 0");
    }
};

namespace xray {

inline constexpr double kReferenceEnergyKeV = 70.0;

// Mass attenuation coefficients mu/rho (cm^2/g), approximate NIST XCOM values
// on a 10-bin grid approximating a filtered 120 kVp beam. The water value at
// 70 keV is pinned to 0.1930 cm^2/g so the tabulated physics agrees with the
// kMuWaterPerMm reference used for the HU conversion.
inline constexpr std::array<double, 10> kEnergies = {30, 40, 50, 60, 70, 80, 90, 100, 110, 120};
inline constexpr std::array<double, 10> kWaterMuRho = {0.3756, 0.2683, 0.2269, 0.2059, 0.1930,
                                                       0.1837, 0.1766, 0.1707, 0.1656, 0.1611};
inline constexpr std::array<double, 10> kBoneMuRho = {1.3310, 0.6655, 0.4242, 0.3148, 0.2640,
                                                      0.2229, 0.2030, 0.1855, 0.1780, 0.1720};
inline constexpr std::array<double, 10> kTitaniumMuRho = {1.2130, 0.5708, 0.3565, 0.2721, 0.2380,
                                                          0.2042, 0.1910, 0.1793, 0.1730, 0.1675};
inline constexpr std::array<double, 10> kIronMuRho = {8.1760, 3.6290, 1.9580, 1.2050, 0.8300,
                                                      0.5952, 0.4690, 0.3717, 0.3170, 0.2790};
// Gold has its K-edge at 80.7 keV, hence the jump between the 80 and 90 bins.
inline constexpr std::array<double, 10> kGoldMuRho = {22.000, 9.9000, 5.3000, 3.2000, 2.1000,
                                                      1.5000, 5.5000, 4.2000, 3.3000, 2.7000};

inline double interp_murho(const std::array<double, 10>& table, double energy_kev) {
    if (energy_kev <= kEnergies.front()) return table.front();
    if (energy_kev >= kEnergies.back()) return table.back();
    size_t i = 0;
    while (kEnergies[i + 1] < energy_kev) ++i;
    const double t = (energy_kev - kEnergies[i]) / (kEnergies[i + 1] - kEnergies[i]);
    return table[i] + t * (table[i + 1] - table[i]);
}

/// Attenuation per unit density and per mm of path, i.e. mu/rho scaled from
/// cm^2/g to (mm^-1 per g/cc).
inline double water_att_mm(double e) { return 0.1 * interp_murho(kWaterMuRho, e); }
inline double bone_att_mm(double e) { return 0.1 * interp_murho(kBoneMuRho, e); }
inline double metal_att_mm(MetalMaterial m, double e) {
    switch (m) {
        case MetalMaterial::Titanium: return 0.1 * interp_murho(kTitaniumMuRho, e);
        case MetalMaterial::Iron: return 0.1 * interp_murho(kIronMuRho, e);
        default: return 0.1 * interp_murho(kGoldMuRho, e);
    }
}

}  // namespace xray

/// 120 kVp-like spectrum on the tabulated 10-bin energy grid (lightly
/// filtered bremsstrahlung shape).
inline Spectrum default_spectrum(double total_photons = 2e7) {
    Spectrum s;
    s.energies.assign(xray::kEnergies.begin(), xray::kEnergies.end());
    s.fluence = {0.10, 0.14, 0.15, 0.14, 0.13, 0.11, 0.09, 0.06, 0.05, 0.03};
    s.total_photons = total_photons;
    return s;
}

/// Monochromatic spectrum at the reference energy (useful for tests).
inline Spectrum mono_spectrum(double energy_kev = xray::kReferenceEnergyKeV,
                              double total_photons = 2e7) {
    Spectrum s;
    s.energies = {energy_kev};
    s.fluence = {1.0};
    s.total_photons = total_photons;
    return s;
}

/// Per-pixel material densities relative to water = 1 g/cc. Bone and metal
/// supports are disjoint; metal replaces everything beneath its mask.
struct MaterialMap {
    ImageGrid grid;
    std::vector<double> water_density;
    std::vector<double> bone_density;
    std::vector<double> metal_density;
    MetalMaterial metal_material = MetalMaterial::Titanium;

    MaterialMap() = default;
    explicit MaterialMap(const ImageGrid& g)
        : grid(g),
          water_density(static_cast<size_t>(g.pixels()), 0.0),
          bone_density(static_cast<size_t>(g.pixels()), 0.0),
          metal_density(static_cast<size_t>(g.pixels()), 0.0) {}
};

inline constexpr double kBoneThresholdHU = 350.0;

/// Threshold-based soft-tissue / bone split of an HU image. Densities are
/// scaled so the monochromatic projection at the reference energy equals the
/// line integral of the HU-derived mu image.
inline MaterialMap decompose(const Image& x) {
    if (x.unit != Unit::HU) throw std::invalid_argument("decompose: image must be in HU");
    MaterialMap m(x.grid);
    const double bone_att_ref = xray::bone_att_mm(xray::kReferenceEnergyKeV);
    for (size_t i = 0; i < x.v.size(); ++i) {
        const double hu = x.v[i];
        const double mu_ref = hu_to_mu(hu);
        if (hu > kBoneThresholdHU) {
            m.bone_density[i] = std::max(0.0, mu_ref / bone_att_ref);
        } else {
            m.water_density[i] = std::max(0.0, 1.0 + hu / 1000.0);
        }
    }
    return m;
}

/// Places metal of the given density on the mask; other materials are zeroed
/// beneath it.
inline MaterialMap insert_metal(const MaterialMap& m, const MetalMask& mask,
                                MetalMaterial material, double density_gcc) {
    if (mask.empty()) throw std::invalid_argument("insert_metal: empty mask");
    if (!(mask.grid == m.grid)) throw std::invalid_argument("insert_metal: grid mismatch");
    MaterialMap out = m;
    out.metal_material = material;
    for (size_t i = 0; i < mask.m.size(); ++i) {
        if (mask.m[i]) {
            out.metal_density[i] = density_gcc;
            out.water_density[i] = 0.0;
            out.bone_density[i] = 0.0;
        }
    }
    return out;
}

struct SimulationStats {
    size_t starved_bins = 0;  // bins clamped at 1 photon
};

/// Polychromatic acquisition of a material map: Beer-Lambert attenuation per
/// energy bin, partial volume via 3 equiangular sub-rays averaged in the
/// intensity domain, Poisson counting noise, log transform. With
/// `add_noise = false` the expectation is returned (used by tests and by the
/// beam-hardening monotonicity property).
inline Sinogram polychromatic_sinogram(const MaterialMap& m, const Spectrum& spec,
                                       const FanBeamGeometry& geom, RandomStream* noise,
                                       SimulationStats* stats = nullptr, int sub_rays = 3) {
    spec.validate();
    if (!(m.grid == geom.grid)) throw std::invalid_argument("polychromatic_sinogram: grid mismatch");
    if (sub_rays < 1) throw std::invalid_argument("polychromatic_sinogram: sub_rays must be >= 1");

    const int n_energy = static_cast<int>(spec.energies.size());
    const int kSubRays = sub_rays;
    std::vector<double> sub_offsets(kSubRays);
    for (int s = 0; s < kSubRays; ++s)
        sub_offsets[s] = (s + 0.5) / kSubRays - 0.5;  // equiangular within the bin

    // Material line integrals for each sub-ray offset.
    auto project_density = [&](const std::vector<double>& density, double off) {
        Image img(m.grid, Unit::Mu);
        img.v = density;
        return forward_project(img, geom, off);
    };

    std::vector<Sinogram> water_li(kSubRays), bone_li(kSubRays), metal_li(kSubRays);
    for (int s = 0; s < kSubRays; ++s) {
        water_li[s] = project_density(m.water_density, sub_offsets[s]);
        bone_li[s] = project_density(m.bone_density, sub_offsets[s]);
        metal_li[s] = project_density(m.metal_density, sub_offsets[s]);
    }

    std::vector<double> att_water(n_energy), att_bone(n_energy), att_metal(n_energy);
    for (int e = 0; e < n_energy; ++e) {
        att_water[e] = xray::water_att_mm(spec.energies[e]);
        att_bone[e] = xray::bone_att_mm(spec.energies[e]);
        att_metal[e] = xray::metal_att_mm(m.metal_material, spec.energies[e]);
    }

    const double I0 = spec.total_photons;
    Sinogram out(geom);
    for (int v = 0; v < geom.num_views; ++v) {
        for (int b = 0; b < geom.num_bins; ++b) {
            double intensity = 0.0;
            for (int s = 0; s < kSubRays; ++s) {
                const double lw = water_li[s].at(v, b);
                const double lb = bone_li[s].at(v, b);
                const double lm = metal_li[s].at(v, b);
                for (int e = 0; e < n_energy; ++e) {
                    intensity += spec.fluence[e] * I0 *
                                 std::exp(-(att_water[e] * lw + att_bone[e] * lb + att_metal[e] * lm));
                }
            }
            intensity /= kSubRays;
            if (noise != nullptr) {
                double sampled = static_cast<double>(noise->poisson(intensity));
                if (sampled < 1.0) {
                    sampled = 1.0;  // photon starvation clamp
                    if (stats != nullptr) ++stats->starved_bins;
                }
                out.at(v, b) = -std::log(sampled / I0);
            } else {
                out.at(v, b) = -std::log(std::max(intensity, 1.0) / I0);
            }
        }
    }
    return out;
}

/// One simulated training/evaluation example.
struct CasePair {
    Sinogram s_ma;   // metal-corrupted, noisy, polychromatic
    Image x_ma;      // its FBP reconstruction (HU)
    Sinogram s_gt;   // clean monochromatic line integrals
    Image x_gt;      // clean HU image
    MetalMask mask;
    MetalTrace trace;
    SimulationStats stats;
};

struct SimulationOptions {
    MetalMaterial material = MetalMaterial::Titanium;
    double metal_density_gcc = 4.5;
    Spectrum spectrum = default_spectrum();
};

inline constexpr double kMetalThresholdHU = 2000.0;

/// Full corruption pipeline for one clean image + metal mask. Deterministic
/// given (seed, case_id): the noise stream is counter-based and indexed by
/// the pair.
inline CasePair simulate_case(const Image& x_clean, const MetalMask& mask,
                              const FanBeamGeometry& geom, uint64_t seed, uint64_t case_id = 0,
                              const SimulationOptions& opt = {}) {
    if (x_clean.unit != Unit::HU) throw std::invalid_argument("simulate_case: clean image must be in HU");
    for (double hu : x_clean.v)
        if (hu >= kMetalThresholdHU)
            throw std::invalid_argument("simulate_case: clean image contains metal-range HU");

    CasePair cp;
    cp.x_gt = x_clean;
    cp.s_gt = forward_project(x_clean.to_mu(), geom);
    cp.mask = mask;

    MaterialMap mm = decompose(x_clean);
    if (!mask.empty()) mm = insert_metal(mm, mask, opt.material, opt.metal_density_gcc);

    RandomStream noise(seed, case_id);
    cp.s_ma = polychromatic_sinogram(mm, opt.spectrum, geom, &noise, &cp.stats);
    cp.x_ma = fbp(cp.s_ma, geom).to_hu();
    cp.trace = mask.empty() ? MetalTrace(geom.num_views, geom.num_bins) : metal_trace(mask, geom);
    return cp;
}

}  // namespace sinomar
