#pragma once

#include "../geometry.hpp"
#include "ops.hpp"

namespace sinomar::nn {

/// Mean L1 between the prior-image prediction and ground truth.
inline Tensor loss_prior(Tape& tape, const Tensor& x_prior, const Tensor& x_gt) {
    return mean_abs(tape, sub(tape, x_prior, x_gt));
}

/// Mean L1 on the composited sinogram plus beta times the pre-composite
/// sinogram, both against ground truth. Defaults beta = 0.1.
inline Tensor loss_sino(Tape& tape, const Tensor& s_corr, const Tensor& s_corr_pre,
                        const Tensor& s_gt, double beta = 0.1) {
    if (beta < 0.0) throw std::invalid_argument("loss_sino: beta must be >= 0");
    Tensor a = mean_abs(tape, sub(tape, s_gt, s_corr));
    Tensor b = mean_abs(tape, sub(tape, s_gt, s_corr_pre));
    return weighted_sum(tape, {a, b}, {1.0, beta});
}

/// Reconstruction loss: mean |fbp(S_corr) - X_gt| over non-metal pixels,
/// computed in normalized HU (HU / image_scale). The gradient reaches S_corr
/// through the adjoint of the fbp operator.
inline Tensor loss_fbp(Tape& tape, const Tensor& s_corr, const Tensor& x_gt_norm,
                       const Tensor& keep01, const FanBeamGeometry& geom,
                       double image_scale = 1000.0) {
    Tensor x_mu = fbp_op(tape, s_corr, geom);
    // mu -> HU/scale is affine: HU = (mu/mu_water - 1) * 1000.
    Tensor x_norm = affine(tape, x_mu, 1000.0 / (kMuWaterPerMm * image_scale), -1000.0 / image_scale);
    return masked_mean_abs(tape, sub(tape, x_norm, x_gt_norm), keep01);
}

/// Total objective: L_prior + a1 * L_sino + a2 * L_FBP with defaults 1.0.
inline Tensor loss_total(Tape& tape, const Tensor& l_prior, const Tensor& l_sino,
                         const Tensor& l_fbp, double alpha1 = 1.0, double alpha2 = 1.0) {
    return weighted_sum(tape, {l_prior, l_sino, l_fbp}, {1.0, alpha1, alpha2});
}

}  // namespace sinomar::nn
