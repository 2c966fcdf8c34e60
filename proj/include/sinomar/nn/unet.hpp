#pragma once

#include <string>
#include <vector>

#include "../rng.hpp"
#include "ops.hpp"

namespace sinomar::nn {

inline constexpr double kLeakySlope = 0.2;

struct ConvLayer {
    Tensor w;  // (Cout, Cin, 3, 3)
    Tensor b;  // (Cout)
    int stride = 1;
};

/// Encoder-decoder with 4 resolution scales and channel widths
/// (base, 2*base, 4*base, 8*base); skips by concatenation, LeakyReLU
/// activations, zero-initialized output layer so the residual nets start as
/// the identity refinement. With `mask_pyramid` enabled, a max-pooled copy of
/// the mask channel is concatenated to the features entering every
/// coarser-scale block (encoder and decoder), so thin traces survive
/// downsampling.
struct UNetConfig {
    int in_channels = 2;
    int out_channels = 1;
    int base_channels = 32;  // half of the 64-channel U-Net baseline
    bool mask_pyramid = false;
};

class UNet {
  public:
    UNet() = default;

    UNet(const UNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
        const int W = cfg.base_channels;
        const int mp = cfg.mask_pyramid ? 1 : 0;
        enc1a_ = make_conv(cfg.in_channels, W, 1);
        enc1b_ = make_conv(W, W, 1);
        down1_ = make_conv(W, 2 * W, 2);
        enc2_ = make_conv(2 * W + mp, 2 * W, 1);
        down2_ = make_conv(2 * W, 4 * W, 2);
        enc3_ = make_conv(4 * W + mp, 4 * W, 1);
        down3_ = make_conv(4 * W, 8 * W, 2);
        enc4_ = make_conv(8 * W + mp, 8 * W, 1);
        up3_ = make_conv(8 * W, 4 * W, 1);
        dec3_ = make_conv(8 * W + mp, 4 * W, 1);
        up2_ = make_conv(4 * W, 2 * W, 1);
        dec2_ = make_conv(4 * W + mp, 2 * W, 1);
        up1_ = make_conv(2 * W, W, 1);
        dec1_ = make_conv(2 * W + mp, W, 1);
        out_ = make_conv(W, cfg.out_channels, 1);
        init_weights(seed);
    }

    const UNetConfig& config() const { return cfg_; }

    /// Parameters in declaration order (checkpoint and optimizer order).
    std::vector<Tensor> parameters() const {
        std::vector<Tensor> ps;
        for (const ConvLayer* l : layers())
            for (const Tensor& t : {l->w, l->b}) ps.push_back(t);
        return ps;
    }

    /// Forward pass. `mask` is required when the mask pyramid is enabled and
    /// must be a single-channel tensor of the input's spatial shape.
    Tensor forward(Tape& tape, const Tensor& x, const Tensor& mask = nullptr) const {
        if (cfg_.mask_pyramid && !mask)
            throw std::invalid_argument("UNet: mask pyramid requires a mask input");

        Tensor m0 = mask, m1, m2, m3;
        if (cfg_.mask_pyramid) {
            m1 = maxpool2(tape, m0);
            m2 = maxpool2(tape, m1);
            m3 = maxpool2(tape, m2);
        }
        auto with_mask = [&](Tensor t, const Tensor& m) {
            return cfg_.mask_pyramid ? concat(tape, t, m) : t;
        };

        Tensor f1 = act(tape, apply(tape, enc1b_, act(tape, apply(tape, enc1a_, x))));
        Tensor f2 = act(tape, apply(tape, enc2_, with_mask(act(tape, apply(tape, down1_, f1)), m1)));
        Tensor f3 = act(tape, apply(tape, enc3_, with_mask(act(tape, apply(tape, down2_, f2)), m2)));
        Tensor f4 = act(tape, apply(tape, enc4_, with_mask(act(tape, apply(tape, down3_, f3)), m3)));

        Tensor u3 = act(tape, apply(tape, up3_, upsample_nearest2(tape, f4)));
        u3 = crop2d(tape, u3, f3->shape.h, f3->shape.w);
        Tensor d3 = act(tape, apply(tape, dec3_, with_mask(concat(tape, u3, f3), m2)));

        Tensor u2 = act(tape, apply(tape, up2_, upsample_nearest2(tape, d3)));
        u2 = crop2d(tape, u2, f2->shape.h, f2->shape.w);
        Tensor d2 = act(tape, apply(tape, dec2_, with_mask(concat(tape, u2, f2), m1)));

        Tensor u1 = act(tape, apply(tape, up1_, upsample_nearest2(tape, d2)));
        u1 = crop2d(tape, u1, f1->shape.h, f1->shape.w);
        Tensor d1 = act(tape, apply(tape, dec1_, with_mask(concat(tape, u1, f1), m0)));

        return apply(tape, out_, d1);
    }

  private:
    UNetConfig cfg_;
    ConvLayer enc1a_, enc1b_, down1_, enc2_, down2_, enc3_, down3_, enc4_;
    ConvLayer up3_, dec3_, up2_, dec2_, up1_, dec1_, out_;

    std::vector<const ConvLayer*> layers() const {
        return {&enc1a_, &enc1b_, &down1_, &enc2_, &down2_, &enc3_, &down3_, &enc4_,
                &up3_,  &dec3_,  &up2_,   &dec2_, &up1_,   &dec1_, &out_};
    }

    static ConvLayer make_conv(int cin, int cout, int stride) {
        ConvLayer l;
        l.w = make_tensor({cout, cin, 3, 3}, true);
        l.b = make_tensor({cout, 1, 1, 1}, true);
        l.stride = stride;
        return l;
    }

    /// Kaiming-style fan-in scaling with a fixed per-layer stream; the output
    /// layer stays at zero so the network starts as the exact LI baseline.
    void init_weights(uint64_t seed) {
        auto ls = layers();
        for (size_t li = 0; li + 1 < ls.size(); ++li) {
            const ConvLayer* l = ls[li];
            RandomStream rng(seed, li);
            const double fan_in = static_cast<double>(l->w->shape.c) * 9.0;
            const double stddev = std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
            for (double& v : l->w->value) v = stddev * rng.normal();
        }
    }

    static Tensor apply(Tape& tape, const ConvLayer& l, const Tensor& x) {
        return conv2d(tape, x, l.w, l.b, l.stride);
    }
    static Tensor act(Tape& tape, const Tensor& x) { return leaky_relu(tape, x, kLeakySlope); }
};

}  // namespace sinomar::nn
