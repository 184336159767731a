#pragma once
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgan/layers.hpp"

namespace mgan {

// Which conditioning channels the generator/discriminator pair sees.
enum class ChannelMode { LB, CT, M };

int cond_channels(ChannelMode mode);
std::string to_string(ChannelMode mode);
ChannelMode channel_mode_from_string(const std::string& s);

// Stack label/CT planes (already [0,1]) into network space [-1,1].
Tensor make_condition(ChannelMode mode, const ImageGrid& label, const ImageGrid& ct);

// ------------------------------------------------------------- Generator
//
// U-Net. Depth E = max(3, log2(S) - 2); encoder widths double from
// base_width and cap at 8*base_width. Encoder: conv k4 s2 p1 +
// InstanceNorm (skipped on the first stage) + LeakyReLU(0.2). Decoder:
// convT k4 s2 p1 + InstanceNorm + dropout(0.5) on the first min(3, E-1)
// stages + ReLU, with skip concatenation from the mirrored encoder stage;
// the last stage maps straight to one tanh channel.

struct GeneratorSpec {
    int image_size = 64;
    int base_width = 32;
    ChannelMode mode = ChannelMode::M;

    int depth() const;
    void validate() const;

    bool operator==(const GeneratorSpec&) const = default;
};

class Generator {
  public:
    Generator() = default;
    Generator(const GeneratorSpec& spec, Rng& init_rng);

    const GeneratorSpec& spec() const { return spec_; }

    // Inference: dropout off, const, safe to share across threads.
    Tensor forward(const Tensor& cond) const;
    // Training pass; dropout masks come from `dropout_rng`, so replaying
    // with an equal stream reproduces the pass exactly. `zero_skips`
    // feeds zeros through the skip concatenations (ablation hook).
    Tensor forward_train(const Tensor& cond, Rng& dropout_rng, bool zero_skips = false);
    // Accumulates parameter gradients for the last forward_train pass.
    void backward(const Tensor& grad_out);

    std::vector<ParamRef> params();

  private:
    struct EncStage {
        Conv2d conv;
        std::optional<InstanceNorm> norm;
        LeakyReLU act{0.2};
    };
    struct DecStage {
        ConvTranspose2d convt;
        std::optional<InstanceNorm> norm;
        std::optional<Dropout> drop;
        LeakyReLU act{0.0};  // plain ReLU
    };

    GeneratorSpec spec_;
    std::vector<EncStage> enc_;
    std::vector<DecStage> dec_;
    Tanh out_act_;

    // forward_train bookkeeping
    std::vector<Tensor> enc_out_;
    std::vector<int> skip_channels_;
    bool zero_skips_ = false;
};

// --------------------------------------------------------- Discriminator
//
// Five conv layers over concat(condition, candidate PET): widths B, 2B,
// 4B, 8B, 1 with strides 2,2,2,1,1 (k4 throughout; the stride-1 layers
// pad (1,2) per side to keep their extent). InstanceNorm on layers 1-3,
// LeakyReLU(0.2) between layers, raw logits out. A 64x64 input yields an
// 8x8 logit patch.

struct DiscriminatorSpec {
    int image_size = 64;
    int base_width = 32;
    ChannelMode mode = ChannelMode::M;

    void validate() const;

    bool operator==(const DiscriminatorSpec&) const = default;
};

class Discriminator {
  public:
    Discriminator() = default;
    Discriminator(const DiscriminatorSpec& spec, Rng& init_rng);

    const DiscriminatorSpec& spec() const { return spec_; }

    Tensor forward(const Tensor& cond, const Tensor& candidate) const;
    Tensor forward_train(const Tensor& cond, const Tensor& candidate);
    // Accumulates parameter gradients; returns the gradient w.r.t. the
    // candidate image (what a generator update needs).
    Tensor backward(const Tensor& grad_logits);

    std::vector<ParamRef> params();

  private:
    struct Layer {
        Conv2d conv;
        std::optional<InstanceNorm> norm;
        std::optional<LeakyReLU> act;
    };

    DiscriminatorSpec spec_;
    std::vector<Layer> layers_;
};

// --------------------------------------------------------------- Detector
//
// Small FCN for per-pixel tumor probability: three conv k4 s2 p1 stages
// down (widths B, 2B, 4B), three convT stages back up (2B, B, 1), no
// skips, logits out; sigmoid is applied by detector_forward / the loss.

struct DetectorSpec {
    int image_size = 64;
    int base_width = 16;

    void validate() const;

    bool operator==(const DetectorSpec&) const = default;
};

class Detector {
  public:
    Detector() = default;
    Detector(const DetectorSpec& spec, Rng& init_rng);

    const DetectorSpec& spec() const { return spec_; }

    Tensor logits(const Tensor& x) const;
    Tensor logits_train(const Tensor& x);
    void backward(const Tensor& grad_logits);

    std::vector<ParamRef> params();

  private:
    struct Down {
        Conv2d conv;
        std::optional<InstanceNorm> norm;
        LeakyReLU act{0.2};
    };
    struct Up {
        ConvTranspose2d convt;
        std::optional<InstanceNorm> norm;
        LeakyReLU act{0.0};
    };

    DetectorSpec spec_;
    std::vector<Down> down_;
    std::vector<Up> up_;
};

// Convenience forwards on image types.
ImageGrid generator_forward(const Generator& gen, const Tensor& cond);
Tensor discriminator_forward(const Discriminator& disc, const Tensor& cond,
                             const Tensor& candidate);
ImageGrid detector_forward(const Detector& det, const ImageGrid& pet);

// ------------------------------------------------------------ checkpoints
//
// A checkpoint is <path> (binary little-endian named arrays) plus a JSON
// sidecar <path>.json describing the architecture and any caller metadata.

void save_generator(const std::filesystem::path& path, Generator& gen,
                    const nlohmann::json& extra_meta = {});
Generator load_generator(const std::filesystem::path& path);

void save_discriminator(const std::filesystem::path& path, Discriminator& disc,
                        const nlohmann::json& extra_meta = {});
Discriminator load_discriminator(const std::filesystem::path& path);

void save_detector(const std::filesystem::path& path, Detector& det,
                   const nlohmann::json& extra_meta = {});
Detector load_detector(const std::filesystem::path& path);

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace mgan
