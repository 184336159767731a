#pragma once
#include <filesystem>
#include <string>
#include <vector>

#include "mgan/dataset.hpp"
#include "mgan/detection.hpp"
#include "mgan/losses.hpp"
#include "mgan/metrics.hpp"
#include "mgan/optimizer.hpp"

namespace mgan {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 1;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    uint64_t seed = 7;
    ChannelMode channel_mode = ChannelMode::M;
    int d_steps_per_g_step = 1;
    int gen_base_width = 32;
    int disc_base_width = 32;

    void validate() const;
    AdamConfig adam() const { return {learning_rate, beta1, beta2, 1e-8}; }
};

struct EpochRecord {
    int epoch = 0;      // 1-based
    double d_loss = 0;  // means over the epoch's updates
    double g_adv = 0;
    double g_l1 = 0;
    double seconds = 0;  // wall time; the only non-deterministic field
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    void write_csv(const std::filesystem::path& path) const;  // epoch,d_loss,g_adv,g_l1,seconds
};

struct GanTrainResult {
    Generator generator;
    Discriminator discriminator;
    TrainLog log;
};

// Alternating per-batch updates: d_steps_per_g_step discriminator steps
// (fake images re-sampled each step, treated as constants), then one
// generator step through the frozen-in-place discriminator. Batches
// accumulate gradients; deterministic given cfg.seed.
GanTrainResult train_gan(const Dataset& train_set, const TrainConfig& cfg,
                         const LossConfig& loss_cfg);

// One synthetic PET per input study, paired with the ORIGINAL label and
// CT (annotations carry over to synthetic images). Inference only —
// dropout off — so output is deterministic. Returns the manifest path.
std::filesystem::path synthesize(const Generator& gen, ChannelMode mode, const Dataset& studies,
                                 const std::filesystem::path& out_dir);

struct DetectorTrainConfig {
    int epochs = 12;
    int batch_size = 1;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    uint64_t seed = 7;
    int base_width = 16;
    // Tumor pixels are rare; their BCE terms are up-weighted by this factor.
    double pos_weight = 8.0;

    void validate() const;
    AdamConfig adam() const { return {learning_rate, beta1, beta2, 1e-8}; }
};

Detector train_detector(const std::vector<std::pair<PetImage, LabelMap>>& train_pairs,
                        const DetectorTrainConfig& cfg);

// ------------------------------------------------------------ experiment

enum class Arm { LB, CT, M, REAL };
std::string to_string(Arm arm);
Arm arm_from_string(const std::string& s);

struct ProtocolConfig {
    TrainConfig gan;               // channel_mode overridden per arm
    DetectorTrainConfig detector;
    LossConfig loss;
    EvalConfig eval;
    std::vector<Arm> arms = {Arm::LB, Arm::CT, Arm::M, Arm::REAL};
    uint64_t seed = 7;             // master seed: split, per-arm training seeds
    int montage_slices = 4;        // per fold; 0 disables the image grids

    void validate() const;
};

struct ArmOutcome {
    std::string arm;
    DetectionReport detection;  // counts summed over both fold directions
    // Synthesis quality vs the matching real PET (GAN arms only).
    double mean_mae = 0.0;
    double mean_psnr = 0.0;
    int psnr_excluded = 0;
    bool has_quality = false;
};

struct ExperimentReport {
    std::vector<ArmOutcome> arms;
    nlohmann::json full;  // everything written to report.json

    const ArmOutcome& outcome(const std::string& arm) const;
};

// Two-fold patient-level protocol. For each GAN arm and each fold
// direction: train the GAN on the train fold, synthesize PET for the
// test fold, train a detector on those synthetics, evaluate it on the
// train fold's real PET. REAL trains the detector on real PET of the
// same fold the synthetics would have covered. Writes checkpoints,
// per-fold artifacts, tables, montages and report.json under `out_dir`.
ExperimentReport run_two_fold_protocol(const Dataset& ds, const ProtocolConfig& cfg,
                                       const std::filesystem::path& out_dir);

}  // namespace mgan
