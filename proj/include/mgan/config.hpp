#pragma once
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mgan/phantom.hpp"
#include "mgan/trainer.hpp"

namespace mgan {

// Minimal TOML subset: [section] headers, key = value pairs, # comments,
// strings, integers, floats, booleans and single-line arrays. That is
// the entire configuration surface; nested tables and multi-line values
// are rejected. Parse errors carry 1-based line numbers.

struct TomlValue {
    enum class Kind { String, Integer, Float, Boolean, Array };
    Kind kind = Kind::String;
    std::string str;
    int64_t integer = 0;
    double real = 0.0;
    bool boolean = false;
    std::vector<TomlValue> array;
    int line = 0;
};

struct TomlDoc {
    // section -> key -> value; "" is the (unused) root section.
    std::map<std::string, std::map<std::string, TomlValue>> sections;
};

TomlDoc parse_toml(const std::string& text);
TomlDoc parse_toml_file(const std::filesystem::path& path);

// FNV-1a over a byte string, as a 16-digit hex string (provenance hashes).
std::string fnv1a64_hex(const std::string& bytes);

// Full experiment configuration. Every key is optional (defaults below);
// unknown sections or keys abort parsing.
struct ExperimentConfig {
    PhantomConfig phantom;
    int patients = 12;
    int slices_per_patient = 8;

    TrainConfig train;
    DetectorTrainConfig detector;
    LossConfig loss;
    EvalConfig eval;

    std::vector<Arm> arms = {Arm::LB, Arm::CT, Arm::M, Arm::REAL};
    uint64_t seed = 7;
    int montage_slices = 4;

    struct Paths {
        std::string train_manifest;      // train / detect: training input
        std::string input_manifest;      // synth: studies to condition on
        std::string checkpoint;          // synth: generator checkpoint
        std::string synth_manifest;      // quality: candidate side
        std::string reference_manifest;  // quality: reference side
        std::string test_manifest;       // detect: evaluation set
    } paths;

    ProtocolConfig protocol() const;

    static ExperimentConfig from_toml(const TomlDoc& doc);
    // Paths in [paths] are resolved relative to the config file's directory.
    static ExperimentConfig from_file(const std::filesystem::path& path);
};

}  // namespace mgan
