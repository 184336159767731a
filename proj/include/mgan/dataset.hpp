#pragma once
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mgan/image.hpp"

namespace mgan {

// Ordered pool of paired studies. Ordering is always lexicographic by
// patient_id then slice_index, so bitwise-identical manifests produce
// identical in-memory order.
struct Dataset {
    std::vector<PairedStudy> studies;
    std::filesystem::path manifest_path;

    size_t size() const { return studies.size(); }
    bool empty() const { return studies.empty(); }

    std::vector<std::string> patient_ids() const;  // distinct, sorted
};

// Manifest schema (JSON, UTF-8), image paths relative to the manifest:
//   {"studies":[{"patient_id":str,"slice_index":int,
//                "label":path,"ct":path,"pet":path,"suv_scale":float}]}
Dataset load_dataset(const std::filesystem::path& manifest_path);

struct ManifestEntry {
    std::string patient_id;
    int slice_index = 0;
    std::string label;
    std::string ct;
    std::string pet;
    double suv_scale = 1.0;
};

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& manifest_path);

// Patient-level two-fold split: no patient appears in both folds and the
// patient counts differ by at most one. Deterministic given the seed.
std::pair<Dataset, Dataset> split_two_fold(const Dataset& ds, uint64_t seed);

}  // namespace mgan
