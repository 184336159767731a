#pragma once
#include <cstdint>
#include <filesystem>
#include <string>

#include "mgan/dataset.hpp"
#include "mgan/image.hpp"

namespace mgan {

// Thorax-like phantom: a body ellipse containing two lung ellipses and a
// mediastinal band, with hot tumors placed in lung or mediastinum. CT
// shows anatomy only (tumors leave no CT footprint); PET shows an
// anatomical uptake map plus Gaussian-profile hot spots. The label is
// derived from the noise-free uptake map with peak-fraction connected
// thresholding, so ground truth is clean by construction.
struct PhantomConfig {
    int image_size = 64;              // power of two
    int tumors_min = 1;
    int tumors_max = 4;
    double tumor_radius_min = 2.0;    // pixels (40%-of-peak contour radius)
    double tumor_radius_max = 6.0;
    double pet_noise_sigma = 0.02;
    double pet_blur_sigma = 1.0;      // pixels
    double background_uptake = 0.25;  // soft-tissue uptake level
    double tumor_uptake_min = 0.6;
    double tumor_uptake_max = 1.0;
    uint64_t seed = 0;

    // Label-derivation rule. Hot-spot seeds must rise above
    // background_uptake + hot_spot_floor_margin.
    double peak_fraction = 0.40;
    double hot_spot_floor_margin = 0.15;

    void validate() const;
    double hot_spot_floor() const { return background_uptake + hot_spot_floor_margin; }
};

// Peak-fraction connected thresholding: every 8-connected component of
// {pixel : value >= peak_fraction * component peak}, grown from local
// maxima that exceed hot_spot_floor. Each component is thresholded at a
// fraction of ITS OWN peak, so dim spots are not erased by bright ones.
// A constant image yields an empty map (no peak), not an error.
LabelMap derive_label(const ImageGrid& pet, double peak_fraction, double hot_spot_floor = 0.40);

// Deterministic in (cfg.seed, patient_id, slice_index); parallel corpus
// generation cannot change any study's content.
PairedStudy generate_study(const PhantomConfig& cfg, const std::string& patient_id,
                           int slice_index);

// Writes 16-bit PNGs plus a manifest loadable by load_dataset; returns
// the manifest path. Deterministic given cfg.seed.
std::filesystem::path generate_corpus(const PhantomConfig& cfg, int n_patients,
                                      int slices_per_patient,
                                      const std::filesystem::path& out_dir);

}  // namespace mgan
