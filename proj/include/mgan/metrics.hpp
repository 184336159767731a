#pragma once
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgan/dataset.hpp"

namespace mgan {

// Both scores are computed on the 8-bit display scale: values in [0,1]
// are multiplied by 255 and compared as continuous quantities (MAX=255
// for PSNR). Identical images give PSNR = +infinity.
double mae(const ImageGrid& a, const ImageGrid& b);
double psnr(const ImageGrid& a, const ImageGrid& b);

struct QualityRow {
    std::string key;  // patient/slice
    double mae = 0.0;
    double psnr = 0.0;
};

struct QualityReport {
    std::vector<QualityRow> rows;
    double mean_mae = 0.0;
    // Mean over rows with finite PSNR; +inf when every row was excluded.
    double mean_psnr = 0.0;
    int psnr_excluded = 0;

    nlohmann::json to_json() const;
    std::string table() const;
};

// Scores synthesized PET against reference PET, paired by
// (patient_id, slice_index). The two datasets must cover exactly the
// same keys with matching image dimensions.
QualityReport quality_report(const Dataset& synthesized, const Dataset& reference);

}  // namespace mgan
