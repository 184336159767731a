#pragma once
#include <string>
#include <utility>
#include <vector>

#include "mgan/image.hpp"

namespace mgan {

class Detector;  // networks.hpp

// One connected tumor region (8-connectivity).
struct TumorInstance {
    std::vector<std::pair<int, int>> pixels;  // (row, col), discovery order
    int area = 0;
    double centroid_row = 0.0;
    double centroid_col = 0.0;
};

// Overlap denominator for the >50% rule. Union gives intersection-over-
// union; Truth divides by the ground-truth area instead. Both readings
// of the published rule are selectable.
enum class OverlapDenominator { Union, Truth };

struct MatchedPair {
    int detected_index = 0;
    int truth_index = 0;
    double overlap = 0.0;
};

struct MatchResult {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    std::vector<MatchedPair> matches;
};

struct Prf {
    double precision = 0.0;  // percent
    double recall = 0.0;
    double f_score = 0.0;
};

struct ImageCounts {
    std::string key;
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

struct DetectionReport {
    int tp = 0;
    int fp = 0;
    int fn = 0;
    Prf scores;
    std::vector<ImageCounts> per_image;
};

// 8-connected components of a binary mask, ordered by first pixel in
// row-major scan. Components smaller than min_area are discarded.
std::vector<TumorInstance> extract_instances(const ImageGrid& mask, int min_area = 2);

double overlap_ratio(const TumorInstance& detected, const TumorInstance& truth,
                     OverlapDenominator denom, int grid_height, int grid_width);

// Greedy one-to-one matching in descending overlap order; a pair counts
// as a match only when its overlap exceeds overlap_threshold (strict).
// tp + fp = |detected| and tp + fn = |truth| always hold.
MatchResult match_instances(const std::vector<TumorInstance>& detected,
                            const std::vector<TumorInstance>& truth, int grid_height,
                            int grid_width, double overlap_threshold = 0.5,
                            OverlapDenominator denom = OverlapDenominator::Union);

Prf prf(int tp, int fp, int fn);

struct EvalConfig {
    double detector_threshold = 0.5;
    int min_area = 2;
    double overlap_threshold = 0.5;
    OverlapDenominator denominator = OverlapDenominator::Union;

    void validate() const;
};

DetectionReport evaluate_detector(const Detector& detector,
                                  const std::vector<std::pair<PetImage, LabelMap>>& test_set,
                                  const EvalConfig& cfg);

std::string detection_table(const std::vector<std::pair<std::string, Prf>>& rows);

}  // namespace mgan
