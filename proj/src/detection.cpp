#include "mgan/detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <set>

#include "mgan/errors.hpp"
#include "mgan/networks.hpp"

namespace mgan {

std::vector<TumorInstance> extract_instances(const ImageGrid& mask, int min_area) {
    const int h = mask.height, w = mask.width;
    std::vector<char> seen(size_t(h) * w, 0);
    std::vector<TumorInstance> out;

    for (int r0 = 0; r0 < h; ++r0) {
        for (int c0 = 0; c0 < w; ++c0) {
            const size_t idx0 = size_t(r0) * w + c0;
            if (seen[idx0] || mask.values[idx0] == 0.0) continue;
            TumorInstance inst;
            std::deque<std::pair<int, int>> queue{{r0, c0}};
            seen[idx0] = 1;
            while (!queue.empty()) {
                auto [r, c] = queue.front();
                queue.pop_front();
                inst.pixels.emplace_back(r, c);
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                        const size_t idx = size_t(rr) * w + cc;
                        if (!seen[idx] && mask.values[idx] != 0.0) {
                            seen[idx] = 1;
                            queue.emplace_back(rr, cc);
                        }
                    }
                }
            }
            if (int(inst.pixels.size()) < min_area) continue;
            inst.area = int(inst.pixels.size());
            double sr = 0, sc = 0;
            for (auto [r, c] : inst.pixels) {
                sr += r;
                sc += c;
            }
            inst.centroid_row = sr / inst.area;
            inst.centroid_col = sc / inst.area;
            out.push_back(std::move(inst));
        }
    }
    return out;
}

double overlap_ratio(const TumorInstance& detected, const TumorInstance& truth,
                     OverlapDenominator denom, int grid_height, int grid_width) {
    std::vector<char> in_truth(size_t(grid_height) * grid_width, 0);
    for (auto [r, c] : truth.pixels) in_truth[size_t(r) * grid_width + c] = 1;
    int inter = 0;
    for (auto [r, c] : detected.pixels) inter += in_truth[size_t(r) * grid_width + c];
    const int denom_px = denom == OverlapDenominator::Union
                             ? detected.area + truth.area - inter
                             : truth.area;
    return denom_px > 0 ? double(inter) / denom_px : 0.0;
}

MatchResult match_instances(const std::vector<TumorInstance>& detected,
                            const std::vector<TumorInstance>& truth, int grid_height,
                            int grid_width, double overlap_threshold, OverlapDenominator denom) {
    struct Candidate {
        double ratio;
        int det, tru;
    };
    std::vector<Candidate> candidates;
    for (int i = 0; i < int(detected.size()); ++i)
        for (int j = 0; j < int(truth.size()); ++j) {
            const double ratio = overlap_ratio(detected[i], truth[j], denom, grid_height, grid_width);
            if (ratio > overlap_threshold) candidates.push_back({ratio, i, j});
        }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.ratio != b.ratio) return a.ratio > b.ratio;
        if (a.det != b.det) return a.det < b.det;
        return a.tru < b.tru;
    });

    MatchResult result;
    std::vector<char> det_used(detected.size(), 0), tru_used(truth.size(), 0);
    for (const auto& c : candidates) {
        if (det_used[c.det] || tru_used[c.tru]) continue;
        det_used[c.det] = 1;
        tru_used[c.tru] = 1;
        result.matches.push_back({c.det, c.tru, c.ratio});
    }
    result.tp = int(result.matches.size());
    result.fp = int(detected.size()) - result.tp;
    result.fn = int(truth.size()) - result.tp;
    return result;
}

Prf prf(int tp, int fp, int fn) {
    if (tp < 0 || fp < 0 || fn < 0) throw InputError("prf: counts must be non-negative");
    Prf out;
    out.precision = tp + fp > 0 ? 100.0 * tp / (tp + fp) : 0.0;
    out.recall = tp + fn > 0 ? 100.0 * tp / (tp + fn) : 0.0;
    out.f_score = out.precision + out.recall > 0.0
                      ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                      : 0.0;
    return out;
}

void EvalConfig::validate() const {
    if (!(detector_threshold > 0.0 && detector_threshold < 1.0))
        throw ConfigError("eval: detector_threshold must be in (0,1)");
    if (min_area < 1) throw ConfigError("eval: min_area must be >= 1");
    if (!(overlap_threshold > 0.0 && overlap_threshold < 1.0))
        throw ConfigError("eval: overlap_threshold must be in (0,1)");
}

DetectionReport evaluate_detector(const Detector& detector,
                                  const std::vector<std::pair<PetImage, LabelMap>>& test_set,
                                  const EvalConfig& cfg) {
    if (test_set.empty()) throw InputError("evaluate_detector: empty test set");
    cfg.validate();

    DetectionReport report;
    int index = 0;
    for (const auto& [pet, label] : test_set) {
        const ImageGrid prob = detector_forward(detector, pet);
        ImageGrid mask(prob.height, prob.width);
        for (size_t i = 0; i < prob.values.size(); ++i)
            mask.values[i] = prob.values[i] > cfg.detector_threshold ? 1.0 : 0.0;

        const auto det_instances = extract_instances(mask, cfg.min_area);
        const auto truth_instances = extract_instances(label, 1);
        const auto match = match_instances(det_instances, truth_instances, label.height,
                                           label.width, cfg.overlap_threshold, cfg.denominator);
        report.tp += match.tp;
        report.fp += match.fp;
        report.fn += match.fn;
        report.per_image.push_back({"image_" + std::to_string(index), match.tp, match.fp, match.fn});
        ++index;
    }
    report.scores = prf(report.tp, report.fp, report.fn);
    return report;
}

std::string detection_table(const std::vector<std::pair<std::string, Prf>>& rows) {
    std::string out;
    char line[128];
    std::snprintf(line, sizeof line, "%-18s %10s %10s %10s\n", "Trained with", "Precision",
                  "Recall", "F-score");
    out += line;
    out += std::string(51, '-') + "\n";
    for (const auto& [name, p] : rows) {
        std::snprintf(line, sizeof line, "%-18s %10.2f %10.2f %10.2f\n", name.c_str(), p.precision,
                      p.recall, p.f_score);
        out += line;
    }
    return out;
}

}  // namespace mgan
