#include "mgan/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

namespace mgan {

namespace {
void require_same_dims(const ImageGrid& a, const ImageGrid& b, const char* what) {
    if (a.height != b.height || a.width != b.width)
        throw InputError(std::string(what) + ": image dimensions disagree (" +
                         std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
}
}  // namespace

double mae(const ImageGrid& a, const ImageGrid& b) {
    require_same_dims(a, b, "mae");
    double s = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) s += std::abs(a.values[i] - b.values[i]);
    return 255.0 * s / double(a.values.size());
}

double psnr(const ImageGrid& a, const ImageGrid& b) {
    require_same_dims(a, b, "psnr");
    double s = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double d = 255.0 * (a.values[i] - b.values[i]);
        s += d * d;
    }
    const double mse = s / double(a.values.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

QualityReport quality_report(const Dataset& synthesized, const Dataset& reference) {
    if (synthesized.studies.empty()) throw InputError("quality_report: no synthesized studies");
    std::map<std::string, const PairedStudy*> ref_by_key;
    for (const auto& s : reference.studies) ref_by_key[s.key()] = &s;
    if (ref_by_key.size() != reference.studies.size())
        throw InputError("quality_report: duplicate keys in reference set");
    if (synthesized.studies.size() != reference.studies.size())
        throw InputError("quality_report: study counts disagree (" +
                         std::to_string(synthesized.studies.size()) + " synthesized vs " +
                         std::to_string(reference.studies.size()) + " reference)");

    QualityReport report;
    double sum_mae = 0.0, sum_psnr = 0.0;
    int finite_psnr = 0;
    std::set<std::string> seen;
    for (const auto& s : synthesized.studies) {
        if (!seen.insert(s.key()).second)
            throw InputError("quality_report: duplicate synthesized study " + s.key());
        auto it = ref_by_key.find(s.key());
        if (it == ref_by_key.end())
            throw InputError("quality_report: no reference study for " + s.key());
        QualityRow row;
        row.key = s.key();
        row.mae = mae(s.pet, it->second->pet);
        row.psnr = psnr(s.pet, it->second->pet);
        sum_mae += row.mae;
        if (std::isfinite(row.psnr)) {
            sum_psnr += row.psnr;
            ++finite_psnr;
        } else {
            ++report.psnr_excluded;
        }
        report.rows.push_back(std::move(row));
    }
    report.mean_mae = sum_mae / double(report.rows.size());
    report.mean_psnr = finite_psnr > 0 ? sum_psnr / double(finite_psnr)
                                       : std::numeric_limits<double>::infinity();
    return report;
}

nlohmann::json QualityReport::to_json() const {
    auto encode = [](double v) -> nlohmann::json {
        if (std::isinf(v)) return "inf";
        return v;
    };
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& r : rows)
        rows_json.push_back({{"key", r.key}, {"mae", r.mae}, {"psnr", encode(r.psnr)}});
    return {{"rows", rows_json},
            {"mean_mae", mean_mae},
            {"mean_psnr", encode(mean_psnr)},
            {"psnr_excluded", psnr_excluded}};
}

std::string QualityReport::table() const {
    std::string out;
    char line[128];
    std::snprintf(line, sizeof line, "%-20s %10s %10s\n", "Study", "MAE", "PSNR");
    out += line;
    out += std::string(42, '-') + "\n";
    for (const auto& r : rows) {
        if (std::isinf(r.psnr))
            std::snprintf(line, sizeof line, "%-20s %10.2f %10s\n", r.key.c_str(), r.mae, "inf");
        else
            std::snprintf(line, sizeof line, "%-20s %10.2f %10.2f\n", r.key.c_str(), r.mae, r.psnr);
        out += line;
    }
    out += std::string(42, '-') + "\n";
    if (std::isinf(mean_psnr))
        std::snprintf(line, sizeof line, "%-20s %10.2f %10s\n", "mean", mean_mae, "inf");
    else
        std::snprintf(line, sizeof line, "%-20s %10.2f %10.2f\n", "mean", mean_mae, mean_psnr);
    out += line;
    if (psnr_excluded > 0) {
        std::snprintf(line, sizeof line, "(%d identical pair%s excluded from mean PSNR)\n",
                      psnr_excluded, psnr_excluded == 1 ? "" : "s");
        out += line;
    }
    return out;
}

}  // namespace mgan
