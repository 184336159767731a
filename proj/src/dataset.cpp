#include "mgan/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mgan/errors.hpp"
#include "mgan/png_io.hpp"
#include "mgan/rng.hpp"

namespace mgan {

using nlohmann::json;

std::vector<std::string> Dataset::patient_ids() const {
    std::set<std::string> ids;
    for (const auto& s : studies) ids.insert(s.patient_id);
    return {ids.begin(), ids.end()};
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw InputError("manifest not found: " + manifest_path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw InputError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("studies") || !doc["studies"].is_array())
        throw InputError("manifest " + manifest_path.string() + " lacks a \"studies\" array");

    const auto base = manifest_path.parent_path();
    Dataset ds;
    ds.manifest_path = manifest_path;

    for (const auto& rec : doc["studies"]) {
        PairedStudy study;
        try {
            study.patient_id = rec.at("patient_id").get<std::string>();
            study.slice_index = rec.at("slice_index").get<int>();
        } catch (const json::exception& e) {
            throw InputError("manifest record malformed in " + manifest_path.string() + ": " +
                             e.what());
        }
        const auto resolve = [&](const char* field) {
            const std::string rel = rec.at(field).get<std::string>();
            std::filesystem::path p = base / rel;
            if (!std::filesystem::exists(p))
                throw InputError("missing image file " + p.string() + " (study " + study.key() +
                                 ", field " + field + ")");
            return p;
        };
        study.label.ImageGrid::operator=(read_image(resolve("label"), ImageKind::Label));
        study.ct.ImageGrid::operator=(read_image(resolve("ct"), ImageKind::Ct));
        study.pet.ImageGrid::operator=(read_image(resolve("pet"), ImageKind::Pet));
        study.pet.suv_scale = rec.value("suv_scale", 1.0);
        study.validate();
        ds.studies.push_back(std::move(study));
    }

    std::sort(ds.studies.begin(), ds.studies.end(), [](const PairedStudy& a, const PairedStudy& b) {
        return a.patient_id != b.patient_id ? a.patient_id < b.patient_id
                                            : a.slice_index < b.slice_index;
    });
    for (size_t i = 1; i < ds.studies.size(); ++i)
        if (ds.studies[i].patient_id == ds.studies[i - 1].patient_id &&
            ds.studies[i].slice_index == ds.studies[i - 1].slice_index)
            throw ValidationError("duplicate study " + ds.studies[i].key() + " in manifest " +
                                  manifest_path.string());
    return ds;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& manifest_path) {
    json studies = json::array();
    for (const auto& e : entries) {
        studies.push_back({{"patient_id", e.patient_id},
                           {"slice_index", e.slice_index},
                           {"label", e.label},
                           {"ct", e.ct},
                           {"pet", e.pet},
                           {"suv_scale", e.suv_scale}});
    }
    std::ofstream out(manifest_path);
    if (!out) throw InputError("cannot write manifest " + manifest_path.string());
    out << json{{"studies", studies}}.dump(2) << "\n";
}

std::pair<Dataset, Dataset> split_two_fold(const Dataset& ds, uint64_t seed) {
    auto patients = ds.patient_ids();
    if (patients.size() < 2)
        throw InputError("two-fold split needs at least 2 patients, got " +
                         std::to_string(patients.size()));

    Rng rng(hash_combine(seed, "two-fold-split"));
    rng.shuffle(patients);
    const size_t half = (patients.size() + 1) / 2;
    std::set<std::string> fold_a(patients.begin(), patients.begin() + half);

    Dataset a, b;
    a.manifest_path = ds.manifest_path;
    b.manifest_path = ds.manifest_path;
    for (const auto& s : ds.studies)
        (fold_a.count(s.patient_id) ? a : b).studies.push_back(s);
    return {a, b};
}

}  // namespace mgan
