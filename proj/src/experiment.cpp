#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "mgan/png_io.hpp"
#include "mgan/trainer.hpp"

namespace mgan {

std::string to_string(Arm arm) {
    switch (arm) {
        case Arm::LB: return "LB";
        case Arm::CT: return "CT";
        case Arm::M: return "M";
        case Arm::REAL: return "REAL";
    }
    throw ValidationError("unknown arm");
}

Arm arm_from_string(const std::string& s) {
    if (s == "LB") return Arm::LB;
    if (s == "CT") return Arm::CT;
    if (s == "M") return Arm::M;
    if (s == "REAL") return Arm::REAL;
    throw ConfigError("arm must be one of LB, CT, M, REAL, got '" + s + "'");
}

void ProtocolConfig::validate() const {
    gan.validate();
    detector.validate();
    loss.validate();
    eval.validate();
    if (arms.empty()) throw ConfigError("experiment: arms must not be empty");
    std::set<std::string> seen;
    for (Arm a : arms)
        if (!seen.insert(to_string(a)).second)
            throw ConfigError("experiment: duplicate arm " + to_string(a));
    if (montage_slices < 0) throw ConfigError("experiment: montage_slices must be >= 0");
}

const ArmOutcome& ExperimentReport::outcome(const std::string& arm) const {
    for (const auto& a : arms)
        if (a.arm == arm) return a;
    throw InputError("no outcome for arm " + arm);
}

namespace {

std::string row_name(Arm arm) {
    switch (arm) {
        case Arm::LB: return "LB-GAN PET";
        case Arm::CT: return "CT-GAN PET";
        case Arm::M: return "M-GAN PET";
        case Arm::REAL: return "Real PET";
    }
    return "?";
}

std::vector<std::pair<PetImage, LabelMap>> to_pairs(const Dataset& ds) {
    std::vector<std::pair<PetImage, LabelMap>> out;
    out.reserve(ds.size());
    for (const auto& s : ds.studies) out.emplace_back(s.pet, s.label);
    return out;
}

nlohmann::json patients_json(const Dataset& ds) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : ds.patient_ids()) j.push_back(p);
    return j;
}

void require_disjoint(const Dataset& train, const Dataset& eval_set, const std::string& what) {
    std::set<std::string> a;
    for (const auto& p : train.patient_ids()) a.insert(p);
    for (const auto& p : eval_set.patient_ids())
        if (a.count(p))
            throw ValidationError(what + ": patient " + p + " appears in both train and eval");
}

nlohmann::json detection_json(const DetectionReport& r) {
    nlohmann::json per_image = nlohmann::json::array();
    for (const auto& m : r.per_image)
        per_image.push_back({{"image", m.key}, {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}});
    return {{"tp", r.tp},
            {"fp", r.fp},
            {"fn", r.fn},
            {"precision", r.scores.precision},
            {"recall", r.scores.recall},
            {"f_score", r.scores.f_score},
            {"per_image", per_image}};
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

struct QualityAgg {
    double sum_mae = 0.0, sum_psnr = 0.0;
    int rows = 0, finite_psnr = 0, excluded = 0;

    void add(const QualityReport& r) {
        for (const auto& row : r.rows) {
            sum_mae += row.mae;
            ++rows;
            if (std::isfinite(row.psnr)) {
                sum_psnr += row.psnr;
                ++finite_psnr;
            }
        }
        excluded += r.psnr_excluded;
    }
    double mean_mae() const { return rows ? sum_mae / rows : 0.0; }
    double mean_psnr() const {
        return finite_psnr ? sum_psnr / finite_psnr
                           : std::numeric_limits<double>::infinity();
    }
};

ChannelMode arm_mode(Arm arm) {
    switch (arm) {
        case Arm::LB: return ChannelMode::LB;
        case Arm::CT: return ChannelMode::CT;
        case Arm::M: return ChannelMode::M;
        default: throw ValidationError("REAL arm has no channel mode");
    }
}

}  // namespace

ExperimentReport run_two_fold_protocol(const Dataset& ds, const ProtocolConfig& cfg,
                                       const std::filesystem::path& out_dir) {
    cfg.validate();
    if (ds.patient_ids().size() < 2)
        throw InputError("two-fold protocol needs at least 2 patients, got " +
                         std::to_string(ds.patient_ids().size()));
    std::filesystem::create_directories(out_dir);

    const auto [fold_a, fold_b] = split_two_fold(ds, cfg.seed);
    const Dataset* folds[2] = {&fold_a, &fold_b};

    nlohmann::json provenance;
    provenance["fold_patients"] = {{"A", patients_json(fold_a)}, {"B", patients_json(fold_b)}};

    ExperimentReport report;
    nlohmann::json arms_json;
    std::map<std::pair<std::string, int>, std::filesystem::path> synth_manifests;

    for (Arm arm : cfg.arms) {
        const std::string arm_name = to_string(arm);
        const std::filesystem::path arm_dir = out_dir / "arms" / arm_name;
        ArmOutcome outcome;
        outcome.arm = arm_name;
        QualityAgg quality;
        nlohmann::json folds_json = nlohmann::json::array();

        for (int dir = 0; dir < 2; ++dir) {
            const Dataset& gan_train = *folds[dir];
            const Dataset& synth_target = *folds[1 - dir];
            const std::filesystem::path fold_dir = arm_dir / ("fold" + std::to_string(dir));
            std::filesystem::create_directories(fold_dir);
            const std::string tag = arm_name + "/fold" + std::to_string(dir);

            nlohmann::json fold_json;
            fold_json["direction"] = dir;
            fold_json["eval_patients"] = patients_json(gan_train);

            std::vector<std::pair<PetImage, LabelMap>> det_pairs;
            if (arm == Arm::REAL) {
                det_pairs = to_pairs(synth_target);
                fold_json["detector_train_patients"] = patients_json(synth_target);
            } else {
                TrainConfig tc = cfg.gan;
                tc.channel_mode = arm_mode(arm);
                tc.seed = hash_combine(cfg.seed, "gan/" + tag);
                GanTrainResult gan = train_gan(gan_train, tc, cfg.loss);
                nlohmann::json meta = {{"epochs", tc.epochs}, {"seed", tc.seed}};
                save_generator(fold_dir / "gen.ckpt", gan.generator, meta);
                save_discriminator(fold_dir / "disc.ckpt", gan.discriminator, meta);
                gan.log.write_csv(fold_dir / "train_log.csv");

                const auto synth_manifest = synthesize(gan.generator, tc.channel_mode,
                                                       synth_target, fold_dir / "synth");
                synth_manifests[{arm_name, dir}] = synth_manifest;
                const Dataset synth_ds = load_dataset(synth_manifest);

                const QualityReport q = quality_report(synth_ds, synth_target);
                quality.add(q);
                write_json(q.to_json(), fold_dir / "quality.json");

                det_pairs = to_pairs(synth_ds);
                fold_json["gan_train_patients"] = patients_json(gan_train);
                fold_json["synthesis_patients"] = patients_json(synth_ds);
                fold_json["detector_train_patients"] = patients_json(synth_ds);
            }

            DetectorTrainConfig dc = cfg.detector;
            dc.seed = hash_combine(cfg.seed, "det/" + tag);
            Detector det = train_detector(det_pairs, dc);
            save_detector(fold_dir / "detector.ckpt", det, {{"seed", dc.seed}});

            require_disjoint(synth_target, gan_train, "experiment " + tag);
            const DetectionReport det_report =
                evaluate_detector(det, to_pairs(gan_train), cfg.eval);
            write_json(detection_json(det_report), fold_dir / "detection.json");

            outcome.detection.tp += det_report.tp;
            outcome.detection.fp += det_report.fp;
            outcome.detection.fn += det_report.fn;
            for (const auto& m : det_report.per_image)
                outcome.detection.per_image.push_back(
                    {tag + "/" + m.key, m.tp, m.fp, m.fn});
            fold_json["detection"] = detection_json(det_report);
            folds_json.push_back(std::move(fold_json));
        }

        outcome.detection.scores =
            prf(outcome.detection.tp, outcome.detection.fp, outcome.detection.fn);
        if (arm != Arm::REAL) {
            outcome.has_quality = true;
            outcome.mean_mae = quality.mean_mae();
            outcome.mean_psnr = quality.mean_psnr();
            outcome.psnr_excluded = quality.excluded;
        }

        nlohmann::json arm_json;
        arm_json["folds"] = std::move(folds_json);
        arm_json["detection"] = detection_json(outcome.detection);
        if (outcome.has_quality) {
            arm_json["quality"] = {{"mean_mae", outcome.mean_mae},
                                   {"mean_psnr", std::isfinite(outcome.mean_psnr)
                                                     ? nlohmann::json(outcome.mean_psnr)
                                                     : nlohmann::json("inf")},
                                   {"psnr_excluded", outcome.psnr_excluded}};
        }
        arms_json[arm_name] = std::move(arm_json);
        report.arms.push_back(std::move(outcome));
    }

    // Plain-text tables.
    std::vector<std::pair<std::string, Prf>> det_rows;
    for (Arm arm : cfg.arms) det_rows.push_back({row_name(arm), report.outcome(to_string(arm)).detection.scores});
    const std::string det_table = detection_table(det_rows);
    {
        std::ofstream out(out_dir / "detection_table.txt");
        out << det_table;
    }
    std::string qual_table;
    {
        char line[128];
        std::snprintf(line, sizeof line, "%-18s %10s %10s\n", "Approach", "MAE", "PSNR");
        qual_table += line;
        qual_table += std::string(40, '-') + "\n";
        for (Arm arm : cfg.arms) {
            if (arm == Arm::REAL) continue;
            const auto& o = report.outcome(to_string(arm));
            if (std::isfinite(o.mean_psnr))
                std::snprintf(line, sizeof line, "%-18s %10.2f %10.2f\n", row_name(arm).c_str(),
                              o.mean_mae, o.mean_psnr);
            else
                std::snprintf(line, sizeof line, "%-18s %10.2f %10s\n", row_name(arm).c_str(),
                              o.mean_mae, "inf");
            qual_table += line;
        }
        std::ofstream out(out_dir / "quality_table.txt");
        out << qual_table;
    }

    // Side-by-side grids: label | CT | real PET | one column per GAN arm.
    if (cfg.montage_slices > 0) {
        std::vector<Arm> gan_arms;
        for (Arm a : cfg.arms)
            if (a != Arm::REAL) gan_arms.push_back(a);
        std::filesystem::create_directories(out_dir / "montage");
        for (int dir = 0; dir < 2; ++dir) {
            const Dataset& test_fold = *folds[1 - dir];
            std::map<std::string, std::map<std::string, PetImage>> synth_by_arm;
            for (Arm a : gan_arms) {
                auto it = synth_manifests.find({to_string(a), dir});
                if (it == synth_manifests.end()) continue;
                const Dataset sd = load_dataset(it->second);
                for (const auto& s : sd.studies) synth_by_arm[to_string(a)][s.key()] = s.pet;
            }
            const int rows = std::min<int>(cfg.montage_slices, int(test_fold.size()));
            for (int r = 0; r < rows; ++r) {
                const auto& s = test_fold.studies[size_t(r)];
                std::vector<const ImageGrid*> cols = {&s.label, &s.ct, &s.pet};
                for (Arm a : gan_arms) {
                    auto& m = synth_by_arm[to_string(a)];
                    auto it = m.find(s.key());
                    if (it != m.end()) cols.push_back(&it->second);
                }
                const int size = s.pet.height;
                ImageGrid strip(size, size * int(cols.size()));
                for (size_t c = 0; c < cols.size(); ++c)
                    for (int y = 0; y < size; ++y)
                        for (int x = 0; x < size; ++x)
                            strip.at(y, int(c) * size + x) = cols[c]->at(y, x);
                char name[96];
                std::snprintf(name, sizeof name, "fold%d_%s_s%03d.png", dir,
                              s.patient_id.c_str(), s.slice_index);
                save_image(strip, out_dir / "montage" / name);
            }
        }
    }

    nlohmann::json full;
    full["arms"] = std::move(arms_json);
    full["provenance"] = std::move(provenance);
    full["config"] = {{"seed", cfg.seed},
                      {"arms", [&] {
                           nlohmann::json a = nlohmann::json::array();
                           for (Arm x : cfg.arms) a.push_back(to_string(x));
                           return a;
                       }()},
                      {"gan",
                       {{"epochs", cfg.gan.epochs},
                        {"batch_size", cfg.gan.batch_size},
                        {"learning_rate", cfg.gan.learning_rate},
                        {"beta1", cfg.gan.beta1},
                        {"beta2", cfg.gan.beta2},
                        {"d_steps_per_g_step", cfg.gan.d_steps_per_g_step},
                        {"gen_base_width", cfg.gan.gen_base_width},
                        {"disc_base_width", cfg.gan.disc_base_width}}},
                      {"detector",
                       {{"epochs", cfg.detector.epochs},
                        {"batch_size", cfg.detector.batch_size},
                        {"learning_rate", cfg.detector.learning_rate},
                        {"base_width", cfg.detector.base_width},
                        {"pos_weight", cfg.detector.pos_weight}}},
                      {"loss", {{"lambda_l1", cfg.loss.lambda_l1}}},
                      {"eval",
                       {{"detector_threshold", cfg.eval.detector_threshold},
                        {"min_area", cfg.eval.min_area},
                        {"overlap_threshold", cfg.eval.overlap_threshold},
                        {"overlap_denominator",
                         cfg.eval.denominator == OverlapDenominator::Union ? "union" : "truth"}}}};
    full["tables"] = {{"detection", det_table}, {"quality", qual_table}};
    write_json(full, out_dir / "report.json");
    report.full = std::move(full);
    return report;
}

}  // namespace mgan
