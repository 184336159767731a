#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mgan/config.hpp"
#include "mgan/metrics.hpp"
#include "mgan/png_io.hpp"
#include "mgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace mgan;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
    std::string config;
    std::string out;
    uint64_t seed = 0;
    bool seed_given = false;
    bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "TOML config file");
    cmd->add_option("--out", c.out, "output directory (default: $MGAN_WORKSPACE/<command>)");
    auto* seed_opt = cmd->add_option("--seed", c.seed, "seed override");
    cmd->parse_complete_callback([&c, seed_opt] { c.seed_given = seed_opt->count() > 0; });
    cmd->add_flag("--force", c.force, "allow writing into a completed run directory");
}

ExperimentConfig load_config(const Common& c) {
    ExperimentConfig cfg =
        c.config.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(c.config);
    if (c.seed_given) {
        cfg.seed = c.seed;
        cfg.phantom.seed = c.seed;
        cfg.train.seed = c.seed;
        cfg.detector.seed = c.seed;
    }
    return cfg;
}

fs::path resolve_out(const Common& c, const char* sub) {
    if (!c.out.empty()) return c.out;
    const char* ws = std::getenv("MGAN_WORKSPACE");
    return fs::path(ws && *ws ? ws : "mgan-workspace") / sub;
}

// A directory with a run.json is a completed run and stays immutable
// unless --force is passed.
fs::path claim_out_dir(const Common& c, const char* sub) {
    const fs::path out = resolve_out(c, sub);
    if (fs::exists(out / "run.json") && !c.force)
        throw InputError("output directory " + out.string() +
                         " already holds a completed run (pass --force to overwrite)");
    fs::create_directories(out);
    return out;
}

std::string file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_json_file(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

// Provenance record; written last, so its presence marks completion.
// Contains no timestamps: a rerun with identical inputs is bit-identical.
void write_run_record(const fs::path& out, const std::string& command, const Common& c,
                      uint64_t seed,
                      const std::vector<std::pair<std::string, fs::path>>& inputs) {
    nlohmann::json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["seed"] = seed;
    if (!c.config.empty()) {
        j["config_file"] = c.config;
        j["config_hash"] = fnv1a64_hex(file_bytes(c.config));
    }
    nlohmann::json in = nlohmann::json::object();
    for (const auto& [name, path] : inputs)
        in[name] = {{"path", path.string()}, {"fnv64", fnv1a64_hex(file_bytes(path))}};
    j["inputs"] = in;
    write_json_file(j, out / "run.json");
}

void require_path(const std::string& value, const char* key, const char* cmd) {
    if (value.empty())
        throw ConfigError(std::string("paths.") + key + " is required for '" + cmd + "'");
}

std::vector<std::pair<PetImage, LabelMap>> dataset_pairs(const Dataset& ds) {
    std::vector<std::pair<PetImage, LabelMap>> out;
    out.reserve(ds.size());
    for (const auto& s : ds.studies) out.emplace_back(s.pet, s.label);
    return out;
}

// ------------------------------------------------------------ subcommands

int cmd_phantom(const Common& c, int patients, int slices, int size) {
    ExperimentConfig cfg = load_config(c);
    if (patients > 0) cfg.patients = patients;
    if (slices > 0) cfg.slices_per_patient = slices;
    if (size > 0) cfg.phantom.image_size = size;
    cfg.phantom.validate();
    const fs::path out = claim_out_dir(c, "phantom");
    const fs::path manifest =
        generate_corpus(cfg.phantom, cfg.patients, cfg.slices_per_patient, out);
    write_run_record(out, "phantom", c, cfg.phantom.seed, {});
    std::cout << manifest.string() << "\n";
    return 0;
}

int cmd_train(const Common& c) {
    ExperimentConfig cfg = load_config(c);
    require_path(cfg.paths.train_manifest, "train_manifest", "train");
    const Dataset ds = load_dataset(cfg.paths.train_manifest);
    const fs::path out = claim_out_dir(c, "train");

    GanTrainResult result = train_gan(ds, cfg.train, cfg.loss);
    const nlohmann::json meta = {{"seed", cfg.train.seed}, {"epochs", cfg.train.epochs}};
    save_generator(out / "gen.ckpt", result.generator, meta);
    save_discriminator(out / "disc.ckpt", result.discriminator, meta);
    result.log.write_csv(out / "train_log.csv");
    write_run_record(out, "train", c, cfg.train.seed,
                     {{"train_manifest", cfg.paths.train_manifest}});
    const auto& last = result.log.epochs.back();
    std::cout << "trained " << to_string(cfg.train.channel_mode) << " generator: epoch "
              << last.epoch << " d_loss " << last.d_loss << " g_adv " << last.g_adv << " g_l1 "
              << last.g_l1 << "\n"
              << (out / "gen.ckpt").string() << "\n";
    return 0;
}

int cmd_synth(const Common& c) {
    ExperimentConfig cfg = load_config(c);
    require_path(cfg.paths.checkpoint, "checkpoint", "synth");
    require_path(cfg.paths.input_manifest, "input_manifest", "synth");
    Generator gen = load_generator(cfg.paths.checkpoint);
    const Dataset ds = load_dataset(cfg.paths.input_manifest);
    const fs::path out = claim_out_dir(c, "synth");
    const fs::path manifest = synthesize(gen, gen.spec().mode, ds, out);
    write_run_record(out, "synth", c, cfg.seed,
                     {{"checkpoint", cfg.paths.checkpoint},
                      {"input_manifest", cfg.paths.input_manifest}});
    std::cout << manifest.string() << "\n";
    return 0;
}

int cmd_quality(const Common& c) {
    ExperimentConfig cfg = load_config(c);
    require_path(cfg.paths.synth_manifest, "synth_manifest", "quality");
    require_path(cfg.paths.reference_manifest, "reference_manifest", "quality");
    const Dataset synth = load_dataset(cfg.paths.synth_manifest);
    const Dataset reference = load_dataset(cfg.paths.reference_manifest);
    const fs::path out = claim_out_dir(c, "quality");
    const QualityReport report = quality_report(synth, reference);
    write_json_file(report.to_json(), out / "quality.json");
    {
        std::ofstream tout(out / "quality.txt");
        tout << report.table();
    }
    write_run_record(out, "quality", c, cfg.seed,
                     {{"synth_manifest", cfg.paths.synth_manifest},
                      {"reference_manifest", cfg.paths.reference_manifest}});
    std::cout << report.table();
    return 0;
}

int cmd_detect(const Common& c) {
    ExperimentConfig cfg = load_config(c);
    require_path(cfg.paths.train_manifest, "train_manifest", "detect");
    require_path(cfg.paths.test_manifest, "test_manifest", "detect");
    const Dataset train_ds = load_dataset(cfg.paths.train_manifest);
    const Dataset test_ds = load_dataset(cfg.paths.test_manifest);
    const fs::path out = claim_out_dir(c, "detect");

    Detector det = train_detector(dataset_pairs(train_ds), cfg.detector);
    save_detector(out / "detector.ckpt", det, {{"seed", cfg.detector.seed}});
    const DetectionReport report = evaluate_detector(det, dataset_pairs(test_ds), cfg.eval);
    nlohmann::json per_image = nlohmann::json::array();
    for (const auto& m : report.per_image)
        per_image.push_back({{"image", m.key}, {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}});
    write_json_file({{"tp", report.tp},
                     {"fp", report.fp},
                     {"fn", report.fn},
                     {"precision", report.scores.precision},
                     {"recall", report.scores.recall},
                     {"f_score", report.scores.f_score},
                     {"per_image", per_image}},
                    out / "detection.json");
    const std::string table = detection_table({{"detector", report.scores}});
    {
        std::ofstream tout(out / "detection.txt");
        tout << table;
    }
    write_run_record(out, "detect", c, cfg.detector.seed,
                     {{"train_manifest", cfg.paths.train_manifest},
                      {"test_manifest", cfg.paths.test_manifest}});
    std::cout << table;
    return 0;
}

int cmd_experiment(const Common& c) {
    ExperimentConfig cfg = load_config(c);
    const fs::path out = claim_out_dir(c, "experiment");
    const fs::path manifest =
        generate_corpus(cfg.phantom, cfg.patients, cfg.slices_per_patient, out / "phantom");
    const Dataset ds = load_dataset(manifest);
    const ExperimentReport report = run_two_fold_protocol(ds, cfg.protocol(), out);
    write_run_record(out, "experiment", c, cfg.seed, {});
    std::cout << report.full["tables"]["quality"].get<std::string>() << "\n"
              << report.full["tables"]["detection"].get<std::string>();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phantom PET synthesis and tumor-detection experiments"};
    app.require_subcommand(1);

    Common c_phantom, c_train, c_synth, c_quality, c_detect, c_experiment;
    int patients = 0, slices = 0, size = 0;

    auto* phantom = app.add_subcommand("phantom", "generate a phantom study corpus");
    add_common(phantom, c_phantom);
    phantom->add_option("--patients", patients, "number of patients");
    phantom->add_option("--slices", slices, "slices per patient");
    phantom->add_option("--size", size, "image size (power of two)");

    auto* train = app.add_subcommand("train", "train a conditional GAN on paired studies");
    add_common(train, c_train);
    auto* synth = app.add_subcommand("synth", "synthesize PET from a trained generator");
    add_common(synth, c_synth);
    auto* quality = app.add_subcommand("quality", "score synthetic PET against reference PET");
    add_common(quality, c_quality);
    auto* detect = app.add_subcommand("detect", "train and evaluate the tumor detector");
    add_common(detect, c_detect);
    auto* experiment = app.add_subcommand("experiment", "run the full two-fold protocol");
    add_common(experiment, c_experiment);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (phantom->parsed()) return cmd_phantom(c_phantom, patients, slices, size);
        if (train->parsed()) return cmd_train(c_train);
        if (synth->parsed()) return cmd_synth(c_synth);
        if (quality->parsed()) return cmd_quality(c_quality);
        if (detect->parsed()) return cmd_detect(c_detect);
        if (experiment->parsed()) return cmd_experiment(c_experiment);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const GenerationError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
