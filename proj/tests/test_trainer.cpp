#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mgan/dataset.hpp"
#include "mgan/rng.hpp"
#include "mgan/trainer.hpp"
#include "testutil.hpp"

using namespace mgan;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("mgan_trainer_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Hand-built studies: a hot rectangle on a flat-uptake body. Small and
// regular so a few epochs run in well under a second.
Dataset toy_dataset(int n_patients, int slices, int size, uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    for (int p = 0; p < n_patients; ++p)
        for (int s = 0; s < slices; ++s) {
            PairedStudy st;
            st.patient_id = "t" + std::to_string(100 + p);
            st.slice_index = s;

            LabelMap lab(size, size);
            const int r0 = 2 + int(rng.uniform_index(uint64_t(size - 6)));
            const int c0 = 2 + int(rng.uniform_index(uint64_t(size - 6)));
            for (int r = r0; r < r0 + 3; ++r)
                for (int c = c0; c < c0 + 3; ++c) lab.at(r, c) = 1.0;

            CtImage ct(size, size);
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c)
                    ct.at(r, c) = 0.2 + 0.2 * ((r / 4 + c / 4) % 2);  // checkered anatomy

            PetImage pet(size, size);
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c)
                    pet.at(r, c) = lab.at(r, c) != 0.0 ? 0.85 : 0.25;
            pet.suv_scale = 8.0;

            st.label = lab;
            st.ct = ct;
            st.pet = pet;
            st.validate();
            ds.studies.push_back(std::move(st));
        }
    return ds;
}

TrainConfig tiny_gan_config() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.gen_base_width = 4;
    cfg.disc_base_width = 4;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("gan training records one entry per epoch with finite losses") {
    Dataset ds = toy_dataset(1, 2, 16, 1);
    TrainConfig cfg = tiny_gan_config();
    LossConfig loss;

    GanTrainResult r = train_gan(ds, cfg, loss);
    REQUIRE(r.log.epochs.size() == 2);
    CHECK(r.log.epochs[0].epoch == 1);
    CHECK(r.log.epochs[1].epoch == 2);
    for (const auto& e : r.log.epochs) {
        CHECK(std::isfinite(e.d_loss));
        CHECK(std::isfinite(e.g_adv));
        CHECK(std::isfinite(e.g_l1));
        CHECK(e.d_loss > 0.0);
        CHECK(e.g_l1 > 0.0);
        CHECK(e.seconds >= 0.0);
    }
    CHECK(r.generator.spec().image_size == 16);
    CHECK(r.generator.spec().mode == ChannelMode::M);
    CHECK(r.discriminator.spec().mode == ChannelMode::M);
}

TEST_CASE("gan training is bit-deterministic in its seed") {
    Dataset ds = toy_dataset(2, 2, 16, 2);
    TrainConfig cfg = tiny_gan_config();
    LossConfig loss;

    GanTrainResult a = train_gan(ds, cfg, loss);
    GanTrainResult b = train_gan(ds, cfg, loss);
    for (size_t i = 0; i < a.log.epochs.size(); ++i) {
        CHECK(a.log.epochs[i].d_loss == b.log.epochs[i].d_loss);
        CHECK(a.log.epochs[i].g_adv == b.log.epochs[i].g_adv);
        CHECK(a.log.epochs[i].g_l1 == b.log.epochs[i].g_l1);
    }

    const Tensor cond = make_condition(ChannelMode::M, ds.studies[0].label, ds.studies[0].ct);
    CHECK(a.generator.forward(cond).data == b.generator.forward(cond).data);

    TrainConfig other = cfg;
    other.seed = 12;
    GanTrainResult c = train_gan(ds, other, loss);
    CHECK(a.generator.forward(cond).data != c.generator.forward(cond).data);
}

TEST_CASE("channel mode controls the conditioning the gan trains on") {
    Dataset ds = toy_dataset(1, 2, 16, 3);
    TrainConfig cfg = tiny_gan_config();
    cfg.epochs = 1;
    cfg.channel_mode = ChannelMode::LB;
    LossConfig loss;

    GanTrainResult r = train_gan(ds, cfg, loss);
    CHECK(r.generator.spec().mode == ChannelMode::LB);

    Tensor cond = make_condition(ChannelMode::LB, ds.studies[0].label, ds.studies[0].ct);
    Tensor out = r.generator.forward(cond);
    CHECK(out.channels == 1);
    CHECK(out.height == 16);
}

TEST_CASE("training rejects unusable inputs") {
    TrainConfig cfg = tiny_gan_config();
    LossConfig loss;

    Dataset empty;
    CHECK_THROWS_AS(train_gan(empty, cfg, loss), InputError);

    Dataset mixed = toy_dataset(1, 1, 16, 4);
    Dataset bigger = toy_dataset(1, 1, 32, 4);
    bigger.studies[0].slice_index = 9;
    mixed.studies.push_back(bigger.studies[0]);
    CHECK_THROWS_AS(train_gan(mixed, cfg, loss), InputError);

    TrainConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(train_gan(toy_dataset(1, 1, 16, 5), bad, loss), ConfigError);
}

TEST_CASE("the csv log matches its schema") {
    Dataset ds = toy_dataset(1, 1, 16, 6);
    TrainConfig cfg = tiny_gan_config();
    cfg.epochs = 3;
    GanTrainResult r = train_gan(ds, cfg, LossConfig{});

    fs::path dir = fresh_dir("csv");
    r.log.write_csv(dir / "train_log.csv");

    std::ifstream in(dir / "train_log.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,d_loss,g_adv,g_l1,seconds");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        std::istringstream ss(line);
        std::string field;
        int fields = 0;
        while (std::getline(ss, field, ',')) ++fields;
        CHECK(fields == 5);
    }
    CHECK(rows == 3);
}

TEST_CASE("synthesis writes a paired manifest with deterministic images") {
    Dataset ds = toy_dataset(2, 2, 16, 7);
    TrainConfig cfg = tiny_gan_config();
    cfg.epochs = 1;
    GanTrainResult r = train_gan(ds, cfg, LossConfig{});

    fs::path dir1 = fresh_dir("synth1");
    fs::path manifest = synthesize(r.generator, ChannelMode::M, ds, dir1);
    Dataset synth = load_dataset(manifest);
    REQUIRE(synth.size() == ds.size());
    for (size_t i = 0; i < synth.size(); ++i) {
        CHECK(synth.studies[i].key() == ds.studies[i].key());
        // Labels and CT carry over untouched (same annotations, new PET).
        CHECK(synth.studies[i].label.values == ds.studies[i].label.values);
        CHECK(synth.studies[i].pet.suv_scale == ds.studies[i].pet.suv_scale);
        for (double v : synth.studies[i].pet.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }

    fs::path dir2 = fresh_dir("synth2");
    synthesize(r.generator, ChannelMode::M, ds, dir2);
    Dataset synth2 = load_dataset(dir2 / "manifest.json");
    for (size_t i = 0; i < synth.size(); ++i)
        CHECK(synth.studies[i].pet.values == synth2.studies[i].pet.values);

    CHECK_THROWS_AS(synthesize(r.generator, ChannelMode::LB, ds, fresh_dir("wrong_mode")),
                    InputError);
    Dataset big = toy_dataset(1, 1, 32, 8);
    CHECK_THROWS_AS(synthesize(r.generator, ChannelMode::M, big, fresh_dir("wrong_size")),
                    InputError);
    Dataset none;
    CHECK_THROWS_AS(synthesize(r.generator, ChannelMode::M, none, fresh_dir("empty")),
                    InputError);
}

TEST_CASE("detector training is deterministic and learns the toy pattern") {
    Dataset ds = toy_dataset(2, 3, 16, 9);
    std::vector<std::pair<PetImage, LabelMap>> pairs;
    for (const auto& s : ds.studies) pairs.emplace_back(s.pet, s.label);

    DetectorTrainConfig cfg;
    cfg.epochs = 30;
    cfg.base_width = 4;
    cfg.seed = 13;

    Detector a = train_detector(pairs, cfg);
    Detector b = train_detector(pairs, cfg);
    Tensor probe(1, 16, 16);
    for (size_t i = 0; i < probe.size(); ++i) probe.data[i] = (i % 7) / 7.0;
    CHECK(a.logits(probe).data == b.logits(probe).data);

    // The toy rule is trivial (hot pixel = tumor): after a short training
    // run the detector should separate hot from cold pixels.
    const auto& sample = ds.studies[0];
    ImageGrid prob = detector_forward(a, sample.pet);
    double hot = 0.0, cold = 0.0;
    int nh = 0, nc = 0;
    for (size_t i = 0; i < prob.values.size(); ++i) {
        if (sample.label.values[i] != 0.0) {
            hot += prob.values[i];
            ++nh;
        } else {
            cold += prob.values[i];
            ++nc;
        }
    }
    CHECK(hot / nh > cold / nc);

    CHECK_THROWS_AS(train_detector({}, cfg), InputError);

    DetectorTrainConfig bad = cfg;
    bad.pos_weight = 0.0;
    CHECK_THROWS_AS(train_detector(pairs, bad), ConfigError);
}

TEST_CASE("adam steps all registered parameters deterministically") {
    // Two identical conv layers, one optimizer each: after identical
    // gradient pushes their parameters stay in lockstep.
    Conv2d c1("c", 1, 1, 4, 2, Pad::uniform(1));
    Conv2d c2("c", 1, 1, 4, 2, Pad::uniform(1));
    Rng r1(77), r2(77);
    c1.init(r1, 0.02);
    c2.init(r2, 0.02);

    Adam o1({2e-4, 0.5, 0.999, 1e-8}, c1.params());
    Adam o2({2e-4, 0.5, 0.999, 1e-8}, c2.params());

    Rng data(5);
    for (int step = 0; step < 5; ++step) {
        Tensor x = mgan::testutil::random_tensor(1, 8, 8, data);
        Tensor gy(1, 4, 4);
        for (double& v : gy.data) v = data.uniform(-1.0, 1.0);

        o1.zero_grads();
        o2.zero_grads();
        c1.forward_train(x);
        c2.forward_train(x);
        c1.backward(gy);
        c2.backward(gy);
        o1.step();
        o2.step();
    }
    auto p1 = c1.params();
    auto p2 = c2.params();
    for (size_t i = 0; i < p1.size(); ++i) CHECK(*p1[i].values == *p2[i].values);

    // And the parameters moved.
    Conv2d fresh("c", 1, 1, 4, 2, Pad::uniform(1));
    Rng r3(77);
    fresh.init(r3, 0.02);
    CHECK(*c1.params()[0].values != *fresh.params()[0].values);

    AdamConfig bad{0.0, 0.5, 0.999, 1e-8};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
