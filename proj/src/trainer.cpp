#include "mgan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mgan/png_io.hpp"

namespace mgan {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (d_steps_per_g_step < 1) throw ConfigError("train: d_steps_per_g_step must be >= 1");
    adam().validate();
}

void DetectorTrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("detector: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("detector: batch_size must be >= 1");
    if (!(pos_weight > 0.0)) throw ConfigError("detector: pos_weight must be positive");
    adam().validate();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write train log " + path.string());
    out << "epoch,d_loss,g_adv,g_l1,seconds\n";
    char line[160];
    for (const auto& r : epochs) {
        std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.3f\n", r.epoch, r.d_loss, r.g_adv,
                      r.g_l1, r.seconds);
        out << line;
    }
}

namespace {

double mean_softplus_neg(const Tensor& logits) {
    double s = 0.0;
    for (double v : logits.data) s += softplus(-v);
    return s / double(logits.size());
}

void scale_tensor(Tensor& t, double s) {
    for (double& v : t.data) v *= s;
}

void require_finite(double v, const char* what, int epoch, size_t batch) {
    if (!std::isfinite(v))
        throw NumericError(std::string("non-finite ") + what + " at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch));
}

int checked_image_size(const std::vector<const ImageGrid*>& grids, const char* what) {
    const int size = grids.front()->height;
    for (const ImageGrid* g : grids)
        if (g->height != size || g->width != size)
            throw InputError(std::string(what) + ": images must be square and uniformly sized");
    return size;
}

}  // namespace

GanTrainResult train_gan(const Dataset& train_set, const TrainConfig& cfg,
                         const LossConfig& loss_cfg) {
    cfg.validate();
    loss_cfg.validate();
    if (train_set.empty()) throw InputError("train_gan: empty training set");
    std::vector<const ImageGrid*> grids;
    for (const auto& s : train_set.studies) {
        grids.push_back(&s.label);
        grids.push_back(&s.ct);
        grids.push_back(&s.pet);
    }
    const int size = checked_image_size(grids, "train_gan");

    const Rng root(hash_combine(cfg.seed, "train-gan"));
    Rng init_g = root.derive("init/generator");
    Rng init_d = root.derive("init/discriminator");
    Rng shuffle_rng = root.derive("shuffle");
    Rng dropout_rng = root.derive("dropout");

    Generator gen({size, cfg.gen_base_width, cfg.channel_mode}, init_g);
    Discriminator disc({size, cfg.disc_base_width, cfg.channel_mode}, init_d);
    Adam opt_g(cfg.adam(), gen.params());
    Adam opt_d(cfg.adam(), disc.params());

    // Pre-built per-study tensors (a few MB at desk scale).
    const size_t n = train_set.size();
    std::vector<Tensor> conds, reals;
    conds.reserve(n);
    reals.reserve(n);
    for (const auto& s : train_set.studies) {
        conds.push_back(make_condition(cfg.channel_mode, s.label, s.ct));
        Tensor real(1, size, size);
        copy_to_net(s.pet, real, 0);
        reals.push_back(std::move(real));
    }

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    TrainLog log;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        double sum_d = 0.0, sum_adv = 0.0, sum_l1 = 0.0;
        size_t d_evals = 0, g_evals = 0;

        for (size_t start = 0, batch = 0; start < n; start += size_t(cfg.batch_size), ++batch) {
            const size_t stop = std::min(start + size_t(cfg.batch_size), n);
            const double inv_b = 1.0 / double(stop - start);

            for (int dstep = 0; dstep < cfg.d_steps_per_g_step; ++dstep) {
                opt_d.zero_grads();
                for (size_t k = start; k < stop; ++k) {
                    const size_t i = order[k];
                    const Tensor fake = gen.forward_train(conds[i], dropout_rng);
                    const Tensor real_logits = disc.forward_train(conds[i], reals[i]);
                    Tensor g_real = d_loss_grad_real(real_logits);
                    scale_tensor(g_real, inv_b);
                    disc.backward(g_real);
                    const Tensor fake_logits = disc.forward_train(conds[i], fake);
                    Tensor g_fake = d_loss_grad_fake(fake_logits);
                    scale_tensor(g_fake, inv_b);
                    disc.backward(g_fake);
                    const double d = gan_loss_reference(real_logits, fake_logits).d_loss;
                    require_finite(d, "d_loss", epoch, batch);
                    sum_d += d;
                    ++d_evals;
                }
                opt_d.step();
            }

            opt_g.zero_grads();
            for (size_t k = start; k < stop; ++k) {
                const size_t i = order[k];
                const Tensor fake = gen.forward_train(conds[i], dropout_rng);
                const Tensor fake_logits = disc.forward_train(conds[i], fake);
                Tensor g_logits = g_adv_grad(fake_logits);
                scale_tensor(g_logits, inv_b);
                // Pollutes disc grads; the next d-step zeroes them first.
                Tensor g_fake = disc.backward(g_logits);
                Tensor g_l1 = l1_grad(fake, reals[i], loss_cfg.lambda_l1 * inv_b);
                for (size_t p = 0; p < g_fake.size(); ++p) g_fake.data[p] += g_l1.data[p];
                gen.backward(g_fake);

                const double adv = mean_softplus_neg(fake_logits);
                double l1 = 0.0;
                for (size_t p = 0; p < fake.size(); ++p)
                    l1 += std::abs(fake.data[p] - reals[i].data[p]);
                l1 /= double(fake.size());
                require_finite(adv, "g_adv", epoch, batch);
                require_finite(l1, "g_l1", epoch, batch);
                sum_adv += adv;
                sum_l1 += l1;
                ++g_evals;
            }
            opt_g.step();
        }

        const auto t1 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.d_loss = sum_d / double(d_evals);
        rec.g_adv = sum_adv / double(g_evals);
        rec.g_l1 = sum_l1 / double(g_evals);
        rec.seconds = std::chrono::duration<double>(t1 - t0).count();
        log.epochs.push_back(rec);
    }

    return {std::move(gen), std::move(disc), std::move(log)};
}

std::filesystem::path synthesize(const Generator& gen, ChannelMode mode, const Dataset& studies,
                                 const std::filesystem::path& out_dir) {
    if (studies.empty()) throw InputError("synthesize: empty study set");
    if (mode != gen.spec().mode)
        throw InputError("synthesize: generator was trained in mode " +
                         to_string(gen.spec().mode) + ", requested " + to_string(mode));

    std::filesystem::create_directories(out_dir / "images");
    std::vector<ManifestEntry> entries;
    for (const auto& s : studies.studies) {
        if (s.pet.height != gen.spec().image_size || s.pet.width != gen.spec().image_size)
            throw InputError("synthesize: study " + s.key() + " size does not match generator");
        const Tensor cond = make_condition(mode, s.label, s.ct);
        const ImageGrid synth = generator_forward(gen, cond);

        char stem[64];
        std::snprintf(stem, sizeof stem, "%s_s%03d", s.patient_id.c_str(), s.slice_index);
        ManifestEntry e;
        e.patient_id = s.patient_id;
        e.slice_index = s.slice_index;
        e.label = "images/" + std::string(stem) + "_label.png";
        e.ct = "images/" + std::string(stem) + "_ct.png";
        e.pet = "images/" + std::string(stem) + "_synth.png";
        e.suv_scale = s.pet.suv_scale;
        save_image(s.label, out_dir / e.label);
        save_image(s.ct, out_dir / e.ct);
        save_image(synth, out_dir / e.pet);
        entries.push_back(std::move(e));
    }
    const std::filesystem::path manifest = out_dir / "manifest.json";
    write_manifest(entries, manifest);
    return manifest;
}

Detector train_detector(const std::vector<std::pair<PetImage, LabelMap>>& train_pairs,
                        const DetectorTrainConfig& cfg) {
    cfg.validate();
    if (train_pairs.empty()) throw InputError("train_detector: empty training set");
    std::vector<const ImageGrid*> grids;
    for (const auto& [pet, label] : train_pairs) {
        grids.push_back(&pet);
        grids.push_back(&label);
    }
    const int size = checked_image_size(grids, "train_detector");

    const Rng root(hash_combine(cfg.seed, "train-detector"));
    Rng init = root.derive("init");
    Rng shuffle_rng = root.derive("shuffle");
    Detector det({size, cfg.base_width}, init);
    Adam opt(cfg.adam(), det.params());

    const size_t n = train_pairs.size();
    std::vector<Tensor> inputs, targets;
    inputs.reserve(n);
    targets.reserve(n);
    for (const auto& [pet, label] : train_pairs) {
        Tensor x(1, size, size);
        copy_to_net(pet, x, 0);
        inputs.push_back(std::move(x));
        Tensor y(1, size, size);
        std::copy(label.values.begin(), label.values.end(), y.data.begin());
        targets.push_back(std::move(y));
    }

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (size_t start = 0, batch = 0; start < n; start += size_t(cfg.batch_size), ++batch) {
            const size_t stop = std::min(start + size_t(cfg.batch_size), n);
            const double inv_b = 1.0 / double(stop - start);
            opt.zero_grads();
            for (size_t k = start; k < stop; ++k) {
                const size_t i = order[k];
                const Tensor logits = det.logits_train(inputs[i]);
                BceResult bce = weighted_bce_with_logits(logits, targets[i], cfg.pos_weight);
                require_finite(bce.loss, "detector bce", epoch, batch);
                scale_tensor(bce.grad, inv_b);
                det.backward(bce.grad);
            }
            opt.step();
        }
    }
    return det;
}

}  // namespace mgan
