#include "mgan/networks.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace mgan {

int cond_channels(ChannelMode mode) { return mode == ChannelMode::M ? 2 : 1; }

std::string to_string(ChannelMode mode) {
    switch (mode) {
        case ChannelMode::LB: return "LB";
        case ChannelMode::CT: return "CT";
        case ChannelMode::M: return "M";
    }
    throw ValidationError("unknown channel mode");
}

ChannelMode channel_mode_from_string(const std::string& s) {
    if (s == "LB" || s == "lb") return ChannelMode::LB;
    if (s == "CT" || s == "ct") return ChannelMode::CT;
    if (s == "M" || s == "m") return ChannelMode::M;
    throw ConfigError("channel mode must be LB, CT or M, got '" + s + "'");
}

Tensor make_condition(ChannelMode mode, const ImageGrid& label, const ImageGrid& ct) {
    if (label.height != ct.height || label.width != ct.width)
        throw ValidationError("make_condition: label/ct dimensions disagree");
    Tensor cond(cond_channels(mode), label.height, label.width);
    switch (mode) {
        case ChannelMode::LB: copy_to_net(label, cond, 0); break;
        case ChannelMode::CT: copy_to_net(ct, cond, 0); break;
        case ChannelMode::M:
            copy_to_net(label, cond, 0);
            copy_to_net(ct, cond, 1);
            break;
    }
    return cond;
}

namespace {

int log2_exact(int v) {
    if (!ImageGrid::power_of_two(v)) throw ValidationError("size must be a power of two");
    return std::countr_zero(unsigned(v));
}

void check_size_and_width(int image_size, int base_width, const char* what) {
    if (image_size < 8 || !ImageGrid::power_of_two(image_size))
        throw ConfigError(std::string(what) + ": image_size must be a power of two >= 8");
    if (base_width < 2 || base_width > 512)
        throw ConfigError(std::string(what) + ": base_width out of range [2,512]");
}

void add_into(Tensor& dst, const Tensor& src) {
    if (dst.size() == 0) {
        dst = src;
        return;
    }
    for (size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

constexpr double kInitStd = 0.02;

}  // namespace

// ------------------------------------------------------------- Generator

int GeneratorSpec::depth() const { return std::max(3, log2_exact(image_size) - 2); }

void GeneratorSpec::validate() const { check_size_and_width(image_size, base_width, "generator"); }

Generator::Generator(const GeneratorSpec& spec, Rng& init_rng) : spec_(spec) {
    spec_.validate();
    const int E = spec_.depth();
    const int cap = 8 * spec_.base_width;
    auto width = [&](int i) { return std::min(spec_.base_width << i, cap); };

    int in_c = cond_channels(spec_.mode);
    for (int i = 0; i < E; ++i) {
        EncStage st{Conv2d("enc" + std::to_string(i), in_c, width(i), 4, 2, Pad::uniform(1)),
                    std::nullopt};
        if (i > 0) st.norm.emplace("enc" + std::to_string(i) + ".norm", width(i));
        enc_.push_back(std::move(st));
        in_c = width(i);
    }

    const int dropout_stages = std::min(3, E - 1);
    int prev_c = width(E - 1);
    for (int j = 0; j < E; ++j) {
        const bool last = j == E - 1;
        const int skip_c = j > 0 ? width(E - 1 - j) : 0;
        const int out_c = last ? 1 : width(E - 2 - j);
        DecStage st{ConvTranspose2d("dec" + std::to_string(j), prev_c + skip_c, out_c, 4, 2, 1),
                    std::nullopt, std::nullopt};
        if (!last) {
            st.norm.emplace("dec" + std::to_string(j) + ".norm", out_c);
            if (j < dropout_stages) st.drop.emplace(0.5);
        }
        dec_.push_back(std::move(st));
        prev_c = out_c;
    }

    for (auto& st : enc_) st.conv.init(init_rng, kInitStd);
    for (auto& st : dec_) st.convt.init(init_rng, kInitStd);
}

Tensor Generator::forward(const Tensor& cond) const {
    const int E = spec_.depth();
    std::vector<Tensor> enc_out;
    enc_out.reserve(E);
    Tensor h = cond;
    for (const auto& st : enc_) {
        h = st.conv.forward(h);
        if (st.norm) h = st.norm->forward(h);
        h = st.act.forward(h);
        enc_out.push_back(h);
    }
    Tensor d = enc_out[E - 1];
    for (int j = 0; j < E; ++j) {
        const auto& st = dec_[j];
        Tensor in = j == 0 ? std::move(d) : concat_channels(d, enc_out[E - 1 - j]);
        d = st.convt.forward(in);
        if (j < E - 1) {
            d = st.norm->forward(d);
            d = st.act.forward(d);
        }
    }
    return out_act_.forward(d);
}

Tensor Generator::forward_train(const Tensor& cond, Rng& dropout_rng, bool zero_skips) {
    const int E = spec_.depth();
    zero_skips_ = zero_skips;
    enc_out_.clear();
    enc_out_.reserve(E);
    skip_channels_.assign(E, 0);

    Tensor h = cond;
    for (auto& st : enc_) {
        h = st.conv.forward_train(h);
        if (st.norm) h = st.norm->forward_train(h);
        h = st.act.forward_train(h);
        enc_out_.push_back(h);
    }
    Tensor d = enc_out_[E - 1];
    for (int j = 0; j < E; ++j) {
        auto& st = dec_[j];
        Tensor in;
        if (j == 0) {
            in = std::move(d);
        } else {
            const Tensor& skip = enc_out_[E - 1 - j];
            skip_channels_[j] = skip.channels;
            if (zero_skips_) {
                in = concat_channels(d, Tensor(skip.channels, skip.height, skip.width));
            } else {
                in = concat_channels(d, skip);
            }
        }
        d = st.convt.forward_train(in);
        if (j < E - 1) {
            d = st.norm->forward_train(d);
            if (st.drop) d = st.drop->forward_train(d, dropout_rng);
            d = st.act.forward_train(d);
        }
    }
    return out_act_.forward_train(d);
}

void Generator::backward(const Tensor& grad_out) {
    const int E = spec_.depth();
    std::vector<Tensor> enc_grad(E);

    Tensor g = out_act_.backward(grad_out);
    for (int j = E - 1; j >= 0; --j) {
        auto& st = dec_[j];
        if (j < E - 1) {
            g = st.act.backward(g);
            if (st.drop) g = st.drop->backward(g);
            g = st.norm->backward(g);
        }
        g = st.convt.backward(g);
        if (j > 0) {
            const int skip_c = skip_channels_[j];
            const int prev_c = g.channels - skip_c;
            if (!zero_skips_) add_into(enc_grad[E - 1 - j], slice_channels(g, prev_c, skip_c));
            g = slice_channels(g, 0, prev_c);
        }
    }
    add_into(enc_grad[E - 1], g);

    for (int i = E - 1; i >= 0; --i) {
        Tensor gi = std::move(enc_grad[i]);
        gi = enc_[i].act.backward(gi);
        if (enc_[i].norm) gi = enc_[i].norm->backward(gi);
        gi = enc_[i].conv.backward(gi);
        if (i > 0) add_into(enc_grad[i - 1], gi);
    }
}

std::vector<ParamRef> Generator::params() {
    std::vector<ParamRef> out;
    for (auto& st : enc_) {
        for (auto& p : st.conv.params()) out.push_back(p);
        if (st.norm)
            for (auto& p : st.norm->params()) out.push_back(p);
    }
    for (auto& st : dec_) {
        for (auto& p : st.convt.params()) out.push_back(p);
        if (st.norm)
            for (auto& p : st.norm->params()) out.push_back(p);
    }
    return out;
}

// --------------------------------------------------------- Discriminator

void DiscriminatorSpec::validate() const {
    check_size_and_width(image_size, base_width, "discriminator");
}

Discriminator::Discriminator(const DiscriminatorSpec& spec, Rng& init_rng) : spec_(spec) {
    spec_.validate();
    const int B = spec_.base_width;
    const int widths[5] = {B, 2 * B, 4 * B, 8 * B, 1};
    const int strides[5] = {2, 2, 2, 1, 1};

    int in_c = cond_channels(spec_.mode) + 1;
    for (int l = 0; l < 5; ++l) {
        const Pad pad = strides[l] == 2 ? Pad::uniform(1) : Pad{1, 2, 1, 2};
        Layer layer{Conv2d("disc" + std::to_string(l), in_c, widths[l], 4, strides[l], pad),
                    std::nullopt, std::nullopt};
        if (l >= 1 && l <= 3) layer.norm.emplace("disc" + std::to_string(l) + ".norm", widths[l]);
        if (l < 4) layer.act.emplace(0.2);
        layers_.push_back(std::move(layer));
        in_c = widths[l];
    }
    for (auto& l : layers_) l.conv.init(init_rng, kInitStd);
}

Tensor Discriminator::forward(const Tensor& cond, const Tensor& candidate) const {
    Tensor h = concat_channels(cond, candidate);
    for (const auto& l : layers_) {
        h = l.conv.forward(h);
        if (l.norm) h = l.norm->forward(h);
        if (l.act) h = l.act->forward(h);
    }
    return h;
}

Tensor Discriminator::forward_train(const Tensor& cond, const Tensor& candidate) {
    Tensor h = concat_channels(cond, candidate);
    for (auto& l : layers_) {
        h = l.conv.forward_train(h);
        if (l.norm) h = l.norm->forward_train(h);
        if (l.act) h = l.act->forward_train(h);
    }
    return h;
}

Tensor Discriminator::backward(const Tensor& grad_logits) {
    Tensor g = grad_logits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        if (it->act) g = it->act->backward(g);
        if (it->norm) g = it->norm->backward(g);
        g = it->conv.backward(g);
    }
    return slice_channels(g, g.channels - 1, 1);
}

std::vector<ParamRef> Discriminator::params() {
    std::vector<ParamRef> out;
    for (auto& l : layers_) {
        for (auto& p : l.conv.params()) out.push_back(p);
        if (l.norm)
            for (auto& p : l.norm->params()) out.push_back(p);
    }
    return out;
}

// --------------------------------------------------------------- Detector

void DetectorSpec::validate() const { check_size_and_width(image_size, base_width, "detector"); }

Detector::Detector(const DetectorSpec& spec, Rng& init_rng) : spec_(spec) {
    spec_.validate();
    const int B = spec_.base_width;
    const int down_w[3] = {B, 2 * B, 4 * B};
    int in_c = 1;
    for (int i = 0; i < 3; ++i) {
        Down st{Conv2d("det_down" + std::to_string(i), in_c, down_w[i], 4, 2, Pad::uniform(1)),
                std::nullopt};
        if (i > 0) st.norm.emplace("det_down" + std::to_string(i) + ".norm", down_w[i]);
        down_.push_back(std::move(st));
        in_c = down_w[i];
    }
    const int up_w[3] = {2 * B, B, 1};
    for (int i = 0; i < 3; ++i) {
        Up st{ConvTranspose2d("det_up" + std::to_string(i), in_c, up_w[i], 4, 2, 1), std::nullopt};
        if (i < 2) st.norm.emplace("det_up" + std::to_string(i) + ".norm", up_w[i]);
        up_.push_back(std::move(st));
        in_c = up_w[i];
    }
    for (auto& st : down_) st.conv.init(init_rng, kInitStd);
    for (auto& st : up_) st.convt.init(init_rng, kInitStd);
}

Tensor Detector::logits(const Tensor& x) const {
    Tensor h = x;
    for (const auto& st : down_) {
        h = st.conv.forward(h);
        if (st.norm) h = st.norm->forward(h);
        h = st.act.forward(h);
    }
    for (int i = 0; i < 3; ++i) {
        h = up_[i].convt.forward(h);
        if (up_[i].norm) h = up_[i].norm->forward(h);
        if (i < 2) h = up_[i].act.forward(h);
    }
    return h;
}

Tensor Detector::logits_train(const Tensor& x) {
    Tensor h = x;
    for (auto& st : down_) {
        h = st.conv.forward_train(h);
        if (st.norm) h = st.norm->forward_train(h);
        h = st.act.forward_train(h);
    }
    for (int i = 0; i < 3; ++i) {
        h = up_[i].convt.forward_train(h);
        if (up_[i].norm) h = up_[i].norm->forward_train(h);
        if (i < 2) h = up_[i].act.forward_train(h);
    }
    return h;
}

void Detector::backward(const Tensor& grad_logits) {
    Tensor g = grad_logits;
    for (int i = 2; i >= 0; --i) {
        if (i < 2) g = up_[i].act.backward(g);
        if (up_[i].norm) g = up_[i].norm->backward(g);
        g = up_[i].convt.backward(g);
    }
    for (int i = 2; i >= 0; --i) {
        g = down_[i].act.backward(g);
        if (down_[i].norm) g = down_[i].norm->backward(g);
        g = down_[i].conv.backward(g);
    }
}

std::vector<ParamRef> Detector::params() {
    std::vector<ParamRef> out;
    for (auto& st : down_) {
        for (auto& p : st.conv.params()) out.push_back(p);
        if (st.norm)
            for (auto& p : st.norm->params()) out.push_back(p);
    }
    for (auto& st : up_) {
        for (auto& p : st.convt.params()) out.push_back(p);
        if (st.norm)
            for (auto& p : st.norm->params()) out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------- image bridges

ImageGrid generator_forward(const Generator& gen, const Tensor& cond) {
    if (cond.channels != cond_channels(gen.spec().mode))
        throw ValidationError("generator_forward: condition channel count mismatch");
    return from_net(gen.forward(cond), 0);
}

Tensor discriminator_forward(const Discriminator& disc, const Tensor& cond,
                             const Tensor& candidate) {
    return disc.forward(cond, candidate);
}

ImageGrid detector_forward(const Detector& det, const ImageGrid& pet) {
    Tensor x(1, pet.height, pet.width);
    copy_to_net(pet, x, 0);
    Tensor z = det.logits(x);
    ImageGrid prob(z.height, z.width);
    for (size_t i = 0; i < prob.values.size(); ++i)
        prob.values[i] = 1.0 / (1.0 + std::exp(-z.data[i]));
    return prob;
}

// ------------------------------------------------------------ checkpoints

namespace {

constexpr char kMagic[9] = "MGANCKP1";

void write_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t read_u32(std::istream& in) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void save_arrays(const std::filesystem::path& path, std::vector<ParamRef> refs,
                 nlohmann::json sidecar) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out.write(kMagic, 8);
    write_u32(out, uint32_t(refs.size()));
    for (const auto& r : refs) {
        write_u32(out, uint32_t(r.name.size()));
        out.write(r.name.data(), std::streamsize(r.name.size()));
        write_u64(out, r.values->size());
        out.write(reinterpret_cast<const char*>(r.values->data()),
                  std::streamsize(r.values->size() * sizeof(double)));
    }
    if (!out) throw InputError("short write on checkpoint " + path.string());
    out.close();

    std::ofstream meta(path.string() + ".json");
    if (!meta) throw InputError("cannot write checkpoint sidecar " + path.string() + ".json");
    meta << sidecar.dump(2) << "\n";
}

void load_arrays(const std::filesystem::path& path, std::vector<ParamRef> refs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("checkpoint not found: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw InputError(path.string() + " is not a checkpoint file");
    std::map<std::string, ParamRef*> by_name;
    for (auto& r : refs) by_name[r.name] = &r;
    const uint32_t count = read_u32(in);
    if (count != refs.size())
        throw InputError("checkpoint " + path.string() + " carries " + std::to_string(count) +
                         " arrays, expected " + std::to_string(refs.size()));
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_u32(in);
        if (!in || name_len > 4096) throw InputError("corrupt checkpoint " + path.string());
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const uint64_t n = read_u64(in);
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw InputError("checkpoint " + path.string() + ": unexpected array '" + name + "'");
        if (n != it->second->values->size())
            throw InputError("checkpoint " + path.string() + ": array '" + name +
                             "' has wrong length");
        in.read(reinterpret_cast<char*>(it->second->values->data()),
                std::streamsize(n * sizeof(double)));
        if (!in) throw InputError("truncated checkpoint " + path.string());
    }
}

nlohmann::json read_sidecar(const std::filesystem::path& path) {
    std::ifstream meta(path.string() + ".json");
    if (!meta) throw InputError("checkpoint sidecar not found: " + path.string() + ".json");
    nlohmann::json j;
    try {
        meta >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("bad checkpoint sidecar " + path.string() + ".json: " + e.what());
    }
    return j;
}

nlohmann::json base_meta(const std::string& type, const nlohmann::json& extra) {
    nlohmann::json j = extra.is_null() ? nlohmann::json::object() : extra;
    j["format"] = "mgan-checkpoint-v1";
    j["type"] = type;
    return j;
}

void require_type(const nlohmann::json& j, const std::string& type,
                  const std::filesystem::path& path) {
    if (!j.contains("type") || j.at("type") != type)
        throw InputError("checkpoint " + path.string() + " is not a " + type + " checkpoint");
}

}  // namespace

void save_generator(const std::filesystem::path& path, Generator& gen,
                    const nlohmann::json& extra_meta) {
    nlohmann::json j = base_meta("generator", extra_meta);
    j["image_size"] = gen.spec().image_size;
    j["base_width"] = gen.spec().base_width;
    j["mode"] = to_string(gen.spec().mode);
    save_arrays(path, gen.params(), j);
}

Generator load_generator(const std::filesystem::path& path) {
    nlohmann::json j = read_sidecar(path);
    require_type(j, "generator", path);
    GeneratorSpec spec;
    spec.image_size = j.at("image_size").get<int>();
    spec.base_width = j.at("base_width").get<int>();
    spec.mode = channel_mode_from_string(j.at("mode").get<std::string>());
    Rng scratch(0);
    Generator gen(spec, scratch);
    load_arrays(path, gen.params());
    return gen;
}

void save_discriminator(const std::filesystem::path& path, Discriminator& disc,
                        const nlohmann::json& extra_meta) {
    nlohmann::json j = base_meta("discriminator", extra_meta);
    j["image_size"] = disc.spec().image_size;
    j["base_width"] = disc.spec().base_width;
    j["mode"] = to_string(disc.spec().mode);
    save_arrays(path, disc.params(), j);
}

Discriminator load_discriminator(const std::filesystem::path& path) {
    nlohmann::json j = read_sidecar(path);
    require_type(j, "discriminator", path);
    DiscriminatorSpec spec;
    spec.image_size = j.at("image_size").get<int>();
    spec.base_width = j.at("base_width").get<int>();
    spec.mode = channel_mode_from_string(j.at("mode").get<std::string>());
    Rng scratch(0);
    Discriminator disc(spec, scratch);
    load_arrays(path, disc.params());
    return disc;
}

void save_detector(const std::filesystem::path& path, Detector& det,
                   const nlohmann::json& extra_meta) {
    nlohmann::json j = base_meta("detector", extra_meta);
    j["image_size"] = det.spec().image_size;
    j["base_width"] = det.spec().base_width;
    save_arrays(path, det.params(), j);
}

Detector load_detector(const std::filesystem::path& path) {
    nlohmann::json j = read_sidecar(path);
    require_type(j, "detector", path);
    DetectorSpec spec;
    spec.image_size = j.at("image_size").get<int>();
    spec.base_width = j.at("base_width").get<int>();
    Rng scratch(0);
    Detector det(spec, scratch);
    load_arrays(path, det.params());
    return det;
}

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path) {
    return read_sidecar(path);
}

}  // namespace mgan
