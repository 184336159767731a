#include "mgan/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mgan {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(line) + ": " + msg);
}

bool bare_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

// Strip a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
    bool in_string = false;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
        if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
}

struct ValueParser {
    const std::string& s;
    size_t pos = 0;
    int line;

    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    }

    TomlValue parse() {
        skip_ws();
        if (pos >= s.size()) fail(line, "missing value");
        TomlValue v;
        v.line = line;
        const char c = s[pos];
        if (c == '"') {
            v.kind = TomlValue::Kind::String;
            v.str = parse_string();
        } else if (c == '[') {
            v.kind = TomlValue::Kind::Array;
            ++pos;
            skip_ws();
            bool first = true;
            while (true) {
                skip_ws();
                if (pos >= s.size()) fail(line, "unterminated array");
                if (s[pos] == ']') {
                    ++pos;
                    break;
                }
                if (!first) {
                    if (s[pos] != ',') fail(line, "expected ',' in array");
                    ++pos;
                    skip_ws();
                    if (pos < s.size() && s[pos] == ']') {  // trailing comma
                        ++pos;
                        break;
                    }
                }
                v.array.push_back(parse());
                first = false;
            }
        } else {
            std::string tok;
            while (pos < s.size() && s[pos] != ',' && s[pos] != ']' && s[pos] != ' ' &&
                   s[pos] != '\t')
                tok += s[pos++];
            if (tok == "true" || tok == "false") {
                v.kind = TomlValue::Kind::Boolean;
                v.boolean = tok == "true";
            } else {
                bool integral = !tok.empty();
                for (size_t i = 0; i < tok.size(); ++i) {
                    const char d = tok[i];
                    if (std::isdigit(static_cast<unsigned char>(d))) continue;
                    if (i == 0 && (d == '+' || d == '-')) continue;
                    integral = false;
                    break;
                }
                if (integral && tok != "+" && tok != "-") {
                    v.kind = TomlValue::Kind::Integer;
                    try {
                        v.integer = std::stoll(tok);
                    } catch (const std::exception&) {
                        fail(line, "integer out of range: " + tok);
                    }
                } else {
                    char* end = nullptr;
                    v.real = std::strtod(tok.c_str(), &end);
                    if (tok.empty() || end != tok.c_str() + tok.size())
                        fail(line, "cannot parse value '" + tok + "'");
                    v.kind = TomlValue::Kind::Float;
                }
            }
        }
        return v;
    }

    std::string parse_string() {
        ++pos;  // opening quote
        std::string out;
        while (pos < s.size() && s[pos] != '"') {
            if (s[pos] == '\\') {
                ++pos;
                if (pos >= s.size()) fail(line, "dangling escape in string");
                switch (s[pos]) {
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case 'r': out += '\r'; break;
                    default: fail(line, std::string("unsupported escape \\") + s[pos]);
                }
            } else {
                out += s[pos];
            }
            ++pos;
        }
        if (pos >= s.size()) fail(line, "unterminated string");
        ++pos;  // closing quote
        return out;
    }
};

}  // namespace

TomlDoc parse_toml(const std::string& text) {
    TomlDoc doc;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail(line_no, "empty section name");
            for (char c : section)
                if (!bare_char(c)) fail(line_no, "bad section name '" + section + "'");
            if (doc.sections.count(section)) fail(line_no, "duplicate section [" + section + "]");
            doc.sections[section];
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) fail(line_no, "empty key");
        for (char c : key)
            if (!bare_char(c)) fail(line_no, "bad key '" + key + "'");
        const std::string value_text = line.substr(eq + 1);
        ValueParser vp{value_text, 0, line_no};
        TomlValue v = vp.parse();
        vp.skip_ws();
        if (vp.pos != value_text.size()) fail(line_no, "trailing characters after value");
        auto& sec = doc.sections[section];
        if (sec.count(key)) fail(line_no, "duplicate key '" + key + "'");
        sec[key] = std::move(v);
    }
    return doc;
}

TomlDoc parse_toml_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_toml(buf.str());
}

std::string fnv1a64_hex(const std::string& bytes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

namespace {

// Typed access to one section with consumption tracking, so anything the
// schema does not know is reported, not ignored.
class SectionReader {
  public:
    SectionReader(const TomlDoc& doc, std::string name) : name_(std::move(name)) {
        auto it = doc.sections.find(name_);
        if (it != doc.sections.end()) section_ = &it->second;
    }

    const TomlValue* find(const std::string& key) {
        if (!section_) return nullptr;
        auto it = section_->find(key);
        if (it == section_->end()) return nullptr;
        used_.insert(key);
        return &it->second;
    }

    void read(const std::string& key, double& out) {
        if (const TomlValue* v = find(key)) {
            if (v->kind == TomlValue::Kind::Float) out = v->real;
            else if (v->kind == TomlValue::Kind::Integer) out = double(v->integer);
            else fail(v->line, where(key) + " must be a number");
        }
    }

    void read(const std::string& key, int& out) {
        if (const TomlValue* v = find(key)) {
            if (v->kind != TomlValue::Kind::Integer)
                fail(v->line, where(key) + " must be an integer");
            out = int(v->integer);
        }
    }

    void read(const std::string& key, uint64_t& out) {
        if (const TomlValue* v = find(key)) {
            if (v->kind != TomlValue::Kind::Integer || v->integer < 0)
                fail(v->line, where(key) + " must be a non-negative integer");
            out = uint64_t(v->integer);
        }
    }

    void read(const std::string& key, std::string& out) {
        if (const TomlValue* v = find(key)) {
            if (v->kind != TomlValue::Kind::String)
                fail(v->line, where(key) + " must be a string");
            out = v->str;
        }
    }

    void read_string_array(const std::string& key, std::vector<std::string>& out, bool& present) {
        if (const TomlValue* v = find(key)) {
            if (v->kind != TomlValue::Kind::Array)
                fail(v->line, where(key) + " must be an array of strings");
            out.clear();
            for (const auto& e : v->array) {
                if (e.kind != TomlValue::Kind::String)
                    fail(e.line, where(key) + " must contain only strings");
                out.push_back(e.str);
            }
            present = true;
        }
    }

    void finish() const {
        if (!section_) return;
        for (const auto& [key, value] : *section_)
            if (!used_.count(key))
                throw ConfigError("unknown config key " + name_ + "." + key + " (line " +
                                  std::to_string(value.line) + ")");
    }

  private:
    std::string where(const std::string& key) const { return name_ + "." + key; }

    std::string name_;
    const std::map<std::string, TomlValue>* section_ = nullptr;
    std::set<std::string> used_;
};

}  // namespace

ProtocolConfig ExperimentConfig::protocol() const {
    ProtocolConfig p;
    p.gan = train;
    p.detector = detector;
    p.loss = loss;
    p.eval = eval;
    p.arms = arms;
    p.seed = seed;
    p.montage_slices = montage_slices;
    return p;
}

ExperimentConfig ExperimentConfig::from_toml(const TomlDoc& doc) {
    static const std::set<std::string> known = {"phantom", "train",      "detector", "loss",
                                               "eval",    "experiment", "paths"};
    for (const auto& [name, section] : doc.sections) {
        if (name.empty() && section.empty()) continue;
        if (name.empty())
            throw ConfigError("top-level keys are not allowed; use a [section]");
        if (!known.count(name)) throw ConfigError("unknown config section [" + name + "]");
    }

    ExperimentConfig cfg;

    SectionReader phantom(doc, "phantom");
    phantom.read("size", cfg.phantom.image_size);
    phantom.read("patients", cfg.patients);
    phantom.read("slices_per_patient", cfg.slices_per_patient);
    phantom.read("tumors_min", cfg.phantom.tumors_min);
    phantom.read("tumors_max", cfg.phantom.tumors_max);
    phantom.read("radius_min", cfg.phantom.tumor_radius_min);
    phantom.read("radius_max", cfg.phantom.tumor_radius_max);
    phantom.read("noise", cfg.phantom.pet_noise_sigma);
    phantom.read("blur", cfg.phantom.pet_blur_sigma);
    phantom.read("background_uptake", cfg.phantom.background_uptake);
    phantom.read("uptake_min", cfg.phantom.tumor_uptake_min);
    phantom.read("uptake_max", cfg.phantom.tumor_uptake_max);
    phantom.read("peak_fraction", cfg.phantom.peak_fraction);
    phantom.read("hot_spot_floor_margin", cfg.phantom.hot_spot_floor_margin);
    phantom.finish();

    SectionReader train(doc, "train");
    train.read("epochs", cfg.train.epochs);
    train.read("batch_size", cfg.train.batch_size);
    train.read("learning_rate", cfg.train.learning_rate);
    train.read("beta1", cfg.train.beta1);
    train.read("beta2", cfg.train.beta2);
    std::string mode;
    train.read("channel_mode", mode);
    if (!mode.empty()) cfg.train.channel_mode = channel_mode_from_string(mode);
    train.read("d_steps_per_g_step", cfg.train.d_steps_per_g_step);
    train.read("gen_base_width", cfg.train.gen_base_width);
    train.read("disc_base_width", cfg.train.disc_base_width);
    train.finish();

    SectionReader detector(doc, "detector");
    detector.read("epochs", cfg.detector.epochs);
    detector.read("batch_size", cfg.detector.batch_size);
    detector.read("learning_rate", cfg.detector.learning_rate);
    detector.read("beta1", cfg.detector.beta1);
    detector.read("beta2", cfg.detector.beta2);
    detector.read("base_width", cfg.detector.base_width);
    detector.read("pos_weight", cfg.detector.pos_weight);
    detector.finish();

    SectionReader loss(doc, "loss");
    loss.read("lambda_l1", cfg.loss.lambda_l1);
    std::string form = "cross-entropy";
    loss.read("adversarial_form", form);
    if (form != "cross-entropy")
        throw ConfigError("loss.adversarial_form: only \"cross-entropy\" is supported");
    loss.finish();

    SectionReader eval(doc, "eval");
    eval.read("detector_threshold", cfg.eval.detector_threshold);
    eval.read("min_area", cfg.eval.min_area);
    eval.read("overlap_threshold", cfg.eval.overlap_threshold);
    std::string denom = "union";
    eval.read("overlap_denominator", denom);
    if (denom == "union") cfg.eval.denominator = OverlapDenominator::Union;
    else if (denom == "truth") cfg.eval.denominator = OverlapDenominator::Truth;
    else throw ConfigError("eval.overlap_denominator must be \"union\" or \"truth\"");
    eval.finish();

    SectionReader experiment(doc, "experiment");
    experiment.read("seed", cfg.seed);
    std::vector<std::string> arm_names;
    bool arms_present = false;
    experiment.read_string_array("arms", arm_names, arms_present);
    if (arms_present) {
        cfg.arms.clear();
        for (const auto& a : arm_names) cfg.arms.push_back(arm_from_string(a));
    }
    experiment.read("montage_slices", cfg.montage_slices);
    experiment.finish();

    SectionReader paths(doc, "paths");
    paths.read("train_manifest", cfg.paths.train_manifest);
    paths.read("input_manifest", cfg.paths.input_manifest);
    paths.read("checkpoint", cfg.paths.checkpoint);
    paths.read("synth_manifest", cfg.paths.synth_manifest);
    paths.read("reference_manifest", cfg.paths.reference_manifest);
    paths.read("test_manifest", cfg.paths.test_manifest);
    paths.finish();

    cfg.phantom.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.detector.seed = cfg.seed;

    if (cfg.patients < 2) throw ConfigError("phantom.patients must be >= 2");
    if (cfg.slices_per_patient < 1) throw ConfigError("phantom.slices_per_patient must be >= 1");
    cfg.phantom.validate();
    cfg.train.validate();
    cfg.detector.validate();
    cfg.loss.validate();
    ProtocolConfig proto = cfg.protocol();
    proto.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    ExperimentConfig cfg = from_toml(parse_toml_file(path));
    const std::filesystem::path base = path.parent_path();
    auto resolve = [&](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
    };
    resolve(cfg.paths.train_manifest);
    resolve(cfg.paths.input_manifest);
    resolve(cfg.paths.checkpoint);
    resolve(cfg.paths.synth_manifest);
    resolve(cfg.paths.reference_manifest);
    resolve(cfg.paths.test_manifest);
    return cfg;
}

}  // namespace mgan
