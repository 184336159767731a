#include "mgan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <vector>

#include "mgan/detection.hpp"
#include "mgan/errors.hpp"
#include "mgan/png_io.hpp"
#include "mgan/rng.hpp"

namespace mgan {
namespace {

constexpr double kOutsideCt = 0.03;
constexpr double kOutsideUptake = 0.03;
constexpr double kLungUptakeFactor = 0.4;  // of background_uptake

// 40% contour of exp(-d^2 / 2 sigma^2) sits at sigma * sqrt(2 ln 2.5).
const double kContourScale = std::sqrt(2.0 * std::log(2.5));

struct Ellipse {
    double cx, cy, ax, ay;

    double norm_dist(double x, double y) const {
        const double dx = (x - cx) / ax, dy = (y - cy) / ay;
        return std::sqrt(dx * dx + dy * dy);
    }
    bool contains(double x, double y) const { return norm_dist(x, y) < 1.0; }

    // Soft inside-mask with an edge a couple of pixels wide.
    double soft_mask(double x, double y, double softness) const {
        const double signed_px = (1.0 - norm_dist(x, y)) * std::min(ax, ay);
        return 1.0 / (1.0 + std::exp(-signed_px / softness));
    }

    // Conservative test that a disc of the given radius fits inside.
    bool contains_disc(double x, double y, double radius) const {
        if (radius >= ax || radius >= ay) return false;
        Ellipse shrunk{cx, cy, ax - radius, ay - radius};
        return shrunk.contains(x, y);
    }
};

struct Anatomy {
    Ellipse body, lung_left, lung_right, mediastinum;
    double ct_body, ct_lung, ct_mediastinum;
};

Anatomy sample_anatomy(Rng& rng, int size) {
    const double s = double(size);
    Anatomy a;
    a.body.cx = s * (0.50 + 0.02 * rng.uniform(-1, 1));
    a.body.cy = s * (0.54 + 0.02 * rng.uniform(-1, 1));
    a.body.ax = s * 0.42 * (1.0 + 0.08 * rng.uniform(-1, 1));
    a.body.ay = s * 0.36 * (1.0 + 0.08 * rng.uniform(-1, 1));

    for (int side = 0; side < 2; ++side) {
        Ellipse& lung = side == 0 ? a.lung_left : a.lung_right;
        const double dir = side == 0 ? -1.0 : 1.0;
        lung.cx = a.body.cx + dir * a.body.ax * (0.44 + 0.04 * rng.uniform(-1, 1));
        lung.cy = a.body.cy - a.body.ay * (0.08 + 0.03 * rng.uniform(-1, 1));
        lung.ax = a.body.ax * 0.34 * (1.0 + 0.10 * rng.uniform(-1, 1));
        lung.ay = a.body.ay * 0.55 * (1.0 + 0.10 * rng.uniform(-1, 1));
    }
    a.mediastinum.cx = a.body.cx;
    a.mediastinum.cy = a.body.cy + a.body.ay * 0.05;
    a.mediastinum.ax = a.body.ax * 0.16 * (1.0 + 0.08 * rng.uniform(-1, 1));
    a.mediastinum.ay = a.body.ay * 0.42 * (1.0 + 0.08 * rng.uniform(-1, 1));

    a.ct_body = 0.45 + 0.02 * rng.uniform(-1, 1);
    a.ct_mediastinum = 0.55 + 0.02 * rng.uniform(-1, 1);
    a.ct_lung = 0.12 + 0.01 * rng.uniform(-1, 1);
    return a;
}

double mix(double a, double b, double m) { return a + (b - a) * m; }

void gaussian_blur(ImageGrid& img, double sigma) {
    if (sigma <= 0.0) return;
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> kernel(size_t(2 * radius + 1));
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[size_t(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += kernel[size_t(i + radius)];
    }
    for (auto& k : kernel) k /= norm;

    const int h = img.height, w = img.width;
    ImageGrid tmp(h, w);
    const auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi - 1); };
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[size_t(k + radius)] * img.at(r, clampi(c + k, w));
            tmp.at(r, c) = acc;
        }
    for (int c = 0; c < w; ++c)
        for (int r = 0; r < h; ++r) {
            double acc = 0.0;
            for (int k = -radius; k <= radius; ++k)
                acc += kernel[size_t(k + radius)] * tmp.at(clampi(r + k, h), c);
            img.at(r, c) = acc;
        }
}

struct Tumor {
    double row, col;
    double contour_radius;  // requested 40% contour radius, pixels
    double sigma_eff;       // after folding in the rendering blur
    double peak;
};

}  // namespace

void PhantomConfig::validate() const {
    if (!ImageGrid::power_of_two(image_size) || image_size < 8)
        throw ConfigError("phantom image_size must be a power of two >= 8");
    if (tumors_min < 0 || tumors_min > tumors_max)
        throw ConfigError("phantom tumor count range invalid");
    if (tumor_radius_min <= 0 || tumor_radius_min > tumor_radius_max)
        throw ConfigError("phantom tumor radius range invalid");
    if (pet_noise_sigma < 0 || pet_blur_sigma < 0)
        throw ConfigError("phantom noise/blur sigmas must be >= 0");
    if (!(background_uptake > 0 && background_uptake < 1))
        throw ConfigError("background_uptake must be in (0,1)");
    if (!(tumor_uptake_min > background_uptake))
        throw ConfigError("tumor uptake must exceed background_uptake (tumors are hot)");
    if (!(tumor_uptake_min <= tumor_uptake_max && tumor_uptake_max <= 1.0))
        throw ConfigError("tumor uptake range invalid");
    if (!(peak_fraction > 0 && peak_fraction < 1))
        throw ConfigError("peak_fraction must be in (0,1)");
    if (!(hot_spot_floor() < tumor_uptake_min))
        throw ConfigError("hot-spot floor must stay below tumor_uptake_min");
}

LabelMap derive_label(const ImageGrid& pet, double peak_fraction, double hot_spot_floor) {
    if (!(peak_fraction > 0.0 && peak_fraction < 1.0))
        throw InputError("peak_fraction must be in (0,1)");

    const int h = pet.height, w = pet.width;
    LabelMap label(h, w);

    const auto [min_it, max_it] = std::minmax_element(pet.values.begin(), pet.values.end());
    if (*min_it == *max_it) return label;  // constant image: no peak

    // Seeds: 8-neighborhood local maxima above the floor.
    struct Seed {
        double value;
        int row, col;
    };
    std::vector<Seed> seeds;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double v = pet.at(r, c);
            if (v < hot_spot_floor) continue;
            bool is_max = true;
            for (int dr = -1; dr <= 1 && is_max; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    if (pet.at(rr, cc) > v) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) seeds.push_back({v, r, c});
        }

    std::sort(seeds.begin(), seeds.end(), [](const Seed& a, const Seed& b) {
        if (a.value != b.value) return a.value > b.value;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    });

    // Brightest seeds claim first; each component grows over pixels at or
    // above peak_fraction of its own seed value.
    std::vector<char> claimed(size_t(h) * w, 0);
    for (const auto& seed : seeds) {
        const size_t seed_idx = size_t(seed.row) * w + seed.col;
        if (claimed[seed_idx]) continue;  // plateau twin or inside a brighter spot
        const double threshold = peak_fraction * seed.value;
        std::deque<std::pair<int, int>> queue{{seed.row, seed.col}};
        claimed[seed_idx] = 1;
        while (!queue.empty()) {
            auto [r, c] = queue.front();
            queue.pop_front();
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    const size_t idx = size_t(rr) * w + cc;
                    if (!claimed[idx] && pet.at(rr, cc) >= threshold) {
                        claimed[idx] = 1;
                        queue.emplace_back(rr, cc);
                    }
                }
        }
    }
    for (size_t i = 0; i < claimed.size(); ++i) label.values[i] = claimed[i] ? 1.0 : 0.0;
    return label;
}

PairedStudy generate_study(const PhantomConfig& cfg, const std::string& patient_id,
                           int slice_index) {
    cfg.validate();
    Rng rng = Rng(cfg.seed).derive("study/" + patient_id + "/" + std::to_string(slice_index));
    const int size = cfg.image_size;
    const Anatomy anatomy = sample_anatomy(rng, size);

    // --- tumor placement ----------------------------------------------------
    const int n_tumors = rng.uniform_int(cfg.tumors_min, cfg.tumors_max);
    const double blur2 = cfg.pet_blur_sigma * cfg.pet_blur_sigma;
    std::vector<Tumor> tumors;

    for (int i = 0; i < n_tumors; ++i) {
        bool placed = false;
        const int max_attempts = 200;
        for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
            // Later attempts shrink toward the minimum radius so crowded
            // slices stay feasible.
            const double shrink = std::min(1.0, attempt / 100.0);
            const double r_hi =
                cfg.tumor_radius_max - (cfg.tumor_radius_max - cfg.tumor_radius_min) * shrink;
            const double radius = rng.uniform(cfg.tumor_radius_min, r_hi);
            const double sigma_t = radius / kContourScale;
            const double sigma_eff = std::sqrt(sigma_t * sigma_t + blur2);
            const double label_radius = kContourScale * sigma_eff;

            const double x = rng.uniform(anatomy.body.cx - anatomy.body.ax,
                                         anatomy.body.cx + anatomy.body.ax);
            const double y = rng.uniform(anatomy.body.cy - anatomy.body.ay,
                                         anatomy.body.cy + anatomy.body.ay);
            const bool in_lung =
                anatomy.lung_left.contains(x, y) || anatomy.lung_right.contains(x, y);
            const bool in_mediastinum = anatomy.mediastinum.contains(x, y);
            if (!in_lung && !in_mediastinum) continue;
            if (!anatomy.body.contains_disc(x, y, label_radius + 1.5)) continue;

            bool separated = true;
            for (const auto& other : tumors) {
                const double dx = x - other.col, dy = y - other.row;
                const double min_dist =
                    kContourScale * (sigma_eff + other.sigma_eff) + 2.0;
                if (dx * dx + dy * dy < min_dist * min_dist) {
                    separated = false;
                    break;
                }
            }
            if (!separated) continue;

            // A spot whose 40% contour lies in soft tissue must threshold
            // above the soft-tissue uptake, or the contour would leak into
            // the whole body region. Spots buried inside a lung may span
            // the full uptake range.
            const double deep_margin = label_radius + 2.0;
            const bool deep_in_lung =
                anatomy.lung_left.contains_disc(x, y, deep_margin) ||
                anatomy.lung_right.contains_disc(x, y, deep_margin);
            double peak_lo = cfg.tumor_uptake_min;
            if (!deep_in_lung) {
                const double bounded_peak =
                    (cfg.background_uptake + 0.02) / cfg.peak_fraction;
                peak_lo = std::max(peak_lo, std::min(bounded_peak, cfg.tumor_uptake_max));
            }
            const double peak = rng.uniform(peak_lo, cfg.tumor_uptake_max);

            tumors.push_back({y, x, radius, sigma_eff, peak});
            placed = true;
        }
        if (!placed)
            throw GenerationError("phantom " + patient_id + "/" + std::to_string(slice_index) +
                                  ": cannot place tumor " + std::to_string(i + 1) + " of " +
                                  std::to_string(n_tumors) +
                                  " (radius range exceeds available lung/mediastinum extent)");
    }

    // --- CT -----------------------------------------------------------------
    const double softness = 0.8;
    CtImage ct(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double x = c + 0.5, y = r + 0.5;
            double v = kOutsideCt;
            const double body_m = anatomy.body.soft_mask(x, y, softness);
            v = mix(v, anatomy.ct_body, body_m);
            v = mix(v, anatomy.ct_mediastinum,
                    body_m * anatomy.mediastinum.soft_mask(x, y, softness));
            const double lung_m = std::max(anatomy.lung_left.soft_mask(x, y, softness),
                                           anatomy.lung_right.soft_mask(x, y, softness));
            v = mix(v, anatomy.ct_lung, body_m * lung_m);
            ct.at(r, c) = std::clamp(v, 0.0, 1.0);
        }
    ct.raw_lo = 0.0;
    ct.raw_hi = 1.0;

    // --- noise-free PET -----------------------------------------------------
    PetImage clean(size, size);
    const double lung_uptake = kLungUptakeFactor * cfg.background_uptake;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double x = c + 0.5, y = r + 0.5;
            double v = kOutsideUptake;
            const double body_m = anatomy.body.soft_mask(x, y, softness);
            v = mix(v, cfg.background_uptake, body_m);
            const double lung_m = std::max(anatomy.lung_left.soft_mask(x, y, softness),
                                           anatomy.lung_right.soft_mask(x, y, softness));
            v = mix(v, lung_uptake, body_m * lung_m);
            clean.at(r, c) = v;
        }
    gaussian_blur(clean, cfg.pet_blur_sigma);

    // Hot spots are added after the blur with the blur folded into their
    // width, so the sampled peak uptake survives rendering.
    for (const auto& t : tumors) {
        const double reach = 4.0 * t.sigma_eff;
        const int r0 = std::max(0, int(t.row - reach)), r1 = std::min(size - 1, int(t.row + reach));
        const int c0 = std::max(0, int(t.col - reach)), c1 = std::min(size - 1, int(t.col + reach));
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                const double dx = (c + 0.5) - t.col, dy = (r + 0.5) - t.row;
                const double blob =
                    t.peak * std::exp(-(dx * dx + dy * dy) / (2.0 * t.sigma_eff * t.sigma_eff));
                clean.at(r, c) = std::max(clean.at(r, c), blob);
            }
    }
    for (auto& v : clean.values) v = std::clamp(v, 0.0, 1.0);

    // --- label from the noise-free map, then noise --------------------------
    PairedStudy study;
    study.patient_id = patient_id;
    study.slice_index = slice_index;
    study.label = derive_label(clean, cfg.peak_fraction, cfg.hot_spot_floor());
    study.ct = std::move(ct);

    PetImage pet = clean;
    if (cfg.pet_noise_sigma > 0.0) {
        Rng noise_rng = rng.derive("pet-noise");
        for (auto& v : pet.values) v += cfg.pet_noise_sigma * noise_rng.gaussian();
    }
    for (auto& v : pet.values) v = std::clamp(v, 0.0, 1.0);
    pet.suv_scale = 6.0 + 4.0 * rng.uniform();
    study.pet = std::move(pet);

    const auto components = extract_instances(study.label, 1);
    if (int(components.size()) != n_tumors)
        throw GenerationError("phantom " + study.key() + ": derived " +
                              std::to_string(components.size()) + " label components for " +
                              std::to_string(n_tumors) + " tumors");
    study.validate();
    return study;
}

std::filesystem::path generate_corpus(const PhantomConfig& cfg, int n_patients,
                                      int slices_per_patient,
                                      const std::filesystem::path& out_dir) {
    cfg.validate();
    if (n_patients < 2)
        throw InputError("corpus needs >= 2 patients for the two-fold protocol, got " +
                         std::to_string(n_patients));
    if (slices_per_patient < 1) throw InputError("slices_per_patient must be >= 1");

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) throw InputError("cannot create corpus directory " + (out_dir / "images").string());

    std::vector<ManifestEntry> entries;
    for (int p = 0; p < n_patients; ++p) {
        char pid[16];
        std::snprintf(pid, sizeof pid, "p%03d", p);
        for (int s = 0; s < slices_per_patient; ++s) {
            const PairedStudy study = generate_study(cfg, pid, s);
            char stem[32];
            std::snprintf(stem, sizeof stem, "%s_s%02d", pid, s);
            ManifestEntry e;
            e.patient_id = pid;
            e.slice_index = s;
            e.label = std::string("images/") + stem + "_label.png";
            e.ct = std::string("images/") + stem + "_ct.png";
            e.pet = std::string("images/") + stem + "_pet.png";
            e.suv_scale = study.pet.suv_scale;
            save_image(study.label, out_dir / e.label);
            save_image(study.ct, out_dir / e.ct);
            save_image(study.pet, out_dir / e.pet);
            entries.push_back(std::move(e));
        }
    }
    const auto manifest = out_dir / "manifest.json";
    write_manifest(entries, manifest);
    return manifest;
}

}  // namespace mgan
