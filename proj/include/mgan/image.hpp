#pragma once
#include <string>
#include <utility>
#include <vector>

#include "mgan/errors.hpp"

namespace mgan {

// 2D scalar field, row-major, with declared value bounds. All images in
// the pipeline are normalized to [0,1]; the networks remap to [-1,1]
// internally. Heights and widths are powers of two >= 8 so the U-Net
// down/up-sampling ladder needs no padding rules.
struct ImageGrid {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // height*width
    double lo = 0.0;
    double hi = 1.0;

    ImageGrid() = default;
    ImageGrid(int h, int w, double fill = 0.0)
        : height(h), width(w), values(size_t(h) * size_t(w), fill) {}

    double& at(int r, int c) { return values[size_t(r) * width + c]; }
    double at(int r, int c) const { return values[size_t(r) * width + c]; }
    size_t pixel_count() const { return values.size(); }

    static bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

    void validate(const std::string& what) const {
        if (height < 8 || width < 8 || !power_of_two(height) || !power_of_two(width))
            throw ValidationError(what + ": dimensions " + std::to_string(height) + "x" +
                                  std::to_string(width) + " must be powers of two >= 8");
        if (values.size() != size_t(height) * size_t(width))
            throw ValidationError(what + ": value buffer does not match dimensions");
        for (double v : values)
            if (!(v >= lo && v <= hi))
                throw ValidationError(what + ": value " + std::to_string(v) +
                                      " outside declared range [" + std::to_string(lo) + "," +
                                      std::to_string(hi) + "]");
    }
};

// Binary tumor annotation; 1 marks the high-uptake region. An all-zero
// map (tumor-free slice) is legal input.
struct LabelMap : ImageGrid {
    LabelMap() = default;
    explicit LabelMap(int h, int w) : ImageGrid(h, w, 0.0) {}

    void validate_label(const std::string& what) const {
        validate(what);
        for (double v : values)
            if (v != 0.0 && v != 1.0)
                throw ValidationError(what + ": non-binary label value " + std::to_string(v));
    }
};

struct CtImage : ImageGrid {
    // Raw acquisition range kept as metadata after normalization to [0,1].
    double raw_lo = 0.0;
    double raw_hi = 1.0;

    CtImage() = default;
    explicit CtImage(int h, int w) : ImageGrid(h, w, 0.0) {}
};

struct PetImage : ImageGrid {
    // Multiplier mapping a normalized value back to SUV-like units.
    double suv_scale = 1.0;

    PetImage() = default;
    explicit PetImage(int h, int w) : ImageGrid(h, w, 0.0) {}

    void validate_pet(const std::string& what) const {
        validate(what);
        if (!(suv_scale > 0.0))
            throw ValidationError(what + ": suv_scale must be positive");
    }
};

// Aligned (label, CT, PET) triplet; the atom of training.
struct PairedStudy {
    std::string patient_id;
    int slice_index = 0;
    LabelMap label;
    CtImage ct;
    PetImage pet;

    std::string key() const { return patient_id + "/" + std::to_string(slice_index); }

    void validate(const std::string& context = "") const {
        const std::string what = context.empty() ? "study " + key() : context;
        if (patient_id.empty()) throw ValidationError(what + ": empty patient_id");
        label.validate_label(what + " label");
        ct.validate(what + " ct");
        pet.validate_pet(what + " pet");
        if (label.height != ct.height || label.width != ct.width || label.height != pet.height ||
            label.width != pet.width)
            throw ValidationError(what + ": label/ct/pet dimensions disagree");
    }
};

}  // namespace mgan
