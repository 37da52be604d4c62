#pragma once

// Shared test fixtures. The default-config classifier takes minutes to
// train, so it is trained once and cached on disk next to the test binaries;
// training is deterministic, so the cache is interchangeable with a fresh
// run.

#include <array>
#include <filesystem>

#include "fido/classifier.hpp"
#include "fido/data_io.hpp"

namespace fido::testfx {

struct SharedModel {
    ShapesData data;
    ClassifierModel model;
    double heldout_accuracy = 0.0;
    std::array<double, 3> means{};
};

inline const SharedModel& shared_model() {
    static SharedModel fx = [] {
        SharedModel s;
        s.data = gen_shapes(ShapesConfig{});
        s.means = channel_means(s.data.train);

        const char* cache = "fido_test_cache_model.bin";
        if (std::filesystem::exists(cache)) {
            s.model = ClassifierModel::load(cache);
            s.heldout_accuracy = accuracy(s.model, s.data.heldout);
        } else {
            TrainResult r = train_classifier(Architecture::standard(4), s.data.train, s.data.heldout,
                                             TrainConfig{});
            s.model = std::move(r.model);
            s.heldout_accuracy = r.heldout_accuracy;
            s.model.save(cache);
        }
        return s;
    }();
    return fx;
}

// Tiny two-class set that is linearly separable in pixel space: a bright
// block in the left half (class 0) or the right half (class 1).
inline LabeledImageSet make_blobs(int count, int side, uint64_t seed, const std::string& split) {
    LabeledImageSet set;
    set.split = split;
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        int label = i % 2;
        Tensor img({3, side, side});
        for (long long k = 0; k < img.numel(); ++k) img[k] = rng.uniform(0.0, 0.15);
        int cy = 2 + rng.uniform_int(side - 7);
        int cx = label == 0 ? 2 + rng.uniform_int(side / 2 - 5) : side / 2 + rng.uniform_int(side / 2 - 5);
        for (int c = 0; c < 3; ++c)
            for (int y = cy; y < cy + 3; ++y)
                for (int x = cx; x < cx + 3; ++x) img.at(c, y, x) = rng.uniform(0.85, 1.0);
        set.ids.push_back(split + std::to_string(i));
        set.images.push_back(std::move(img));
        set.labels.push_back(label);
        set.boxes.push_back({BoundingBox{cx, cy, cx + 3, cy + 3}});
    }
    return set;
}

}  // namespace fido::testfx
