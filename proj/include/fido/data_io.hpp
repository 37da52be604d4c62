#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "fido/boxes.hpp"
#include "fido/tensor.hpp"

namespace fido {

// Parallel image/label/box collections for one split.
struct LabeledImageSet {
    std::string split;                           // "train", "heldout" or "eval"
    std::vector<std::string> ids;                // stable per-image identifiers
    std::vector<Tensor> images;                  // each (3,H,W), values in [0,1]
    std::vector<int> labels;                     // class indices
    std::vector<std::vector<BoundingBox>> boxes; // ground-truth boxes, may be empty

    size_t size() const { return images.size(); }
    void validate() const;  // parallel lengths, label range sanity, box bounds
};

enum class ShapeClass { square = 0, circle = 1, triangle = 2, cross = 3 };
enum class BackgroundTexture { noise, gradient, checker };

struct ShapesConfig {
    int side = 32;
    int num_classes = 4;  // square, circle, triangle, cross (in this order)
    double min_scale = 0.30;  // object box side as a fraction of the image side
    double max_scale = 0.62;
    BackgroundTexture texture = BackgroundTexture::noise;
    int train_count = 3072;
    int heldout_count = 256;
    int eval_count = 256;
    uint64_t seed = 7;

    void validate() const;
};

struct ShapesData {
    LabeledImageSet train, heldout, eval;
};

// Synthetic single-object dataset with exact ground-truth boxes. Each image
// has one solid shape over a textured background; the label is the shape
// class and the box is the tight bounding box of the painted pixels.
// Deterministic per (seed, split, index), so generation order is irrelevant.
ShapesData gen_shapes(const ShapesConfig& cfg);

// Per-channel means over a set of images (used by the Mean infill strategy
// and as the no-context fallback of the conditional strategies).
std::array<double, 3> channel_means(const LabeledImageSet& set);

// IDX ingestion (big-endian headers). Grayscale images are replicated to
// three channels and rescaled to [0,1].
LabeledImageSet load_idx(const std::string& images_path, const std::string& labels_path);

// Text round-trip of a coarse saliency map. Writes 17 significant digits so
// reload is bit-exact. Lines starting with '#' are ignored on load.
struct SaliencyFile {
    Tensor theta;      // (h,w) coarse map
    int out_h = 0;     // full-resolution target size
    int out_w = 0;
    std::string objective;  // "ssr" or "sdr"
};
void save_saliency_csv(const SaliencyFile& s, const std::string& path,
                       const std::string& header_comment = "");
SaliencyFile load_saliency_csv(const std::string& path);

// Ground-truth box files, rows "image_id,x_min,y_min,x_max,y_max". Multiple
// rows per id accumulate.
std::map<std::string, std::vector<BoundingBox>> load_boxes_csv(const std::string& path, int width,
                                                               int height);
void save_boxes_csv(const LabeledImageSet& set, const std::string& path,
                    const std::string& header_comment = "");

// Writes (a) the raw saliency map as an 8-bit grayscale PNG and (b) an
// overlay PNG blending a red(1)-to-blue(0) colormap at 50% opacity over the
// image. Saliency values must lie in [0,1].
void render_heatmap(const Tensor& saliency, const Tensor& image, const std::string& gray_path,
                    const std::string& overlay_path);

// Colormap used by render_heatmap; v in [0,1] -> (r,g,b) in [0,1].
std::array<double, 3> red_blue_colormap(double v);

}  // namespace fido
