#pragma once

#include <string>
#include <vector>

#include "fido/autodiff.hpp"
#include "fido/data_io.hpp"
#include "fido/tensor.hpp"

namespace fido {

// Probability clamp applied before the log-odds logarithms so saturated
// softmax outputs keep the score finite.
inline constexpr double kLogOddsEps = 1e-7;

enum class LayerKind { conv, relu, avg_pool, dense };

struct LayerSpec {
    LayerKind kind;
    int in_channels = 0;   // conv
    int out_channels = 0;  // conv
    int kernel = 0;        // conv
    int factor = 0;        // avg_pool
    int units = 0;         // dense output size
};

// Fully determines every parameter shape: convs and the flatten size of the
// dense layers follow from the input dimensions. A softmax over the final
// dense output is implicit.
struct Architecture {
    int in_channels = 3;
    int in_h = 32;
    int in_w = 32;
    int num_classes = 4;
    std::vector<LayerSpec> layers;

    // conv(3->8,3x3), relu, avg_pool(2), conv(8->16,3x3), relu, avg_pool(2),
    // dense(num_classes). Input 3x32x32.
    static Architecture standard(int num_classes = 4);

    // conv(3->4,3x3), relu, dense(num_classes); for small test images.
    static Architecture tiny(int in_h, int in_w, int num_classes);

    void validate() const;
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 3e-3;
    uint64_t seed = 1;
    double weight_decay = 1e-4;  // L2 added to the gradient
};

class ClassifierModel {
  public:
    ClassifierModel() = default;
    ClassifierModel(Architecture arch, uint64_t init_seed);

    const Architecture& arch() const { return arch_; }
    int num_classes() const { return arch_.num_classes; }

    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }

    // Builds the network on the given graph; params become fresh leaves whose
    // nodes are returned through param_nodes when requested.
    ag::Node* forward(ag::Graph& g, ag::Node* image, std::vector<ag::Node*>* param_nodes = nullptr) const;

    // Probability vector over classes; image must match the architecture
    // input shape with values in [0,1].
    Tensor predict_probs(const Tensor& image) const;
    int predict_class(const Tensor& image) const;

    // log p - log(1-p) with p = softmax_c clamped to [eps, 1-eps].
    double log_odds(int target_class, const Tensor& image) const;

    // Scalar log-odds node over an arbitrary image node (used by the mask
    // objective, which differentiates through it).
    ag::Node* log_odds_node(ag::Graph& g, int target_class, ag::Node* image) const;

    // d log_odds / d image, same shape as the image.
    Tensor input_gradient(int target_class, const Tensor& image) const;

    // Versioned little-endian binary container; round-trips bit-exactly.
    void save(const std::string& path, uint64_t config_hash = 0) const;
    static ClassifierModel load(const std::string& path, uint64_t* config_hash = nullptr);

  private:
    void check_input(const Tensor& image) const;

    Architecture arch_;
    std::vector<Tensor> params_;
};

struct TrainResult {
    ClassifierModel model;
    double heldout_accuracy = 0.0;
};

// Adam training with cross-entropy loss. Deterministic given cfg.seed, which
// fixes both the parameter initialization and the shuffling.
TrainResult train_classifier(const Architecture& arch, const LabeledImageSet& train_set,
                             const LabeledImageSet& heldout_set, const TrainConfig& cfg);

double accuracy(const ClassifierModel& model, const LabeledImageSet& set);

}  // namespace fido
