#include "fido/classifier.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "fido/adam.hpp"
#include "fido/rng.hpp"

namespace fido {

Architecture Architecture::standard(int num_classes) {
    Architecture a;
    a.in_channels = 3;
    a.in_h = 32;
    a.in_w = 32;
    a.num_classes = num_classes;
    a.layers = {
        {LayerKind::conv, 3, 8, 3, 0, 0},
        {LayerKind::relu, 0, 0, 0, 0, 0},
        {LayerKind::avg_pool, 0, 0, 0, 2, 0},
        {LayerKind::conv, 8, 16, 3, 0, 0},
        {LayerKind::relu, 0, 0, 0, 0, 0},
        {LayerKind::avg_pool, 0, 0, 0, 2, 0},
        {LayerKind::dense, 0, 0, 0, 0, num_classes},
    };
    a.validate();
    return a;
}

Architecture Architecture::tiny(int in_h, int in_w, int num_classes) {
    Architecture a;
    a.in_channels = 3;
    a.in_h = in_h;
    a.in_w = in_w;
    a.num_classes = num_classes;
    a.layers = {
        {LayerKind::conv, 3, 4, 3, 0, 0},
        {LayerKind::relu, 0, 0, 0, 0, 0},
        {LayerKind::dense, 0, 0, 0, 0, num_classes},
    };
    a.validate();
    return a;
}

void Architecture::validate() const {
    if (in_channels <= 0 || in_h <= 0 || in_w <= 0 || num_classes < 2)
        throw ConfigError("architecture: bad input dimensions or class count");
    int c = in_channels, h = in_h, w = in_w;
    bool saw_dense = false;
    for (const LayerSpec& l : layers) {
        if (saw_dense) throw ConfigError("architecture: dense must be the final layer");
        switch (l.kind) {
            case LayerKind::conv:
                if (l.in_channels != c)
                    throw ConfigError("architecture: conv expects " + std::to_string(l.in_channels) +
                                      " channels, stream has " + std::to_string(c));
                if (h < l.kernel || w < l.kernel) throw ConfigError("architecture: conv kernel too large");
                c = l.out_channels;
                h -= l.kernel - 1;
                w -= l.kernel - 1;
                break;
            case LayerKind::relu:
                break;
            case LayerKind::avg_pool:
                if (l.factor < 1 || h < l.factor || w < l.factor)
                    throw ConfigError("architecture: pool factor too large");
                h /= l.factor;
                w /= l.factor;
                break;
            case LayerKind::dense:
                if (l.units != num_classes)
                    throw ConfigError("architecture: final dense must have num_classes units");
                saw_dense = true;
                break;
        }
    }
    if (!saw_dense) throw ConfigError("architecture: missing final dense layer");
}

ClassifierModel::ClassifierModel(Architecture arch, uint64_t init_seed) : arch_(std::move(arch)) {
    arch_.validate();
    Rng rng = Rng::derive(init_seed, {0xC1A55});
    int c = arch_.in_channels, h = arch_.in_h, w = arch_.in_w;
    for (const LayerSpec& l : arch_.layers) {
        switch (l.kind) {
            case LayerKind::conv: {
                Tensor kernel({l.out_channels, l.in_channels, l.kernel, l.kernel});
                double std_dev = std::sqrt(2.0 / (l.in_channels * l.kernel * l.kernel));
                for (long long i = 0; i < kernel.numel(); ++i) kernel[i] = rng.gaussian() * std_dev;
                params_.push_back(std::move(kernel));
                params_.push_back(Tensor({l.out_channels}));  // bias at zero
                c = l.out_channels;
                h -= l.kernel - 1;
                w -= l.kernel - 1;
                break;
            }
            case LayerKind::relu:
                break;
            case LayerKind::avg_pool:
                h /= l.factor;
                w /= l.factor;
                break;
            case LayerKind::dense: {
                int features = c * h * w;
                Tensor weight({l.units, features});
                double std_dev = std::sqrt(2.0 / features);
                for (long long i = 0; i < weight.numel(); ++i) weight[i] = rng.gaussian() * std_dev;
                params_.push_back(std::move(weight));
                params_.push_back(Tensor({l.units}));
                break;
            }
        }
    }
}

ag::Node* ClassifierModel::forward(ag::Graph& g, ag::Node* image,
                                   std::vector<ag::Node*>* param_nodes) const {
    ag::Node* x = image;
    size_t p = 0;
    auto take = [&](void) {
        ag::Node* n = g.leaf(params_[p++]);
        if (param_nodes) param_nodes->push_back(n);
        return n;
    };
    for (const LayerSpec& l : arch_.layers) {
        switch (l.kind) {
            case LayerKind::conv: {
                ag::Node* kernel = take();
                ag::Node* bias = take();
                x = g.conv2d(x, kernel, bias);
                break;
            }
            case LayerKind::relu:
                x = g.relu(x);
                break;
            case LayerKind::avg_pool:
                x = g.avg_pool(x, l.factor);
                break;
            case LayerKind::dense: {
                ag::Node* weight = take();
                ag::Node* bias = take();
                int features = static_cast<int>(x->value.numel());
                x = g.reshape(x, {features, 1});
                x = g.add(g.reshape(g.matmul(weight, x), {l.units}), bias);
                break;
            }
        }
    }
    return x;  // logits, shape (num_classes)
}

void ClassifierModel::check_input(const Tensor& image) const {
    if (image.ndim() != 3 || image.dim(0) != arch_.in_channels || image.dim(1) != arch_.in_h ||
        image.dim(2) != arch_.in_w)
        throw ShapeError("classifier: image shape " + image.shape_str() + " does not match input (" +
                         std::to_string(arch_.in_channels) + "," + std::to_string(arch_.in_h) + "," +
                         std::to_string(arch_.in_w) + ")");
}

Tensor ClassifierModel::predict_probs(const Tensor& image) const {
    check_input(image);
    ag::Graph g;
    ag::Node* logits = forward(g, g.leaf(image));
    return g.softmax(logits)->value;
}

int ClassifierModel::predict_class(const Tensor& image) const {
    Tensor p = predict_probs(image);
    int best = 0;
    for (int c = 1; c < arch_.num_classes; ++c)
        if (p[c] > p[best]) best = c;
    return best;
}

ag::Node* ClassifierModel::log_odds_node(ag::Graph& g, int target_class, ag::Node* image) const {
    if (target_class < 0 || target_class >= arch_.num_classes)
        throw ConfigError("log_odds: class index " + std::to_string(target_class) + " out of range");
    ag::Node* probs = g.softmax(forward(g, image));
    Tensor onehot({arch_.num_classes});
    onehot[target_class] = 1.0;
    ag::Node* p = g.sum(g.mul(probs, g.constant(std::move(onehot))));
    ag::Node* p_clamped = g.clamp(p, kLogOddsEps, 1.0 - kLogOddsEps);
    ag::Node* q_clamped = g.clamp(g.one_minus(p), kLogOddsEps, 1.0 - kLogOddsEps);
    return g.sub(g.log(p_clamped), g.log(q_clamped));
}

double ClassifierModel::log_odds(int target_class, const Tensor& image) const {
    check_input(image);
    ag::Graph g;
    return log_odds_node(g, target_class, g.leaf(image))->value[0];
}

Tensor ClassifierModel::input_gradient(int target_class, const Tensor& image) const {
    check_input(image);
    ag::Graph g;
    ag::Node* in = g.leaf(image);
    ag::Node* score = log_odds_node(g, target_class, in);
    g.backward(score);
    return in->grad;
}

// ---------------------------------------------------------------------------
// training

namespace {

double cross_entropy_backward(const ClassifierModel& model, const Tensor& image, int label,
                              std::vector<Tensor>& grad_accum) {
    ag::Graph g;
    std::vector<ag::Node*> param_nodes;
    ag::Node* logits = model.forward(g, g.leaf(image), &param_nodes);
    ag::Node* probs = g.softmax(logits);
    Tensor onehot({model.num_classes()});
    onehot[label] = 1.0;
    ag::Node* p = g.sum(g.mul(probs, g.constant(std::move(onehot))));
    ag::Node* loss = g.scale(g.log(g.clamp(p, 1e-12, 1.0)), -1.0);
    g.backward(loss);
    for (size_t i = 0; i < param_nodes.size(); ++i)
        for (long long k = 0; k < grad_accum[i].numel(); ++k)
            grad_accum[i][k] += param_nodes[i]->grad[k];
    return loss->value[0];
}

}  // namespace

double accuracy(const ClassifierModel& model, const LabeledImageSet& set) {
    if (set.images.empty()) throw ConfigError("accuracy: empty image set");
    long correct = 0;
    for (size_t i = 0; i < set.size(); ++i)
        if (model.predict_class(set.images[i]) == set.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(set.size());
}

TrainResult train_classifier(const Architecture& arch, const LabeledImageSet& train_set,
                             const LabeledImageSet& heldout_set, const TrainConfig& cfg) {
    if (train_set.images.empty()) throw ConfigError("train: empty training set");
    if (cfg.batch_size < 1 || cfg.epochs < 0 || cfg.learning_rate <= 0 || cfg.weight_decay < 0)
        throw ConfigError("train: invalid training config");
    for (int label : train_set.labels)
        if (label < 0 || label >= arch.num_classes)
            throw ConfigError("train: label " + std::to_string(label) + " out of range for " +
                              std::to_string(arch.num_classes) + " classes");

    ClassifierModel model(arch, cfg.seed);
    Adam opt({cfg.learning_rate, 0.9, 0.999, 1e-8});
    Rng shuffle_rng = Rng::derive(cfg.seed, {0x5affe});

    std::vector<size_t> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<Tensor> grads;
    for (const Tensor& p : model.params()) grads.push_back(Tensor(p.shape()));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            for (Tensor& gt : grads) gt.fill(0.0);
            for (size_t b = start; b < end; ++b)
                cross_entropy_backward(model, train_set.images[order[b]], train_set.labels[order[b]],
                                       grads);
            double inv = 1.0 / static_cast<double>(end - start);
            std::vector<Tensor*> params;
            std::vector<const Tensor*> grad_ptrs;
            for (size_t i = 0; i < grads.size(); ++i) {
                Tensor& p = model.params()[i];
                for (long long k = 0; k < grads[i].numel(); ++k)
                    grads[i][k] = grads[i][k] * inv + cfg.weight_decay * p[k];
                params.push_back(&p);
                grad_ptrs.push_back(&grads[i]);
            }
            opt.step(params, grad_ptrs);
        }
    }

    TrainResult result;
    result.heldout_accuracy = heldout_set.images.empty() ? 0.0 : accuracy(model, heldout_set);
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

constexpr char kMagic[8] = {'F', 'I', 'D', 'O', 'M', 'D', 'L', '1'};

void put_u32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ofstream& out, uint64_t v) {
    put_u32(out, static_cast<uint32_t>(v));
    put_u32(out, static_cast<uint32_t>(v >> 32));
}

uint32_t get_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("model file truncated: " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t get_u64(std::ifstream& in, const std::string& path) {
    uint64_t lo = get_u32(in, path);
    uint64_t hi = get_u32(in, path);
    return lo | (hi << 32);
}

}  // namespace

void ClassifierModel::save(const std::string& path, uint64_t config_hash) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("model save: cannot open " + path + " for writing");
    out.write(kMagic, 8);
    put_u64(out, config_hash);
    put_u32(out, static_cast<uint32_t>(arch_.in_channels));
    put_u32(out, static_cast<uint32_t>(arch_.in_h));
    put_u32(out, static_cast<uint32_t>(arch_.in_w));
    put_u32(out, static_cast<uint32_t>(arch_.num_classes));
    put_u32(out, static_cast<uint32_t>(arch_.layers.size()));
    for (const LayerSpec& l : arch_.layers) {
        put_u32(out, static_cast<uint32_t>(l.kind));
        put_u32(out, static_cast<uint32_t>(l.in_channels));
        put_u32(out, static_cast<uint32_t>(l.out_channels));
        put_u32(out, static_cast<uint32_t>(l.kernel));
        put_u32(out, static_cast<uint32_t>(l.factor));
        put_u32(out, static_cast<uint32_t>(l.units));
    }
    put_u32(out, static_cast<uint32_t>(params_.size()));
    for (const Tensor& p : params_) {
        put_u32(out, static_cast<uint32_t>(p.ndim()));
        for (int d = 0; d < p.ndim(); ++d) put_u32(out, static_cast<uint32_t>(p.dim(d)));
        // Doubles are written as raw little-endian IEEE 754 bit patterns.
        for (long long i = 0; i < p.numel(); ++i) {
            uint64_t bits;
            double v = p[i];
            std::memcpy(&bits, &v, 8);
            put_u64(out, bits);
        }
    }
    if (!out) throw ConfigError("model save: write failed for " + path);
}

ClassifierModel ClassifierModel::load(const std::string& path, uint64_t* config_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("model load: cannot open " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw ConfigError("model load: " + path + " is not a FIDOMDL1 container");
    uint64_t hash = get_u64(in, path);
    if (config_hash) *config_hash = hash;

    ClassifierModel model;
    model.arch_.in_channels = static_cast<int>(get_u32(in, path));
    model.arch_.in_h = static_cast<int>(get_u32(in, path));
    model.arch_.in_w = static_cast<int>(get_u32(in, path));
    model.arch_.num_classes = static_cast<int>(get_u32(in, path));
    uint32_t n_layers = get_u32(in, path);
    for (uint32_t i = 0; i < n_layers; ++i) {
        LayerSpec l;
        uint32_t kind = get_u32(in, path);
        if (kind > static_cast<uint32_t>(LayerKind::dense))
            throw ConfigError("model load: unknown layer kind in " + path);
        l.kind = static_cast<LayerKind>(kind);
        l.in_channels = static_cast<int>(get_u32(in, path));
        l.out_channels = static_cast<int>(get_u32(in, path));
        l.kernel = static_cast<int>(get_u32(in, path));
        l.factor = static_cast<int>(get_u32(in, path));
        l.units = static_cast<int>(get_u32(in, path));
        model.arch_.layers.push_back(l);
    }
    model.arch_.validate();

    uint32_t n_params = get_u32(in, path);
    for (uint32_t i = 0; i < n_params; ++i) {
        uint32_t ndim = get_u32(in, path);
        if (ndim == 0 || ndim > 4) throw ConfigError("model load: bad tensor rank in " + path);
        Shape shape;
        for (uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<int>(get_u32(in, path)));
        Tensor t(shape);
        for (long long k = 0; k < t.numel(); ++k) {
            uint64_t bits = get_u64(in, path);
            double v;
            std::memcpy(&v, &bits, 8);
            t[k] = v;
        }
        model.params_.push_back(std::move(t));
    }
    return model;
}

}  // namespace fido
