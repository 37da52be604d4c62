#include "fido/commands.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "fido/classifier.hpp"
#include "fido/data_io.hpp"
#include "fido/eval.hpp"
#include "fido/infill.hpp"
#include "fido/mask_opt.hpp"
#include "fido/png_io.hpp"

namespace fido {

namespace fs = std::filesystem;

namespace {

void ensure_outdir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ConfigError("cannot create output directory '" + out + "': " + ec.message());
}

void require_file(const std::string& path, const std::string& key) {
    if (path.empty()) throw ConfigError("config key '" + key + "' is required but empty");
    if (!fs::exists(path)) throw ConfigError("config key '" + key + "': no such file '" + path + "'");
}

void append_jsonl(const std::string& out, const nlohmann::json& j) {
    std::ofstream f(out + "/metrics.jsonl", std::ios::app);
    if (!f) throw ConfigError("cannot append to " + out + "/metrics.jsonl");
    f << j.dump() << "\n";
}

BackgroundTexture texture_from_name(const std::string& name) {
    if (name == "noise") return BackgroundTexture::noise;
    if (name == "gradient") return BackgroundTexture::gradient;
    if (name == "checker") return BackgroundTexture::checker;
    throw ConfigError("config key 'shapes_texture': unknown texture '" + name + "'");
}

ShapesConfig shapes_config(const RunConfig& rc) {
    ShapesConfig sc;
    sc.side = rc.get_int("shapes_side");
    sc.num_classes = rc.get_int("shapes_classes");
    sc.texture = texture_from_name(rc.get("shapes_texture"));
    sc.train_count = rc.get_int("shapes_train");
    sc.heldout_count = rc.get_int("shapes_heldout");
    sc.eval_count = rc.get_int("shapes_eval");
    sc.min_scale = rc.get_double("shapes_min_scale");
    sc.max_scale = rc.get_double("shapes_max_scale");
    sc.seed = rc.get_u64("data_seed");
    sc.validate();
    return sc;
}

ShapesData load_dataset(const RunConfig& rc) {
    const std::string& source = rc.get("dataset");
    if (source == "shapes") return gen_shapes(shapes_config(rc));
    if (source == "idx") {
        require_file(rc.get("idx_images"), "idx_images");
        require_file(rc.get("idx_labels"), "idx_labels");
        LabeledImageSet all = load_idx(rc.get("idx_images"), rc.get("idx_labels"));
        // Deterministic 80/10/10 split in file order.
        ShapesData data;
        data.train.split = "train";
        data.heldout.split = "heldout";
        data.eval.split = "eval";
        size_t n = all.size();
        size_t train_end = n * 8 / 10;
        size_t heldout_end = n * 9 / 10;
        for (size_t i = 0; i < n; ++i) {
            LabeledImageSet& dst =
                i < train_end ? data.train : (i < heldout_end ? data.heldout : data.eval);
            dst.ids.push_back(all.ids[i]);
            dst.images.push_back(all.images[i]);
            dst.labels.push_back(all.labels[i]);
            dst.boxes.push_back({});
        }
        return data;
    }
    throw ConfigError("config key 'dataset': unknown source '" + source + "' (want shapes or idx)");
}

int dataset_classes(const ShapesData& data) {
    int max_label = 0;
    for (int l : data.train.labels) max_label = std::max(max_label, l);
    return max_label + 1;
}

Tensor image_from_png(const std::string& path) {
    PngImage png = read_png(path);
    Tensor img({3, png.height, png.width});
    for (int y = 0; y < png.height; ++y)
        for (int x = 0; x < png.width; ++x)
            for (int c = 0; c < 3; ++c) {
                size_t src = (static_cast<size_t>(y) * png.width + x) * png.channels +
                             (png.channels == 3 ? static_cast<size_t>(c) : 0);
                img.at(c, y, x) = png.pixels[src] / 255.0;
            }
    return img;
}

struct PickedImage {
    Tensor image;
    std::string id;
    int label = -1;                  // -1 when the image came from a file
    std::vector<BoundingBox> boxes;  // empty when unknown
};

PickedImage pick_image(const RunConfig& rc, const ShapesData& data) {
    if (rc.has("image")) {
        require_file(rc.get("image"), "image");
        PickedImage p;
        p.image = image_from_png(rc.get("image"));
        p.id = fs::path(rc.get("image")).stem().string();
        return p;
    }
    if (!rc.has("image_id")) throw ConfigError("config key 'image_id' or 'image' is required");
    const std::string& id = rc.get("image_id");
    for (const LabeledImageSet* set : {&data.eval, &data.heldout, &data.train}) {
        for (size_t i = 0; i < set->size(); ++i)
            if (set->ids[i] == id)
                return {set->images[i], id, set->labels[i],
                        set->boxes.empty() ? std::vector<BoundingBox>{} : set->boxes[i]};
    }
    throw ConfigError("config key 'image_id': no image '" + id + "' in the dataset");
}

InfillStrategy build_strategy(InfillKind kind, const std::array<double, 3>& means, uint64_t seed) {
    return InfillStrategy(kind, means, InfillParams{}, seed);
}

ObjectiveConfig objective_config(const RunConfig& rc, uint64_t seed, const Scorer* scorer,
                                 const InfillStrategy* infill) {
    ObjectiveConfig oc;
    oc.objective = objective_from_name(rc.get("objective"));
    oc.lambda = rc.get_double("lambda");
    oc.tv_weight = rc.get_double("tv");
    oc.temperature = rc.get_double("temperature");
    oc.batch_size = rc.get_int("batch");
    oc.steps = rc.get_int("steps");
    oc.learning_rate = 0.05;
    oc.upsample_size = rc.get_int("upsample");
    oc.seed = seed;
    oc.scorer = scorer;
    oc.infill = infill;
    return oc;
}

// Method names: fido-<infill>, bbmp-<infill>, bbmp_ca-<tau>, max, center,
// grad, random.
struct MethodSpec {
    enum class Family { fido, bbmp, bbmp_ca, max, center, grad, random };
    Family family;
    InfillKind infill = InfillKind::harmonic;
    double tau = 0.5;
    std::string name;
};

MethodSpec parse_method(const std::string& name) {
    MethodSpec m;
    m.name = name;
    auto dash = name.find('-');
    std::string head = dash == std::string::npos ? name : name.substr(0, dash);
    std::string tail = dash == std::string::npos ? "" : name.substr(dash + 1);
    if (head == "fido" || head == "bbmp") {
        m.family = head == "fido" ? MethodSpec::Family::fido : MethodSpec::Family::bbmp;
        if (tail.empty()) throw ConfigError("method '" + name + "': missing infill suffix");
        m.infill = infill_kind_from_name(tail);
        return m;
    }
    if (head == "bbmp_ca") {
        m.family = MethodSpec::Family::bbmp_ca;
        if (!tail.empty()) {
            char* end = nullptr;
            m.tau = std::strtod(tail.c_str(), &end);
            if (end == tail.c_str() || *end != '\0' || m.tau < 0 || m.tau > 1)
                throw ConfigError("method '" + name + "': bad tau");
        }
        return m;
    }
    if (name == "max") { m.family = MethodSpec::Family::max; return m; }
    if (name == "center") { m.family = MethodSpec::Family::center; return m; }
    if (name == "grad") { m.family = MethodSpec::Family::grad; return m; }
    if (name == "random") { m.family = MethodSpec::Family::random; return m; }
    throw ConfigError("unknown method '" + name + "'");
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Tensor compute_saliency(const MethodSpec& spec, const ClassifierModel& model, int target_class,
                        const Tensor& x, const RunConfig& rc, const std::array<double, 3>& means,
                        uint64_t task_seed, double lambda_override = -1.0) {
    int H = x.dim(1), W = x.dim(2);
    switch (spec.family) {
        case MethodSpec::Family::max:
            return baselines(model, target_class, x).max;
        case MethodSpec::Family::center:
            return baselines(model, target_class, x).center;
        case MethodSpec::Family::grad:
            return baselines(model, target_class, x).grad;
        case MethodSpec::Family::random: {
            Rng rng(task_seed);
            Tensor map({H, W});
            for (long long i = 0; i < map.numel(); ++i) map[i] = rng.uniform();
            return map;
        }
        default:
            break;
    }

    LogOddsScorer scorer(model, target_class);
    InfillStrategy strategy = build_strategy(spec.infill, means, task_seed);
    ObjectiveConfig oc = objective_config(rc, task_seed, &scorer, &strategy);
    if (lambda_override >= 0) oc.lambda = lambda_override;
    switch (spec.family) {
        case MethodSpec::Family::fido:
            return saliency_map(fido_optimize(oc, x).params);
        case MethodSpec::Family::bbmp:
            return saliency_map(bbmp_optimize(oc, x));
        case MethodSpec::Family::bbmp_ca: {
            InfillStrategy gen = build_strategy(
                spec.infill == InfillKind::mean || spec.infill == InfillKind::blur ||
                        spec.infill == InfillKind::random
                    ? InfillKind::harmonic
                    : spec.infill,
                means, task_seed);
            oc.infill = &gen;
            return saliency_map(bbmp_ca(oc, x, spec.tau));
        }
        default:
            throw ConfigError("unreachable method family");
    }
}

InfillKind flip_infill_kind(const RunConfig& rc) {
    const std::string& v = rc.get("flip_infill");
    // "auto" evaluates every method with the strongest conditional infiller,
    // so pixel counts are comparable across methods.
    if (v == "auto") return InfillKind::harmonic;
    return infill_kind_from_name(v);
}

int thread_cap() {
    const char* env = std::getenv("FIDO_THREADS");
    int n = env ? std::atoi(env) : static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}

template <typename Fn>
void parallel_for(int count, Fn fn) {
    int workers = std::min(thread_cap(), count);
    if (workers <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& rc) {
    const std::string& out = rc.get("out");
    ensure_outdir(out);
    ShapesData data = load_dataset(rc);

    Architecture arch = Architecture::standard(dataset_classes(data));
    arch.in_h = data.train.images[0].dim(1);
    arch.in_w = data.train.images[0].dim(2);
    arch.validate();

    TrainConfig tc;
    tc.epochs = rc.get_int("epochs");
    tc.batch_size = rc.get_int("train_batch");
    tc.learning_rate = rc.get_double("train_lr");
    tc.weight_decay = rc.get_double("weight_decay");
    tc.seed = rc.get_u64("seed");

    TrainResult result = train_classifier(arch, data.train, data.heldout, tc);

    std::string model_path = out + "/model.bin";
    result.model.save(model_path, rc.hash());
    rc.echo_to(out + "/config.txt");
    append_jsonl(out, {{"command", "train"},
                       {"config_hash", rc.hash_hex()},
                       {"seed", tc.seed},
                       {"heldout_accuracy", result.heldout_accuracy},
                       {"model", model_path}});
    std::cout << "trained: heldout_accuracy=" << result.heldout_accuracy << " model=" << model_path
              << " config_hash=" << rc.hash_hex() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_explain(const RunConfig& rc) {
    const std::string& out = rc.get("out");
    ensure_outdir(out);
    require_file(rc.get("model"), "model");
    ClassifierModel model = ClassifierModel::load(rc.get("model"));

    ShapesData data = load_dataset(rc);
    std::array<double, 3> means = channel_means(data.train);
    PickedImage picked = pick_image(rc, data);
    const Tensor& x = picked.image;

    int target_class = rc.get_int("target_class");
    if (target_class < 0) target_class = picked.label >= 0 ? picked.label : model.predict_class(x);

    MethodSpec spec = parse_method(rc.get("method") == "bbmp_ca"
                                       ? "bbmp_ca-" + rc.get("tau")
                                       : rc.get("method") + "-" + rc.get("infill"));

    uint64_t run_seed = rc.get_u64("seed");
    LogOddsScorer scorer(model, target_class);
    InfillStrategy strategy = build_strategy(spec.infill, means, run_seed);
    ObjectiveConfig oc = objective_config(rc, run_seed, &scorer, &strategy);

    SaliencyFile sfile;
    OptimTrace trace;
    Tensor retained_prob;  // coarse retention map (theta or clipped mask)
    if (spec.family == MethodSpec::Family::fido) {
        FidoResult r = fido_optimize(oc, x);
        sfile = {r.params.theta, r.params.out_h, r.params.out_w, objective_name(oc.objective)};
        trace = std::move(r.trace);
        retained_prob = r.params.theta;
    } else if (spec.family == MethodSpec::Family::bbmp) {
        BbmpResult r = bbmp_optimize(oc, x);
        sfile = {r.mask, r.out_h, r.out_w, objective_name(oc.objective)};
        trace = std::move(r.trace);
        retained_prob = r.mask;
    } else if (spec.family == MethodSpec::Family::bbmp_ca) {
        BbmpResult r = bbmp_ca(oc, x, spec.tau);
        sfile = {r.mask, r.out_h, r.out_w, objective_name(oc.objective)};
        trace = std::move(r.trace);
        retained_prob = r.mask;
    } else {
        throw ConfigError("cmd_explain: method must be fido, bbmp or bbmp_ca");
    }

    std::string comment = "config_hash=" + rc.hash_hex();
    save_saliency_csv(sfile, out + "/saliency.csv", comment);
    save_trace_csv(trace, out + "/trace.csv", comment);

    SaliencyParams params{retained_prob, x.dim(1), x.dim(2), oc.objective};
    Tensor salmap = saliency_map(params);
    render_heatmap(salmap, x, out + "/saliency_gray.png", out + "/saliency_overlay.png");

    // Final score at the MAP composite and the retained-area fraction.
    Tensor retained = map_mask(params);
    double retained_fraction = retained.sum() / static_cast<double>(retained.numel());
    Rng fill_rng = Rng::derive(run_seed, {0xF1});
    Tensor xhat = strategy.infill(x, BinaryMask(retained), &fill_rng);
    double final_score = model.log_odds(target_class, compose(x, xhat, retained));

    rc.echo_to(out + "/config.txt");
    append_jsonl(out, {{"command", "explain"},
                       {"config_hash", rc.hash_hex()},
                       {"image", picked.id},
                       {"method", spec.name},
                       {"target_class", target_class},
                       {"final_score", final_score},
                       {"map_retained_fraction", retained_fraction}});
    std::cout << "explain " << picked.id << " method=" << spec.name << " class=" << target_class
              << " final_score=" << final_score << " map_retained_fraction=" << retained_fraction
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_flip(const RunConfig& rc) {
    const std::string& out = rc.get("out");
    ensure_outdir(out);
    require_file(rc.get("model"), "model");
    ClassifierModel model = ClassifierModel::load(rc.get("model"));

    ShapesData data = load_dataset(rc);
    std::array<double, 3> means = channel_means(data.train);
    PickedImage picked = pick_image(rc, data);
    const Tensor& x = picked.image;

    int target_class = rc.get_int("target_class");
    if (target_class < 0) target_class = picked.label >= 0 ? picked.label : model.predict_class(x);

    const std::string& method = rc.get("method");
    std::string full_name;
    if (method == "bbmp_ca")
        full_name = "bbmp_ca-" + rc.get("tau");
    else if (method == "max" || method == "center" || method == "grad" || method == "random")
        full_name = method;
    else
        full_name = method + "-" + rc.get("infill");
    MethodSpec full_spec = parse_method(full_name);

    uint64_t run_seed = rc.get_u64("seed");
    Tensor saliency = compute_saliency(full_spec, model, target_class, x, rc, means, run_seed);

    InfillStrategy flip_strategy = build_strategy(flip_infill_kind(rc), means, run_seed);
    Rng flip_rng = Rng::derive(run_seed, {0xF11});
    FlippingCurve curve = flipping_curve(model, target_class, x, saliency, flip_strategy,
                                         rc.get_double("flip_step"), picked.id, &flip_rng);

    std::ofstream f(out + "/flip_curve.csv");
    if (!f) throw ConfigError("cannot write " + out + "/flip_curve.csv");
    f << "# config_hash=" << rc.hash_hex() << "\n";
    f << "pixels,suppression\n";
    char buf[64];
    for (size_t i = 0; i < curve.pixels.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g\n", curve.pixels[i], curve.suppression[i]);
        f << buf;
    }

    auto px50 = curve.pixels_at(0.5), px75 = curve.pixels_at(0.75), px90 = curve.pixels_at(0.9);
    rc.echo_to(out + "/config.txt");
    append_jsonl(out, {{"command", "flip"},
                       {"config_hash", rc.hash_hex()},
                       {"image", picked.id},
                       {"method", full_spec.name},
                       {"px50", px50.value_or(-1)},
                       {"px75", px75.value_or(-1)},
                       {"px90", px90.value_or(-1)}});
    std::cout << "flip " << picked.id << " method=" << full_spec.name << " px50=" << px50.value_or(-1)
              << " px75=" << px75.value_or(-1) << " px90=" << px90.value_or(-1) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

namespace {

struct EvalTask {
    size_t image_index;   // into the filtered eval subset
    size_t method_index;  // into the method list
};

struct MethodAggregate {
    std::vector<double> sm;
    std::vector<double> px50, px75, px90;
    long long wsl_wrong = 0;
    long long count = 0;
};

void write_summary_csv(const std::string& path, const std::string& hash_comment,
                       const std::string& header,
                       const std::vector<std::pair<std::string, MethodAggregate>>& rows) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << "# config_hash=" << hash_comment << "\n";
    f << header << "\n";
    char buf[256];
    for (const auto& [name, agg] : rows) {
        double err = agg.count ? static_cast<double>(agg.wsl_wrong) / agg.count : 0.0;
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", name.c_str(), err,
                      mean_of(agg.sm), median_of(agg.px50), median_of(agg.px75),
                      median_of(agg.px90));
        f << buf;
    }
}

}  // namespace

int cmd_evaluate(const RunConfig& rc) {
    const std::string& out = rc.get("out");
    ensure_outdir(out);
    require_file(rc.get("model"), "model");
    ClassifierModel model = ClassifierModel::load(rc.get("model"));

    ShapesData data = load_dataset(rc);
    std::array<double, 3> means = channel_means(data.train);
    uint64_t run_seed = rc.get_u64("seed");

    // Evaluation uses correctly predicted images; the explanation target is
    // the true label.
    std::vector<size_t> eval_idx;
    for (size_t i = 0; i < data.eval.size(); ++i)
        if (model.predict_class(data.eval.images[i]) == data.eval.labels[i]) eval_idx.push_back(i);
    int count = rc.get_int("count");
    if (count > 0 && static_cast<size_t>(count) < eval_idx.size()) eval_idx.resize(static_cast<size_t>(count));
    if (eval_idx.empty()) throw ConfigError("cmd_evaluate: no correctly predicted eval images");

    std::vector<MethodSpec> methods;
    for (const std::string& name : split_list(rc.get("methods"))) methods.push_back(parse_method(name));
    if (methods.empty()) throw ConfigError("cmd_evaluate: empty method list");

    // Alpha for mean thresholding: swept on the heldout split over the grad
    // baseline maps unless given explicitly.
    double alpha = rc.get_double("alpha");
    bool need_alpha = rc.get("wsl_mode") == "alpha";
    for (const MethodSpec& m : methods)
        if (m.family == MethodSpec::Family::grad) need_alpha = true;
    if (alpha < 0 && need_alpha) {
        std::vector<Tensor> maps;
        std::vector<std::vector<BoundingBox>> gts;
        for (size_t i = 0; i < data.heldout.size(); ++i) {
            if (data.heldout.boxes.empty() || data.heldout.boxes[i].empty()) continue;
            maps.push_back(
                baselines(model, data.heldout.labels[i], data.heldout.images[i]).grad);
            gts.push_back(data.heldout.boxes[i]);
        }
        if (!maps.empty()) alpha = alpha_sweep(maps, gts);
        if (alpha < 0) alpha = 1.0;
    }

    InfillKind flip_kind = flip_infill_kind(rc);
    double flip_step = rc.get_double("flip_step");
    const std::string& wsl_mode = rc.get("wsl_mode");

    std::vector<EvalTask> tasks;
    for (size_t i = 0; i < eval_idx.size(); ++i)
        for (size_t m = 0; m < methods.size(); ++m) tasks.push_back({i, m});
    std::vector<EvaluationRecord> records(tasks.size());

    parallel_for(static_cast<int>(tasks.size()), [&](int t) {
        const EvalTask& task = tasks[static_cast<size_t>(t)];
        size_t i = eval_idx[task.image_index];
        const MethodSpec& spec = methods[task.method_index];
        const Tensor& x = data.eval.images[i];
        int label = data.eval.labels[i];
        uint64_t task_seed = Rng::derive(run_seed, {0xE7A1, static_cast<uint64_t>(i),
                                                    static_cast<uint64_t>(task.method_index)})
                                 .next();

        Tensor saliency = compute_saliency(spec, model, label, x, rc, means, task_seed);

        ThresholdMode mode = ThresholdMode::map;
        if (wsl_mode == "alpha" || (wsl_mode == "auto" && spec.family == MethodSpec::Family::grad))
            mode = ThresholdMode::alpha_mean;
        else if (wsl_mode != "map" && wsl_mode != "auto")
            throw ConfigError("config key 'wsl_mode': want auto, map or alpha");

        EvaluationRecord rec;
        rec.image_id = data.eval.ids[i];
        rec.method = spec.name;
        WslVerdict verdict = wsl_verdict(saliency, data.eval.boxes[i], mode, alpha);
        rec.wsl_correct = verdict.correct;
        rec.iou = verdict.iou;
        rec.saliency_metric = saliency_metric(saliency, model, label, x, mode, alpha);

        InfillStrategy flip_strategy = build_strategy(flip_kind, means, task_seed);
        Rng flip_rng = Rng::derive(task_seed, {0xF11});
        FlippingCurve curve = flipping_curve(model, label, x, saliency, flip_strategy, flip_step,
                                             rec.image_id, &flip_rng);
        rec.px_at_50 = curve.pixels_at(0.5).value_or(-1);
        rec.px_at_75 = curve.pixels_at(0.75).value_or(-1);
        rec.px_at_90 = curve.pixels_at(0.9).value_or(-1);
        records[static_cast<size_t>(t)] = rec;
    });

    std::sort(records.begin(), records.end(), [](const EvaluationRecord& a, const EvaluationRecord& b) {
        return a.image_id != b.image_id ? a.image_id < b.image_id : a.method < b.method;
    });
    save_records_csv(records, out + "/records.csv", "config_hash=" + rc.hash_hex());

    std::map<std::string, MethodAggregate> agg;
    for (const EvaluationRecord& r : records) {
        MethodAggregate& a = agg[r.method];
        ++a.count;
        if (!r.wsl_correct) ++a.wsl_wrong;
        a.sm.push_back(r.saliency_metric);
        a.px50.push_back(static_cast<double>(r.px_at_50));
        a.px75.push_back(static_cast<double>(r.px_at_75));
        a.px90.push_back(static_cast<double>(r.px_at_90));
    }
    std::vector<std::pair<std::string, MethodAggregate>> rows(agg.begin(), agg.end());
    write_summary_csv(out + "/summary.csv", rc.hash_hex(),
                      "method,wsl_error,saliency_metric,px50,px75,px90", rows);

    save_boxes_csv(data.eval, out + "/gt_boxes.csv", "config_hash=" + rc.hash_hex());
    rc.echo_to(out + "/config.txt");
    append_jsonl(out, {{"command", "evaluate"},
                       {"config_hash", rc.hash_hex()},
                       {"images", eval_idx.size()},
                       {"methods", methods.size()},
                       {"alpha", alpha}});
    std::cout << "evaluate: images=" << eval_idx.size() << " methods=" << methods.size()
              << " records=" << records.size() << " out=" << out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int cmd_ablate(const RunConfig& rc) {
    const std::string& out = rc.get("out");
    ensure_outdir(out);
    require_file(rc.get("model"), "model");
    ClassifierModel model = ClassifierModel::load(rc.get("model"));

    ShapesData data = load_dataset(rc);
    std::array<double, 3> means = channel_means(data.train);
    uint64_t run_seed = rc.get_u64("seed");

    std::vector<size_t> eval_idx;
    for (size_t i = 0; i < data.eval.size(); ++i)
        if (model.predict_class(data.eval.images[i]) == data.eval.labels[i]) eval_idx.push_back(i);
    int count = rc.get_int("count");
    size_t limit = count > 0 ? static_cast<size_t>(count) : 12;
    if (limit < eval_idx.size()) eval_idx.resize(limit);
    if (eval_idx.empty()) throw ConfigError("cmd_ablate: no correctly predicted eval images");

    const double lambda_grid[] = {5e-4, 1e-3, 2e-3, 5e-3};
    const double tau_grid[] = {1.0, 0.7, 0.5, 0.3, 0.1, 0.0};

    struct Row {
        std::string method;
        double param;
        MethodSpec spec;
        double lambda;  // -1: use config default
        double tau;     // only for bbmp_ca
    };
    std::vector<Row> grid;
    for (double lambda : lambda_grid) {
        for (const char* m : {"fido-mean", "fido-blur", "fido-random", "fido-local", "fido-harmonic",
                              "bbmp-blur", "bbmp-random"})
            grid.push_back({m, lambda, parse_method(m), lambda, 0.0});
    }
    for (double tau : tau_grid) {
        char name[32];
        std::snprintf(name, sizeof name, "bbmp_ca-%g", tau);
        grid.push_back({"bbmp_ca", tau, parse_method(name), 1e-3, tau});
    }

    InfillKind flip_kind = flip_infill_kind(rc);
    double flip_step = rc.get_double("flip_step");

    struct Cell {
        MethodAggregate agg;
    };
    std::vector<Cell> cells(grid.size());
    std::vector<std::pair<size_t, size_t>> tasks;  // (grid row, image)
    for (size_t g = 0; g < grid.size(); ++g)
        for (size_t i = 0; i < eval_idx.size(); ++i) tasks.push_back({g, i});

    std::vector<EvaluationRecord> records(tasks.size());
    parallel_for(static_cast<int>(tasks.size()), [&](int t) {
        auto [g, ii] = tasks[static_cast<size_t>(t)];
        const Row& row = grid[g];
        size_t i = eval_idx[ii];
        const Tensor& x = data.eval.images[i];
        int label = data.eval.labels[i];
        uint64_t task_seed =
            Rng::derive(run_seed, {0xAB1A, static_cast<uint64_t>(g), static_cast<uint64_t>(i)}).next();

        Tensor saliency =
            compute_saliency(row.spec, model, label, x, rc, means, task_seed, row.lambda);

        EvaluationRecord rec;
        rec.image_id = data.eval.ids[i];
        rec.method = row.method;
        WslVerdict verdict = wsl_verdict(saliency, data.eval.boxes[i], ThresholdMode::map, 0.0);
        rec.wsl_correct = verdict.correct;
        rec.iou = verdict.iou;
        rec.saliency_metric = saliency_metric(saliency, model, label, x, ThresholdMode::map, 0.0);

        InfillStrategy flip_strategy = build_strategy(flip_kind, means, task_seed);
        Rng flip_rng = Rng::derive(task_seed, {0xF11});
        FlippingCurve curve = flipping_curve(model, label, x, saliency, flip_strategy, flip_step,
                                             rec.image_id, &flip_rng);
        rec.px_at_50 = curve.pixels_at(0.5).value_or(-1);
        rec.px_at_75 = curve.pixels_at(0.75).value_or(-1);
        rec.px_at_90 = curve.pixels_at(0.9).value_or(-1);
        records[static_cast<size_t>(t)] = rec;
    });

    for (size_t t = 0; t < tasks.size(); ++t) {
        const EvaluationRecord& r = records[t];
        MethodAggregate& a = cells[tasks[t].first].agg;
        ++a.count;
        if (!r.wsl_correct) ++a.wsl_wrong;
        a.sm.push_back(r.saliency_metric);
        a.px50.push_back(static_cast<double>(r.px_at_50));
        a.px75.push_back(static_cast<double>(r.px_at_75));
        a.px90.push_back(static_cast<double>(r.px_at_90));
    }

    std::ofstream f(out + "/ablation.csv");
    if (!f) throw ConfigError("cannot write " + out + "/ablation.csv");
    f << "# config_hash=" << rc.hash_hex() << "\n";
    f << "method,param,wsl_error,saliency_metric,px50,px75,px90\n";
    char buf[256];
    for (size_t g = 0; g < grid.size(); ++g) {
        const MethodAggregate& a = cells[g].agg;
        double err = a.count ? static_cast<double>(a.wsl_wrong) / a.count : 0.0;
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      grid[g].method.c_str(), grid[g].param, err, mean_of(a.sm), median_of(a.px50),
                      median_of(a.px75), median_of(a.px90));
        f << buf;
    }

    rc.echo_to(out + "/config.txt");
    append_jsonl(out, {{"command", "ablate"},
                       {"config_hash", rc.hash_hex()},
                       {"images", eval_idx.size()},
                       {"rows", grid.size()}});
    std::cout << "ablate: images=" << eval_idx.size() << " rows=" << grid.size() << " out=" << out
              << "\n";
    return 0;
}

}  // namespace fido
