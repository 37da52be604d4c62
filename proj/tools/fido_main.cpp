// fido: saliency maps for differentiable classifiers via per-pixel dropout
// optimization with counterfactual infilling.
//
// Subcommands: train, explain, evaluate, ablate, flip.
// Exit codes: 0 success, 2 usage/config error, 3 numeric failure.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "fido/commands.hpp"
#include "fido/run_config.hpp"

namespace {

struct FlagBinding {
    std::string key;      // RunConfig key
    std::string flag;     // CLI flag name
    std::string help;
};

// CLI flags override config-file keys of the same name.
const FlagBinding kBindings[] = {
    {"seed", "--seed", "run seed (fixes sampling, initialization and shuffling)"},
    {"out", "--out", "output directory"},
    {"model", "--model", "model file path"},
    {"dataset", "--dataset", "dataset source: shapes or idx"},
    {"idx_images", "--idx-images", "IDX image file (dataset=idx)"},
    {"idx_labels", "--idx-labels", "IDX label file (dataset=idx)"},
    {"data_seed", "--data-seed", "dataset generation seed"},
    {"method", "--method", "explainer: fido, bbmp or bbmp_ca"},
    {"objective", "--objective", "mask objective: ssr or sdr"},
    {"infill", "--infill", "infill strategy: mean, blur, random, local, harmonic"},
    {"lambda", "--lambda", "sparsity weight"},
    {"tv", "--tv", "total-variation weight"},
    {"temperature", "--temperature", "Concrete relaxation temperature"},
    {"batch", "--batch", "mask samples per optimization step"},
    {"steps", "--steps", "optimization steps"},
    {"upsample", "--upsample", "coarse mask side (0 = image side / 4)"},
    {"tau", "--tau", "bbmp_ca binarization threshold"},
    {"image_id", "--image-id", "dataset image id to explain"},
    {"image", "--image", "PNG image path to explain"},
    {"target_class", "--target-class", "class to explain (-1 = label or argmax)"},
    {"methods", "--methods", "comma-separated method list for evaluate"},
    {"count", "--count", "cap on evaluated images (0 = all)"},
    {"flip_infill", "--flip-infill", "infiller for pixel-flipping (auto = harmonic)"},
    {"flip_step", "--flip-step", "pixel fraction altered per flipping step"},
    {"wsl_mode", "--wsl-mode", "localization thresholding: auto, map or alpha"},
    {"alpha", "--alpha", "alpha-mean threshold (-1 = sweep on heldout)"},
    {"epochs", "--epochs", "training epochs"},
    {"train_batch", "--train-batch", "training batch size"},
    {"train_lr", "--train-lr", "training learning rate"},
    {"weight_decay", "--weight-decay", "training weight decay"},
    {"shapes_side", "--shapes-side", "shapes image side"},
    {"shapes_classes", "--shapes-classes", "shapes class count"},
    {"shapes_texture", "--shapes-texture", "background: noise, gradient or checker"},
    {"shapes_train", "--shapes-train", "training split size"},
    {"shapes_heldout", "--shapes-heldout", "heldout split size"},
    {"shapes_eval", "--shapes-eval", "eval split size"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fido: classifier saliency via dropout-mask optimization"};
    app.require_subcommand(1);

    std::string config_path;
    std::map<std::string, std::string> overrides;

    const char* subcommands[] = {"train", "explain", "evaluate", "ablate", "flip"};
    const char* descriptions[] = {
        "train the classifier on the configured dataset",
        "optimize a saliency map for one image",
        "run the metric suite over the eval split",
        "run the method/hyperparameter ablation grid",
        "compute a pixel-flipping curve for one image",
    };
    std::map<std::string, CLI::App*> subs;
    for (size_t i = 0; i < std::size(subcommands); ++i) {
        CLI::App* sub = app.add_subcommand(subcommands[i], descriptions[i]);
        sub->add_option("--config", config_path, "key=value config file");
        for (const FlagBinding& b : kBindings) {
            sub->add_option_function<std::string>(
                b.flag, [&overrides, key = b.key](const std::string& v) { overrides[key] = v; },
                b.help);
        }
        subs[subcommands[i]] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        fido::RunConfig rc;
        if (!config_path.empty()) rc.load_file(config_path);
        for (const auto& [key, value] : overrides) rc.set(key, value);

        for (const auto& [name, sub] : subs) {
            if (sub->parsed()) {
                rc.set("command", name);
                if (name == "train") return fido::cmd_train(rc);
                if (name == "explain") return fido::cmd_explain(rc);
                if (name == "evaluate") return fido::cmd_evaluate(rc);
                if (name == "ablate") return fido::cmd_ablate(rc);
                if (name == "flip") return fido::cmd_flip(rc);
            }
        }
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const fido::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fido::ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fido::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
