// fibnet: train, evaluate and inspect Fibonacci-Net models.

#include "fibnet/checkpoint.hpp"
#include "fibnet/config_io.hpp"
#include "fibnet/data.hpp"
#include "fibnet/explain.hpp"
#include "fibnet/metrics.hpp"
#include "fibnet/model.hpp"
#include "fibnet/report.hpp"
#include "fibnet/train.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;
using namespace fibnet;

namespace {

// ---------------------------------------------------------------------------
// Flags shared by train and count-params. Each mirrors one config field.
// ---------------------------------------------------------------------------

struct ModelFlags {
    std::size_t blocks = 7;
    std::vector<std::size_t> filter_schedule;  // empty: Fibonacci from 21
    std::string pcb = "default";
    std::size_t classes = 0;  // 0: from the corpus (train) or 44 (count-params)
    std::size_t input_size = 224;
    std::size_t input_channels = 3;
    std::size_t convs_per_block = 2;
    std::size_t downsample_blocks = 5;
    std::string pcb_order = "conv_then_pool";
    double bn_momentum = 0.99;
    double bn_epsilon = 1e-5;
    std::vector<CLI::Option *> opts;

    void add(CLI::App &app) {
        opts = {
            app.add_option("--blocks", blocks, "number of blocks")->capture_default_str(),
            app.add_option("--filter-schedule", filter_schedule, "filters per block (default 21, 34, 55, ...)")->delimiter(','),
            app.add_option("--pcb", pcb, "parallel concatenation blocks: default | none | S:M[:F],...")->capture_default_str(),
            app.add_option("--classes", classes, "number of classes"),
            app.add_option("--input-size", input_size, "input side in pixels")->capture_default_str(),
            app.add_option("--input-channels", input_channels, "input channels")->capture_default_str(),
            app.add_option("--convs-per-block", convs_per_block, "conv units per standard block")->capture_default_str(),
            app.add_option("--downsample-blocks", downsample_blocks, "blocks 1..N end with 2x2 max pooling")->capture_default_str(),
            app.add_option("--pcb-order", pcb_order, "conv_then_pool | pool_then_conv")->capture_default_str(),
            app.add_option("--bn-momentum", bn_momentum, "batch-norm moving-average momentum")->capture_default_str(),
            app.add_option("--bn-epsilon", bn_epsilon, "batch-norm epsilon")->capture_default_str(),
        };
    }

    [[nodiscard]] bool any_set() const {
        return std::any_of(opts.begin(), opts.end(), [](const CLI::Option *o) { return o->count() > 0; });
    }

    [[nodiscard]] ModelConfig build(std::size_t num_classes) const {
        ModelConfig c;
        c.num_blocks = blocks;
        c.filter_schedule = filter_schedule.empty() ? fibonacci_schedule(std::min<std::size_t>(blocks, 8)) : filter_schedule;
        c.pcbs = parse_pcbs(pcb);
        c.num_classes = num_classes;
        c.input_size = input_size;
        c.input_channels = input_channels;
        c.convs_per_block = convs_per_block;
        c.downsample_blocks = downsample_blocks;
        if (pcb_order == "conv_then_pool") {
            c.pcb_order = PcbOrder::conv_then_pool;
        } else if (pcb_order == "pool_then_conv") {
            c.pcb_order = PcbOrder::pool_then_conv;
        } else {
            throw ConfigError("--pcb-order must be conv_then_pool or pool_then_conv, got '" + pcb_order + "'");
        }
        c.batchnorm.momentum = bn_momentum;
        c.batchnorm.epsilon = bn_epsilon;
        c.validate();
        return c;
    }

    static std::vector<PcbSpec> parse_pcbs(const std::string &s) {
        if (s == "default") {
            return default_pcbs();
        }
        if (s == "none") {
            return {};
        }
        std::vector<PcbSpec> out;
        std::stringstream items(s);
        std::string item;
        while (std::getline(items, item, ',')) {
            std::vector<std::size_t> parts;
            std::stringstream fields(item);
            std::string f;
            while (std::getline(fields, f, ':')) {
                try {
                    std::size_t used = 0;
                    parts.push_back(std::stoul(f, &used));
                    if (used != f.size()) {
                        throw std::invalid_argument(f);
                    }
                } catch (const std::logic_error &) {
                    throw ConfigError("--pcb: bad number '" + f + "' in '" + item + "'");
                }
            }
            if (parts.size() != 2 && parts.size() != 3) {
                throw ConfigError("--pcb: expected S:M or S:M:F, got '" + item + "'");
            }
            PcbSpec p{parts[0], parts[1], std::nullopt};
            if (parts.size() == 3) {
                p.pre_pool_filters = parts[2];
            }
            out.push_back(p);
        }
        return out;
    }
};

struct TrainFlags {
    TrainConfig cfg;
    SplitRatios split;
    std::vector<CLI::Option *> opts;

    void add(CLI::App &app) {
        opts = {
            app.add_option("--epochs", cfg.epochs, "training epochs")->capture_default_str(),
            app.add_option("--batch-size", cfg.batch_size, "mini-batch size")->capture_default_str(),
            app.add_option("--base-lr", cfg.base_lr, "learning rate before decay")->capture_default_str(),
            app.add_option("--lr-hold-epochs", cfg.lr_hold_epochs, "epochs at the base rate")->capture_default_str(),
            app.add_option("--lr-decay", cfg.lr_decay, "per-epoch decay factor afterwards")->capture_default_str(),
            app.add_option("--adam-beta1", cfg.adam_beta1)->capture_default_str(),
            app.add_option("--adam-beta2", cfg.adam_beta2)->capture_default_str(),
            app.add_option("--adam-epsilon", cfg.adam_epsilon)->capture_default_str(),
            app.add_option("--seed", cfg.seed, "seed for the split, initialisation and shuffles")->capture_default_str(),
            app.add_option("--shuffle", cfg.shuffle, "reshuffle the training split every epoch")->capture_default_str(),
            app.add_option("--split-train", split.train)->capture_default_str(),
            app.add_option("--split-val", split.val)->capture_default_str(),
            app.add_option("--split-test", split.test)->capture_default_str(),
        };
    }

    [[nodiscard]] bool any_set() const {
        return std::any_of(opts.begin(), opts.end(), [](const CLI::Option *o) { return o->count() > 0; });
    }
};

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

template <typename F>
void write_text(const fs::path &p, F &&body) {
    std::ofstream os(p, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write " + p.string());
    }
    body(os);
    os.flush();
    if (!os) {
        throw std::runtime_error("error writing " + p.string());
    }
}

std::string format(const char *f, double v) {
    char b[64];
    std::snprintf(b, sizeof(b), f, v);
    return b;
}

DatasetIndex read_splits_file(const fs::path &p, const fs::path &root, std::uint64_t seed) {
    std::ifstream is(p);
    if (!is) {
        throw DatasetError("cannot read " + p.string());
    }
    return read_splits_csv(is, root, seed);
}

// Run directory of a checkpoint at <run>/checkpoints/<name>.
fs::path run_dir_of(const fs::path &checkpoint) {
    const fs::path c = fs::weakly_canonical(checkpoint);
    return c.parent_path().parent_path();
}

std::size_t resolve_class(const std::string &s, const std::vector<std::string> &names, std::size_t k) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == s) {
            return i;
        }
    }
    try {
        std::size_t used = 0;
        const std::size_t v = std::stoul(s, &used);
        if (used == s.size() && v < k) {
            return v;
        }
    } catch (const std::logic_error &) {
    }
    throw std::invalid_argument("unknown class '" + s + "'");
}

std::string class_name(const CheckpointMeta &m, std::size_t c) {
    return c < m.classes.size() ? m.classes[c] : std::to_string(c);
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    std::string config;
    std::string splits;
    bool quiet = false;
};

int cmd_train(const TrainArgs &a, const ModelFlags &mf, const TrainFlags &tf) {
    RunConfig rc;
    std::size_t classes_flag = mf.classes;
    if (!a.config.empty()) {
        if (mf.any_set() || tf.any_set()) {
            throw std::invalid_argument("--config replaces the model and training flags; pass one or the other");
        }
        rc = read_run_config(a.config);
        classes_flag = rc.model.num_classes;
    } else {
        rc.train = tf.cfg;
        rc.split = tf.split;
        rc.train.validate();
    }
    if (!a.data.empty()) {
        rc.data_root = a.data;
    }
    if (rc.data_root.empty()) {
        throw std::invalid_argument("--data is required");
    }
    rc.out_dir = a.out;
    const fs::path out(a.out);
    RunLock lock(out);

    DatasetIndex index;
    if (!a.splits.empty()) {
        index = read_splits_file(a.splits, rc.data_root, rc.train.seed);
    } else {
        const ScanResult scan = scan_dataset(rc.data_root);
        for (const auto &s : scan.skipped) {
            std::cerr << "skipped " << s.path << ": " << s.reason << "\n";
        }
        index = stratified_split(scan.classes, scan.records, rc.split, rc.train.seed);
        index.root = scan.root;
    }
    const std::size_t k = index.classes.size();
    if (classes_flag != 0 && classes_flag != k) {
        throw ConfigError("--classes is " + std::to_string(classes_flag) + " but the corpus has " + std::to_string(k));
    }
    if (a.config.empty()) {
        rc.model = mf.build(k);
    }
    rc.model.validate();

    write_run_config(out / "config.json", rc);
    write_text(out / "splits.csv", [&](std::ostream &os) { write_splits_csv(os, index); });

    Model<float> model = build_model<float>(rc.model, rc.train.seed);
    const ImageFileSource train_src(index.root, index.split(Split::train), rc.model.input_size);
    const ImageFileSource val_src(index.root, index.split(Split::val), rc.model.input_size);
    std::cout << "classes " << k << ", train " << train_src.size() << ", val " << val_src.size() << ", params "
              << count_params(rc.model).total << "\n";

    const fs::path ckdir = out / "checkpoints";
    double best = -1.0;
    std::size_t steps = 0;
    const std::size_t steps_per_epoch = make_batches(std::vector<std::size_t>(train_src.size()), rc.train.batch_size).size();
    TrainHooks hooks;
    hooks.log = a.quiet ? nullptr : &std::cout;
    hooks.on_epoch = [&](const EpochRecord &r, const Model<float> &m) {
        steps += steps_per_epoch;
        if (r.val_acc > best) {
            best = r.val_acc;
            save_checkpoint(ckdir / "best", m, {r.epoch, steps, r.val_acc, index.classes});
        }
    };
    const TrainResult res = train(model, train_src, val_src, rc.train, hooks);
    const EpochRecord &last = res.history.records.back();
    save_checkpoint(ckdir / "final", model, {last.epoch, res.steps, last.val_acc, index.classes});
    write_text(out / "history.csv", [&](std::ostream &os) { res.history.write_csv(os); });
    write_text(out / "curves.svg", [&](std::ostream &os) { write_curves_svg(os, res.history); });
    std::cout << "wrote " << out.string() << "\n";
    return 0;
}

int cmd_count_params(const ModelFlags &mf, bool total_only) {
    const ModelConfig cfg = mf.build(mf.classes == 0 ? 44 : mf.classes);
    const ParamTable t = count_params(cfg);
    if (!total_only) {
        std::cout << "layer,kind,trainable\n";
        for (const auto &r : t.rows) {
            std::cout << r.layer << ',' << r.kind << ',' << r.trainable << "\n";
        }
    }
    if (total_only) {
        std::cout << t.total << "\n";
    } else {
        std::cout << "total,," << t.total << "\n";
    }
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string split = "test";
    std::string splits;
    std::string data;
    std::string out;
    std::size_t batch_size = 8;
    std::string compare_with;
    std::size_t entropy_bins = kDefaultEntropyBins;
    std::size_t entropy_samples = 16;
};

int cmd_eval(const EvalArgs &a) {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    const fs::path run = run_dir_of(a.checkpoint);
    std::uint64_t seed = kDefaultSeed;
    std::string root = a.data;
    if (fs::exists(run / "config.json")) {
        const RunConfig rc = read_run_config(run / "config.json");
        seed = rc.train.seed;
        if (root.empty()) {
            root = rc.data_root;
        }
        if (!(rc.model == ck.model.graph.config)) {
            throw CheckpointError("checkpoint config does not match " + (run / "config.json").string());
        }
    }
    if (root.empty()) {
        throw std::invalid_argument("--data is required when the checkpoint has no run config");
    }
    const fs::path splits = a.splits.empty() ? run / "splits.csv" : fs::path(a.splits);
    const DatasetIndex index = read_splits_file(splits, root, seed);
    if (!ck.meta.classes.empty() && ck.meta.classes != index.classes) {
        throw CheckpointError("checkpoint classes do not match " + splits.string());
    }
    const Split which = parse_split(a.split);
    const ImageFileSource src(index.root, index.split(which), ck.model.graph.config.input_size);
    if (src.size() == 0) {
        throw DatasetError("split '" + a.split + "' is empty");
    }
    const EvalOutput ev = evaluate(ck.model.graph, ck.model.params, src, a.batch_size);
    const EvalReport rep = make_report(index.classes, ev.labels, ev.predictions, ev.probabilities);
    const fs::path out = a.out.empty() ? run / ("eval_" + a.split) : fs::path(a.out);
    fs::create_directories(out);
    write_text(out / "classification_report.csv", [&](std::ostream &os) { write_classification_report(os, rep); });
    write_text(out / "confusion_matrix.csv", [&](std::ostream &os) { write_confusion_csv(os, rep.cm); });
    std::cout << "split " << a.split << ": " << src.size() << " images, loss " << format("%.6f", ev.loss) << ", accuracy "
              << format("%.4f", rep.accuracy) << ", weighted f1 " << format("%.4f", rep.weighted.f1) << ", macro auc "
              << format("%.4f", rep.auc.macro) << "\n";

    if (!a.compare_with.empty()) {
        Checkpoint other = load_checkpoint(a.compare_with);
        const bool mine_has = !ck.model.graph.config.pcbs.empty();
        const bool theirs_has = !other.model.graph.config.pcbs.empty();
        if (mine_has == theirs_has) {
            throw ConfigError("--compare-with needs exactly one of the two models to have pcbs");
        }
        const std::size_t n = std::min(a.entropy_samples, src.size());
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const Tensor xs = assemble_batch(src, idx);
        const auto rows = mine_has ? entropy_compare(ck.model, other.model, xs, a.entropy_bins)
                                   : entropy_compare(other.model, ck.model, xs, a.entropy_bins);
        write_text(out / "entropy.csv", [&](std::ostream &os) { write_entropy_csv(os, rows); });
    }
    std::cout << "wrote " << out.string() << "\n";
    return 0;
}

int cmd_predict(const std::string &checkpoint, const std::vector<std::string> &images) {
    Checkpoint ck = load_checkpoint(checkpoint);
    const ModelConfig &cfg = ck.model.graph.config;
    std::cout << "path,predicted";
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        std::cout << ",p_" << class_name(ck.meta, c);
    }
    std::cout << "\n";
    int failures = 0;
    for (const auto &path : images) {
        try {
            const Tensor x = to_sample(load_image(path), cfg.input_size);
            const Tensor p = softmax(forward(ck.model.graph, ck.model.params, x, Mode::infer));
            const auto best = static_cast<std::size_t>(std::max_element(p.data().begin(), p.data().end()) - p.data().begin());
            std::cout << path << ',' << class_name(ck.meta, best);
            for (float v : p.data()) {
                std::cout << ',' << format("%.6f", v);
            }
            std::cout << "\n";
        } catch (const ImageError &e) {
            std::cerr << "error: " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_pool_preview(const std::vector<std::string> &images, const std::string &out_dir) {
    const fs::path out(out_dir);
    fs::create_directories(out);
    int failures = 0;
    for (const auto &path : images) {
        try {
            const Image img = pool_preview(load_image(path));
            const fs::path dst = out / (fs::path(path).stem().string() + "_avg2max.png");
            save_png(dst, img);
            std::cout << dst.string() << " " << img.width << "x" << img.height << "\n";
        } catch (const ImageError &e) {
            std::cerr << "error: " << e.what() << "\n";
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}

struct GradcamArgs {
    std::string checkpoint;
    std::string image;
    std::string cls;
    std::string layer;  // empty: last standard-conv block
    std::string out = ".";
    double alpha = 0.4;
};

int cmd_gradcam(const GradcamArgs &a) {
    Checkpoint ck = load_checkpoint(a.checkpoint);
    const Graph &g = ck.model.graph;
    const Tensor x = to_sample(load_image(a.image), g.config.input_size);
    std::size_t target = 0;
    if (a.cls.empty()) {
        const Tensor logits = forward(g, ck.model.params, x, Mode::infer);
        target = static_cast<std::size_t>(std::max_element(logits.data().begin(), logits.data().end()) - logits.data().begin());
    } else {
        target = resolve_class(a.cls, ck.meta.classes, g.config.num_classes);
    }
    const HeatMap map = gradcam(g, ck.model.params, x, target, a.layer);
    const fs::path out(a.out);
    fs::create_directories(out);
    const std::string stem = fs::path(a.image).stem().string();
    save_png(out / (stem + "_gradcam.png"), heatmap_image(map));
    save_png(out / (stem + "_overlay.png"), heatmap_overlay(map, x, a.alpha));
    write_text(out / (stem + "_gradcam.json"), [&](std::ostream &os) { write_heatmap_sidecar(os, map); });
    std::cout << "class " << class_name(ck.meta, target) << ", layer " << map.source_layer << " (" << map.height << "x"
              << map.width << "), max " << format("%.6g", map.normalization_max) << "\n";
    return 0;
}

int cmd_report(const std::string &run, const std::string &out) {
    const fs::path dir(run);
    std::ifstream is(dir / "history.csv");
    if (!is) {
        throw std::runtime_error("cannot read " + (dir / "history.csv").string());
    }
    const TrainHistory h = TrainHistory::read_csv(is);
    const fs::path svg = out.empty() ? dir / "curves.svg" : fs::path(out);
    write_text(svg, [&](std::ostream &os) { write_curves_svg(os, h); });
    write_run_summary(std::cout, h);
    std::cout << "wrote " << svg.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Fibonacci-Net training and analysis"};
    app.require_subcommand(1);

    auto *train_cmd = app.add_subcommand("train", "train on a directory-per-class corpus");
    TrainArgs targs;
    ModelFlags train_model;
    TrainFlags train_flags;
    train_cmd->add_option("--data", targs.data, "corpus root (one directory per class)");
    train_cmd->add_option("--out", targs.out, "run directory")->required();
    train_cmd->add_option("--config", targs.config, "re-run from a config.json")->check(CLI::ExistingFile);
    train_cmd->add_option("--splits", targs.splits, "reuse a splits.csv")->check(CLI::ExistingFile);
    train_cmd->add_flag("--quiet", targs.quiet, "no per-epoch log");
    train_model.add(*train_cmd);
    train_flags.add(*train_cmd);

    auto *count_cmd = app.add_subcommand("count-params", "per-layer trainable parameter table (44 classes unless --classes)");
    ModelFlags count_model;
    bool total_only = false;
    count_model.add(*count_cmd);
    count_cmd->add_flag("--total", total_only, "print only the total");

    auto *eval_cmd = app.add_subcommand("eval", "classification report for one split");
    EvalArgs eargs;
    eval_cmd->add_option("--checkpoint", eargs.checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--split", eargs.split, "train | val | test")->capture_default_str();
    eval_cmd->add_option("--splits", eargs.splits, "splits.csv (default: the run's)");
    eval_cmd->add_option("--data", eargs.data, "corpus root (default: the run's)");
    eval_cmd->add_option("--out", eargs.out, "output directory (default: <run>/eval_<split>)");
    eval_cmd->add_option("--batch-size", eargs.batch_size)->capture_default_str();
    eval_cmd->add_option("--compare-with", eargs.compare_with, "checkpoint of the same model with/without pcbs; writes entropy.csv")
        ->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--entropy-bins", eargs.entropy_bins)->capture_default_str();
    eval_cmd->add_option("--entropy-samples", eargs.entropy_samples)->capture_default_str();

    auto *predict_cmd = app.add_subcommand("predict", "class probabilities for images");
    std::string pcheckpoint;
    std::vector<std::string> pimages;
    predict_cmd->add_option("--checkpoint", pcheckpoint)->required()->check(CLI::ExistingDirectory);
    predict_cmd->add_option("images", pimages)->required();

    auto *pool_cmd = app.add_subcommand("pool-preview", "Avg-2Max pooled previews at half resolution");
    std::vector<std::string> pool_images;
    std::string pool_out = ".";
    pool_cmd->add_option("images", pool_images)->required();
    pool_cmd->add_option("--out", pool_out)->capture_default_str();

    auto *cam_cmd = app.add_subcommand("gradcam", "Grad-CAM heat map for one image");
    GradcamArgs gargs;
    cam_cmd->add_option("--checkpoint", gargs.checkpoint)->required()->check(CLI::ExistingDirectory);
    cam_cmd->add_option("--image", gargs.image)->required();
    cam_cmd->add_option("--class", gargs.cls, "class name or index (default: predicted)");
    cam_cmd->add_option("--layer", gargs.layer, "layer tap (default: last standard-conv block, block5 in the 7-block net)");
    cam_cmd->add_option("--out", gargs.out)->capture_default_str();
    cam_cmd->add_option("--alpha", gargs.alpha, "overlay opacity")->capture_default_str()->check(CLI::Range(0.0, 1.0));

    auto *report_cmd = app.add_subcommand("report", "curves.svg and a summary from history.csv");
    std::string rrun;
    std::string rout;
    report_cmd->add_option("--run", rrun)->required()->check(CLI::ExistingDirectory);
    report_cmd->add_option("--out", rout, "svg path (default: <run>/curves.svg)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            return cmd_train(targs, train_model, train_flags);
        }
        if (*count_cmd) {
            return cmd_count_params(count_model, total_only);
        }
        if (*eval_cmd) {
            return cmd_eval(eargs);
        }
        if (*predict_cmd) {
            return cmd_predict(pcheckpoint, pimages);
        }
        if (*pool_cmd) {
            return cmd_pool_preview(pool_images, pool_out);
        }
        if (*cam_cmd) {
            return cmd_gradcam(gargs);
        }
        if (*report_cmd) {
            return cmd_report(rrun, rout);
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
