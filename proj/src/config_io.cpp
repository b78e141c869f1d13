#include "fibnet/config_io.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace fibnet {

using nlohmann::json;

namespace {

void expect_keys(const json &j, std::string_view what, std::initializer_list<std::string_view> keys) {
    if (!j.is_object()) {
        throw ConfigError(std::string(what) + ": expected an object");
    }
    for (const auto &[k, v] : j.items()) {
        bool known = false;
        for (auto want : keys) {
            known = known || k == want;
        }
        if (!known) {
            throw ConfigError(std::string(what) + ": unknown key '" + k + "'");
        }
    }
    for (auto want : keys) {
        if (!j.contains(want)) {
            throw ConfigError(std::string(what) + ": missing key '" + std::string(want) + "'");
        }
    }
}

template <typename T>
T get(const json &j, const char *key, std::string_view what) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &e) {
        throw ConfigError(std::string(what) + "." + key + ": " + e.what());
    }
}

}  // namespace

void to_json(json &j, const ModelConfig &c) {
    json pcbs = json::array();
    for (const auto &p : c.pcbs) {
        json e{{"source_block", p.source_block}, {"merge_before_block", p.merge_before_block}, {"pre_pool_filters", nullptr}};
        if (p.pre_pool_filters) {
            e["pre_pool_filters"] = *p.pre_pool_filters;
        }
        pcbs.push_back(e);
    }
    j = json{{"num_blocks", c.num_blocks},
             {"filter_schedule", c.filter_schedule},
             {"pcbs", pcbs},
             {"num_classes", c.num_classes},
             {"input_size", c.input_size},
             {"input_channels", c.input_channels},
             {"convs_per_block", c.convs_per_block},
             {"downsample_blocks", c.downsample_blocks},
             {"pcb_order", c.pcb_order == PcbOrder::conv_then_pool ? "conv_then_pool" : "pool_then_conv"},
             {"bn_momentum", c.batchnorm.momentum},
             {"bn_epsilon", c.batchnorm.epsilon}};
}

void from_json(const json &j, ModelConfig &c) {
    constexpr std::string_view w = "model";
    expect_keys(j, w,
                {"num_blocks", "filter_schedule", "pcbs", "num_classes", "input_size", "input_channels", "convs_per_block",
                 "downsample_blocks", "pcb_order", "bn_momentum", "bn_epsilon"});
    c.num_blocks = get<std::size_t>(j, "num_blocks", w);
    c.filter_schedule = get<std::vector<std::size_t>>(j, "filter_schedule", w);
    c.pcbs.clear();
    if (!j.at("pcbs").is_array()) {
        throw ConfigError("model.pcbs: expected an array");
    }
    for (const auto &e : j.at("pcbs")) {
        expect_keys(e, "model.pcbs[]", {"source_block", "merge_before_block", "pre_pool_filters"});
        PcbSpec p;
        p.source_block = get<std::size_t>(e, "source_block", "pcb");
        p.merge_before_block = get<std::size_t>(e, "merge_before_block", "pcb");
        if (!e.at("pre_pool_filters").is_null()) {
            p.pre_pool_filters = get<std::size_t>(e, "pre_pool_filters", "pcb");
        }
        c.pcbs.push_back(p);
    }
    c.num_classes = get<std::size_t>(j, "num_classes", w);
    c.input_size = get<std::size_t>(j, "input_size", w);
    c.input_channels = get<std::size_t>(j, "input_channels", w);
    c.convs_per_block = get<std::size_t>(j, "convs_per_block", w);
    c.downsample_blocks = get<std::size_t>(j, "downsample_blocks", w);
    const auto order = get<std::string>(j, "pcb_order", w);
    if (order == "conv_then_pool") {
        c.pcb_order = PcbOrder::conv_then_pool;
    } else if (order == "pool_then_conv") {
        c.pcb_order = PcbOrder::pool_then_conv;
    } else {
        throw ConfigError("model.pcb_order: unknown value '" + order + "'");
    }
    c.batchnorm.momentum = get<double>(j, "bn_momentum", w);
    c.batchnorm.epsilon = get<double>(j, "bn_epsilon", w);
}

void to_json(json &j, const TrainConfig &c) {
    j = json{{"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"base_lr", c.base_lr},
             {"lr_hold_epochs", c.lr_hold_epochs},
             {"lr_decay", c.lr_decay},
             {"adam_beta1", c.adam_beta1},
             {"adam_beta2", c.adam_beta2},
             {"adam_epsilon", c.adam_epsilon},
             {"seed", c.seed},
             {"shuffle", c.shuffle}};
}

void from_json(const json &j, TrainConfig &c) {
    constexpr std::string_view w = "train";
    expect_keys(j, w,
                {"epochs", "batch_size", "base_lr", "lr_hold_epochs", "lr_decay", "adam_beta1", "adam_beta2", "adam_epsilon",
                 "seed", "shuffle"});
    c.epochs = get<std::size_t>(j, "epochs", w);
    c.batch_size = get<std::size_t>(j, "batch_size", w);
    c.base_lr = get<double>(j, "base_lr", w);
    c.lr_hold_epochs = get<std::size_t>(j, "lr_hold_epochs", w);
    c.lr_decay = get<double>(j, "lr_decay", w);
    c.adam_beta1 = get<double>(j, "adam_beta1", w);
    c.adam_beta2 = get<double>(j, "adam_beta2", w);
    c.adam_epsilon = get<double>(j, "adam_epsilon", w);
    c.seed = get<std::uint64_t>(j, "seed", w);
    c.shuffle = get<bool>(j, "shuffle", w);
}

void to_json(json &j, const SplitRatios &r) { j = json{{"train", r.train}, {"val", r.val}, {"test", r.test}}; }

void from_json(const json &j, SplitRatios &r) {
    expect_keys(j, "split", {"train", "val", "test"});
    r.train = get<double>(j, "train", "split");
    r.val = get<double>(j, "val", "split");
    r.test = get<double>(j, "test", "split");
}

void to_json(json &j, const RunConfig &c) {
    j = json{{"model", c.model}, {"train", c.train}, {"data_root", c.data_root}, {"out_dir", c.out_dir}, {"split", c.split}};
}

void from_json(const json &j, RunConfig &c) {
    expect_keys(j, "config", {"model", "train", "data_root", "out_dir", "split"});
    from_json(j.at("model"), c.model);
    from_json(j.at("train"), c.train);
    c.data_root = get<std::string>(j, "data_root", "config");
    c.out_dir = get<std::string>(j, "out_dir", "config");
    from_json(j.at("split"), c.split);
}

std::string serialize(const RunConfig &c) { return json(c).dump(2) + "\n"; }

RunConfig parse_run_config(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig c;
    from_json(j, c);
    c.model.validate();
    c.train.validate();
    return c;
}

void write_run_config(const std::filesystem::path &path, const RunConfig &c) {
    std::ofstream os(path, std::ios::binary);
    os << serialize(c);
    if (!os) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

RunConfig read_run_config(const std::filesystem::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace fibnet
