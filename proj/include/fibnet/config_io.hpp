#pragma once

// JSON forms of the model and training configs, and the run config that the
// CLI writes to config.json. Parsing is strict: unknown or missing keys throw
// ConfigError.

#include "fibnet/data.hpp"
#include "fibnet/model.hpp"
#include "fibnet/train.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace fibnet {

void to_json(nlohmann::json &j, const ModelConfig &c);
void from_json(const nlohmann::json &j, ModelConfig &c);
void to_json(nlohmann::json &j, const TrainConfig &c);
void from_json(const nlohmann::json &j, TrainConfig &c);
void to_json(nlohmann::json &j, const SplitRatios &r);
void from_json(const nlohmann::json &j, SplitRatios &r);

// Everything a run needs besides splits.csv. The seed lives in train.seed and
// drives the split, the initialisation and the shuffles.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string data_root;
    std::string out_dir;
    SplitRatios split;

    friend bool operator==(const RunConfig &a, const RunConfig &b) {
        return a.model == b.model && a.train == b.train && a.data_root == b.data_root && a.out_dir == b.out_dir &&
               a.split.train == b.split.train && a.split.val == b.split.val && a.split.test == b.split.test;
    }
};

void to_json(nlohmann::json &j, const RunConfig &c);
void from_json(const nlohmann::json &j, RunConfig &c);

std::string serialize(const RunConfig &c);
RunConfig parse_run_config(const std::string &text);

void write_run_config(const std::filesystem::path &path, const RunConfig &c);
RunConfig read_run_config(const std::filesystem::path &path);

}  // namespace fibnet
