#pragma once

// Checkpoint directories: manifest.json (tensor table, model config, training
// scalars) plus weights.bin (little-endian float32 in manifest order).

#include "fibnet/model.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fibnet {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
    std::size_t epoch = 0;
    std::size_t steps = 0;
    double val_accuracy = 0.0;
    std::vector<std::string> classes;

    friend bool operator==(const CheckpointMeta &, const CheckpointMeta &) = default;
};

struct Checkpoint {
    Model<float> model;
    CheckpointMeta meta;
};

// Written to a sibling temp directory and renamed into place, so `dir` is
// either the old checkpoint or the complete new one.
void save_checkpoint(const std::filesystem::path &dir, const Model<float> &model, const CheckpointMeta &meta);

// Rebuilds the graph from the stored config and checks every tensor's name,
// shape and byte range against it.
Checkpoint load_checkpoint(const std::filesystem::path &dir);

// Exclusive claim on a run directory via a lock file created with O_EXCL.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path &dir);
    ~RunLock();
    RunLock(const RunLock &) = delete;
    RunLock &operator=(const RunLock &) = delete;

private:
    std::filesystem::path path_;
};

}  // namespace fibnet
