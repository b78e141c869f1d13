#pragma once

#include "fibnet/model.hpp"
#include "fibnet/param_store.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace fibnet {

inline constexpr std::uint64_t kDefaultSeed = 1337;

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    std::size_t epochs = 25;
    std::size_t batch_size = 8;
    double base_lr = 1e-4;
    std::size_t lr_hold_epochs = 13;
    double lr_decay = 0.9;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = kDefaultSeed;
    bool shuffle = true;

    void validate() const;
    friend bool operator==(const TrainConfig &, const TrainConfig &) = default;
};

// base_lr for epochs 1..hold, then base_lr * decay^(epoch - hold).
double lr_schedule(std::size_t epoch, const TrainConfig &cfg);

// One Adam update with bias correction at step t (1-based). Every trainable
// entry must carry a gradient; gradients are cleared afterwards.
template <typename T>
void adam_step(ParamStore<T> &store, double lr, std::size_t t, const TrainConfig &cfg);

// Splits an ordering into consecutive batches. A trailing batch of one sample
// is folded into the previous batch so batch norm never sees a single sample.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t> &order, std::size_t batch_size);

// ---------------------------------------------------------------------------
// Sample sources
// ---------------------------------------------------------------------------

class DataSource {
public:
    virtual ~DataSource() = default;
    [[nodiscard]] virtual std::size_t size() const = 0;
    [[nodiscard]] virtual std::size_t label(std::size_t i) const = 0;
    // (1, side, side, channels), values in [0, 1]
    [[nodiscard]] virtual Tensor load(std::size_t i) const = 0;
};

class InMemorySource : public DataSource {
public:
    InMemorySource() = default;
    InMemorySource(std::vector<Tensor> images, std::vector<std::size_t> labels);

    void add(Tensor image, std::size_t label);
    [[nodiscard]] std::size_t size() const override { return images_.size(); }
    [[nodiscard]] std::size_t label(std::size_t i) const override { return labels_.at(i); }
    [[nodiscard]] Tensor load(std::size_t i) const override { return images_.at(i); }

private:
    std::vector<Tensor> images_;
    std::vector<std::size_t> labels_;
};

// Stacks the given samples along the batch axis. Loading may run on worker
// threads; the result order always follows `indices`.
Tensor assemble_batch(const DataSource &src, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// History and the training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochRecord> records;

    void write_csv(std::ostream &os) const;
    static TrainHistory read_csv(std::istream &is);
};

struct EvalOutput {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> predictions;
    std::vector<std::vector<double>> probabilities;
};

// Infer-mode pass over a whole source.
EvalOutput evaluate(const Graph &g, ParamStore<float> &params, const DataSource &src, std::size_t batch_size);

struct TrainResult {
    TrainHistory history;
    std::size_t steps = 0;
    // Stage names in the order the loop executed them during the first epoch.
    std::vector<std::string> stages;
};

struct TrainHooks {
    std::function<void(const EpochRecord &, const Model<float> &)> on_epoch;
    std::ostream *log = nullptr;
};

// Shuffle, batch, forward (train mode), softmax cross-entropy, backward and
// Adam for every epoch, then an infer-mode validation pass. Runs all epochs.
TrainResult train(Model<float> &model, const DataSource &train_set, const DataSource &val_set, const TrainConfig &cfg,
                  const TrainHooks &hooks = {});

}  // namespace fibnet
