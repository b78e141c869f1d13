#include "fibnet/train.hpp"

#include "fibnet/parallel.hpp"
#include "fibnet/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace fibnet {

void TrainConfig::validate() const {
    if (epochs == 0) {
        throw std::invalid_argument("epochs must be positive");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("batch_size must be positive");
    }
    if (!(base_lr > 0.0)) {
        throw std::invalid_argument("base_lr must be positive");
    }
    if (!(lr_decay > 0.0 && lr_decay < 1.0)) {
        throw std::invalid_argument("lr_decay must lie in (0, 1)");
    }
    if (lr_hold_epochs > epochs) {
        throw std::invalid_argument("lr_hold_epochs (" + std::to_string(lr_hold_epochs) + ") exceeds epochs (" +
                                    std::to_string(epochs) + ")");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw std::invalid_argument("adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) {
        throw std::invalid_argument("adam_epsilon must be positive");
    }
}

double lr_schedule(std::size_t epoch, const TrainConfig &cfg) {
    if (epoch < 1 || epoch > cfg.epochs) {
        throw std::out_of_range("lr_schedule: epoch " + std::to_string(epoch) + " outside [1, " + std::to_string(cfg.epochs) +
                                "]");
    }
    if (epoch <= cfg.lr_hold_epochs) {
        return cfg.base_lr;
    }
    return cfg.base_lr * std::pow(cfg.lr_decay, static_cast<double>(epoch - cfg.lr_hold_epochs));
}

template <typename T>
void adam_step(ParamStore<T> &store, double lr, std::size_t t, const TrainConfig &cfg) {
    if (t < 1) {
        throw std::invalid_argument("adam_step: step counter starts at 1");
    }
    for (const auto &e : store.entries()) {
        if (e.trainable && !e.grad_ready) {
            throw std::logic_error("adam_step: no gradient for '" + e.name + "'");
        }
    }
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (auto &e : store.entries()) {
        if (!e.trainable) {
            continue;
        }
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i];
            const double m = b1 * static_cast<double>(e.adam_m[i]) + (1.0 - b1) * g;
            const double v = b2 * static_cast<double>(e.adam_v[i]) + (1.0 - b2) * g * g;
            e.adam_m[i] = static_cast<T>(m);
            e.adam_v[i] = static_cast<T>(v);
            const double step = lr * (m / c1) / (std::sqrt(v / c2) + cfg.adam_epsilon);
            e.value[i] = static_cast<T>(static_cast<double>(e.value[i]) - step);
        }
    }
    store.zero_grad();
}

template void adam_step(ParamStore<float> &, double, std::size_t, const TrainConfig &);
template void adam_step(ParamStore<double> &, double, std::size_t, const TrainConfig &);

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t> &order, std::size_t batch_size) {
    if (batch_size == 0) {
        throw std::invalid_argument("make_batches: batch size must be positive");
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        const std::size_t end = std::min(order.size(), i + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (out.size() >= 2 && out.back().size() == 1) {
        out[out.size() - 2].push_back(out.back().front());
        out.pop_back();
    }
    return out;
}

InMemorySource::InMemorySource(std::vector<Tensor> images, std::vector<std::size_t> labels)
    : images_(std::move(images)), labels_(std::move(labels)) {
    if (images_.size() != labels_.size()) {
        throw std::invalid_argument("InMemorySource: image and label counts differ");
    }
}

void InMemorySource::add(Tensor image, std::size_t label) {
    images_.push_back(std::move(image));
    labels_.push_back(label);
}

Tensor assemble_batch(const DataSource &src, std::span<const std::size_t> indices) {
    if (indices.empty()) {
        throw std::invalid_argument("assemble_batch: no samples");
    }
    std::vector<Tensor> loaded(indices.size());
    parallel_for(indices.size(), [&](std::size_t k) { loaded[k] = src.load(indices[k]); });
    const Shape one = loaded.front().shape();
    if (one.n != 1) {
        throw ShapeError("assemble_batch: samples must have batch dimension 1, got " + to_string(one));
    }
    Tensor batch(Shape{indices.size(), one.h, one.w, one.c});
    const std::size_t stride = one.size();
    for (std::size_t k = 0; k < loaded.size(); ++k) {
        if (loaded[k].shape() != one) {
            throw ShapeError("assemble_batch: sample " + std::to_string(indices[k]) + " has shape " +
                             to_string(loaded[k].shape()) + ", expected " + to_string(one));
        }
        std::copy(loaded[k].data().begin(), loaded[k].data().end(), batch.data().begin() + static_cast<std::ptrdiff_t>(k * stride));
    }
    return batch;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::size_t argmax_row(std::span<const float> row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

void TrainHistory::write_csv(std::ostream &os) const {
    os << "epoch,lr,train_loss,train_acc,val_loss,val_acc,seconds\n";
    for (const auto &r : records) {
        os << r.epoch << ',' << fmt_double(r.lr) << ',' << fmt_double(r.train_loss) << ',' << fmt_double(r.train_acc) << ','
           << fmt_double(r.val_loss) << ',' << fmt_double(r.val_acc) << ',' << fmt_double(r.seconds) << '\n';
    }
}

TrainHistory TrainHistory::read_csv(std::istream &is) {
    TrainHistory h;
    std::string line;
    if (!std::getline(is, line) || line.rfind("epoch,", 0) != 0) {
        throw std::runtime_error("history.csv: missing header");
    }
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            cells.push_back(cell);
        }
        if (cells.size() != 7) {
            throw std::runtime_error("history.csv: expected 7 columns in '" + line + "'");
        }
        EpochRecord r;
        r.epoch = std::stoul(cells[0]);
        r.lr = std::stod(cells[1]);
        r.train_loss = std::stod(cells[2]);
        r.train_acc = std::stod(cells[3]);
        r.val_loss = std::stod(cells[4]);
        r.val_acc = std::stod(cells[5]);
        r.seconds = std::stod(cells[6]);
        h.records.push_back(r);
    }
    return h;
}

EvalOutput evaluate(const Graph &g, ParamStore<float> &params, const DataSource &src, std::size_t batch_size) {
    if (src.size() == 0) {
        throw std::invalid_argument("evaluate: empty split");
    }
    EvalOutput out;
    std::vector<std::size_t> order(src.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        const std::span<const std::size_t> idx(order.data() + start, end - start);
        const Tensor x = assemble_batch(src, idx);
        std::vector<std::size_t> labels;
        for (std::size_t i : idx) {
            labels.push_back(src.label(i));
        }
        const Tensor logits = forward(g, params, x, Mode::infer);
        const SoftmaxLoss<float> sl = softmax_cce(logits, labels);
        loss_sum += sl.loss * static_cast<double>(idx.size());
        const std::size_t k = logits.shape().c;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const std::span<const float> row = sl.probs.data().subspan(r * k, k);
            const std::size_t pred = argmax_row(row);
            correct += pred == labels[r] ? 1 : 0;
            out.labels.push_back(labels[r]);
            out.predictions.push_back(pred);
            out.probabilities.emplace_back(row.begin(), row.end());
        }
    }
    out.loss = loss_sum / static_cast<double>(src.size());
    out.accuracy = static_cast<double>(correct) / static_cast<double>(src.size());
    return out;
}

TrainResult train(Model<float> &model, const DataSource &train_set, const DataSource &val_set, const TrainConfig &cfg,
                  const TrainHooks &hooks) {
    cfg.validate();
    if (train_set.size() == 0) {
        throw TrainingError("train: empty training split");
    }
    if (val_set.size() == 0) {
        throw TrainingError("train: empty validation split");
    }
    TrainResult result;
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto stage = [&](std::size_t epoch, const char *name) {
        if (epoch == 1 && std::find(result.stages.begin(), result.stages.end(), name) == result.stages.end()) {
            result.stages.emplace_back(name);
        }
    };

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = lr_schedule(epoch, cfg);
        if (cfg.shuffle) {
            stage(epoch, "shuffle");
            rng.shuffle(order);
        }
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t step_in_epoch = 0;
        for (const auto &batch : make_batches(order, cfg.batch_size)) {
            ++step_in_epoch;
            stage(epoch, "batch");
            const Tensor x = assemble_batch(train_set, batch);
            std::vector<std::size_t> labels;
            labels.reserve(batch.size());
            for (std::size_t i : batch) {
                labels.push_back(train_set.label(i));
            }
            stage(epoch, "forward");
            ForwardCache<float> cache;
            const Tensor logits = forward(model.graph, model.params, x, Mode::train, &cache);
            stage(epoch, "loss");
            const SoftmaxLoss<float> sl = softmax_cce(logits, labels);
            if (!std::isfinite(sl.loss)) {
                throw TrainingError("train: non-finite loss " + fmt_double(sl.loss) + " at epoch " + std::to_string(epoch) +
                                    ", step " + std::to_string(step_in_epoch) + " (lr " + fmt_double(lr) + ")");
            }
            loss_sum += sl.loss * static_cast<double>(batch.size());
            const std::size_t k = logits.shape().c;
            for (std::size_t r = 0; r < batch.size(); ++r) {
                correct += argmax_row(logits.data().subspan(r * k, k)) == labels[r] ? 1 : 0;
            }
            stage(epoch, "backward");
            model.params.zero_grad();
            (void)backward(model.graph, model.params, cache, sl.grad_logits);
            stage(epoch, "adam_step");
            ++result.steps;
            adam_step(model.params, lr, result.steps, cfg);
        }
        stage(epoch, "validate");
        const EvalOutput val = evaluate(model.graph, model.params, val_set, cfg.batch_size);
        const auto t1 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(train_set.size());
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        rec.val_loss = val.loss;
        rec.val_acc = val.accuracy;
        rec.seconds = std::max(std::chrono::duration<double>(t1 - t0).count(), 1e-9);
        stage(epoch, "record");
        result.history.records.push_back(rec);
        if (hooks.log != nullptr) {
            char line[200];
            std::snprintf(line, sizeof(line), "epoch %zu/%zu lr %.3g loss %.4f acc %.4f val_loss %.4f val_acc %.4f (%.1fs)\n", epoch,
                          cfg.epochs, lr, rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc, rec.seconds);
            *hooks.log << line << std::flush;
        }
        if (hooks.on_epoch) {
            hooks.on_epoch(rec, model);
        }
    }
    return result;
}

}  // namespace fibnet
