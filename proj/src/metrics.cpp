#include "fibnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace fibnet {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::row_sum(std::size_t i) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < k; ++j) {
        s += at(i, j);
    }
    return s;
}

std::size_t ConfusionMatrix::col_sum(std::size_t j) const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < k; ++i) {
        s += at(i, j);
    }
    return s;
}

ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t k) {
    if (truth.size() != predicted.size()) {
        throw std::invalid_argument("confusion: " + std::to_string(truth.size()) + " labels but " +
                                    std::to_string(predicted.size()) + " predictions");
    }
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= k || predicted[i] >= k) {
            throw std::out_of_range("confusion: label out of range at sample " + std::to_string(i));
        }
        ++cm.at(truth[i], predicted[i]);
    }
    return cm;
}

namespace {

double ratio(std::size_t num, std::size_t den, bool &undefined) {
    if (den == 0) {
        undefined = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix &cm) {
    const std::size_t n = cm.total();
    std::vector<ClassMetrics> out(cm.k);
    for (std::size_t c = 0; c < cm.k; ++c) {
        const std::size_t tp = cm.at(c, c);
        const std::size_t fn = cm.row_sum(c) - tp;
        const std::size_t fp = cm.col_sum(c) - tp;
        const std::size_t tn = n - tp - fn - fp;
        ClassMetrics &m = out[c];
        m.support = tp + fn;
        m.precision = ratio(tp, tp + fp, m.precision_undefined);
        m.recall = ratio(tp, tp + fn, m.recall_undefined);
        // 2PR/(P+R) written over counts
        m.f1 = ratio(2 * tp, 2 * tp + fp + fn, m.f1_undefined);
        m.specificity = ratio(tn, tn + fp, m.specificity_undefined);
    }
    return out;
}

double accuracy(const ConfusionMatrix &cm) {
    std::size_t diag = 0;
    for (std::size_t c = 0; c < cm.k; ++c) {
        diag += cm.at(c, c);
    }
    const std::size_t n = cm.total();
    return n == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(n);
}

double aggregate(std::span<const double> values, std::span<const std::size_t> supports, Average mode) {
    if (values.size() != supports.size()) {
        throw std::invalid_argument("aggregate: values and supports differ in length");
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (supports[i] == 0) {
            continue;
        }
        const double w = mode == Average::weighted ? static_cast<double>(supports[i]) : 1.0;
        num += w * values[i];
        den += w;
    }
    return den == 0.0 ? 0.0 : num / den;
}

AucResult roc_auc_ovr(const std::vector<std::vector<double>> &scores, std::span<const std::size_t> truth) {
    if (scores.size() != truth.size()) {
        throw std::invalid_argument("roc_auc_ovr: score rows and labels differ in length");
    }
    const std::size_t n = scores.size();
    const std::size_t k = n == 0 ? 0 : scores.front().size();
    for (std::size_t i = 0; i < n; ++i) {
        if (scores[i].size() != k) {
            throw std::invalid_argument("roc_auc_ovr: ragged score rows");
        }
        const double s = std::accumulate(scores[i].begin(), scores[i].end(), 0.0);
        if (std::abs(s - 1.0) > 1e-6) {
            throw std::invalid_argument("roc_auc_ovr: row " + std::to_string(i) + " sums to " + std::to_string(s));
        }
        if (truth[i] >= k) {
            throw std::out_of_range("roc_auc_ovr: label out of range at sample " + std::to_string(i));
        }
    }
    AucResult r;
    r.per_class.assign(k, 0.0);
    r.defined.assign(k, false);
    std::vector<std::size_t> order(n);
    std::vector<double> rank(n);
    std::vector<std::size_t> supports(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        ++supports[truth[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t pos = supports[c];
        const std::size_t neg = n - pos;
        if (pos == 0 || neg == 0) {
            ++r.excluded;
            continue;
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a][c] < scores[b][c]; });
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j + 1 < n && scores[order[j + 1]][c] == scores[order[i]][c]) {
                ++j;
            }
            // 1-based ranks i+1..j+1 share their mean
            const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
            for (std::size_t t = i; t <= j; ++t) {
                rank[order[t]] = mid;
            }
            i = j + 1;
        }
        double rank_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (truth[i] == c) {
                rank_sum += rank[i];
            }
        }
        const double p = static_cast<double>(pos);
        const double u = rank_sum - p * (p + 1.0) / 2.0;
        r.per_class[c] = u / (p * static_cast<double>(neg));
        r.defined[c] = true;
    }
    std::vector<double> vals;
    std::vector<std::size_t> sup;
    for (std::size_t c = 0; c < k; ++c) {
        if (r.defined[c]) {
            vals.push_back(r.per_class[c]);
            sup.push_back(supports[c]);
        }
    }
    r.macro = aggregate(vals, sup, Average::macro);
    r.weighted = aggregate(vals, sup, Average::weighted);
    return r;
}

EvalReport make_report(const std::vector<std::string> &classes, std::span<const std::size_t> truth,
                       std::span<const std::size_t> predicted, const std::vector<std::vector<double>> &scores) {
    EvalReport r;
    r.classes = classes;
    r.cm = confusion(truth, predicted, classes.size());
    r.per_class = class_metrics(r.cm);
    r.auc = roc_auc_ovr(scores, truth);
    r.accuracy = accuracy(r.cm);
    std::vector<double> p, rc, f, s;
    std::vector<std::size_t> sup;
    for (const auto &m : r.per_class) {
        p.push_back(m.precision);
        rc.push_back(m.recall);
        f.push_back(m.f1);
        s.push_back(m.specificity);
        sup.push_back(m.support);
        r.macro_excluded += m.support == 0 ? 1 : 0;
    }
    auto summary = [&](Average mode) {
        return MetricSummary{aggregate(p, sup, mode), aggregate(rc, sup, mode), aggregate(f, sup, mode), aggregate(s, sup, mode),
                             mode == Average::macro ? r.auc.macro : r.auc.weighted};
    };
    r.weighted = summary(Average::weighted);
    r.macro = summary(Average::macro);
    return r;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

void write_classification_report(std::ostream &os, const EvalReport &r) {
    os << "class,support,precision,recall,f1,specificity,auc,flags\n";
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const ClassMetrics &m = r.per_class[c];
        std::string flags;
        auto flag = [&](bool on, const char *name) {
            if (on) {
                flags += flags.empty() ? "" : ";";
                flags += name;
            }
        };
        flag(m.precision_undefined, "precision_undefined");
        flag(m.recall_undefined, "recall_undefined");
        flag(m.f1_undefined, "f1_undefined");
        flag(m.specificity_undefined, "specificity_undefined");
        flag(!r.auc.defined[c], "auc_undefined");
        os << r.classes[c] << ',' << m.support << ',' << num(m.precision) << ',' << num(m.recall) << ',' << num(m.f1) << ','
           << num(m.specificity) << ',' << (r.auc.defined[c] ? num(r.auc.per_class[c]) : "") << ',' << flags << '\n';
    }
    const std::size_t n = r.cm.total();
    os << "accuracy," << n << ",,," << num(r.accuracy) << ",,,\n";
    auto row = [&](const char *name, const MetricSummary &s, const std::string &flags) {
        os << name << ',' << n << ',' << num(s.precision) << ',' << num(s.recall) << ',' << num(s.f1) << ',' << num(s.specificity)
           << ',' << num(s.auc) << ',' << flags << '\n';
    };
    row("macro avg", r.macro,
        r.macro_excluded == 0 ? "" : "excluded_zero_support=" + std::to_string(r.macro_excluded));
    row("weighted avg", r.weighted, "");
}

void write_confusion_csv(std::ostream &os, const ConfusionMatrix &cm) {
    for (std::size_t i = 0; i < cm.k; ++i) {
        for (std::size_t j = 0; j < cm.k; ++j) {
            os << (j == 0 ? "" : ",") << cm.at(i, j);
        }
        os << '\n';
    }
}

}  // namespace fibnet
