#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fibnet {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::size_t> counts;  // k * k, row-major

    explicit ConfusionMatrix(std::size_t classes = 0) : k(classes), counts(classes * classes, 0) {}
    std::size_t &at(std::size_t truth, std::size_t pred) { return counts[truth * k + pred]; }
    [[nodiscard]] std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * k + pred]; }
    [[nodiscard]] std::size_t total() const;
    [[nodiscard]] std::size_t row_sum(std::size_t i) const;
    [[nodiscard]] std::size_t col_sum(std::size_t j) const;
    friend bool operator==(const ConfusionMatrix &, const ConfusionMatrix &) = default;
};

// Throws std::out_of_range for a label >= k and std::invalid_argument for
// length mismatch.
ConfusionMatrix confusion(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t k);

// One-vs-rest metrics. A zero denominator yields 0 and sets the matching flag.
struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double specificity = 0.0;
    std::size_t support = 0;
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
    bool specificity_undefined = false;
};

std::vector<ClassMetrics> class_metrics(const ConfusionMatrix &cm);

double accuracy(const ConfusionMatrix &cm);

enum class Average { weighted, macro };

// weighted: sum(support * v) / sum(support); macro: plain mean over classes
// with nonzero support. Both are 0 when no class has support.
double aggregate(std::span<const double> values, std::span<const std::size_t> supports, Average mode);

struct AucResult {
    std::vector<double> per_class;  // 0 where undefined
    std::vector<bool> defined;      // false when a class has no positives or no negatives
    double macro = 0.0;             // over defined classes
    double weighted = 0.0;          // support-weighted over defined classes
    std::size_t excluded = 0;
};

// Mann-Whitney statistic with mid-ranks, so ties count one half. Rows of
// `scores` are per-sample class probabilities and must sum to 1 within 1e-6.
AucResult roc_auc_ovr(const std::vector<std::vector<double>> &scores, std::span<const std::size_t> truth);

struct MetricSummary {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double specificity = 0.0;
    double auc = 0.0;
};

struct EvalReport {
    std::vector<std::string> classes;
    ConfusionMatrix cm;
    std::vector<ClassMetrics> per_class;
    AucResult auc;
    double accuracy = 0.0;
    MetricSummary weighted;
    MetricSummary macro;
    std::size_t macro_excluded = 0;  // zero-support classes left out of macro means
};

EvalReport make_report(const std::vector<std::string> &classes, std::span<const std::size_t> truth,
                       std::span<const std::size_t> predicted, const std::vector<std::vector<double>> &scores);

// class,support,precision,recall,f1,specificity,auc,flags then the
// accuracy / macro avg / weighted avg rows.
void write_classification_report(std::ostream &os, const EvalReport &r);
void write_confusion_csv(std::ostream &os, const ConfusionMatrix &cm);

}  // namespace fibnet
