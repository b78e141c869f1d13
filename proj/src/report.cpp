#include "fibnet/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>

namespace fibnet {

namespace {

constexpr double kPanelW = 420.0;
constexpr double kPanelH = 260.0;
constexpr double kMargin = 45.0;

std::string fmt(const char *f, double v) {
    char b[64];
    std::snprintf(b, sizeof(b), f, v);
    return b;
}

struct Series {
    const char *name;
    const char *colour;
    std::function<double(const EpochRecord &)> get;
};

void panel(std::ostream &os, const TrainHistory &h, double x0, const char *title, const Series &a, const Series &b,
           bool unit_range) {
    const auto &r = h.records;
    double lo = 0.0;
    double hi = 1.0;
    if (!unit_range) {
        hi = 0.0;
        for (const auto &e : r) {
            for (double v : {a.get(e), b.get(e)}) {
                if (std::isfinite(v)) {
                    hi = std::max(hi, v);
                }
            }
        }
        hi = hi > 0.0 ? hi * 1.05 : 1.0;
    }
    const double first = r.empty() ? 1.0 : static_cast<double>(r.front().epoch);
    const double last = r.empty() ? 1.0 : static_cast<double>(r.back().epoch);
    const double span = last > first ? last - first : 1.0;
    const double pw = kPanelW - 2 * kMargin;
    const double ph = kPanelH - 2 * kMargin;
    auto px = [&](double epoch) { return x0 + kMargin + (epoch - first) / span * pw; };
    auto py = [&](double v) { return kMargin + ph - (std::clamp(v, lo, hi) - lo) / (hi - lo) * ph; };

    os << "  <g class=\"panel\">\n";
    os << "    <text x=\"" << fmt("%.1f", x0 + kPanelW / 2) << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
    os << "    <rect x=\"" << fmt("%.1f", x0 + kMargin) << "\" y=\"" << kMargin << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#999\"/>\n";
    os << "    <text x=\"" << fmt("%.1f", x0 + kMargin - 4) << "\" y=\"" << fmt("%.1f", kMargin + 4)
       << "\" text-anchor=\"end\" font-size=\"10\">" << fmt("%.2f", hi) << "</text>\n";
    os << "    <text x=\"" << fmt("%.1f", x0 + kMargin - 4) << "\" y=\"" << fmt("%.1f", kMargin + ph)
       << "\" text-anchor=\"end\" font-size=\"10\">" << fmt("%.2f", lo) << "</text>\n";
    os << "    <text x=\"" << fmt("%.1f", x0 + kPanelW / 2) << "\" y=\"" << fmt("%.1f", kPanelH - 10)
       << "\" text-anchor=\"middle\" font-size=\"10\">epoch " << fmt("%.0f", first) << "-" << fmt("%.0f", last) << "</text>\n";
    double ly = kMargin + 12;
    for (const Series *s : {&a, &b}) {
        os << "    <polyline data-series=\"" << s->name << "\" fill=\"none\" stroke=\"" << s->colour << "\" points=\"";
        for (std::size_t i = 0; i < r.size(); ++i) {
            os << (i ? " " : "") << fmt("%.2f", px(static_cast<double>(r[i].epoch))) << ','
               << fmt("%.2f", py(s->get(r[i])));
        }
        os << "\"/>\n";
        os << "    <text x=\"" << fmt("%.1f", x0 + kPanelW - kMargin - 4) << "\" y=\"" << fmt("%.1f", ly)
           << "\" text-anchor=\"end\" font-size=\"10\" fill=\"" << s->colour << "\">" << s->name << "</text>\n";
        ly += 12;
    }
    os << "  </g>\n";
}

}  // namespace

void write_curves_svg(std::ostream &os, const TrainHistory &h) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * kPanelW << "\" height=\"" << kPanelH << "\">\n";
    os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    panel(os, h, 0.0, "accuracy", {"train_acc", "#1f77b4", [](const EpochRecord &e) { return e.train_acc; }},
          {"val_acc", "#d62728", [](const EpochRecord &e) { return e.val_acc; }}, true);
    panel(os, h, kPanelW, "loss", {"train_loss", "#1f77b4", [](const EpochRecord &e) { return e.train_loss; }},
          {"val_loss", "#d62728", [](const EpochRecord &e) { return e.val_loss; }}, false);
    os << "</svg>\n";
}

void write_run_summary(std::ostream &os, const TrainHistory &h) {
    if (h.records.empty()) {
        os << "no epochs recorded\n";
        return;
    }
    const auto &last = h.records.back();
    const auto best = std::max_element(h.records.begin(), h.records.end(),
                                       [](const EpochRecord &a, const EpochRecord &b) { return a.val_acc < b.val_acc; });
    double secs = 0.0;
    for (const auto &e : h.records) {
        secs += e.seconds;
    }
    char line[256];
    std::snprintf(line, sizeof(line), "epochs: %zu\n", h.records.size());
    os << line;
    std::snprintf(line, sizeof(line), "final: epoch %zu train_loss %.6f train_acc %.4f val_loss %.6f val_acc %.4f\n", last.epoch,
                  last.train_loss, last.train_acc, last.val_loss, last.val_acc);
    os << line;
    std::snprintf(line, sizeof(line), "best val_acc: %.4f at epoch %zu\n", best->val_acc, best->epoch);
    os << line;
    std::snprintf(line, sizeof(line), "seconds/epoch: %.3f\n", secs / static_cast<double>(h.records.size()));
    os << line;
}

}  // namespace fibnet
