#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xmeta/numerics.hpp"

namespace xmeta {

struct MetricsRow {
    size_t iteration = 0;
    double loss = 0.0;
    double accuracy = 0.0;  // NaN when no eval split was supplied
};

// Integer confusion counts; rows = true labels, columns = predictions.
struct ConfusionMatrix {
    size_t num_labels = 0;
    std::vector<size_t> counts;  // row-major

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(size_t n) : num_labels(n), counts(n * n, 0) {}
    size_t& at(size_t truth, size_t predicted) { return counts[truth * num_labels + predicted]; }
    size_t at(size_t truth, size_t predicted) const {
        return counts[truth * num_labels + predicted];
    }
    size_t total() const;
    double accuracy() const;  // trace / total
};

struct EvalResult {
    double accuracy = 0.0;
    ConfusionMatrix confusion;
};

struct RunMetrics {
    std::vector<MetricsRow> rows;
    double final_loss = 0.0;
    double final_accuracy = 0.0;
    ConfusionMatrix final_confusion;
};

// CSV with header "iteration,loss,accuracy"; floats printed with %.17g so
// re-parsing reproduces the exact doubles.
void write_metrics_csv(const RunMetrics& metrics, const std::string& path);

// JSON summary: final loss/accuracy plus the confusion matrix as nested
// arrays. Keys are emitted in sorted order, so output is byte-stable.
void write_metrics_summary(const RunMetrics& metrics, const std::string& path);

std::string format_double(double v);  // %.17g

}  // namespace xmeta
