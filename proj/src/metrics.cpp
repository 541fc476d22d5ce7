#include "xmeta/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "xmeta/errors.hpp"

namespace xmeta {

size_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), size_t{0});
}

double ConfusionMatrix::accuracy() const {
    const size_t n = total();
    if (n == 0) return 0.0;
    size_t correct = 0;
    for (size_t i = 0; i < num_labels; ++i) correct += at(i, i);
    return static_cast<double>(correct) / static_cast<double>(n);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_metrics_csv(const RunMetrics& metrics, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write metrics: " + path);
    out << "iteration,loss,accuracy\n";
    for (const MetricsRow& row : metrics.rows)
        out << row.iteration << ',' << format_double(row.loss) << ','
            << format_double(row.accuracy) << '\n';
    if (!out) throw DataError("write failed: " + path);
}

void write_metrics_summary(const RunMetrics& metrics, const std::string& path) {
    nlohmann::json summary;
    summary["final_loss"] = metrics.final_loss;
    summary["final_accuracy"] = metrics.final_accuracy;
    summary["confusion"] = nlohmann::json::array();
    const ConfusionMatrix& cm = metrics.final_confusion;
    for (size_t i = 0; i < cm.num_labels; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (size_t j = 0; j < cm.num_labels; ++j) row.push_back(cm.at(i, j));
        summary["confusion"].push_back(row);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write summary: " + path);
    out << summary.dump(2) << '\n';
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace xmeta
