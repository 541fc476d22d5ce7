#include "xmeta/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xmeta/errors.hpp"

namespace xmeta {

double cosine_distance(const Vec64& s, const Vec64& t) {
    if (s.size() != t.size()) throw DataError("cosine_distance: dimension mismatch");
    const double ns = l2_norm(s);
    const double nt = l2_norm(t);
    if (ns == 0.0 || nt == 0.0) throw NumericError("cosine_distance: zero vector");
    const double c = dot(s, t) / (ns * nt);
    return std::clamp(1.0 - c, 0.0, 2.0);
}

namespace {

double directed_hausdorff(const Mat64& from, const Mat64& to) {
    double worst = 0.0;
    for (size_t i = 0; i < from.rows; ++i) {
        const Vec64 s = from.row(i);
        double nearest = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < to.rows; ++j)
            nearest = std::min(nearest, cosine_distance(s, to.row(j)));
        worst = std::max(worst, nearest);
    }
    return worst;
}

}  // namespace

double hausdorff(const Mat64& s_rows, const Mat64& t_rows) {
    if (s_rows.rows == 0 || t_rows.rows == 0) throw DataError("hausdorff: empty set");
    if (s_rows.cols != t_rows.cols) throw DataError("hausdorff: dimension mismatch");
    return std::max(directed_hausdorff(s_rows, t_rows), directed_hausdorff(t_rows, s_rows));
}

namespace {

// Covariance of centered columns, with optional ridge.
Mat64 covariance(const Mat64& a, const Mat64& b, double ridge) {
    Mat64 cov = matmul_tn(a, b);
    const double inv = 1.0 / static_cast<double>(a.rows - 1);
    for (double& v : cov.data) v *= inv;
    if (ridge > 0.0 && cov.rows == cov.cols)
        for (size_t i = 0; i < cov.rows; ++i) cov(i, i) += ridge;
    return cov;
}

// Symmetric inverse square root via eigendecomposition; eigenvalues at or
// below lambda_max * 1e-12 are dropped (pseudo-inverse). Returns the number
// of kept directions through `rank`.
Mat64 inverse_sqrt(const Mat64& sym, size_t& rank) {
    const EigenSym eig = eigen_sym(sym);
    const double cutoff = std::max(eig.values[0], 0.0) * 1e-12;
    rank = 0;
    Vec64 inv_sqrt(eig.values.size(), 0.0);
    for (size_t i = 0; i < eig.values.size(); ++i) {
        if (eig.values[i] > cutoff) {
            inv_sqrt[i] = 1.0 / std::sqrt(eig.values[i]);
            ++rank;
        }
    }
    // V * diag(inv_sqrt) * V^T
    Mat64 scaled = eig.vectors;  // columns are eigenvectors
    for (size_t r = 0; r < scaled.rows; ++r)
        for (size_t c = 0; c < scaled.cols; ++c) scaled(r, c) *= inv_sqrt[c];
    return matmul_nt(scaled, eig.vectors);
}

}  // namespace

CcaResult cca_similarity(const Mat64& x, const Mat64& y) {
    if (x.rows != y.rows) throw DataError("cca_similarity: row counts differ");
    if (x.rows < 3) throw DataError("cca_similarity: need at least 3 rows");
    check_finite(x, "cca X");
    check_finite(y, "cca Y");

    Mat64 xc = x;
    Mat64 yc = y;
    center_columns(xc);
    center_columns(yc);

    CcaResult result;
    result.regularized = x.rows <= std::max(x.cols, y.cols);
    const double ridge = result.regularized ? 1e-6 : 0.0;

    const Mat64 sxx = covariance(xc, xc, ridge);
    const Mat64 syy = covariance(yc, yc, ridge);
    const Mat64 sxy = covariance(xc, yc, 0.0);

    size_t rank_x = 0;
    size_t rank_y = 0;
    const Mat64 wx = inverse_sqrt(sxx, rank_x);
    const Mat64 wy = inverse_sqrt(syy, rank_y);
    if (rank_x == 0 || rank_y == 0) throw DataError("cca_similarity: rank-0 input");

    const Mat64 t = matmul(matmul(wx, sxy), wy);
    const Mat64 tt = matmul_nt(t, t);  // p x p, eigenvalues = squared canonical correlations
    const EigenSym eig = eigen_sym(tt);

    const size_t components = std::min(x.cols, y.cols);
    double total = 0.0;
    for (size_t i = 0; i < components && i < eig.values.size(); ++i) {
        const double rho = std::sqrt(std::max(eig.values[i], 0.0));
        total += std::min(rho, 1.0);
    }
    result.similarity = total / static_cast<double>(components);
    return result;
}

Pca2Result pca2(const Mat64& x) {
    if (x.rows < 3) throw DataError("pca2: need at least 3 rows");
    if (x.cols < 2) throw DataError("pca2: need at least 2 columns");
    check_finite(x, "pca2 input");

    Mat64 centered = x;
    center_columns(centered);
    const Mat64 cov = covariance(centered, centered, 0.0);
    const EigenSym eig = eigen_sym(cov);

    double total_var = 0.0;
    for (double v : eig.values) total_var += std::max(v, 0.0);
    if (total_var <= 0.0) throw DataError("pca2: rank-0 input");

    Pca2Result result;
    Mat64 components(x.cols, 2);
    for (size_t k = 0; k < 2; ++k) {
        Vec64 v(x.cols);
        for (size_t i = 0; i < x.cols; ++i) v[i] = eig.vectors(i, k);
        // Sign convention: the largest-magnitude loading is positive.
        size_t arg = 0;
        for (size_t i = 1; i < v.size(); ++i)
            if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
        if (v[arg] < 0.0)
            for (double& e : v) e = -e;
        for (size_t i = 0; i < x.cols; ++i) components(i, k) = v[i];
        result.explained[k] = std::max(eig.values[k], 0.0) / total_var;
    }
    result.coords = matmul(centered, components);
    return result;
}

std::vector<double> layer_cca_profile(const Model& before, const Model& after,
                                      const TaskDataset& probe) {
    const EncoderConfig& a = before.config();
    const EncoderConfig& b = after.config();
    if (a.input_dim != b.input_dim || a.hidden_dim != b.hidden_dim ||
        a.num_layers != b.num_layers || a.activation != b.activation)
        throw ConfigError("layer_cca_profile: encoder architectures differ");
    probe.validate();

    const Mat64 features = features_matrix(std::span<const Example>(probe.examples));
    const ForwardTrace trace_before = before.forward(features, "", ForwardMode::kEval);
    const ForwardTrace trace_after = after.forward(features, "", ForwardMode::kEval);

    std::vector<double> profile;
    profile.reserve(a.num_layers);
    for (size_t l = 0; l < a.num_layers; ++l)
        profile.push_back(
            cca_similarity(trace_before.activations[l], trace_after.activations[l]).similarity);
    return profile;
}

}  // namespace xmeta
