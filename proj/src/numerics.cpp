#include "xmeta/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xmeta/errors.hpp"

namespace xmeta {

void Mat64::set_row(size_t r, const Vec64& v) {
    if (v.size() != cols) throw std::invalid_argument("set_row: width mismatch");
    std::copy(v.begin(), v.end(), data.begin() + r * cols);
}

void check_finite(const Vec64& v, const std::string& what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError("non-finite value in " + what);
    }
}

void check_finite(const Mat64& m, const std::string& what) {
    check_finite(m.data, what);
}

double dot(const Vec64& a, const Vec64& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const Vec64& a) {
    return std::sqrt(dot(a, a));
}

double squared_distance(const Vec64& a, const Vec64& b) {
    if (a.size() != b.size()) throw std::invalid_argument("squared_distance: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double euclidean_distance(const Vec64& a, const Vec64& b) {
    return std::sqrt(squared_distance(a, b));
}

void axpy(double alpha, const Vec64& x, Vec64& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: length mismatch");
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(Vec64& v, double alpha) {
    for (double& x : v) x *= alpha;
}

Vec64 add(const Vec64& a, const Vec64& b) {
    if (a.size() != b.size()) throw std::invalid_argument("add: length mismatch");
    Vec64 out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vec64 sub(const Vec64& a, const Vec64& b) {
    if (a.size() != b.size()) throw std::invalid_argument("sub: length mismatch");
    Vec64 out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vec64 interpolate(const Vec64& a, const Vec64& b, double t) {
    if (a.size() != b.size()) throw std::invalid_argument("interpolate: length mismatch");
    Vec64 out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + t * (b[i] - a[i]);
    return out;
}

Mat64 matmul(const Mat64& a, const Mat64& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
    Mat64 out(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i) {
        for (size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Mat64 matmul_tn(const Mat64& a, const Mat64& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: shape mismatch");
    Mat64 out(a.cols, b.cols);
    for (size_t k = 0; k < a.rows; ++k) {
        for (size_t i = 0; i < a.cols; ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (size_t j = 0; j < b.cols; ++j) out(i, j) += aki * b(k, j);
        }
    }
    return out;
}

Mat64 matmul_nt(const Mat64& a, const Mat64& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: shape mismatch");
    Mat64 out(a.rows, b.rows);
    for (size_t i = 0; i < a.rows; ++i) {
        for (size_t j = 0; j < b.rows; ++j) {
            double s = 0.0;
            for (size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
            out(i, j) = s;
        }
    }
    return out;
}

Mat64 transpose(const Mat64& a) {
    Mat64 out(a.cols, a.rows);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

Vec64 col_sums(const Mat64& a) {
    Vec64 out(a.cols, 0.0);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < a.cols; ++j) out[j] += a(i, j);
    return out;
}

Vec64 col_means(const Mat64& a) {
    if (a.rows == 0) throw std::invalid_argument("col_means: empty matrix");
    Vec64 out = col_sums(a);
    scale(out, 1.0 / static_cast<double>(a.rows));
    return out;
}

Vec64 center_columns(Mat64& a) {
    Vec64 means = col_means(a);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < a.cols; ++j) a(i, j) -= means[j];
    return means;
}

EigenSym eigen_sym(const Mat64& a) {
    if (a.rows != a.cols) throw std::invalid_argument("eigen_sym: matrix not square");
    const size_t n = a.rows;
    Mat64 m = a;
    Mat64 v(n, n);
    for (size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    auto off_diag = [&]() {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j) s += m(i, j) * m(i, j);
        return s;
    };

    double norm = 0.0;
    for (double x : m.data) norm += x * x;
    const double tol = 1e-28 * std::max(norm, 1e-300);

    for (int sweep = 0; sweep < 100 && off_diag() > tol; ++sweep) {
        for (size_t p = 0; p < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double app = m(p, p);
                const double aqq = m(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p);
                    const double mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k);
                    const double mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return m(i, i) > m(j, j); });

    EigenSym out;
    out.values.resize(n);
    out.vectors = Mat64(n, n);
    for (size_t j = 0; j < n; ++j) {
        out.values[j] = m(order[j], order[j]);
        for (size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

Vec64 softmax(const Vec64& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    check_finite(logits, "softmax input");
    const double mx = *std::max_element(logits.begin(), logits.end());
    Vec64 out(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

Mat64 softmax_rows(const Mat64& logits) {
    Mat64 out(logits.rows, logits.cols);
    for (size_t i = 0; i < logits.rows; ++i) out.set_row(i, softmax(logits.row(i)));
    return out;
}

double cross_entropy(const Vec64& probs, size_t label) {
    if (label >= probs.size()) throw std::out_of_range("cross_entropy: label out of range");
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw std::invalid_argument("cross_entropy: not a probability vector");
    }
    return -std::log(std::max(probs[label], kProbFloor));
}

void adamw_step(Vec64& params, const Vec64& grads, AdamWState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adamw_step: length mismatch");
    check_finite(grads, "adamw gradient");

    state.t += 1;
    const AdamWParams& hp = state.hp;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grads[i];
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps) + hp.lr * hp.weight_decay * params[i];
    }
}

double finite_diff_check(const std::function<double(const Vec64&)>& loss_fn,
                         const Vec64& params,
                         const Vec64& analytic_grad,
                         double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_check: h must be positive");
    if (params.size() != analytic_grad.size())
        throw std::invalid_argument("finite_diff_check: length mismatch");
    const double first = loss_fn(params);
    const double second = loss_fn(params);
    if (!std::isfinite(first)) throw NumericError("finite_diff_check: non-finite loss");
    if (first != second) throw NumericError("finite_diff_check: loss_fn is not deterministic");

    Vec64 probe = params;
    double max_rel = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = loss_fn(probe);
        probe[i] = orig - h;
        const double down = loss_fn(probe);
        probe[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(numeric), std::abs(analytic_grad[i]), 1e-8});
        max_rel = std::max(max_rel, std::abs(numeric - analytic_grad[i]) / denom);
    }
    return max_rel;
}

}  // namespace xmeta
