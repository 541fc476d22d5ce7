#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace xmeta {

// All real-valued quantities are double precision. Vec64 is a flat vector of
// scalars; Mat64 is dense row-major with immutable dimensions.
using Vec64 = std::vector<double>;

struct Mat64 {
    size_t rows = 0;
    size_t cols = 0;
    Vec64 data;

    Mat64() = default;
    Mat64(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
    double operator()(size_t r, size_t c) const { return data[r * cols + c]; }

    Vec64 row(size_t r) const { return Vec64(data.begin() + r * cols, data.begin() + (r + 1) * cols); }
    void set_row(size_t r, const Vec64& v);
};

// Throws NumericError naming `what` if any entry is NaN or Inf.
void check_finite(const Vec64& v, const std::string& what);
void check_finite(const Mat64& m, const std::string& what);

// ---- vector arithmetic -----------------------------------------------------

double dot(const Vec64& a, const Vec64& b);
double l2_norm(const Vec64& a);
double squared_distance(const Vec64& a, const Vec64& b);
double euclidean_distance(const Vec64& a, const Vec64& b);
void axpy(double alpha, const Vec64& x, Vec64& y);  // y += alpha * x
void scale(Vec64& v, double alpha);
Vec64 add(const Vec64& a, const Vec64& b);
Vec64 sub(const Vec64& a, const Vec64& b);
// a + t * (b - a)
Vec64 interpolate(const Vec64& a, const Vec64& b, double t);

// ---- matrix arithmetic -----------------------------------------------------

Mat64 matmul(const Mat64& a, const Mat64& b);      // a * b
Mat64 matmul_tn(const Mat64& a, const Mat64& b);   // a^T * b
Mat64 matmul_nt(const Mat64& a, const Mat64& b);   // a * b^T
Mat64 transpose(const Mat64& a);
Vec64 col_sums(const Mat64& a);
Vec64 col_means(const Mat64& a);
// Subtracts the column mean from every row, in place; returns the means.
Vec64 center_columns(Mat64& a);

// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues are
// returned in descending order with matching eigenvector columns.
struct EigenSym {
    Vec64 values;
    Mat64 vectors;  // column j is the eigenvector of values[j]
};
EigenSym eigen_sym(const Mat64& a);

// ---- classification primitives ----------------------------------------------

// Numerically stable softmax (max subtraction). Errors on empty or non-finite
// input; the output sums to 1 and preserves the argmax.
Vec64 softmax(const Vec64& logits);

// Row-wise softmax for a batch of logits.
Mat64 softmax_rows(const Mat64& logits);

// -log(probs[label]) with floor 1e-12 on the probability, so a degenerate
// head yields a large finite loss instead of infinity.
inline constexpr double kProbFloor = 1e-12;
double cross_entropy(const Vec64& probs, size_t label);

// ---- AdamW -------------------------------------------------------------------

struct AdamWParams {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// First/second moment state. t increases by exactly one per step.
struct AdamWState {
    Vec64 m;
    Vec64 v;
    long t = 0;
    AdamWParams hp;

    AdamWState(size_t n, const AdamWParams& params) : m(n, 0.0), v(n, 0.0), hp(params) {}
};

// One AdamW update with bias correction and decoupled weight decay:
//   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
void adamw_step(Vec64& params, const Vec64& grads, AdamWState& state);

// ---- gradient checking --------------------------------------------------------

// Central finite differences per coordinate against an analytic gradient.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-8); returns the
// maximum over coordinates. Throws if loss_fn is not deterministic.
double finite_diff_check(const std::function<double(const Vec64&)>& loss_fn,
                         const Vec64& params,
                         const Vec64& analytic_grad,
                         double h);

}  // namespace xmeta
