#pragma once

#include <array>
#include <string>
#include <vector>

#include "xmeta/corpus.hpp"
#include "xmeta/model.hpp"
#include "xmeta/numerics.hpp"

namespace xmeta {

// A labeled bag of row-encodings (e.g. one language under one model).
struct RepresentationSet {
    std::string label;
    Mat64 rows;
};

// 1 - cos(s, t), in [0, 2]. Zero vectors are an error.
double cosine_distance(const Vec64& s, const Vec64& t);

// max of the two directed max-min terms, with cosine_distance inside; exact
// O(|S| * |T|) evaluation.
double hausdorff(const Mat64& s_rows, const Mat64& t_rows);
inline double hausdorff(const RepresentationSet& s, const RepresentationSet& t) {
    return hausdorff(s.rows, t.rows);
}

struct CcaResult {
    double similarity = 0.0;  // mean canonical correlation, in [0, 1]
    bool regularized = false; // ridge applied because rows <= columns
};

// Mean canonical correlation between the column spaces of X and Y (rows are
// paired observations). Columns are centered; covariances get a 1e-6 ridge
// when the sample is too small (flagged); whitening drops near-zero
// directions.
CcaResult cca_similarity(const Mat64& x, const Mat64& y);
inline CcaResult cca_similarity(const RepresentationSet& x, const RepresentationSet& y) {
    return cca_similarity(x.rows, y.rows);
}

struct Pca2Result {
    Mat64 coords;                          // n x 2
    std::array<double, 2> explained{};     // variance fractions of the two components
};

// Top-2 principal components of the centered rows. Components are ordered by
// variance; each component's largest-magnitude loading is made positive.
Pca2Result pca2(const Mat64& x);
inline Pca2Result pca2(const RepresentationSet& x) { return pca2(x.rows); }

// cca_similarity per encoder layer between the two models' activations on the
// probe examples (eval mode). Models must share the encoder architecture.
std::vector<double> layer_cca_profile(const Model& before, const Model& after,
                                      const TaskDataset& probe);

}  // namespace xmeta
