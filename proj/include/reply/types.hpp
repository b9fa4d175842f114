#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

namespace reply {

// Row-major throughout: batches are stacked as rows and all serialized
// matrices are declared row-major.
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matf = Mat<float>;
using Matd = Mat<double>;
using Vecf = Vec<float>;
using Vecd = Vec<double>;

using NGramId = std::uint32_t;

// Multiset of in-vocabulary n-gram ids with multiplicities, one per text
// field. Items are unique by id and sorted ascending.
struct FeatureBag {
    std::vector<std::pair<NGramId, std::uint32_t>> items;

    bool empty() const { return items.empty(); }
};

// One training/eval example: per-feature input bags (body, optionally
// subject) and the response bag.
struct FeaturizedPair {
    std::vector<FeatureBag> x;
    FeatureBag y;
};

}  // namespace reply
