#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "lidalign/error.hpp"
#include "lidalign/parallel.hpp"
#include "lidalign/tensor.hpp"

namespace lidalign {

// k smallest distances from one query into a reference set, ascending.
// r_max is distances.back() by convention.
struct NeighborList {
    std::vector<double> distances;
    std::vector<std::size_t> indices;
    double r_max = 0.0;

    std::size_t k() const { return distances.size(); }
};

// Exact brute-force k-NN. Ties are broken by ascending reference index so
// results are deterministic. With exclude_self set, the single lowest-indexed
// reference at distance exactly zero is skipped (the query counted as its own
// member of the reference set).
inline NeighborList neighbors(std::span<const double> query,
                              const Tensor<double>& refs,
                              std::size_t k,
                              bool exclude_self = false) {
    if (refs.rank() != 2)
        throw invalid_argument("neighbors: reference set must be rank-2 (n x d)");
    const std::size_t n = refs.extent(0);
    const std::size_t d = refs.extent(1);
    if (query.size() != d)
        throw invalid_argument("neighbors: query dimension mismatch");
    if (k == 0)
        throw invalid_argument("neighbors: k must be positive");

    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i)
        dist[i] = l2_distance(query, refs.row(i));

    std::size_t skip = n; // index to drop, if any
    if (exclude_self) {
        for (std::size_t i = 0; i < n; ++i) {
            if (dist[i] == 0.0) {
                skip = i;
                break;
            }
        }
    }
    const std::size_t usable = n - (skip < n ? 1 : 0);
    if (k > usable)
        throw invalid_argument("neighbors: k exceeds usable reference count");

    std::vector<std::size_t> order;
    order.reserve(usable);
    for (std::size_t i = 0; i < n; ++i)
        if (i != skip) order.push_back(i);

    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                      order.end(), [&dist](std::size_t a, std::size_t b) {
                          if (dist[a] != dist[b]) return dist[a] < dist[b];
                          return a < b;
                      });

    NeighborList nl;
    nl.distances.resize(k);
    nl.indices.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        nl.indices[i] = order[i];
        nl.distances[i] = dist[order[i]];
    }
    nl.r_max = nl.distances.back();
    return nl;
}

// Full distance matrix, entry (i, j) = ||A[i] - B[j]||.
inline Tensor<double> pairwise_distances(const Tensor<double>& A, const Tensor<double>& B) {
    if (A.rank() != 2 || B.rank() != 2)
        throw invalid_argument("pairwise_distances: inputs must be rank-2");
    if (A.extent(1) != B.extent(1))
        throw invalid_argument("pairwise_distances: dimension mismatch");
    const std::size_t na = A.extent(0);
    const std::size_t nb = B.extent(0);
    Tensor<double> out({na, nb});
    parallel_for(na, [&](std::size_t i) {
        const auto a = A.row(i);
        for (std::size_t j = 0; j < nb; ++j)
            out.at(i, j) = l2_distance(a, B.row(j));
    });
    return out;
}

} // namespace lidalign
