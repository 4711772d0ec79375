#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "lidalign/error.hpp"
#include "lidalign/feature.hpp"
#include "lidalign/knn.hpp"
#include "lidalign/parallel.hpp"
#include "lidalign/tensor.hpp"

namespace lidalign {

struct LidEstimate {
    double value = 0.0;
    std::size_t k = 0;
    NeighborList neighbor_distances;
};

// Maximum-likelihood LID over a sorted neighbor list:
//   value = -( (1/k) * sum_i ln(r_i / r_max) )^-1,  r_max = r_k,
// so the k-th summand is zero. Requires k >= 2 and strictly positive
// distances; exact duplicates are an error rather than a clamp, since ln(0)
// would silently poison downstream statistics.
inline LidEstimate lid_mle(const NeighborList& nl) {
    const std::size_t k = nl.k();
    if (k < 2)
        throw invalid_argument("lid_mle: neighborhood size must be at least 2");
    if (nl.distances.front() <= 0.0)
        throw numeric_error("lid_mle: zero neighbor distance (exact duplicate in reference set)");
    const double r_max = nl.r_max;
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        sum += std::log(nl.distances[i] / r_max);
    if (sum == 0.0)
        throw numeric_error("lid_mle: degenerate neighborhood (all distances equal)");
    LidEstimate est;
    est.value = -static_cast<double>(k) / sum;
    est.k = k;
    est.neighbor_distances = nl;
    return est;
}

// Image-level score: LID of one original feature vector against the set of
// generated-feature vectors. The generated counterpart of y itself is a
// legitimate neighbor, hence no self exclusion.
inline LidEstimate ilid(std::span<const double> y_feat, const Tensor<double>& z_feats,
                        std::size_t k_i) {
    return lid_mle(neighbors(y_feat, z_feats, k_i, /*exclude_self=*/false));
}

// Mean image-level score over a batch of originals (rows of y_feats), with
// the generated batch as the reference set.
inline double ilid_loss(const Tensor<double>& y_feats, const Tensor<double>& z_feats,
                        std::size_t k_i) {
    if (y_feats.rank() != 2 || z_feats.rank() != 2)
        throw invalid_argument("ilid_loss: batches must be rank-2 (n x d)");
    const std::size_t n = y_feats.extent(0);
    if (n == 0)
        throw invalid_argument("ilid_loss: empty batch of originals");
    std::vector<double> vals(n);
    parallel_for(n, [&](std::size_t i) {
        vals[i] = ilid(y_feats.row(i), z_feats, k_i).value;
    });
    double acc = 0.0;
    for (double v : vals) acc += v;
    return acc / static_cast<double>(n);
}

// Patch-level score: same estimator on flattened 3x3 feature patches, with
// the restored-region patch set as reference.
inline LidEstimate plid(std::span<const double> patch, const PatchSet& q, std::size_t k_p) {
    return lid_mle(neighbors(patch, q.vectors, k_p, /*exclude_self=*/false));
}

// Mean over images of the mean patch-level score: P_i holds patches of the
// full original feature map, Q_i only patches of the restored region.
inline double plid_loss(std::span<const PatchSet> p_sets, std::span<const PatchSet> q_sets,
                        std::size_t k_p) {
    if (p_sets.size() != q_sets.size())
        throw invalid_argument("plid_loss: P and Q lists differ in length");
    if (p_sets.empty())
        throw invalid_argument("plid_loss: empty image list");
    double acc = 0.0;
    for (std::size_t img = 0; img < p_sets.size(); ++img) {
        const PatchSet& p = p_sets[img];
        const PatchSet& q = q_sets[img];
        if (p.size() == 0)
            throw invalid_argument("plid_loss: empty P set for image " + std::to_string(img));
        if (q.size() < k_p)
            throw invalid_argument("plid_loss: |Q| below k_P for image " + std::to_string(img));
        std::vector<double> vals(p.size());
        parallel_for(p.size(), [&](std::size_t i) {
            vals[i] = plid(p.vectors.row(i), q, k_p).value;
        });
        double img_acc = 0.0;
        for (double v : vals) img_acc += v;
        acc += img_acc / static_cast<double>(p.size());
    }
    return acc / static_cast<double>(p_sets.size());
}

// ---------------------------------------------------------------------------
// Analytic gradients

// Gradient of the LID estimate with respect to the reference points, with
// neighbor membership and ranks frozen at their current values (the loss is
// piecewise smooth; this differentiates the active piece). With
// S = sum_i ln(r_i/r_max):
//   d value / d r_j = (k / S^2) / r_j                 for j < k
//   d value / d r_k = -(k / S^2) * (k - 1) / r_k
// and d r_j / d z_j = (z_j - y) / r_j. Non-neighbors get zero gradient.
struct LidGradient {
    double value = 0.0;
    std::vector<std::size_t> neighbor_indices; // rows of the reference set
    Tensor<double> neighbor_grads;             // k x d, d value / d z_j
    // Set when ranks k-1/k or k/k+1 are separated by less than the tolerance;
    // the estimate is not differentiable there and the frozen-rank gradient is
    // one-sided.
    bool boundary_tie = false;
};

inline constexpr double kBoundaryTieTolerance = 1e-9;

inline LidGradient lid_reference_gradient(std::span<const double> query,
                                          const Tensor<double>& refs, std::size_t k) {
    const std::size_t n = refs.extent(0);
    const std::size_t d = refs.extent(1);
    // One extra neighbor, when available, to detect membership boundary ties.
    const std::size_t probe = k < n ? k + 1 : k;
    NeighborList ext = neighbors(query, refs, probe, /*exclude_self=*/false);
    NeighborList nl;
    nl.distances.assign(ext.distances.begin(), ext.distances.begin() + static_cast<std::ptrdiff_t>(k));
    nl.indices.assign(ext.indices.begin(), ext.indices.begin() + static_cast<std::ptrdiff_t>(k));
    nl.r_max = nl.distances.back();
    const LidEstimate est = lid_mle(nl);

    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        sum += std::log(nl.distances[i] / nl.r_max);
    const double kk = static_cast<double>(k);
    const double common = kk / (sum * sum);

    LidGradient grad;
    grad.value = est.value;
    grad.neighbor_indices = nl.indices;
    grad.neighbor_grads = Tensor<double>({k, d});
    for (std::size_t j = 0; j < k; ++j) {
        const double r = nl.distances[j];
        const double dvalue_dr =
            (j + 1 < k) ? common / r : -common * (kk - 1.0) / r;
        const auto z = refs.row(nl.indices[j]);
        auto out = grad.neighbor_grads.row(j);
        for (std::size_t c = 0; c < d; ++c)
            out[c] = dvalue_dr * (z[c] - query[c]) / r;
    }

    if (k >= 2 && nl.distances[k - 1] - nl.distances[k - 2] < kBoundaryTieTolerance)
        grad.boundary_tie = true;
    if (probe > k && ext.distances[k] - ext.distances[k - 1] < kBoundaryTieTolerance)
        grad.boundary_tie = true;
    return grad;
}

inline LidGradient ilid_gradient(std::span<const double> y_feat,
                                 const Tensor<double>& z_feats, std::size_t k_i) {
    return lid_reference_gradient(y_feat, z_feats, k_i);
}

inline LidGradient plid_gradient(std::span<const double> patch, const PatchSet& q,
                                 std::size_t k_p) {
    return lid_reference_gradient(patch, q.vectors, k_p);
}

} // namespace lidalign
