#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lidalign/error.hpp"
#include "lidalign/tensor.hpp"

namespace lidalign {

// Trade-off coefficients of the combined objective; defaults follow the
// reference configuration (lambda_gp is the canonical improved-Wasserstein
// value, not part of that configuration).
struct LossWeights {
    double lambda_I = 0.01;
    double lambda_P = 0.1;
    double lambda_A = 0.01;
    double lambda_gp = 10.0;
};

struct LossReport {
    double total = 0.0;
    double rec = 0.0;
    double adv = 0.0;
    double ilid = 0.0;
    double plid = 0.0;
};

// L2 norm of the difference, treating the pair as single samples.
template <typename T>
double rec_loss(const Tensor<T>& x_hat, const Tensor<T>& y) {
    if (!x_hat.same_shape(y))
        throw invalid_argument("rec_loss: shape mismatch");
    double acc = 0.0;
    const auto a = x_hat.data();
    const auto b = y.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

// Batched form: mean of per-sample L2 norms over the leading axis.
template <typename T>
double rec_loss_batch(const Tensor<T>& x_hat, const Tensor<T>& y) {
    if (!x_hat.same_shape(y))
        throw invalid_argument("rec_loss: shape mismatch");
    if (x_hat.rank() < 2)
        throw invalid_argument("rec_loss: batched form needs a leading batch axis");
    const std::size_t n = x_hat.extent(0);
    const std::size_t per = x_hat.size() / n;
    const auto a = x_hat.data();
    const auto b = y.data();
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        double sq = 0.0;
        for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            sq += d * d;
        }
        acc += std::sqrt(sq);
    }
    return acc / static_cast<double>(n);
}

// Anything that can score a batch of flattened samples and expose the
// gradient of its score with respect to the input. Batches are [N, d].
class Critic {
public:
    virtual ~Critic() = default;
    virtual std::vector<double> values(const Tensor<double>& batch) const = 0;
    virtual Tensor<double> input_gradients(const Tensor<double>& batch) const = 0;
};

struct AdvCriticLoss {
    double total = 0.0;
    double wasserstein = 0.0; // E[D(fake)] - E[D(real)]
    double penalty = 0.0;     // lambda_gp * E[(||grad D(x_hat)|| - 1)^2]
    std::vector<double> grad_norms;
};

namespace detail {

inline double mean(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

} // namespace detail

// Critic objective with the gradient penalty evaluated at the mask composite
// x_hat (not at random real/fake interpolates).
inline AdvCriticLoss adv_critic_loss(const Critic& d, const Tensor<double>& real,
                                     const Tensor<double>& fake,
                                     const Tensor<double>& x_hat, double lambda_gp) {
    if (real.rank() != 2 || fake.rank() != 2 || x_hat.rank() != 2)
        throw invalid_argument("adv_critic_loss: batches must be rank-2 [N, d]");
    if (real.extent(0) == 0 || fake.extent(0) == 0 || x_hat.extent(0) == 0)
        throw invalid_argument("adv_critic_loss: empty batch");

    AdvCriticLoss out;
    out.wasserstein = detail::mean(d.values(fake)) - detail::mean(d.values(real));

    const Tensor<double> grads = d.input_gradients(x_hat);
    const std::size_t n = x_hat.extent(0);
    const std::size_t dim = x_hat.extent(1);
    out.grad_norms.resize(n);
    double pen = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        double sq = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double g = grads.at(s, i);
            sq += g * g;
        }
        const double norm = std::sqrt(sq);
        out.grad_norms[s] = norm;
        const double dev = norm - 1.0;
        pen += dev * dev;
    }
    out.penalty = lambda_gp * pen / static_cast<double>(n);
    out.total = out.wasserstein + out.penalty;
    return out;
}

inline double adv_generator_loss(const Critic& d, const Tensor<double>& fake) {
    if (fake.rank() != 2 || fake.extent(0) == 0)
        throw invalid_argument("adv_generator_loss: batch must be non-empty rank-2");
    return -detail::mean(d.values(fake));
}

// Weighted combination; the reconstruction term carries implicit weight 1.
inline LossReport total_loss(double ilid_value, double plid_value, double adv_value,
                             double rec_value, const LossWeights& w) {
    const auto check = [](double v, const char* name) {
        if (!std::isfinite(v))
            throw numeric_error(std::string("total_loss: non-finite component '") + name + "'");
    };
    check(ilid_value, "ilid");
    check(plid_value, "plid");
    check(adv_value, "adv");
    check(rec_value, "rec");
    LossReport r;
    r.ilid = ilid_value;
    r.plid = plid_value;
    r.adv = adv_value;
    r.rec = rec_value;
    r.total = w.lambda_I * ilid_value + w.lambda_P * plid_value +
              w.lambda_A * adv_value + rec_value;
    return r;
}

} // namespace lidalign
