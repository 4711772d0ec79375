#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lidalign/detail/conv.hpp"
#include "lidalign/error.hpp"
#include "lidalign/rng.hpp"
#include "lidalign/tensor.hpp"

namespace lidalign {

// ---------------------------------------------------------------------------
// Transform specification

struct TransformSpec {
    enum class Kind { identity, random_projection, conv_stack, external };

    Kind kind = Kind::identity;
    std::uint64_t seed = 0;
    std::size_t channels = 8;
    std::size_t depth = 2;
    std::string path;

    static TransformSpec identity() { return TransformSpec{}; }

    static TransformSpec random_projection(std::uint64_t seed, std::size_t channels) {
        TransformSpec s;
        s.kind = Kind::random_projection;
        s.seed = seed;
        s.channels = channels;
        return s;
    }

    static TransformSpec conv_stack(std::uint64_t seed, std::size_t depth,
                                    std::size_t channels) {
        TransformSpec s;
        s.kind = Kind::conv_stack;
        s.seed = seed;
        s.depth = depth;
        s.channels = channels;
        return s;
    }

    static TransformSpec external(std::string path) {
        TransformSpec s;
        s.kind = Kind::external;
        s.path = std::move(path);
        return s;
    }

    // "identity" | "random_projection:SEED:C" | "conv_stack:SEED:DEPTH:C"
    // | "external:PATH"
    static TransformSpec parse(const std::string& text);

    std::string str() const {
        switch (kind) {
            case Kind::identity:
                return "identity";
            case Kind::random_projection:
                return "random_projection:" + std::to_string(seed) + ":" +
                       std::to_string(channels);
            case Kind::conv_stack:
                return "conv_stack:" + std::to_string(seed) + ":" +
                       std::to_string(depth) + ":" + std::to_string(channels);
            case Kind::external:
                return "external:" + path;
        }
        return "identity";
    }
};

inline TransformSpec TransformSpec::parse(const std::string& text) {
    if (text == "identity") return identity();
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    if (head == "external") {
        if (colon == std::string::npos || colon + 1 >= text.size())
            throw invalid_argument("transform: external requires a path");
        return external(text.substr(colon + 1));
    }
    std::vector<std::uint64_t> nums;
    if (colon != std::string::npos) {
        std::stringstream ss(text.substr(colon + 1));
        std::string tok;
        while (std::getline(ss, tok, ':')) {
            try {
                nums.push_back(std::stoull(tok));
            } catch (const std::exception&) {
                throw invalid_argument("transform: bad numeric field in '" + text + "'");
            }
        }
    }
    if (head == "random_projection") {
        if (nums.size() != 2)
            throw invalid_argument("transform: random_projection:SEED:C expected");
        return random_projection(nums[0], nums[1]);
    }
    if (head == "conv_stack") {
        if (nums.size() != 3)
            throw invalid_argument("transform: conv_stack:SEED:DEPTH:C expected");
        return conv_stack(nums[0], nums[1], nums[2]);
    }
    throw invalid_argument("transform: unknown spec '" + text + "'");
}

// ---------------------------------------------------------------------------
// Feature maps, masks, patch sets

// H x W x C feature tensor plus the source-image extent it was derived from.
// Spatial extents must divide the source evenly (integer downscale factor).
struct FeatureMap {
    Tensor<float> tensor; // H x W x C
    std::size_t source_h = 0;
    std::size_t source_w = 0;
    std::string transform_id;

    FeatureMap() = default;
    FeatureMap(Tensor<float> t, std::size_t src_h, std::size_t src_w, std::string id)
        : tensor(std::move(t)), source_h(src_h), source_w(src_w),
          transform_id(std::move(id)) {
        if (tensor.rank() != 3)
            throw invalid_argument("feature map must be H x W x C");
        if (source_h % h() != 0 || source_w % w() != 0 ||
            source_h / h() != source_w / w())
            throw invalid_argument("feature map extents must divide source evenly");
    }

    std::size_t h() const { return tensor.extent(0); }
    std::size_t w() const { return tensor.extent(1); }
    std::size_t c() const { return tensor.extent(2); }
    std::size_t downscale() const { return source_h / h(); }
};

// Binary keep-mask over the source image: ones outside the missing rectangle,
// zeros inside it.
struct Mask {
    struct Box {
        std::size_t top = 0, left = 0, height = 0, width = 0;
    };

    Tensor<float> tensor; // H0 x W0 in {0,1}
    Box bbox;

    static Mask from_bbox(std::size_t h0, std::size_t w0, Box box) {
        if (box.height == 0 || box.width == 0)
            throw invalid_argument("mask: empty box");
        if (box.top + box.height > h0 || box.left + box.width > w0)
            throw invalid_argument("mask: box out of bounds");
        Mask m;
        m.bbox = box;
        m.tensor = Tensor<float>::full({h0, w0}, 1.0f);
        for (std::size_t r = box.top; r < box.top + box.height; ++r)
            for (std::size_t c = box.left; c < box.left + box.width; ++c)
                m.tensor.at(r, c) = 0.0f;
        return m;
    }

    // Degenerate all-ones mask (nothing missing).
    static Mask all_ones(std::size_t h0, std::size_t w0) {
        Mask m;
        m.tensor = Tensor<float>::full({h0, w0}, 1.0f);
        m.bbox = Box{0, 0, 0, 0};
        return m;
    }

    std::size_t h() const { return tensor.extent(0); }
    std::size_t w() const { return tensor.extent(1); }
};

// Flattened 3x3xC feature windows with their top-left feature coordinates.
struct PatchSet {
    Tensor<double> vectors; // n x (9*C)
    std::vector<std::pair<std::size_t, std::size_t>> coords;

    std::size_t size() const { return coords.size(); }
    std::size_t dim() const { return vectors.rank() == 2 ? vectors.extent(1) : 0; }
};

// ---------------------------------------------------------------------------
// Transform application

class Transform {
public:
    explicit Transform(TransformSpec spec) : spec_(std::move(spec)) {}

    const TransformSpec& spec() const { return spec_; }

    bool differentiable() const { return spec_.kind != TransformSpec::Kind::external; }

    FeatureMap apply(const Tensor<float>& image) const {
        require_image(image);
        switch (spec_.kind) {
            case TransformSpec::Kind::identity:
                return FeatureMap(image, image.extent(0), image.extent(1), spec_.str());
            case TransformSpec::Kind::random_projection:
                return apply_projection(image);
            case TransformSpec::Kind::conv_stack:
                return apply_conv_stack(image);
            case TransformSpec::Kind::external:
                return apply_external(image);
        }
        throw invalid_argument("transform: unknown kind");
    }

    // Chain rule through the transform: gradient on the feature map back to a
    // gradient on the image. External dumps carry no computation to
    // differentiate through.
    Tensor<double> input_gradient(const Tensor<float>& image,
                                  const Tensor<double>& feature_grad) const {
        require_image(image);
        switch (spec_.kind) {
            case TransformSpec::Kind::identity:
                return feature_grad;
            case TransformSpec::Kind::random_projection:
                return projection_input_grad(image, feature_grad);
            case TransformSpec::Kind::conv_stack:
                return conv_stack_input_grad(image, feature_grad);
            case TransformSpec::Kind::external:
                throw numeric_error("transform: external feature dumps are not differentiable");
        }
        throw invalid_argument("transform: unknown kind");
    }

private:
    static void require_image(const Tensor<float>& image) {
        if (image.rank() != 3)
            throw invalid_argument("transform: image must be H x W x C");
    }

    Tensor<double> projection_matrix(std::size_t cin) const {
        Rng rng = Rng(spec_.seed).fork("random_projection");
        const double s = 1.0 / std::sqrt(static_cast<double>(cin));
        Tensor<double> m({spec_.channels, cin});
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-s, s);
        return m;
    }

    FeatureMap apply_projection(const Tensor<float>& image) const {
        const std::size_t H = image.extent(0), W = image.extent(1), Ci = image.extent(2);
        const Tensor<double> m = projection_matrix(Ci);
        Tensor<float> out({H, W, spec_.channels});
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < W; ++c)
                for (std::size_t co = 0; co < spec_.channels; ++co) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < Ci; ++ci)
                        acc += m.at(co, ci) * static_cast<double>(image.at(r, c, ci));
                    out.at(r, c, co) = static_cast<float>(acc);
                }
        return FeatureMap(std::move(out), H, W, spec_.str());
    }

    Tensor<double> projection_input_grad(const Tensor<float>& image,
                                         const Tensor<double>& g) const {
        const std::size_t H = image.extent(0), W = image.extent(1), Ci = image.extent(2);
        if (g.rank() != 3 || g.extent(0) != H || g.extent(1) != W ||
            g.extent(2) != spec_.channels)
            throw invalid_argument("transform: feature gradient shape mismatch");
        const Tensor<double> m = projection_matrix(Ci);
        Tensor<double> out({H, W, Ci});
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < W; ++c)
                for (std::size_t ci = 0; ci < Ci; ++ci) {
                    double acc = 0.0;
                    for (std::size_t co = 0; co < spec_.channels; ++co)
                        acc += m.at(co, ci) * g.at(r, c, co);
                    out.at(r, c, ci) = acc;
                }
        return out;
    }

    // Fixed (untrained) pyramid: depth layers of 3x3 stride-2 pad-1
    // convolutions, tanh after each. Weights are a pure function of the
    // transform seed and the input channel count.
    struct ConvLayer {
        Tensor<double> w; // 3 x 3 x Ci x Co
        Tensor<double> b; // Co
    };

    std::vector<ConvLayer> conv_layers(std::size_t cin) const {
        std::vector<ConvLayer> layers;
        std::size_t ci = cin;
        for (std::size_t l = 0; l < spec_.depth; ++l) {
            Rng rng = Rng(spec_.seed).fork("conv_stack").fork(l);
            const double s = 1.0 / std::sqrt(9.0 * static_cast<double>(ci));
            ConvLayer layer{Tensor<double>({3, 3, ci, spec_.channels}),
                            Tensor<double>({spec_.channels})};
            for (std::size_t i = 0; i < layer.w.size(); ++i)
                layer.w[i] = rng.uniform(-s, s);
            for (std::size_t i = 0; i < layer.b.size(); ++i)
                layer.b[i] = rng.uniform(-s, s);
            layers.push_back(std::move(layer));
            ci = spec_.channels;
        }
        return layers;
    }

    // Forward pass keeping every intermediate activation (needed for the
    // backward sweep); activations[0] is the widened input.
    std::vector<Tensor<double>> conv_stack_forward(const Tensor<float>& image) const {
        const std::size_t H = image.extent(0), W = image.extent(1), Ci = image.extent(2);
        auto layers = conv_layers(Ci);
        std::vector<Tensor<double>> acts;
        Tensor<double> x({1, H, W, Ci});
        for (std::size_t i = 0; i < image.size(); ++i) x[i] = image[i];
        acts.push_back(std::move(x));
        for (const auto& layer : layers) {
            Tensor<double> y = detail::conv2d_forward(acts.back(), layer.w, layer.b, 2, 1);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
            acts.push_back(std::move(y));
        }
        return acts;
    }

    FeatureMap apply_conv_stack(const Tensor<float>& image) const {
        if (spec_.depth == 0)
            throw invalid_argument("transform: conv_stack depth must be positive");
        auto acts = conv_stack_forward(image);
        const Tensor<double>& y = acts.back();
        const std::size_t Ho = y.extent(1), Wo = y.extent(2), Co = y.extent(3);
        Tensor<float> out({Ho, Wo, Co});
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(y[i]);
        return FeatureMap(std::move(out), image.extent(0), image.extent(1), spec_.str());
    }

    Tensor<double> conv_stack_input_grad(const Tensor<float>& image,
                                         const Tensor<double>& g) const {
        auto layers = conv_layers(image.extent(2));
        auto acts = conv_stack_forward(image);
        const Tensor<double>& y = acts.back();
        if (g.rank() != 3 || g.extent(0) != y.extent(1) || g.extent(1) != y.extent(2) ||
            g.extent(2) != y.extent(3))
            throw invalid_argument("transform: feature gradient shape mismatch");

        Tensor<double> up({1, g.extent(0), g.extent(1), g.extent(2)});
        for (std::size_t i = 0; i < g.size(); ++i) up[i] = g[i];
        for (std::size_t l = layers.size(); l-- > 0;) {
            // tanh' = 1 - tanh^2; acts[l+1] already holds tanh values.
            const Tensor<double>& t = acts[l + 1];
            for (std::size_t i = 0; i < up.size(); ++i) up[i] *= 1.0 - t[i] * t[i];
            Tensor<double> dx;
            detail::conv2d_backward(acts[l], layers[l].w, 2, 1, up, &dx, nullptr, nullptr);
            up = std::move(dx);
        }
        Tensor<double> out({image.extent(0), image.extent(1), image.extent(2)});
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = up[i];
        return out;
    }

    FeatureMap apply_external(const Tensor<float>& image) const {
        Tensor<float> dump = load_tensor(spec_.path);
        if (dump.rank() != 3)
            throw io_error(io_error::kind::bad_shape,
                           "transform: external dump must be H x W x C");
        const std::size_t H0 = image.extent(0), W0 = image.extent(1);
        if (H0 % dump.extent(0) != 0 || W0 % dump.extent(1) != 0 ||
            H0 / dump.extent(0) != W0 / dump.extent(1))
            throw io_error(io_error::kind::bad_shape,
                           "transform: external dump extent does not divide image extent");
        return FeatureMap(std::move(dump), H0, W0, spec_.str());
    }

    TransformSpec spec_;
};

inline FeatureMap apply_transform(const TransformSpec& spec, const Tensor<float>& image) {
    return Transform(spec).apply(image);
}

// ---------------------------------------------------------------------------
// Patch extraction

namespace detail {

inline Tensor<double> flatten_window(const FeatureMap& fm, std::size_t top,
                                     std::size_t left) {
    const std::size_t C = fm.c();
    Tensor<double> v({9 * C});
    std::size_t idx = 0;
    for (std::size_t dr = 0; dr < 3; ++dr)
        for (std::size_t dc = 0; dc < 3; ++dc)
            for (std::size_t ch = 0; ch < C; ++ch)
                v[idx++] = static_cast<double>(fm.tensor.at(top + dr, left + dc, ch));
    return v;
}

inline PatchSet patches_at(const FeatureMap& fm,
                           const std::vector<std::pair<std::size_t, std::size_t>>& coords) {
    const std::size_t C = fm.c();
    PatchSet ps;
    ps.coords = coords;
    ps.vectors = Tensor<double>({coords.size(), 9 * C});
    for (std::size_t p = 0; p < coords.size(); ++p) {
        const auto [top, left] = coords[p];
        auto row = ps.vectors.row(p);
        std::size_t idx = 0;
        for (std::size_t dr = 0; dr < 3; ++dr)
            for (std::size_t dc = 0; dc < 3; ++dc)
                for (std::size_t ch = 0; ch < C; ++ch)
                    row[idx++] = static_cast<double>(fm.tensor.at(top + dr, left + dc, ch));
    }
    return ps;
}

} // namespace detail

// Every valid 3x3 window at stride 1, coordinates in row-major order.
inline PatchSet extract_patches(const FeatureMap& fm) {
    if (fm.h() < 3 || fm.w() < 3)
        throw invalid_argument("extract_patches: feature map smaller than 3x3");
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    coords.reserve((fm.h() - 2) * (fm.w() - 2));
    for (std::size_t r = 0; r + 2 < fm.h(); ++r)
        for (std::size_t c = 0; c + 2 < fm.w(); ++c)
            coords.emplace_back(r, c);
    return detail::patches_at(fm, coords);
}

namespace detail {

// A feature cell belongs to the restored region iff every source pixel in its
// footprint is masked (mask value 0); rounding is inward so no partially
// restored cell leaks original content into Q.
inline Tensor<float> restored_cells(const FeatureMap& fm, const Mask& mask) {
    if (mask.h() != fm.source_h || mask.w() != fm.source_w)
        throw invalid_argument("mask extent does not match feature source extent");
    const std::size_t f = fm.downscale();
    Tensor<float> cells({fm.h(), fm.w()});
    for (std::size_t r = 0; r < fm.h(); ++r)
        for (std::size_t c = 0; c < fm.w(); ++c) {
            bool all_masked = true;
            for (std::size_t pr = r * f; pr < (r + 1) * f && all_masked; ++pr)
                for (std::size_t pc = c * f; pc < (c + 1) * f; ++pc)
                    if (mask.tensor.at(pr, pc) != 0.0f) {
                        all_masked = false;
                        break;
                    }
            cells.at(r, c) = all_masked ? 1.0f : 0.0f;
        }
    return cells;
}

} // namespace detail

// 3x3 windows lying entirely inside the restored region at feature
// resolution.
inline PatchSet extract_region_patches(const FeatureMap& fm, const Mask& mask) {
    if (fm.h() < 3 || fm.w() < 3)
        throw invalid_argument("extract_region_patches: feature map smaller than 3x3");
    const Tensor<float> cells = detail::restored_cells(fm, mask);
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t r = 0; r + 2 < fm.h(); ++r)
        for (std::size_t c = 0; c + 2 < fm.w(); ++c) {
            bool inside = true;
            for (std::size_t dr = 0; dr < 3 && inside; ++dr)
                for (std::size_t dc = 0; dc < 3; ++dc)
                    if (cells.at(r + dr, c + dc) == 0.0f) {
                        inside = false;
                        break;
                    }
            if (inside) coords.emplace_back(r, c);
        }
    if (coords.empty())
        throw invalid_argument(
            "extract_region_patches: restored region holds no full 3x3 window at "
            "feature resolution (downscale " + std::to_string(fm.downscale()) + ")");
    return detail::patches_at(fm, coords);
}

// Special case: treat the whole map as restored (useful when the mask covers
// the entire image).
inline bool mask_is_all_zero(const Mask& mask) {
    for (float v : mask.tensor.data())
        if (v != 0.0f) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Compositing and mask generation

// t*x + (1-t)*gx with the mask broadcast across channels. With t in {0,1}
// this is an exact pixel select.
inline Tensor<float> composite(const Tensor<float>& x, const Tensor<float>& gx,
                               const Mask& mask) {
    if (!x.same_shape(gx))
        throw invalid_argument("composite: image shapes differ");
    if (x.rank() != 3 || x.extent(0) != mask.h() || x.extent(1) != mask.w())
        throw invalid_argument("composite: mask extent mismatch");
    Tensor<float> out(x.shape());
    const std::size_t C = x.extent(2);
    for (std::size_t r = 0; r < mask.h(); ++r)
        for (std::size_t c = 0; c < mask.w(); ++c) {
            const float t = mask.tensor.at(r, c);
            for (std::size_t ch = 0; ch < C; ++ch)
                out.at(r, c, ch) = t * x.at(r, c, ch) + (1.0f - t) * gx.at(r, c, ch);
        }
    return out;
}

// Rectangle with uniformly random size and position. Side ranges are the
// 256-scale limits [40, 160] scaled proportionally per dimension.
inline Mask random_mask(std::uint64_t seed, std::size_t h0, std::size_t w0) {
    const auto side_range = [](std::size_t extent) {
        const double scale = static_cast<double>(extent) / 256.0;
        const auto lo = static_cast<std::int64_t>(std::llround(40.0 * scale));
        const auto hi = static_cast<std::int64_t>(std::llround(160.0 * scale));
        return std::pair<std::int64_t, std::int64_t>(lo, hi);
    };
    const auto [lo_h, hi_h] = side_range(h0);
    const auto [lo_w, hi_w] = side_range(w0);
    if (lo_h < 1 || lo_w < 1 || hi_h > static_cast<std::int64_t>(h0) ||
        hi_w > static_cast<std::int64_t>(w0))
        throw invalid_argument("random_mask: image too small for the scaled size range");

    Rng rng = Rng(seed).fork("random_mask");
    const std::size_t height = static_cast<std::size_t>(rng.uniform_int(lo_h, hi_h));
    const std::size_t width = static_cast<std::size_t>(rng.uniform_int(lo_w, hi_w));
    const std::size_t top =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(h0 - height)));
    const std::size_t left =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w0 - width)));
    return Mask::from_bbox(h0, w0, Mask::Box{top, left, height, width});
}

} // namespace lidalign
