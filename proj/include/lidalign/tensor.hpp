#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "lidalign/error.hpp"

namespace lidalign {

// Dense n-dimensional array, row-major. float is the storage type used for
// images, feature maps and checkpoints (and the on-disk format); double
// instantiations carry all numeric kernels so reductions and gradients are
// not limited by storage precision.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != data_.size())
            throw invalid_argument("tensor: shape does not match data length");
    }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const T> data() const { return data_; }
    std::span<T> data() { return data_; }

    T operator[](std::size_t flat) const { return data_[flat]; }
    T& operator[](std::size_t flat) { return data_[flat]; }

    // Row-major indexing for the common ranks.
    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    T at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    T& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    T at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    T& at(std::size_t n, std::size_t i, std::size_t j, std::size_t k) {
        return data_[((n * shape_[1] + i) * shape_[2] + j) * shape_[3] + k];
    }
    T at(std::size_t n, std::size_t i, std::size_t j, std::size_t k) const {
        return data_[((n * shape_[1] + i) * shape_[2] + j) * shape_[3] + k];
    }

    // Contiguous row of a rank-2 tensor.
    std::span<const T> row(std::size_t i) const {
        return std::span<const T>(data_.data() + i * shape_[1], shape_[1]);
    }
    std::span<T> row(std::size_t i) {
        return std::span<T>(data_.data() + i * shape_[1], shape_[1]);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw invalid_argument("tensor: zero extent");
            if (e > SIZE_MAX / n) throw invalid_argument("tensor: shape overflow");
            n *= e;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using DenseTensor = Tensor<float>;

inline Tensor<double> widen(const Tensor<float>& t) {
    std::vector<double> d(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = static_cast<double>(t[i]);
    return Tensor<double>(t.shape(), std::move(d));
}

inline Tensor<float> narrow(const Tensor<double>& t) {
    std::vector<float> d(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = static_cast<float>(t[i]);
    return Tensor<float>(t.shape(), std::move(d));
}

// Euclidean distance with a fixed sequential summation order so that k-NN
// orderings are bit-reproducible.
template <typename T>
double l2_distance(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size())
        throw invalid_argument("l2_distance: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

template <typename T>
double l2_distance(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw invalid_argument("l2_distance: shape mismatch");
    return l2_distance(a.data(), b.data());
}

// ---------------------------------------------------------------------------
// On-disk format (.dt): "DTNS" magic, one version byte, u64 LE rank, u64 LE
// extents, float32 LE row-major payload. Trivially parseable anywhere.

namespace detail {

constexpr char kTensorMagic[4] = {'D', 'T', 'N', 'S'};
constexpr std::uint8_t kTensorVersion = 1;

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline bool get_u64_le(std::istream& is, std::uint64_t& v) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
    v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return true;
}

inline void put_f32_le(std::ostream& os, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_f32_le(std::istream& is, float& f) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    std::memcpy(&f, &u, 4);
    return true;
}

} // namespace detail

inline void save_tensor(const Tensor<float>& t, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw io_error(io_error::kind::open_failed,
                       "save_tensor: cannot open " + path.string());
    os.write(detail::kTensorMagic, 4);
    os.put(static_cast<char>(detail::kTensorVersion));
    detail::put_u64_le(os, t.rank());
    for (std::size_t e : t.shape()) detail::put_u64_le(os, e);
    for (float v : t.data()) detail::put_f32_le(os, v);
    if (!os)
        throw io_error(io_error::kind::open_failed,
                       "save_tensor: write failed for " + path.string());
}

inline Tensor<float> load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error(io_error::kind::open_failed,
                       "load_tensor: cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, detail::kTensorMagic, 4) != 0)
        throw io_error(io_error::kind::bad_magic,
                       "load_tensor: bad magic in " + path.string());
    const int version = is.get();
    if (version == std::char_traits<char>::eof())
        throw io_error(io_error::kind::truncated, "load_tensor: truncated header");
    if (version != detail::kTensorVersion)
        throw io_error(io_error::kind::bad_version,
                       "load_tensor: unsupported version " + std::to_string(version));
    std::uint64_t rank = 0;
    if (!detail::get_u64_le(is, rank))
        throw io_error(io_error::kind::truncated, "load_tensor: truncated header");
    if (rank == 0 || rank > 8)
        throw io_error(io_error::kind::bad_shape,
                       "load_tensor: implausible rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
        std::uint64_t e = 0;
        if (!detail::get_u64_le(is, e))
            throw io_error(io_error::kind::truncated, "load_tensor: truncated shape");
        if (e == 0 || e > (1ULL << 32))
            throw io_error(io_error::kind::bad_shape, "load_tensor: bad extent");
        shape[i] = static_cast<std::size_t>(e);
        numel *= shape[i];
    }
    std::vector<float> data(numel);
    for (std::size_t i = 0; i < numel; ++i) {
        if (!detail::get_f32_le(is, data[i]))
            throw io_error(io_error::kind::truncated,
                           "load_tensor: payload shorter than declared shape");
    }
    // Exactly one tensor per file; trailing bytes mean a corrupt writer.
    if (is.peek() != std::char_traits<char>::eof())
        throw io_error(io_error::kind::trailing_data,
                       "load_tensor: trailing bytes after payload");
    Tensor<float> t(std::move(shape), std::move(data));
    if (!t.all_finite())
        throw io_error(io_error::kind::non_finite,
                       "load_tensor: non-finite payload values");
    return t;
}

} // namespace lidalign
