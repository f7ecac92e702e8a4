#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

#include <sodium.h>

#include "mvmlp/numerics.hpp"

namespace mvmlp {

/// Element of the index set of all finite sequences of nonnegative integers.
/// Every independent source of randomness in a run is addressed by one of these.
class MultiIndex {
public:
    MultiIndex() = default;
    MultiIndex(std::initializer_list<std::uint64_t> path) : path_(path) {}
    explicit MultiIndex(std::vector<std::uint64_t> path) : path_(std::move(path)) {}

    /// (this, a, b, c)
    MultiIndex child(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
        MultiIndex out(*this);
        out.path_.insert(out.path_.end(), {a, b, c});
        return out;
    }

    MultiIndex append(std::uint64_t a) const {
        MultiIndex out(*this);
        out.path_.push_back(a);
        return out;
    }

    const std::vector<std::uint64_t>& path() const noexcept { return path_; }
    std::size_t size() const noexcept { return path_.size(); }

    friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
    friend auto operator<=>(const MultiIndex&, const MultiIndex&) = default;

private:
    std::vector<std::uint64_t> path_;
};

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
class Philox4x32 {
public:
    using Key = std::array<std::uint32_t, 2>;
    using Counter = std::array<std::uint32_t, 4>;

    static Counter block(Counter ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// One keyed Philox substream; emits 64-bit words in counter order.
class Substream {
public:
    Substream() = default;
    Substream(Philox4x32::Key key, std::uint32_t hi0, std::uint32_t hi1)
        : key_(key), hi_{hi0, hi1} {}

    std::uint64_t next_u64() noexcept {
        if (pos_ == 2) {
            const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_),
                                          static_cast<std::uint32_t>(block_ >> 32), hi_[0], hi_[1]};
            buf_ = Philox4x32::block(ctr, key_);
            ++block_;
            pos_ = 0;
        }
        const std::size_t i = 2 * pos_++;
        return (static_cast<std::uint64_t>(buf_[i]) << 32) | buf_[i + 1];
    }

    std::uint64_t blocks_used() const noexcept { return block_; }

private:
    Philox4x32::Key key_{};
    std::array<std::uint32_t, 2> hi_{};
    std::uint64_t block_ = 0;
    Philox4x32::Counter buf_{};
    std::size_t pos_ = 2;
};

/// Normal quantile function, Wichura's AS 241 (PPND16); about 1e-16 relative accuracy.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("normal_quantile: p must lie in (0, 1)");
    }
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                    1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
                 4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                    0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
                 2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                    0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
                 5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                    7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                 0.59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

/// Randomness owned by one multi-index. Gaussian and uniform draws come from
/// separately keyed substreams, so the order in which a caller consumes them
/// never changes either sequence.
class RandomStream {
public:
    RandomStream(Substream normals, Substream uniforms) : normals_(normals), uniforms_(uniforms) {}

    /// Standard normal by inversion of one 53-bit uniform on (0, 1).
    double next_normal() {
        const double u = (static_cast<double>(normals_.next_u64() >> 11) + 0.5) * 0x1.0p-53;
        return normal_quantile(u);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double next_uniform() noexcept {
        return static_cast<double>(uniforms_.next_u64() >> 11) * 0x1.0p-53;
    }

private:
    Substream normals_;
    Substream uniforms_;
};

namespace detail {

inline void store_le64(unsigned char* out, std::uint64_t v) noexcept {
    for (int i = 0; i < 8; ++i) {
        out[i] = static_cast<unsigned char>(v >> (8 * i));
    }
}

inline std::uint32_t load_le32(const unsigned char* in) noexcept {
    return static_cast<std::uint32_t>(in[0]) | (static_cast<std::uint32_t>(in[1]) << 8) |
           (static_cast<std::uint32_t>(in[2]) << 16) | (static_cast<std::uint32_t>(in[3]) << 24);
}

inline void ensure_sodium() {
    static const int status = sodium_init();
    if (status < 0) {
        throw std::runtime_error("libsodium initialisation failed");
    }
}

} // namespace detail

using StreamDigest = std::array<unsigned char, 32>;

/// BLAKE2b-256 of (domain tag, seed, index length, index path).
inline StreamDigest stream_digest(std::uint64_t root_seed, const MultiIndex& index) {
    detail::ensure_sodium();
    static constexpr char kTag[16] = "mvmlp.stream.v1";
    crypto_generichash_state state;
    crypto_generichash_init(&state, nullptr, 0, 32);
    crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(kTag), sizeof kTag);
    unsigned char word[8];
    detail::store_le64(word, root_seed);
    crypto_generichash_update(&state, word, 8);
    detail::store_le64(word, index.size());
    crypto_generichash_update(&state, word, 8);
    for (std::uint64_t v : index.path()) {
        detail::store_le64(word, v);
        crypto_generichash_update(&state, word, 8);
    }
    StreamDigest digest{};
    crypto_generichash_final(&state, digest.data(), digest.size());
    return digest;
}

/// Deterministic stream for (root_seed, index). Bytes 0..15 of the digest key the
/// Gaussian substream and bytes 16..31 key the uniform substream.
inline RandomStream derive_stream(std::uint64_t root_seed, const MultiIndex& index) {
    const StreamDigest h = stream_digest(root_seed, index);
    auto sub = [&](std::size_t off) {
        return Substream({detail::load_le32(&h[off]), detail::load_le32(&h[off + 4])},
                         detail::load_le32(&h[off + 8]), detail::load_le32(&h[off + 12]));
    };
    return RandomStream(sub(0), sub(16));
}

/// K x d array of independent N(0, dt) increments, filled row by row.
inline PathMatrix sample_brownian_increments(RandomStream& stream, std::size_t steps, std::size_t dim,
                                             double dt) {
    if (steps == 0 || dim == 0) {
        throw std::domain_error("sample_brownian_increments: K and d must be >= 1");
    }
    if (!(dt >= 0.0) || !std::isfinite(dt)) {
        throw std::domain_error("sample_brownian_increments: dt must be finite and >= 0");
    }
    const double scale = std::sqrt(dt);
    PathMatrix out(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(dim));
    for (Eigen::Index j = 0; j < out.rows(); ++j) {
        for (Eigen::Index i = 0; i < out.cols(); ++i) {
            out(j, i) = scale * stream.next_normal();
        }
    }
    return out;
}

inline double sample_uniform(RandomStream& stream) noexcept { return stream.next_uniform(); }

/// Cumulative sums with a leading zero row: W(t_0) = 0, W(t_j) = sum_{i<j} dW_i.
inline PathMatrix brownian_path(const PathMatrix& increments) {
    PathMatrix w = PathMatrix::Zero(increments.rows() + 1, increments.cols());
    for (Eigen::Index j = 0; j < increments.rows(); ++j) {
        w.row(j + 1) = w.row(j) + increments.row(j);
    }
    return w;
}

} // namespace mvmlp
