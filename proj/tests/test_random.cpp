#include <cmath>
#include <cstring>
#include <set>
#include <unordered_set>

#include <gtest/gtest.h>

#include "mvmlp/random.hpp"
#include "oracles.hpp"

using namespace mvmlp;

TEST(MultiIndex, ChildAppendsTriple) {
    const MultiIndex theta{1, 2};
    const MultiIndex c = theta.child(3, 4, 5);
    EXPECT_EQ(c.path(), (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
    EXPECT_NE(theta.child(3, 4, 5), theta.child(3, 5, 4));
    EXPECT_NE(theta.child(1, 1, 1).child(1, 1, 1), theta.child(1, 1, 1));
}

TEST(NormalQuantile, InvertsTheCdf) {
    for (double p : {1e-300, 1e-20, 1e-10, 1e-5, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.7, 0.9, 0.97575, 0.999, 1 - 1e-10}) {
        const double x = normal_quantile(p);
        const double back = oracle::normal_cdf(x);
        EXPECT_NEAR(back, p, 1e-13 * std::max(p, 1e-300) + 1e-300) << "p=" << p;
    }
    EXPECT_EQ(normal_quantile(0.5), 0.0);
    EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-14);
    EXPECT_THROW(normal_quantile(0.0), std::domain_error);
    EXPECT_THROW(normal_quantile(1.0), std::domain_error);
}

TEST(DeriveStream, DeterministicSequences) {
    const MultiIndex theta{4, 1, 7, 2};
    RandomStream a = derive_stream(99, theta);
    RandomStream b = derive_stream(99, theta);
    for (int i = 0; i < 1000; ++i) {
        const double na = a.next_normal(), nb = b.next_normal();
        ASSERT_EQ(std::memcmp(&na, &nb, sizeof na), 0);
        const double ua = a.next_uniform(), ub = b.next_uniform();
        ASSERT_EQ(std::memcmp(&ua, &ub, sizeof ua), 0);
    }
}

TEST(DeriveStream, ParentAndChildAreUncorrelated) {
    RandomStream a = derive_stream(42, MultiIndex{0});
    RandomStream b = derive_stream(42, MultiIndex{0, 1, 1, 1});
    const int n = 100000;
    double sab = 0, sa = 0, sb = 0, saa = 0, sbb = 0;
    for (int i = 0; i < n; ++i) {
        const double x = a.next_normal(), y = b.next_normal();
        sab += x * y;
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
    }
    const double cov = sab / n - (sa / n) * (sb / n);
    const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
    EXPECT_LT(std::fabs(corr), 0.02);
}

TEST(DeriveStream, SeedAvalanche) {
    const MultiIndex theta{1, 5};
    RandomStream a = derive_stream(42, theta);
    RandomStream b = derive_stream(43, theta);
    for (int i = 0; i < 16; ++i) {
        EXPECT_NE(a.next_normal(), b.next_normal());
    }
}

TEST(DeriveStream, NormalAndUniformSubstreamsAreSeparate) {
    RandomStream a = derive_stream(5, MultiIndex{3});
    RandomStream b = derive_stream(5, MultiIndex{3});
    for (int i = 0; i < 17; ++i) {
        (void)b.next_uniform();
    }
    for (int i = 0; i < 100; ++i) {
        ASSERT_EQ(a.next_normal(), b.next_normal());
    }
}

TEST(DeriveStream, NoAliasingAcrossOneMillionIndices) {
    struct Hash {
        std::size_t operator()(const std::array<unsigned char, 32>& d) const noexcept {
            std::size_t h;
            std::memcpy(&h, d.data(), sizeof h);
            return h;
        }
    };
    std::unordered_set<StreamDigest, Hash> seen;
    seen.reserve(1 << 21);
    std::size_t count = 0;
    // indices of the shape an MLP run produces: runs, children, caller-side children
    for (std::uint64_t r = 0; r < 10 && count < 1000000; ++r) {
        const MultiIndex theta{1, r};
        for (std::uint64_t k = 1; k <= 5000 && count < 1000000; ++k) {
            for (std::uint64_t l = 1; l <= 4; ++l) {
                const MultiIndex child = theta.child(5, k, l);
                seen.insert(stream_digest(7, child));
                seen.insert(stream_digest(7, child.append(0).child(l, k % 7 + 1, 1)));
                seen.insert(stream_digest(7, child.child(l, k % 5 + 1, 1)));
                seen.insert(stream_digest(7, child.append(0).child(l + 1, k, 1).append(0).child(2, 1, 1)));
                seen.insert(stream_digest(7, MultiIndex{2, r * 100000 + k * 4 + l}));
                count += 5;
            }
        }
    }
    EXPECT_EQ(count, 1000000u);
    EXPECT_EQ(seen.size(), count);
}

TEST(BrownianIncrements, MeanAndVarianceBands) {
    RandomStream s = derive_stream(2024, MultiIndex{8});
    const double dt = 0.01;
    const PathMatrix dW = sample_brownian_increments(s, 1000, 1000, dt);
    const double n = 1e6;
    const double mean = dW.mean();
    const double var = (dW.array() - mean).square().sum() / (n - 1.0);
    EXPECT_LT(std::fabs(mean), 4.0 * std::sqrt(dt / n));
    EXPECT_NEAR(var, dt, 0.01 * dt);
}

TEST(BrownianIncrements, ZeroStepGivesZeros) {
    RandomStream s = derive_stream(1, MultiIndex{});
    const PathMatrix dW = sample_brownian_increments(s, 5, 3, 0.0);
    EXPECT_TRUE((dW.array() == 0.0).all());
}

TEST(BrownianIncrements, RejectsBadArguments) {
    RandomStream s = derive_stream(1, MultiIndex{});
    EXPECT_THROW(sample_brownian_increments(s, 0, 3, 0.1), std::domain_error);
    EXPECT_THROW(sample_brownian_increments(s, 3, 0, 0.1), std::domain_error);
    EXPECT_THROW(sample_brownian_increments(s, 3, 3, -0.1), std::domain_error);
}

TEST(BrownianPath, CumulativeSumsWithLeadingZero) {
    PathMatrix dW(3, 2);
    dW << 1, 2, 3, 4, 5, 6;
    const PathMatrix w = brownian_path(dW);
    PathMatrix want(4, 2);
    want << 0, 0, 1, 2, 4, 6, 9, 12;
    EXPECT_EQ(w, want);
}

TEST(Uniform, MeanRangeAndKolmogorovSmirnov) {
    RandomStream s = derive_stream(17, MultiIndex{1, 2, 3});
    double sum = 0.0;
    std::vector<double> first;
    for (int i = 0; i < 1000000; ++i) {
        const double u = sample_uniform(s);
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        if (i < 10000) {
            first.push_back(u);
        }
    }
    EXPECT_NEAR(sum / 1e6, 0.5, 0.002);
    // 1% critical value of the one-sample KS statistic: 1.628 / sqrt(n)
    EXPECT_LT(oracle::ks_uniform(first), 1.628 / std::sqrt(10000.0));
}
