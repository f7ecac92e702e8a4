#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "mvmlp/models.hpp"

using namespace mvmlp;

namespace {

OuParams zero_ou(std::size_t d) {
    const auto n = static_cast<Eigen::Index>(d);
    OuParams p;
    p.a0 = Vector::Zero(n);
    p.A1 = Matrix::Zero(n, n);
    p.A2 = Matrix::Zero(n, n);
    p.b.assign(d, Vector::Zero(n));
    p.B.assign(d, Matrix::Zero(n, n));
    return p;
}

Vector random_vector(RandomStream& s, std::size_t d, double spread) {
    Vector v(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = spread * (2.0 * s.next_uniform() - 1.0);
    }
    return v;
}

} // namespace

TEST(OuDrift, AtOriginIsA0) {
    RandomStream s = derive_stream(1, MultiIndex{1});
    const OuParams p = random_ou_params(4, s);
    const Vector zero = Vector::Zero(4);
    EXPECT_EQ(ou_drift(p, zero, zero), p.a0);
}

TEST(OuDrift, IdentityMatricesAddArguments) {
    OuParams p = zero_ou(3);
    p.A1 = Matrix::Identity(3, 3);
    p.A2 = Matrix::Identity(3, 3);
    Vector x(3), y(3);
    x << 1, 2, 3;
    y << -4, 0.5, 7;
    EXPECT_EQ(ou_drift(p, x, y), x + y);
}

TEST(OuDrift, LipschitzWithHsNormConstant) {
    RandomStream s = derive_stream(2, MultiIndex{1});
    const OuParams p = random_ou_params(5, s);
    const double c = 2.0 * std::max(p.A1.norm(), p.A2.norm());
    for (int i = 0; i < 100; ++i) {
        const Vector x1 = random_vector(s, 5, 10), x2 = random_vector(s, 5, 10);
        const Vector y1 = random_vector(s, 5, 10), y2 = random_vector(s, 5, 10);
        const double lhs = (ou_drift(p, x1, x2) - ou_drift(p, y1, y2)).norm();
        const double rhs = 0.5 * c * (x1 - y1).norm() + 0.5 * c * (x2 - y2).norm();
        EXPECT_LE(lhs, rhs * (1 + 1e-12));
    }
}

TEST(OuDrift, AffineInFirstArgument) {
    RandomStream s = derive_stream(3, MultiIndex{1});
    const OuParams p = random_ou_params(4, s);
    const Vector x = random_vector(s, 4, 5), y = random_vector(s, 4, 5), h = random_vector(s, 4, 5);
    EXPECT_LT((ou_drift(p, x + h, y) - ou_drift(p, x, y) - p.A1 * h).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(OuDrift, DimensionMismatch) {
    const OuParams p = zero_ou(3);
    EXPECT_THROW(ou_drift(p, Vector::Zero(2), Vector::Zero(3)), std::domain_error);
}

TEST(OuDiffusion, AtOriginColumnsAreB) {
    RandomStream s = derive_stream(4, MultiIndex{1});
    const OuParams p = random_ou_params(3, s);
    const Matrix sig = ou_diffusion(p, Vector::Zero(3));
    for (Eigen::Index k = 0; k < 3; ++k) {
        EXPECT_EQ(Vector(sig.col(k)), p.b[static_cast<std::size_t>(k)]);
    }
}

TEST(OuDiffusion, ZeroBIsConstant) {
    RandomStream s = derive_stream(5, MultiIndex{1});
    OuParams p = random_ou_params(3, s);
    for (auto& B : p.B) {
        B.setZero();
    }
    EXPECT_EQ(ou_diffusion(p, Vector::Zero(3)), ou_diffusion(p, random_vector(s, 3, 50)));
}

TEST(OuDiffusion, HandCase) {
    OuParams p = zero_ou(2);
    p.b[0] << 1, 0;
    p.b[1] << 0, 1;
    p.B[0] = Matrix::Identity(2, 2);
    Vector x2(2);
    x2 << 2, 3;
    Matrix want(2, 2);
    want << 3, 0, 3, 1;
    EXPECT_EQ(ou_diffusion(p, x2), want);
}

TEST(OuDiffusion, ModelIgnoresFirstArgument) {
    RandomStream s = derive_stream(6, MultiIndex{1});
    const OuModel model = make_ou_model(random_ou_params(3, s), default_cost_units(3));
    const Vector y = random_vector(s, 3, 5);
    EXPECT_EQ(eval_diffusion(model, random_vector(s, 3, 5), y), eval_diffusion(model, random_vector(s, 3, 5), y));
    EXPECT_LT((eval_diffusion(model, y, y) - ou_diffusion(model.params(), y)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(KuramotoDrift, EqualArgumentsGiveZero) {
    KuramotoParams p;
    p.Sigma.assign(3, Matrix::Zero(3, 3));
    const Vector x = Vector::LinSpaced(3, -1.0, 4.0);
    EXPECT_EQ(kuramoto_drift(p, x, x), Vector::Zero(3));
}

TEST(KuramotoDrift, QuarterTurn) {
    KuramotoParams p;
    p.mu0 = 0.5;
    p.Sigma.assign(4, Matrix::Zero(4, 4));
    const Vector x1 = Vector::Constant(4, std::numbers::pi / 2 + 1.0);
    const Vector x2 = Vector::Constant(4, 1.0);
    EXPECT_LT((kuramoto_drift(p, x1, x2) - Vector::Constant(4, 0.5)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(KuramotoDrift, AntisymmetricAndBounded) {
    RandomStream s = derive_stream(7, MultiIndex{1});
    const KuramotoParams p = random_kuramoto_params(6, s);
    for (int i = 0; i < 100; ++i) {
        const Vector x = random_vector(s, 6, 20), y = random_vector(s, 6, 20);
        EXPECT_EQ(kuramoto_drift(p, x, y), -kuramoto_drift(p, y, x));
        EXPECT_LE(kuramoto_drift(p, x, y).norm(), std::fabs(p.mu0) * std::sqrt(6.0) + 1e-15);
    }
}

TEST(KuramotoDiffusion, ZeroStateGivesZeroMatrix) {
    RandomStream s = derive_stream(8, MultiIndex{1});
    const KuramotoParams p = random_kuramoto_params(3, s);
    EXPECT_EQ(kuramoto_diffusion(p, Vector::Zero(3)), Matrix::Zero(3, 3));
}

TEST(KuramotoDiffusion, CoordinateProjections) {
    KuramotoParams p;
    p.Sigma = {Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
    p.Sigma[0](0, 0) = 1.0;
    p.Sigma[1](1, 1) = 1.0;
    Vector x(2);
    x << 3, 5;
    Matrix want(2, 2);
    want << 3, 0, 0, 5;
    EXPECT_EQ(kuramoto_diffusion(p, x), want);
}

TEST(KuramotoDiffusion, Linear) {
    RandomStream s = derive_stream(9, MultiIndex{1});
    const KuramotoParams p = random_kuramoto_params(4, s);
    for (int i = 0; i < 20; ++i) {
        const double alpha = 10.0 * (2.0 * s.next_uniform() - 1.0);
        const Vector x = random_vector(s, 4, 10);
        const Matrix lhs = kuramoto_diffusion(p, alpha * x);
        const Matrix rhs = alpha * kuramoto_diffusion(p, x);
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-13 * (1.0 + rhs.cwiseAbs().maxCoeff()));
    }
}

TEST(KuramotoDiffusion, DimensionMismatch) {
    KuramotoParams p;
    p.Sigma.assign(2, Matrix::Zero(2, 2));
    EXPECT_THROW(kuramoto_diffusion(p, Vector::Zero(3)), std::domain_error);
    EXPECT_THROW(kuramoto_drift(p, Vector::Zero(2), Vector::Zero(1)), std::domain_error);
}

TEST(RandomParams, OuNormalization) {
    RandomStream s = derive_stream(10, MultiIndex{1});
    const double rho = 0.3;
    const OuParams p = random_ou_params(7, s, rho);
    EXPECT_NEAR(p.a0.norm(), rho, 1e-12);
    EXPECT_NEAR(p.A1.norm(), rho, 1e-12);
    EXPECT_NEAR(p.A2.norm(), rho, 1e-12);
    double family = 0.0;
    for (std::size_t k = 0; k < 7; ++k) {
        EXPECT_NEAR(p.b[k].norm(), rho, 1e-12);
        family += p.B[k].squaredNorm();
        EXPECT_LE(p.B[k].cwiseAbs().maxCoeff(), 1.0);
    }
    EXPECT_NEAR(std::sqrt(family), rho, 1e-12);
}

TEST(RandomParams, KuramotoNormalization) {
    RandomStream s = derive_stream(11, MultiIndex{1});
    const KuramotoParams p = random_kuramoto_params(5, s, 0.25);
    EXPECT_EQ(p.mu0, 0.5);
    double family = 0.0;
    for (const auto& m : p.Sigma) {
        family += m.squaredNorm();
    }
    EXPECT_NEAR(std::sqrt(family), 0.25, 1e-12);
}

TEST(RandomParams, DeterministicForSameStreamState) {
    RandomStream a = derive_stream(12, MultiIndex{0});
    RandomStream b = derive_stream(12, MultiIndex{0});
    const OuParams pa = random_ou_params(4, a), pb = random_ou_params(4, b);
    EXPECT_EQ(pa.a0, pb.a0);
    EXPECT_EQ(pa.A1, pb.A1);
    EXPECT_EQ(pa.B[3], pb.B[3]);
    const KuramotoParams ka = random_kuramoto_params(4, a), kb = random_kuramoto_params(4, b);
    EXPECT_EQ(ka.Sigma[2], kb.Sigma[2]);
}

TEST(RandomParams, RejectsNonPositiveRho) {
    RandomStream s = derive_stream(13, MultiIndex{1});
    EXPECT_THROW(random_ou_params(3, s, 0.0), std::domain_error);
    EXPECT_THROW(random_kuramoto_params(3, s, -1.0), std::domain_error);
}

TEST(Models, SampledLipschitzBoundHolds) {
    for (std::size_t d : {1u, 2u, 5u, 20u}) {
        RandomStream s = derive_stream(14, MultiIndex{d});
        const OuModel ou = make_ou_model(random_ou_params(d, s), default_cost_units(d));
        const KuramotoModel ku = make_kuramoto_model(random_kuramoto_params(d, s), default_cost_units(d));
        EXPECT_GE(ou.lipschitz(), 1.0);
        EXPECT_GE(ku.lipschitz(), 1.0);
        EXPECT_LE(sampled_lipschitz_ratio(ou, ou.lipschitz(), s, 100), 1.0);
        EXPECT_LE(sampled_lipschitz_ratio(ku, ku.lipschitz(), s, 100), 1.0);
    }
}

TEST(Models, InitialValuesAndGrowthBound) {
    RandomStream s = derive_stream(15, MultiIndex{1});
    const OuModel ou = make_ou_model(random_ou_params(3, s), default_cost_units(3));
    const KuramotoModel ku = make_kuramoto_model(random_kuramoto_params(3, s), default_cost_units(3));
    EXPECT_EQ(ou.initial_value(), Vector::Constant(3, 20.0));
    EXPECT_EQ(ku.initial_value(), Vector::Constant(3, 10.0));
    const double g_ou = growth_bound(ou);
    const double g_ku = growth_bound(ku);
    EXPECT_TRUE(std::isfinite(g_ou));
    EXPECT_TRUE(std::isfinite(g_ku));
    // ||xi|| + ||a0|| + sqrt(sum ||b_k||^2) and ||xi|| + 0 + 0
    EXPECT_NEAR(g_ou, 20.0 * std::sqrt(3.0) + 0.25 + 0.25 * std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(g_ku, 10.0 * std::sqrt(3.0), 1e-12);
}

TEST(Models, DefaultCostUnits) {
    EXPECT_EQ(default_cost_units(7), (CostUnits{49, 49, 1}));
}

TEST(Models, SatisfyConcepts) {
    static_assert(McKeanVlasovModel<OuModel>);
    static_assert(McKeanVlasovModel<KuramotoModel>);
    static_assert(McKeanVlasovModel<FunctionModel>);
    static_assert(AffineInLaw<OuModel>);
    static_assert(!AffineInLaw<KuramotoModel>);
    SUCCEED();
}

TEST(Models, ParamsValidation) {
    OuParams p = zero_ou(3);
    p.B.pop_back();
    EXPECT_THROW(OuModel(p, Vector::Zero(3), CostUnits{}), std::domain_error);
    OuParams q = zero_ou(3);
    q.A1(1, 1) = std::nan("");
    EXPECT_THROW(OuModel(q, Vector::Zero(3), CostUnits{}), std::domain_error);
    EXPECT_THROW(OuModel(zero_ou(3), Vector::Zero(2), CostUnits{}), std::domain_error);
    KuramotoParams k;
    k.Sigma = {Matrix::Zero(2, 2), Matrix::Zero(3, 3)};
    EXPECT_THROW(KuramotoModel(k, Vector::Zero(2), CostUnits{}), std::domain_error);
}

TEST(FunctionModel, WrongReturnShapeThrows) {
    const FunctionModel bad(
        Vector::Zero(2), [](const Vector&, const Vector&) { return Vector(Vector::Zero(3)); },
        [](const Vector&, const Vector&) { return Matrix(Matrix::Zero(2, 1)); }, 1.0, CostUnits{});
    EXPECT_THROW(eval_drift(bad, Vector::Zero(2), Vector::Zero(2)), std::domain_error);
    EXPECT_THROW(eval_diffusion(bad, Vector::Zero(2), Vector::Zero(2)), std::domain_error);
}

TEST(ModelKind, ParseRoundTrip) {
    EXPECT_EQ(parse_model_kind(to_string(ModelKind::ou)), ModelKind::ou);
    EXPECT_EQ(parse_model_kind(to_string(ModelKind::kuramoto)), ModelKind::kuramoto);
    EXPECT_THROW(parse_model_kind("heston"), std::invalid_argument);
}
