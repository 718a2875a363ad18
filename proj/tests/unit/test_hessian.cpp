#include <smt/hessian.hpp>
#include <smt/spectrum.hpp>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <algorithm>

using smt::ModelParams;

TEST(HessianTheory, SupportAtEdgeOfStability) {
    const auto s = smt::make_spectrum(ModelParams{3, 1.0, 0.5, 0.0}, 2.0, 0.5);
    EXPECT_DOUBLE_EQ(s.scale, 2.0);
    EXPECT_DOUBLE_EQ(s.support_lo, 0.0);
    EXPECT_DOUBLE_EQ(s.support_hi, 8.0);
    EXPECT_FALSE(s.isolated.has_value());
}

TEST(HessianTheory, DensityNormalizedAndCdfConsistent) {
    boost::math::quadrature::tanh_sinh<double> ts;
    for (double t : {-1.0, 0.0, 2.5}) {
        const auto s = smt::make_spectrum(1.7, t, 0.3);
        const double mass = ts.integrate([&](double l) { return smt::bulk_density(s, l); }, s.support_lo, s.support_hi);
        EXPECT_NEAR(mass, 1.0, 1e-10);
        const double mid = 0.3 * s.support_lo + 0.7 * s.support_hi;
        const double part = ts.integrate([&](double l) { return smt::bulk_density(s, l); }, s.support_lo, mid);
        EXPECT_NEAR(smt::bulk_cdf(s, mid), part, 1e-10);
        EXPECT_EQ(smt::bulk_cdf(s, s.support_lo - 1.0), 0.0);
        EXPECT_EQ(smt::bulk_cdf(s, s.support_hi + 1.0), 1.0);
    }
}

TEST(HessianTheory, IsolatedEigenvalueDetachesContinuously) {
    const double t = 2.3;
    auto s = smt::make_spectrum(1.0, t, 1.0 + 1e-9);
    ASSERT_TRUE(s.isolated.has_value());
    EXPECT_NEAR(*s.isolated, s.support_lo, 1e-8);
    s = smt::make_spectrum(1.0, t, 2.0);
    EXPECT_DOUBLE_EQ(*smt::isolated_eigenvalue(s), t - 2.5);
    EXPECT_LT(*s.isolated, s.support_lo);
    EXPECT_FALSE(smt::make_spectrum(1.0, t, 1.0).isolated.has_value());
}

TEST(HessianTheory, BbpCondition) {
    const ModelParams prm{3, 1.0, 0.5, 0.0};
    EXPECT_DOUBLE_EQ(smt::bbp_condition(prm, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(smt::bbp_condition(prm, 1.0), 0.0);
    // Q''(m) = 2m + 2, Q''(1) = 4
    EXPECT_NEAR(smt::bbp_condition(prm, 0.5), 3.0 * 0.75 / 2.0, 1e-15);
    EXPECT_DOUBLE_EQ(smt::shift_parameter(prm, -0.5, -0.5), 2.5 / 2.0);
    EXPECT_THROW(smt::make_spectrum(0.0, 1.0, 1.0), std::invalid_argument);
}

TEST(HessianEmpirical, TangentHessianSymmetricAndExtremalAgrees) {
    const auto prm = ModelParams::with_snr(3, 1.0, 2.0);
    const auto inst = smt::generate_instance(prm, 160, 5, false);
    const auto s = smt::StateVector::random(160, 3);
    const Eigen::MatrixXd H = smt::tangent_hessian(inst, s.sigma);
    ASSERT_EQ(H.rows(), 159);
    EXPECT_LT((H - H.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    const auto dense = smt::empirical_spectrum(inst, s.sigma, smt::SpectrumMode::dense);
    smt::ExtremalOptions opt;
    opt.count = 3;
    opt.iterations = 159;
    const auto ext = smt::empirical_spectrum(inst, s.sigma, smt::SpectrumMode::extremal, opt);
    ASSERT_EQ(ext.size(), 6u);
    EXPECT_NEAR(ext[0], dense.front(), 1e-8);
    EXPECT_NEAR(ext[5], dense.back(), 1e-8);
}

TEST(HessianEmpirical, TangentHessianIgnoresRadialDirection) {
    const auto prm = ModelParams::with_snr(3, 1.0, 2.0);
    const auto inst = smt::generate_instance(prm, 60, 9, false);
    const auto s = smt::StateVector::random(60, 4);
    double mu = 0.0;
    const Eigen::MatrixXd H = smt::tangent_hessian(inst, s.sigma, &mu);
    // same spectrum as P (H_E + mu) P on the full space, minus the zero radial mode
    Eigen::MatrixXd full = smt::euclidean_hessian(inst, s.sigma);
    full.diagonal().array() += mu;
    const Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(s.sigma.data(), 60).normalized();
    const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(60, 60) - u * u.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> a(P * full * P), b(H);
    std::vector<double> ea(a.eigenvalues().data(), a.eigenvalues().data() + 60);
    auto zero = std::min_element(ea.begin(), ea.end(), [](double x, double y) { return std::abs(x) < std::abs(y); });
    ea.erase(zero);
    for (int i = 0; i < 59; ++i) EXPECT_NEAR(ea[i], b.eigenvalues()(i), 1e-9);
}

TEST(HessianEmpirical, BulkMatchesSemicircleAtRandomPoint) {
    const auto prm = ModelParams::with_snr(3, 1.0, 2.0);
    const auto inst = smt::generate_instance(prm, 500, 17, false);
    const auto s = smt::StateVector::random(500, 2);
    const auto o = smt::evaluate(inst, s.sigma);
    const auto spec = smt::spectrum_at(prm, o.m, o.eps_p, o.eps_2);
    const auto ev = smt::empirical_spectrum(inst, s.sigma, smt::SpectrumMode::dense);
    EXPECT_LT(smt::ks_distance(ev, spec), 0.05);
    EXPECT_NEAR(ev.front(), spec.support_lo, 0.25);
    EXPECT_NEAR(ev.back(), spec.support_hi, 0.25);
}

TEST(HessianEmpirical, OutlierBelowBulkAboveTransition) {
    const auto prm = ModelParams::with_snr(3, 1.0, 5.0);
    const auto inst = smt::generate_instance(prm, 1500, 23, true);
    const auto s = smt::StateVector::random(1500, 6);
    const auto o = smt::evaluate(inst, s.sigma);
    const auto spec = smt::spectrum_at(prm, o.m, o.eps_p, o.eps_2);
    ASSERT_TRUE(spec.isolated.has_value());
    const auto ev = smt::empirical_spectrum(inst, s.sigma, smt::SpectrumMode::dense);
    EXPECT_NEAR(ev[0], *spec.isolated, 0.25);
    EXPECT_NEAR(ev[1], spec.support_lo, 0.3);
    EXPECT_GT(ev[1] - ev[0], 0.5);
}

TEST(HessianEmpirical, DenseModeRefusesLargeN) {
    const auto prm = ModelParams::with_snr(3, 1.0, 2.0);
    const auto inst = smt::generate_instance(prm, 5000, 1, true);
    const std::vector<double> sigma(5000, 1.0);
    EXPECT_THROW(smt::empirical_spectrum(inst, sigma, smt::SpectrumMode::dense), smt::PreconditionError);
}
